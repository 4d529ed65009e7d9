"""Simulation and verification toolkit for the doubly sparse spiked Wigner model.

The observed matrix is a rank-r signal perturbation of a Bernoulli-masked
sub-Gaussian Wigner matrix,

    X = (1/np) V Theta V^T + (1/sqrt(nq)) W (.) A ,

where the spike columns of V are themselves Bernoulli(p)-sparse.  The package
samples this ensemble (`rand_models`), extracts top eigenpairs matrix-free
(`sparse_linalg`), evaluates every closed-form spectral prediction (`theory`),
and runs Monte Carlo campaigns that verify the phase transition, the bulk
semicircle law, and the resolvent local law at desk scale (`experiments`,
`cli`).
"""

__version__ = "0.1.0"
