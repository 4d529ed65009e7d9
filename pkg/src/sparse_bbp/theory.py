"""Closed-form spectral theory for the doubly sparse spiked Wigner model.

Pure scalar functions: the semicircle density and its CDF, the Stieltjes
transform of the semicircle law with its derivative and inverse, the
supercritical outlier location theta + 1/theta and squared eigenvector
overlap 1 - 1/theta^2, the finite-size fluctuation scale Lambda, the
three-term probability bound f_r(n), and the large-deviation rate lower
bound (with its constant C8) that controls spurious outliers in the pure
noise model.

All functions validate their domain and raise ValueError outside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def semicircle_pdf(x: float) -> float:
    """Semicircle density (1/2pi) sqrt(4 - x^2) on [-2, 2], zero outside."""
    if abs(x) >= 2.0:
        return 0.0
    return math.sqrt(4.0 - x * x) / TWO_PI


def semicircle_cdf(x: float) -> float:
    """Closed-form antiderivative of the semicircle density, clamped to [0, 1]."""
    if x <= -2.0:
        return 0.0
    if x >= 2.0:
        return 1.0
    val = 0.5 + (x * math.sqrt(4.0 - x * x) + 4.0 * math.asin(0.5 * x)) / (4.0 * math.pi)
    return min(1.0, max(0.0, val))


def stieltjes_m(z: float) -> float:
    """Stieltjes transform of the semicircle law at real z with |z| > 2.

    Branch with m(z) -> 0 as |z| -> infinity, evaluated in the rationalized
    form -sign(z) * 2 / (|z| + sqrt(z^2 - 4)) to avoid cancellation for
    large |z|.  Range is (-1, 0) for z > 2 and (0, 1) for z < -2.
    """
    if abs(z) <= 2.0:
        raise ValueError(f"stieltjes transform needs |z| > 2, got z={z}")
    a = abs(z)
    m = 2.0 / (a + math.sqrt(z * z - 4.0))
    return -m if z > 0 else m


def stieltjes_m_prime(z: float) -> float:
    """Derivative of the semicircle Stieltjes transform at real |z| > 2.

    Equals (-1 + |z|/sqrt(z^2 - 4)) / 2 on both sides of the bulk; always
    positive since m is increasing on each component of |z| > 2.
    """
    if abs(z) <= 2.0:
        raise ValueError(f"stieltjes transform needs |z| > 2, got z={z}")
    return 0.5 * (-1.0 + abs(z) / math.sqrt(z * z - 4.0))


def stieltjes_m_inverse(y: float) -> float:
    """Inverse Stieltjes transform -y - 1/y on the branch y in (-1, 0)."""
    if not -1.0 < y < 0.0:
        raise ValueError(f"inverse branch requires y in (-1, 0), got y={y}")
    return -y - 1.0 / y


def bbp_eigenvalue(theta: float) -> float:
    """Limiting location of the outlier eigenvalue for signal strength theta.

    theta + 1/theta above the detectability threshold theta > 1; at or below
    it the eigenvalue sticks to the bulk edge 2.
    """
    if theta <= 0.0:
        raise ValueError(f"signal strength must be positive, got {theta}")
    if theta > 1.0:
        return theta + 1.0 / theta
    return 2.0


def bbp_overlap(theta: float) -> float:
    """Limiting squared overlap of the outlier eigenvector with its spike.

    1 - 1/theta^2 for theta > 1, zero at or below the threshold.
    """
    if theta <= 0.0:
        raise ValueError(f"signal strength must be positive, got {theta}")
    if theta > 1.0:
        return 1.0 - 1.0 / (theta * theta)
    return 0.0


def detection_threshold(epsilon: float) -> float:
    """Test-statistic threshold 2 + epsilon separating planted from null."""
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return 2.0 + epsilon


def ldp_constant_c8(alpha: float) -> float:
    """Large-deviation exponent constant C8 = min(1/(2 alpha), 1)."""
    if alpha <= 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return min(1.0 / (2.0 * alpha), 1.0)


def rate_function_lower(lam: float, alpha: float) -> float:
    """Lower bound on the large-deviation rate of a spurious eigenvalue at lam > 2.

    Value of inf_{s >= 1} g(s) with g(s) = (lam + m(lam) s)^2 / (2 alpha) + s - 1:
    the infimum sits at s = 1 when alpha >= 1 and at the interior stationary
    point otherwise.  alpha is the squared-entry growth constant of the noise
    prior and is supplied by the caller.
    """
    if lam <= 2.0:
        raise ValueError(f"rate bound defined for lam > 2, got {lam}")
    if alpha <= 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    m = stieltjes_m(lam)
    if alpha >= 1.0:
        return (m + lam) ** 2 / (2.0 * alpha)
    return -lam / m - alpha / (2.0 * m * m) - 1.0


@dataclass(frozen=True)
class FluctuationParams:
    """Inputs to the finite-size fluctuation scale and probability bound.

    gamma is the free log-power exponent, tau = q n / log n the noise
    sparsity factor, np_eff the effective spike support scale (minimum over
    spikes when per-spike sparsities differ), r the spike count and
    theta_frobenius the Frobenius norm of the signal matrix.  The remaining
    absolute constants are never pinned numerically by the theory; they
    default to 1 (D = 2, C7 = 2) and only set overall scale, not decay rates.
    """

    gamma: float
    tau: float
    np_eff: float
    r: int
    theta_frobenius: float
    C5: float = 1.0
    C7: float = 2.0
    c1: float = 1.0
    C2: float = 1.0
    C3: float = 1.0
    C8: float = 1.0
    K: float = 1.0
    D: float = 2.0

    def __post_init__(self) -> None:
        if self.gamma <= 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.r < 0:
            raise ValueError(f"spike count must be >= 0, got {self.r}")
        if self.theta_frobenius < 0.0:
            raise ValueError("theta_frobenius must be >= 0")
        for name in ("tau", "np_eff", "C5", "C7", "c1", "C2", "C3", "C8", "K", "D"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


def fluctuation_lambda(fp: FluctuationParams) -> float:
    """Fluctuation scale Lambda = |Theta|_F sqrt(C5 r^2 max(log(np)^-2g, tau^-1/2))."""
    if fp.np_eff <= 1.0:
        raise ValueError(f"np_eff must exceed 1, got {fp.np_eff}")
    if fp.tau <= 1.0:
        raise ValueError(f"tau must exceed 1, got {fp.tau}")
    decay = max(math.log(fp.np_eff) ** (-2.0 * fp.gamma), fp.tau ** -0.5)
    return fp.theta_frobenius * math.sqrt(fp.C5 * fp.r * fp.r * decay)


def probability_bound_fr(fp: FluctuationParams, n: int) -> float:
    """Three-term probability bound f_r(n) for the fluctuation statements.

    max of a pairwise spike concentration term, a polynomial term
    r n^max(-2,-D), and the pure-noise outlier term exp(-C8 n q), with
    q reconstructed from tau via q = tau log(n) / n.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if fp.np_eff <= 1.0:
        raise ValueError(f"np_eff must exceed 1, got {fp.np_eff}")
    q = fp.tau * math.log(n) / n
    log_np = math.log(fp.np_eff)
    pair = fp.r * (fp.r - 1) * math.exp(
        -(fp.c1 / (4.0 * fp.C3 * fp.C2 * fp.K**4)) * fp.np_eff / log_np ** (2.0 * fp.gamma)
    )
    poly = fp.r * float(n) ** max(-2.0, -fp.D)
    noise = math.exp(-fp.C8 * n * q)
    return max(pair, poly, noise)
