"""Matrix-free spectral computations for the spiked sparse operator.

The operator X = (1/np) V Theta V^T + (1/sqrt(nq)) W (.) A is applied
without dense materialization.  Top eigenpairs come from Lanczos with full
reorthogonalization; a cyclic Jacobi solver provides a dense small-n oracle;
Householder tridiagonalization plus Sturm-sequence bisection give exact
interval eigenvalue counts and full spectra; resolvent diagonal entries are
obtained from conjugate-gradient solves of the shifted system.

Dense paths are capped at n = 5000; the matrix-free path has no cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rand_models import ModelParams, SparseSymMatrix, SpikeEnsemble

DENSE_CAP = 5000

# half-width of the excluded band around the limiting bulk [-2, 2] for
# resolvent evaluations
RESOLVENT_EDGE_MARGIN = 0.05


class LinalgError(RuntimeError):
    """Numerical routine failed to reach its target accuracy."""


class LanczosError(LinalgError):
    """Lanczos did not converge; carries the best eigenvalue/residual estimates."""

    def __init__(self, message: str, eigenvalues: np.ndarray, residuals: np.ndarray):
        super().__init__(message)
        self.eigenvalues = eigenvalues
        self.residuals = residuals


class SpectrumProximityError(ValueError):
    """Requested shift is too close to (or inside) the operator spectrum."""


def _csr_matvec(mat: SparseSymMatrix, x: np.ndarray) -> np.ndarray:
    """y = M x for CSR storage; per-row segmented sums, O(nnz)."""
    y = np.zeros(mat.n)
    if mat.nnz == 0:
        return y
    prod = mat.values * x[mat.col_idx]
    starts = mat.row_ptr[:-1]
    nonempty = mat.row_ptr[1:] > starts
    y[nonempty] = np.add.reduceat(prod, starts[nonempty])
    return y


@dataclass
class SpikedOperator:
    """Matrix-free X = sum_i theta_i/(n p_i) v_i v_i^T + (1/sqrt(nq)) W (.) A."""

    noise: SparseSymMatrix
    spikes: SpikeEnsemble
    n: int
    p_list: tuple[float, ...]
    q: float
    noise_scale: float
    spike_scales: tuple[float, ...]

    @classmethod
    def build(
        cls, params: ModelParams, noise: SparseSymMatrix, spikes: SpikeEnsemble
    ) -> "SpikedOperator":
        if noise.n != params.n or spikes.n != params.n:
            raise ValueError("sampled parts disagree with params on dimension")
        noise_scale = 0.0 if params.q == 0.0 else 1.0 / math.sqrt(params.n * params.q)
        spike_scales = tuple(1.0 / (params.n * p_i) for p_i in params.p_list)
        return cls(
            noise=noise,
            spikes=spikes,
            n=params.n,
            p_list=params.p_list,
            q=params.q,
            noise_scale=noise_scale,
            spike_scales=spike_scales,
        )

    def apply(self, x: np.ndarray) -> np.ndarray:
        if x.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got shape {x.shape}")
        if self.noise_scale != 0.0:
            y = self.noise_scale * _csr_matvec(self.noise, x)
        else:
            y = np.zeros(self.n)
        for theta, scale, (idx, vals) in zip(
            self.spikes.thetas, self.spike_scales, self.spikes.columns
        ):
            coeff = theta * scale * (vals @ x[idx])
            y[idx] += coeff * vals
        return y


def apply(op: SpikedOperator, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product X x without materializing X."""
    return op.apply(np.asarray(x, dtype=float))


def densify(op: SpikedOperator) -> np.ndarray:
    """Entrywise materialization of X (n <= 5000)."""
    if op.n > DENSE_CAP:
        raise ValueError(f"dense materialization capped at n={DENSE_CAP}, got n={op.n}")
    dense = op.noise_scale * op.noise.to_dense() if op.noise.nnz else np.zeros((op.n, op.n))
    for theta, scale, (idx, vals) in zip(op.spikes.thetas, op.spike_scales, op.spikes.columns):
        dense[np.ix_(idx, idx)] += (theta * scale) * np.outer(vals, vals)
    return dense


@dataclass
class TopSpectrum:
    """Converged top-k eigenpairs, eigenvalues descending, eigenvectors as rows."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    iterations: int

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    def distinct_eigenvalues(self, rel_tol: float = 1e-6) -> np.ndarray:
        """Collapse eigenvalues closer than rel_tol * max|lambda| into one."""
        if self.k == 0:
            return self.eigenvalues
        gap = rel_tol * max(1e-300, float(np.max(np.abs(self.eigenvalues))))
        out = [self.eigenvalues[0]]
        for lam in self.eigenvalues[1:]:
            if out[-1] - lam > gap:
                out.append(lam)
        return np.array(out)


def _fix_sign(u: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry positive (first one on ties)."""
    i = int(np.argmax(np.abs(u)))
    return -u if u[i] < 0.0 else u


def lanczos_topk(
    op: SpikedOperator,
    k: int,
    tol: float = 1e-10,
    max_iter: int = 500,
    stream: np.random.Generator | None = None,
) -> TopSpectrum:
    """Top-k algebraically largest eigenpairs by Lanczos with full reorthogonalization.

    Residual target is tol * max(1, |lambda_i|) per pair, verified explicitly
    on the assembled Ritz vectors before returning.  On breakdown the
    iteration restarts with a fresh random direction orthogonal to the
    current basis, so invariant subspaces cannot stall it.
    """
    n = op.n
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    rng = stream if stream is not None else np.random.default_rng(0)

    max_basis = min(n, max_iter)
    Q = np.zeros((max_basis, n))
    alphas: list[float] = []
    betas: list[float] = []  # betas[j] couples basis vectors j and j+1

    def fresh_vector(m: int) -> np.ndarray | None:
        # random start orthogonalized against the current basis
        for _ in range(5):
            v = rng.standard_normal(n)
            if m:
                v -= Q[:m].T @ (Q[:m] @ v)
                v -= Q[:m].T @ (Q[:m] @ v)
            norm = np.linalg.norm(v)
            if norm > 1e-8 * math.sqrt(n):
                return v / norm
        return None

    def ritz(m: int) -> tuple[np.ndarray, np.ndarray]:
        T = np.zeros((m, m))
        T[np.arange(m), np.arange(m)] = alphas[:m]
        if m > 1:
            off = np.array(betas[: m - 1])
            T[np.arange(m - 1), np.arange(1, m)] = off
            T[np.arange(1, m), np.arange(m - 1)] = off
        return np.linalg.eigh(T)

    def assemble(m: int) -> TopSpectrum:
        vals, vecs = ritz(m)
        order = np.argsort(vals)[::-1][: min(k, m)]
        lam = vals[order]
        U = (Q[:m].T @ vecs[:, order]).T
        norms = np.linalg.norm(U, axis=1)
        U /= norms[:, None]
        res = np.empty(len(order))
        for i in range(len(order)):
            res[i] = np.linalg.norm(op.apply(U[i]) - lam[i] * U[i])
        return TopSpectrum(
            eigenvalues=lam,
            eigenvectors=np.array([_fix_sign(u) for u in U]),
            residuals=res,
            iterations=m,
        )

    v = fresh_vector(0)
    if v is None:  # pragma: no cover - standard_normal cannot collapse
        raise LinalgError("could not draw a nonzero start vector")
    m = 0
    exhausted = False
    best: TopSpectrum | None = None
    while m < max_basis:
        Q[m] = v
        w = op.apply(v)
        a = float(v @ w)
        alphas.append(a)
        w -= a * v
        if m > 0 and betas[m - 1] != 0.0:
            w -= betas[m - 1] * Q[m - 1]
        # full reorthogonalization, two classical Gram-Schmidt passes
        w -= Q[: m + 1].T @ (Q[: m + 1] @ w)
        w -= Q[: m + 1].T @ (Q[: m + 1] @ w)
        b = float(np.linalg.norm(w))
        m += 1
        scale = max(1.0, max(abs(x) for x in alphas), max((abs(x) for x in betas), default=0.0))
        if b <= 1e-13 * scale:
            # invariant subspace: restart with a fresh direction
            if m >= max_basis:
                exhausted = True
                break
            nxt = fresh_vector(m)
            if nxt is None:
                exhausted = True
                break
            betas.append(0.0)
            v = nxt
        else:
            betas.append(b)
            v = w / b
        check_every = 5 if m <= 100 else (10 if m <= 300 else 20)
        if m >= k and (m % check_every == 0 or m == max_basis):
            vals, vecs = ritz(m)
            order = np.argsort(vals)[::-1][:k]
            bound = abs(betas[m - 1]) * np.abs(vecs[m - 1, order])
            if np.all(bound <= tol * np.maximum(1.0, np.abs(vals[order]))):
                best = assemble(m)
                if np.all(best.residuals <= tol * np.maximum(1.0, np.abs(best.eigenvalues))):
                    return best
    # basis exhausted (m == n: exact) or iteration budget spent
    best = assemble(m)
    if best.k == k:
        if exhausted or m >= n:
            return best
        if np.all(best.residuals <= tol * np.maximum(1.0, np.abs(best.eigenvalues))):
            return best
    raise LanczosError(
        f"no convergence after {m} Lanczos steps "
        f"(worst residual {best.residuals.max():.3e}, target {tol:.1e}, "
        f"{best.k} of {k} pairs formed)",
        eigenvalues=best.eigenvalues,
        residuals=best.residuals,
    )


def _round_robin_rounds(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Round-robin schedule covering every index pair once with disjoint rounds."""
    m = n + (n % 2)
    arr = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            a, b = arr[i], arr[m - 1 - i]
            if a < n and b < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps), np.array(qs)))
        arr = [arr[0], arr[-1]] + arr[1:-1]
    return rounds


def dense_eigs_jacobi(matrix: np.ndarray, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Full spectrum of a dense symmetric matrix by cyclic Jacobi rotations.

    Sweeps run until the off-diagonal Frobenius mass drops below
    tol * max(1, |A|_F).  Returns (eigenvalues descending, eigenvectors as
    columns aligned with them).  Disjoint rotations within a sweep round are
    applied simultaneously; they commute exactly, so this is an ordinary
    cyclic ordering.
    """
    A = np.array(matrix, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    if n > DENSE_CAP:
        raise ValueError(f"dense eigensolver capped at n={DENSE_CAP}, got n={n}")
    if not np.allclose(A, A.T, atol=1e-12 * max(1.0, float(np.abs(A).max(initial=0.0)))):
        raise ValueError("matrix must be symmetric")
    A = 0.5 * (A + A.T)
    U = np.eye(n)
    if n == 1:
        return A[0, :1].copy(), U
    threshold = tol * max(1.0, float(np.linalg.norm(A)))
    rounds = _round_robin_rounds(n)
    for _ in range(60):
        off = A.copy()
        off[np.arange(n), np.arange(n)] = 0.0
        if np.linalg.norm(off) <= threshold:
            break
        for ps, qs in rounds:
            apq = A[ps, qs]
            active = apq != 0.0
            if not np.any(active):
                continue
            app = A[ps, ps]
            aqq = A[qs, qs]
            with np.errstate(divide="ignore", invalid="ignore"):
                tau = np.where(active, (aqq - app) / np.where(active, 2.0 * apq, 1.0), 0.0)
            t = np.where(
                active,
                np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau)),
                0.0,
            )
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            cols_p = A[:, ps].copy()
            cols_q = A[:, qs].copy()
            A[:, ps] = c * cols_p - s * cols_q
            A[:, qs] = s * cols_p + c * cols_q
            rows_p = A[ps, :].copy()
            rows_q = A[qs, :].copy()
            A[ps, :] = c[:, None] * rows_p - s[:, None] * rows_q
            A[qs, :] = s[:, None] * rows_p + c[:, None] * rows_q
            A[ps, qs] = 0.0
            A[qs, ps] = 0.0
            u_p = U[:, ps].copy()
            u_q = U[:, qs].copy()
            U[:, ps] = c * u_p - s * u_q
            U[:, qs] = s * u_p + c * u_q
    else:
        raise LinalgError("Jacobi sweeps did not reduce off-diagonal mass")
    eigvals = np.diag(A).copy()
    order = np.argsort(eigvals)[::-1]
    return eigvals[order], U[:, order]


def tridiagonalize_householder(
    matrix: np.ndarray, block_size: int = 32
) -> tuple[np.ndarray, np.ndarray]:
    """Householder reduction of a dense symmetric matrix to tridiagonal form.

    Returns (diagonal, off-diagonal) of an orthogonally similar tridiagonal
    matrix; eigenvalues are preserved.  Reflectors are accumulated in panels
    of `block_size` and the trailing matrix is updated with one rank-2b
    correction per panel, so the bulk of the work runs as matrix-matrix
    products.  Columns that are already tridiagonal are passed through
    unchanged.
    """
    A = np.array(matrix, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    if n > DENSE_CAP:
        raise ValueError(f"dense reduction capped at n={DENSE_CAP}, got n={n}")
    d = np.empty(n)
    e = np.empty(max(0, n - 1))
    if n == 1:
        d[0] = A[0, 0]
        return d, e
    for k0 in range(0, n - 2, block_size):
        b = min(block_size, n - 2 - k0)
        m = n - k0
        A22 = A[k0:, k0:]
        V = np.zeros((m, b))
        W = np.zeros((m, b))
        for j in range(b):
            col = A22[j:, j].copy()
            if j:
                col -= V[j:, :j] @ W[j, :j] + W[j:, :j] @ V[j, :j]
            d[k0 + j] = col[0]
            c = col[1:]
            if not np.any(c[1:]):
                # column is already tridiagonal under the pending corrections
                e[k0 + j] = c[0]
                continue
            norm_c = float(np.linalg.norm(c))
            alpha = -math.copysign(norm_c, c[0])
            e[k0 + j] = alpha
            v = c
            v[0] -= alpha
            v /= np.linalg.norm(v)
            V[j + 1 :, j] = v
            v_ext = V[:, j]
            p = A22 @ v_ext
            if j:
                p -= V[:, :j] @ (W[:, :j].T @ v_ext) + W[:, :j] @ (V[:, :j].T @ v_ext)
            W[:, j] = 2.0 * (p - float(v_ext @ p) * v_ext)
        tail = A[k0 + b :, k0 + b :]
        tail -= V[b:] @ W[b:].T
        tail -= W[b:] @ V[b:].T
    d[n - 2] = A[n - 2, n - 2]
    d[n - 1] = A[n - 1, n - 1]
    e[n - 2] = A[n - 1, n - 2]
    return d, e


def _sturm_pivmin(offdiag_sq: np.ndarray) -> float:
    return np.finfo(float).tiny * max(1.0, float(offdiag_sq.max(initial=0.0)))


def _sturm_count(diag: np.ndarray, offdiag: np.ndarray, x: float) -> int:
    """Number of eigenvalues of the tridiagonal matrix that are <= x.

    Zero pivots (shift exactly on an eigenvalue) are clamped to -pivmin
    before their sign is tallied, so exact hits count as included.
    """
    off2 = offdiag * offdiag
    pivmin = _sturm_pivmin(off2)
    d = diag[0] - x
    if abs(d) < pivmin:
        d = -pivmin
    count = int(d < 0.0)
    for i in range(1, len(diag)):
        d = (diag[i] - x) - off2[i - 1] / d
        if abs(d) < pivmin:
            d = -pivmin
        count += d < 0.0
    return count


def _sturm_count_vec(diag: np.ndarray, offdiag: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Vectorized Sturm counts at many shifts simultaneously."""
    off2 = offdiag * offdiag
    pivmin = _sturm_pivmin(off2)
    d = diag[0] - xs
    d = np.where(np.abs(d) < pivmin, -pivmin, d)
    count = (d < 0.0).astype(np.int64)
    for i in range(1, len(diag)):
        d = (diag[i] - xs) - off2[i - 1] / d
        d = np.where(np.abs(d) < pivmin, -pivmin, d)
        count += d < 0.0
    return count


def count_eigs_in_interval(diag: np.ndarray, offdiag: np.ndarray, a: float, b: float) -> int:
    """Exact number of tridiagonal eigenvalues in (a, b] via Sturm sign counts."""
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    diag = np.asarray(diag, dtype=float)
    offdiag = np.asarray(offdiag, dtype=float)
    if len(offdiag) != max(0, len(diag) - 1):
        raise ValueError("offdiag must have length n - 1")
    return _sturm_count(diag, offdiag, b) - _sturm_count(diag, offdiag, a)


def gershgorin_bounds(diag: np.ndarray, offdiag: np.ndarray) -> tuple[float, float]:
    """Enclosing interval for all eigenvalues of the tridiagonal matrix."""
    diag = np.asarray(diag, dtype=float)
    off = np.abs(np.asarray(offdiag, dtype=float))
    left = np.concatenate(([0.0], off))
    right = np.concatenate((off, [0.0]))
    radius = left + right
    return float(np.min(diag - radius)), float(np.max(diag + radius))


def tridiag_eigenvalues(
    diag: np.ndarray, offdiag: np.ndarray, tol: float = 1e-10
) -> np.ndarray:
    """All eigenvalues (ascending) of a symmetric tridiagonal matrix by bisection.

    Brackets every eigenvalue index with Sturm counts and bisects all of
    them simultaneously to absolute accuracy tol * max(1, spectral range).
    """
    diag = np.asarray(diag, dtype=float)
    offdiag = np.asarray(offdiag, dtype=float)
    n = len(diag)
    lo0, hi0 = gershgorin_bounds(diag, offdiag)
    span = max(hi0 - lo0, 1.0)
    lo = np.full(n, lo0 - 1e-3 * span)
    hi = np.full(n, hi0 + 1e-3 * span)
    targets = np.arange(1, n + 1)
    target_width = tol * span
    for _ in range(128):
        if np.max(hi - lo) <= target_width:
            break
        mid = 0.5 * (lo + hi)
        counts = _sturm_count_vec(diag, offdiag, mid)
        go_left = counts >= targets
        hi = np.where(go_left, mid, hi)
        lo = np.where(go_left, lo, mid)
    return 0.5 * (lo + hi)


def _cg_solve(matvec, b: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, float]:
    """Conjugate gradient for a positive definite operator; returns (x, rel residual)."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return x, 0.0
    rs = float(r @ r)
    for _ in range(max_iter):
        if math.sqrt(rs) <= tol * b_norm:
            break
        Ap = matvec(p)
        denom = float(p @ Ap)
        if denom <= 0.0:
            raise LinalgError("operator is not positive definite along a search direction")
        step = rs / denom
        x += step * p
        r -= step * Ap
        rs_next = float(r @ r)
        p = r + (rs_next / rs) * p
        rs = rs_next
    return x, math.sqrt(rs) / b_norm


def _extreme_ritz_estimates(op: SpikedOperator, steps: int = 20) -> tuple[float, float]:
    """Rough spectral interval of the operator from a short Lanczos run."""
    n = op.n
    v = np.ones(n) / math.sqrt(n)
    basis = [v]
    alphas: list[float] = []
    betas: list[float] = []
    for j in range(min(steps, n)):
        w = op.apply(basis[-1])
        a = float(basis[-1] @ w)
        alphas.append(a)
        w -= a * basis[-1]
        if j > 0:
            w -= betas[-1] * basis[-2]
        for q in basis:
            w -= (q @ w) * q
        b = float(np.linalg.norm(w))
        if b <= 1e-12:
            break
        betas.append(b)
        basis.append(w / b)
    m = len(alphas)
    T = np.zeros((m, m))
    T[np.arange(m), np.arange(m)] = alphas
    if m > 1:
        off = np.array(betas[: m - 1])
        T[np.arange(m - 1), np.arange(1, m)] = off
        T[np.arange(1, m), np.arange(m - 1)] = off
    vals = np.linalg.eigvalsh(T)
    return float(vals[-1]), float(vals[0])


def resolvent_diag_entries(
    op: SpikedOperator,
    z: float,
    indices: np.ndarray | list[int],
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> np.ndarray:
    """Diagonal resolvent entries R_ii(z) = [ (H - zI)^-1 ]_ii of the noise operator.

    Requires a spike-free operator and a real shift strictly outside both the
    limiting bulk band and a short-Lanczos estimate of the actual spectrum,
    so the shifted system is definite and safe for conjugate gradient.
    """
    if op.spikes.r != 0:
        raise ValueError("resolvent entries are defined for the pure-noise operator (r = 0)")
    if abs(z) <= 2.0 + RESOLVENT_EDGE_MARGIN:
        raise SpectrumProximityError(
            f"shift z={z} is inside the guarded band |z| <= {2.0 + RESOLVENT_EDGE_MARGIN}"
        )
    top, bottom = _extreme_ritz_estimates(op)
    if z > 0 and z <= top:
        raise SpectrumProximityError(f"z={z} does not exceed the top eigenvalue estimate {top:.4f}")
    if z < 0 and z >= bottom:
        raise SpectrumProximityError(
            f"z={z} is not below the bottom eigenvalue estimate {bottom:.4f}"
        )
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= op.n):
        raise ValueError("indices out of range")
    cg_iters = max_iter if max_iter is not None else max(1000, 10 * op.n)

    if z > 0:
        matvec = lambda x: z * x - op.apply(x)  # noqa: E731 - local operator closure
        sign = -1.0
    else:
        matvec = lambda x: op.apply(x) - z * x  # noqa: E731
        sign = 1.0

    out = np.empty(idx.size)
    for pos, i in enumerate(idx):
        e = np.zeros(op.n)
        e[i] = 1.0
        x, rel = _cg_solve(matvec, e, tol, cg_iters)
        if rel > tol:
            raise LinalgError(
                f"conjugate gradient stalled at relative residual {rel:.3e} "
                f"for index {int(i)} (target {tol:.1e})"
            )
        out[pos] = sign * x[i]
    return out
