"""Samplers for every random object in the model, with labeled RNG streams.

The ensemble is built from four independent ingredients: dense sub-Gaussian
spike priors, Bernoulli(p) support masks for the spikes, sub-Gaussian Wigner
entries (unit variance off the diagonal, variance 2 on it), and a symmetric
Bernoulli(q) mask over the noise matrix.  Streams are derived by hashing
(seed, label, trial) so that parallel trials consume independent,
order-insensitive randomness.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SPIKE_PRIORS = ("gaussian", "rademacher")
WIGNER_PRIORS = ("gaussian", "rademacher")

# upper-triangle Bernoulli scans are drawn in fixed-size flat chunks so the
# draw sequence is independent of available memory
_SCAN_CHUNK = 1 << 22


class ConfigurationError(ValueError):
    """Invalid model parameters or prior selection."""


def derive_stream(seed: int, label: str, trial: int) -> np.random.Generator:
    """Derive a reproducible, statistically independent stream for (seed, label, trial).

    Counter-based: the triple is hashed into SeedSequence entropy, so the
    resulting stream does not depend on call order or thread scheduling.
    """
    h = hashlib.blake2b(digest_size=16)
    h.update(str(int(seed)).encode())
    h.update(b"\x1f")
    h.update(label.encode("utf-8"))
    h.update(b"\x1f")
    h.update(str(int(trial)).encode())
    entropy = int.from_bytes(h.digest(), "little")
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the doubly sparse spiked Wigner ensemble.

    p may be a single sparsity shared by all spikes or a per-spike sequence
    of length r.  thetas must be positive and non-increasing; repeats are
    allowed (equal-signal blocks are handled at the experiment layer).
    q = 0 is accepted as the degenerate empty noise mask.
    """

    n: int
    p: float | tuple[float, ...]
    q: float
    r: int
    thetas: tuple[float, ...] = ()
    spike_prior: str = "gaussian"
    wigner_prior: str = "gaussian"
    seed: int = 0

    def __post_init__(self) -> None:
        problems = []
        if self.n < 1:
            problems.append(f"n must be >= 1, got {self.n}")
        if self.r < 0:
            problems.append(f"r must be >= 0, got {self.r}")
        if isinstance(self.p, Sequence) and not isinstance(self.p, str):
            object.__setattr__(self, "p", tuple(float(x) for x in self.p))
            if len(self.p) != self.r:
                problems.append(f"per-spike p list has length {len(self.p)}, expected r={self.r}")
            if any(not 0.0 < x <= 1.0 for x in self.p):
                problems.append("each per-spike p_i must lie in (0, 1]")
        else:
            object.__setattr__(self, "p", float(self.p))
            if not 0.0 < self.p <= 1.0:
                problems.append(f"p must lie in (0, 1], got {self.p}")
        if not 0.0 <= self.q <= 1.0:
            problems.append(f"q must lie in [0, 1], got {self.q}")
        object.__setattr__(self, "thetas", tuple(float(t) for t in self.thetas))
        if len(self.thetas) != self.r:
            problems.append(f"thetas has length {len(self.thetas)}, expected r={self.r}")
        if any(t <= 0.0 for t in self.thetas):
            problems.append("all signal strengths theta_i must be positive")
        if any(b > a for a, b in zip(self.thetas, self.thetas[1:])):
            problems.append("thetas must be non-increasing")
        if self.spike_prior not in SPIKE_PRIORS:
            problems.append(f"unknown spike prior {self.spike_prior!r}, choose from {SPIKE_PRIORS}")
        if self.wigner_prior not in WIGNER_PRIORS:
            problems.append(
                f"unknown wigner prior {self.wigner_prior!r}, choose from {WIGNER_PRIORS}"
            )
        if problems:
            raise ConfigurationError("; ".join(problems))

    @property
    def p_list(self) -> tuple[float, ...]:
        """Per-spike sparsities, broadcast from the scalar when shared."""
        if isinstance(self.p, tuple):
            return self.p
        return (self.p,) * self.r

    @property
    def np_min(self) -> float:
        """Smallest expected spike support n * p_i (n when r = 0)."""
        if self.r == 0:
            return float(self.n)
        return self.n * min(self.p_list)


@dataclass
class SpikeEnsemble:
    """The r sparse signal columns v_i = vtilde_i (.) b_i in sparse form.

    Each column is an (indices, values) pair with strictly increasing
    indices and nonzero values.
    """

    n: int
    thetas: tuple[float, ...]
    columns: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    @property
    def r(self) -> int:
        return len(self.columns)

    @property
    def support_sizes(self) -> list[int]:
        return [len(idx) for idx, _ in self.columns]

    def column_norm_sq(self, i: int) -> float:
        _, vals = self.columns[i]
        return float(vals @ vals)

    def column_dot(self, i: int, x: np.ndarray) -> float:
        idx, vals = self.columns[i]
        return float(vals @ x[idx])

    def to_dense(self) -> np.ndarray:
        """Columns as a dense n x r matrix."""
        dense = np.zeros((self.n, self.r))
        for i, (idx, vals) in enumerate(self.columns):
            dense[idx, i] = vals
        return dense


@dataclass
class SparseSymMatrix:
    """Symmetric sparse matrix in CSR form, both triangles stored explicitly."""

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.values)

    def to_dense(self) -> np.ndarray:
        if self.n > 5000:
            raise ValueError(f"dense materialization capped at n=5000, got n={self.n}")
        dense = np.zeros((self.n, self.n))
        rows = np.repeat(np.arange(self.n), np.diff(self.row_ptr))
        dense[rows, self.col_idx] = self.values
        return dense

    @classmethod
    def from_dense(cls, mat: np.ndarray) -> "SparseSymMatrix":
        mat = np.asarray(mat, dtype=float)
        n = mat.shape[0]
        if mat.shape != (n, n):
            raise ValueError("matrix must be square")
        if not np.array_equal(mat, mat.T):
            raise ValueError("matrix must be symmetric")
        rows, cols = np.nonzero(mat)
        return cls(
            n=n,
            row_ptr=np.concatenate(
                ([0], np.cumsum(np.bincount(rows, minlength=n)))
            ).astype(np.int64),
            col_idx=cols.astype(np.int64),
            values=mat[rows, cols].astype(float),
        )

    @classmethod
    def empty(cls, n: int) -> "SparseSymMatrix":
        return cls(
            n=n,
            row_ptr=np.zeros(n + 1, dtype=np.int64),
            col_idx=np.zeros(0, dtype=np.int64),
            values=np.zeros(0),
        )


def _draw_prior(prior: str, size: int, stream: np.random.Generator) -> np.ndarray:
    """Draw `size` i.i.d. centered unit-variance values from the chosen prior."""
    if prior == "gaussian":
        return stream.standard_normal(size)
    if prior == "rademacher":
        return stream.integers(0, 2, size=size).astype(float) * 2.0 - 1.0
    raise ConfigurationError(f"unknown prior {prior!r}")


def sample_spike_ensemble(params: ModelParams, stream: np.random.Generator) -> SpikeEnsemble:
    """Sample the r spike columns: Ber(p_i) supports with unit-variance priors on top.

    Columns are mutually independent and may overlap in support.  Entries
    that draw exactly zero (impossible for the shipped priors, relevant only
    to future atom-at-zero priors) would be dropped from sparse storage.
    """
    columns = []
    for i in range(params.r):
        p_i = params.p_list[i]
        if p_i >= 1.0:
            idx = np.arange(params.n, dtype=np.int64)
        else:
            idx = np.nonzero(stream.random(params.n) < p_i)[0].astype(np.int64)
        vals = _draw_prior(params.spike_prior, len(idx), stream)
        keep = vals != 0.0
        if not np.all(keep):
            idx, vals = idx[keep], vals[keep]
        columns.append((idx, vals))
    return SpikeEnsemble(n=params.n, thetas=params.thetas, columns=columns)


def sample_sparse_wigner(params: ModelParams, stream: np.random.Generator) -> SparseSymMatrix:
    """Sample the masked Wigner matrix W (.) A in symmetric CSR form.

    Upper-triangle entries (including the diagonal) are kept independently
    with probability q; kept off-diagonal values are unit-variance draws and
    kept diagonal values are sqrt(2) times one, so second moments are 1 and
    2 regardless of prior.  Values are unscaled; the 1/sqrt(nq) factor is
    applied by the operator that consumes the matrix.
    """
    n = params.n
    if params.q == 0.0:
        return SparseSymMatrix.empty(n)

    # flat Bernoulli scan over the upper triangle in row-major order,
    # chunked at a fixed size so draws do not depend on memory pressure
    total = n * (n + 1) // 2
    row_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.arange(n, 0, -1), out=row_offsets[1:])
    kept_flat = []
    pos = 0
    while pos < total:
        count = min(_SCAN_CHUNK, total - pos)
        mask = stream.random(count) < params.q
        kept_flat.append(pos + np.nonzero(mask)[0])
        pos += count
    flat = np.concatenate(kept_flat)
    rows_u = np.searchsorted(row_offsets, flat, side="right") - 1
    cols_u = rows_u + (flat - row_offsets[rows_u])

    vals_u = _draw_prior(params.wigner_prior, len(flat), stream)
    diag = rows_u == cols_u
    vals_u[diag] *= math.sqrt(2.0)

    off = ~diag
    rows = np.concatenate([rows_u, cols_u[off]])
    cols = np.concatenate([cols_u, rows_u[off]])
    vals = np.concatenate([vals_u, vals_u[off]])

    order = np.argsort(rows * n + cols, kind="stable")
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=row_ptr[1:])
    return SparseSymMatrix(
        n=n, row_ptr=row_ptr, col_idx=cols[order], values=vals[order]
    )


def support_window(np_expected: float) -> tuple[float, float]:
    """Concentration window [np - log(np) sqrt(np), np + log(np) sqrt(np)] for |supp(v)|."""
    if np_expected <= 1.0:
        raise ValueError(f"window needs np > 1, got {np_expected}")
    half = math.log(np_expected) * math.sqrt(np_expected)
    return np_expected - half, np_expected + half
