"""Monte Carlo campaigns verifying the spectral predictions at desk scale.

Each trial samples one instance through labeled streams, extracts top
eigenpairs, and records observed spectra and spike overlaps next to their
closed-form predictions.  Campaign drivers aggregate trials (optionally in
parallel worker processes), persist results incrementally so interrupted
runs resume, and emit a JSON manifest plus CSV files with a fixed schema:

    campaign.csv   trial,quantity,index_i,index_j,observed,predicted,deviation
    histogram.csv  bin_left,bin_right,count,semicircle_density
    sweep.csv      theta,mean_overlap_sq,std_overlap_sq,predicted_overlap_sq,trials

Floats are serialized with 17 significant digits (round-trip exact).
Wall-clock times are stored in trial records but excluded from CSV output
and aggregates, so identical configurations produce byte-identical CSVs
regardless of worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import FIRST_EXCEPTION, ProcessPoolExecutor, wait
from dataclasses import dataclass, field
from importlib import resources
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .rand_models import (
    ModelParams,
    SpikeEnsemble,
    derive_stream,
    sample_sparse_wigner,
    sample_spike_ensemble,
    support_window,
)
from .sparse_linalg import (
    LinalgError,
    SpikedOperator,
    count_eigs_in_interval,
    densify,
    lanczos_topk,
    resolvent_diag_entries,
    tridiag_eigenvalues,
    tridiagonalize_householder,
)
from .theory import bbp_eigenvalue, bbp_overlap, detection_threshold, semicircle_pdf, semicircle_cdf, stieltjes_m

SCHEMA_VERSION = 1

CSV_HEADER = "trial,quantity,index_i,index_j,observed,predicted,deviation"
HISTOGRAM_HEADER = "bin_left,bin_right,count,semicircle_density"
SWEEP_HEADER = "theta,mean_overlap_sq,std_overlap_sq,predicted_overlap_sq,trials"


class TrialError(RuntimeError):
    """Solver failure wrapped with the trial that produced it."""

    def __init__(self, trial: int, message: str):
        super().__init__(f"trial {trial}: {message}")
        self.trial = trial


class CampaignError(RuntimeError):
    """Campaign aborted; completed trial records remain on disk."""


def load_tolerances(path: str | Path | None = None) -> dict:
    """Versioned pilot-calibrated test ceilings used by verification campaigns."""
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    with resources.files("sparse_bbp").joinpath("tolerances.json").open("r") as fh:
        return json.load(fh)


@dataclass(frozen=True)
class SolverSettings:
    k: int
    tol: float = 1e-8
    max_iter: int = 500

    def to_json_dict(self) -> dict:
        return {"k": self.k, "tol": self.tol, "max_iter": self.max_iter}


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _params_to_dict(params: ModelParams) -> dict:
    return {
        "n": params.n,
        "p": list(params.p) if isinstance(params.p, tuple) else params.p,
        "q": params.q,
        "r": params.r,
        "thetas": list(params.thetas),
        "spike_prior": params.spike_prior,
        "wigner_prior": params.wigner_prior,
        "seed": params.seed,
    }


def _params_from_dict(d: dict) -> ModelParams:
    return ModelParams(
        n=d["n"],
        p=tuple(d["p"]) if isinstance(d["p"], list) else d["p"],
        q=d["q"],
        r=d["r"],
        thetas=tuple(d["thetas"]),
        spike_prior=d["spike_prior"],
        wigner_prior=d["wigner_prior"],
        seed=d["seed"],
    )


def config_hash(params: ModelParams, solver: SolverSettings) -> str:
    payload = json.dumps(
        {"model": _params_to_dict(params), "solver": solver.to_json_dict()},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class TrialRecord:
    """One Monte Carlo trial: observed spectrum/overlaps next to predictions."""

    trial_index: int
    params: ModelParams
    eigenvalues: np.ndarray
    residuals: np.ndarray
    iterations: int
    support_sizes: list[int]
    spike_norms_sq: list[float]
    overlap_paper: np.ndarray  # (k, r) signed <u_i, v_j / sqrt(n p_j)>
    overlap_unit: np.ndarray  # (k, r) signed <u_i, v_j / |v_j|>
    predicted_eigenvalues: np.ndarray  # (r,)
    predicted_overlaps: np.ndarray  # (r,)
    wall_time: float
    extras: dict[str, float] = field(default_factory=dict)
    eigenvectors: np.ndarray | None = None

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    @property
    def overlap_paper_sq(self) -> np.ndarray:
        return self.overlap_paper**2

    @property
    def overlap_unit_sq(self) -> np.ndarray:
        return self.overlap_unit**2

    def deviations(self) -> dict[str, np.ndarray]:
        """Observed minus predicted, aligned index-by-index over min(k, r)."""
        m = min(self.k, self.params.r)
        return {
            "eigenvalue": self.eigenvalues[:m] - self.predicted_eigenvalues[:m],
            "overlap_sq": np.diag(self.overlap_paper_sq)[:m] - self.predicted_overlaps[:m],
        }

    def to_json_dict(self, include_wall_time: bool = True) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "trial_index": self.trial_index,
            "params": _params_to_dict(self.params),
            "eigenvalues": self.eigenvalues.tolist(),
            "residuals": self.residuals.tolist(),
            "iterations": self.iterations,
            "support_sizes": list(self.support_sizes),
            "spike_norms_sq": list(self.spike_norms_sq),
            "overlap_paper": self.overlap_paper.tolist(),
            "overlap_unit": self.overlap_unit.tolist(),
            "predicted_eigenvalues": self.predicted_eigenvalues.tolist(),
            "predicted_overlaps": self.predicted_overlaps.tolist(),
            "extras": dict(sorted(self.extras.items())),
        }
        if include_wall_time:
            d["wall_time"] = self.wall_time
        if self.eigenvectors is not None:
            d["eigenvectors"] = self.eigenvectors.tolist()
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrialRecord":
        r = len(d["predicted_eigenvalues"])
        k = len(d["eigenvalues"])
        shape = (k, r)
        vecs = d.get("eigenvectors")
        return cls(
            trial_index=d["trial_index"],
            params=_params_from_dict(d["params"]),
            eigenvalues=np.array(d["eigenvalues"], dtype=float),
            residuals=np.array(d["residuals"], dtype=float),
            iterations=d["iterations"],
            support_sizes=list(d["support_sizes"]),
            spike_norms_sq=list(d["spike_norms_sq"]),
            overlap_paper=np.array(d["overlap_paper"], dtype=float).reshape(shape),
            overlap_unit=np.array(d["overlap_unit"], dtype=float).reshape(shape),
            predicted_eigenvalues=np.array(d["predicted_eigenvalues"], dtype=float),
            predicted_overlaps=np.array(d["predicted_overlaps"], dtype=float),
            wall_time=d.get("wall_time", 0.0),
            extras=dict(d.get("extras", {})),
            eigenvectors=None if vecs is None else np.array(vecs, dtype=float),
        )

    def canonical_bytes(self) -> bytes:
        """Deterministic serialization: wall-clock time excluded."""
        return json.dumps(self.to_json_dict(include_wall_time=False), sort_keys=True).encode()


def run_trial(
    params: ModelParams,
    solver: SolverSettings,
    trial: int,
    store_vectors: bool = False,
) -> TrialRecord:
    """Sample one instance, solve top-k, and record overlaps and predictions.

    Overlaps are stored against both normalizations of each spike: the
    analysis normalization v_j / sqrt(n p_j) and the unit normalization
    v_j / |v_j|.  The two differ by the spike-norm fluctuation.
    """
    t0 = time.perf_counter()
    spikes = sample_spike_ensemble(params, derive_stream(params.seed, "spike", trial))
    noise = sample_sparse_wigner(params, derive_stream(params.seed, "wigner", trial))
    op = SpikedOperator.build(params, noise, spikes)
    try:
        spec = lanczos_topk(
            op,
            k=solver.k,
            tol=solver.tol,
            max_iter=solver.max_iter,
            stream=derive_stream(params.seed, "lanczos", trial),
        )
    except LinalgError as err:
        raise TrialError(trial, str(err)) from err
    k, r = spec.k, params.r
    overlap_paper = np.zeros((k, r))
    overlap_unit = np.zeros((k, r))
    norms_sq = [spikes.column_norm_sq(j) for j in range(r)]
    for j, (idx, vals) in enumerate(spikes.columns):
        paper_scale = 1.0 / math.sqrt(params.n * params.p_list[j])
        unit_scale = 1.0 / math.sqrt(norms_sq[j]) if norms_sq[j] > 0.0 else 0.0
        dots = spec.eigenvectors[:, idx] @ vals
        overlap_paper[:, j] = dots * paper_scale
        overlap_unit[:, j] = dots * unit_scale
    return TrialRecord(
        trial_index=trial,
        params=params,
        eigenvalues=spec.eigenvalues,
        residuals=spec.residuals,
        iterations=spec.iterations,
        support_sizes=spikes.support_sizes,
        spike_norms_sq=norms_sq,
        overlap_paper=overlap_paper,
        overlap_unit=overlap_unit,
        predicted_eigenvalues=np.array([bbp_eigenvalue(t) for t in params.thetas]),
        predicted_overlaps=np.array([bbp_overlap(t) for t in params.thetas]),
        wall_time=time.perf_counter() - t0,
        eigenvectors=spec.eigenvectors.copy() if store_vectors else None,
    )


def _null_variant(params: ModelParams) -> ModelParams:
    return ModelParams(
        n=params.n,
        p=params.p,
        q=params.q,
        r=0,
        thetas=(),
        spike_prior=params.spike_prior,
        wigner_prior=params.wigner_prior,
        seed=params.seed,
    )


def run_detection_trial(
    params: ModelParams, solver: SolverSettings, epsilon: float, trial: int
) -> TrialRecord:
    """Paired planted/null trial sharing the noise stream, classified by lambda_1."""
    record = run_trial(params, solver, trial)
    null_params = _null_variant(params)
    null_solver = SolverSettings(k=1, tol=solver.tol, max_iter=solver.max_iter)
    null_record = run_trial(null_params, null_solver, trial)
    threshold = detection_threshold(epsilon)
    record.extras["null_lambda1"] = float(null_record.eigenvalues[0])
    record.extras["planted_detected"] = float(record.eigenvalues[0] > threshold)
    record.extras["null_false_alarm"] = float(null_record.eigenvalues[0] > threshold)
    return record


def _theta_blocks(thetas: tuple[float, ...]) -> list[list[int]]:
    """Maximal runs of equal signal values, as lists of 0-based spike indices."""
    blocks: list[list[int]] = []
    for j, t in enumerate(thetas):
        if blocks and thetas[blocks[-1][-1]] == t:
            blocks[-1].append(j)
        else:
            blocks.append([j])
    return blocks


def run_subspace_trial(params: ModelParams, solver: SolverSettings, trial: int) -> TrialRecord:
    """Recovery trial for repeated signals: block-summed squared overlaps.

    For each eigenvector index i aligned with a block of equal signals, the
    sum of squared overlaps against the block's spikes estimates
    1 - 1/theta_i^2 even though individual spike recovery is ill-posed.
    """
    record = run_trial(params, solver, trial)
    sq = record.overlap_paper_sq
    for block in _theta_blocks(params.thetas):
        for i in block:
            if i >= record.k:
                continue
            in_block = float(np.sum(sq[i, block]))
            out_block = float(np.sum(sq[i, :])) - in_block
            record.extras[f"block_overlap_sq[{i + 1}]"] = in_block
            record.extras[f"out_block_overlap_sq[{i + 1}]"] = out_block
    return record


def _trial_task(args: tuple) -> tuple[int, TrialRecord]:
    kind, params, solver, epsilon, store_vectors, trial = args
    if kind == "detect":
        rec = run_detection_trial(params, solver, epsilon, trial)
    elif kind == "subspace":
        rec = run_subspace_trial(params, solver, trial)
    else:  # simulate / recover / sweep point
        rec = run_trial(params, solver, trial, store_vectors=store_vectors)
    return trial, rec


def has_repeated_thetas(params: ModelParams) -> bool:
    return any(a == b for a, b in zip(params.thetas, params.thetas[1:]))


# ---------------------------------------------------------------------------
# aggregation and serialization
# ---------------------------------------------------------------------------


def _record_quantities(rec: TrialRecord) -> list[tuple[str, int, int, float, float]]:
    """Long-format rows (quantity, i, j, observed, predicted) for one record.

    Indices are 1-based; -1 marks a slot that does not apply; predictions
    that do not exist are NaN.
    """
    rows: list[tuple[str, int, int, float, float]] = []
    r = rec.params.r
    nan = float("nan")
    for i in range(rec.k):
        pred = float(rec.predicted_eigenvalues[i]) if i < r else nan
        rows.append(("eigenvalue", i + 1, -1, float(rec.eigenvalues[i]), pred))
    for i in range(rec.k):
        rows.append(("residual", i + 1, -1, float(rec.residuals[i]), nan))
    sq_paper = rec.overlap_paper_sq
    sq_unit = rec.overlap_unit_sq
    for i in range(rec.k):
        for j in range(r):
            rows.append(
                ("overlap_paper", i + 1, j + 1, float(rec.overlap_paper[i, j]), nan)
            )
            pred = (
                float(rec.predicted_overlaps[i]) if i == j else 0.0
            ) if i < r else nan
            rows.append(("overlap_sq_paper", i + 1, j + 1, float(sq_paper[i, j]), pred))
            rows.append(("overlap_sq_unit", i + 1, j + 1, float(sq_unit[i, j]), nan))
    for j in range(r):
        rows.append(("support_size", -1, j + 1, float(rec.support_sizes[j]), nan))
    for key in sorted(rec.extras):
        rows.append((key, -1, -1, float(rec.extras[key]), nan))
    return rows


def _stats(values: np.ndarray) -> dict[str, float]:
    values = np.asarray(values, dtype=float)
    q25, med, q75 = np.quantile(values, [0.25, 0.5, 0.75])
    return {
        "count": int(values.size),
        "mean": float(values.mean()),
        "std": float(values.std(ddof=1)) if values.size > 1 else 0.0,
        "min": float(values.min()),
        "q25": float(q25),
        "median": float(med),
        "q75": float(q75),
        "max": float(values.max()),
    }


def aggregate_records(records: list[TrialRecord]) -> dict[str, dict[str, float]]:
    """Summary statistics per tracked quantity, recomputable from the records."""
    buckets: dict[str, list[float]] = {}
    for rec in records:
        for quantity, i, j, observed, _pred in _record_quantities(rec):
            if i == -1 and j == -1:
                key = quantity
            elif j == -1:
                key = f"{quantity}[{i}]"
            elif i == -1:
                key = f"{quantity}[{j}]"
            else:
                key = f"{quantity}[{i},{j}]"
            buckets.setdefault(key, []).append(observed)
        for name, devs in rec.deviations().items():
            for i, d in enumerate(devs):
                buckets.setdefault(f"{name}_deviation[{i + 1}]", []).append(float(d))
    return {key: _stats(np.array(vals)) for key, vals in sorted(buckets.items())}


@dataclass
class CampaignResult:
    """All trial records of one campaign plus their aggregates."""

    records: list[TrialRecord]
    aggregates: dict[str, dict[str, float]]
    config_hash: str
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_records(
        cls,
        records: list[TrialRecord],
        digest: str,
        summary: dict[str, float] | None = None,
    ) -> "CampaignResult":
        records = sorted(records, key=lambda r: r.trial_index)
        aggregates = aggregate_records(records)
        for key, value in (summary or {}).items():
            aggregates[key] = {"value": float(value)}
        return cls(records=records, aggregates=aggregates, config_hash=digest)

    def csv_text(self) -> str:
        lines = [CSV_HEADER]
        for rec in self.records:
            for quantity, i, j, observed, pred in _record_quantities(rec):
                dev = observed - pred if not math.isnan(pred) else float("nan")
                lines.append(
                    f"{rec.trial_index},{quantity},{i},{j},"
                    f"{_fmt(observed)},{_fmt(pred)},{_fmt(dev)}"
                )
        return "\n".join(lines) + "\n"

    def canonical_bytes(self) -> bytes:
        payload = {
            "schema_version": self.schema_version,
            "config_hash": self.config_hash,
            "records": [r.to_json_dict(include_wall_time=False) for r in self.records],
            "aggregates": self.aggregates,
        }
        return json.dumps(payload, sort_keys=True).encode()


# ---------------------------------------------------------------------------
# single-shot experiments (dense path / diagnostics)
# ---------------------------------------------------------------------------


@dataclass
class EsdResult:
    """Full dense spectrum of one instance against the semicircle law."""

    eigenvalues: np.ndarray  # ascending
    bin_edges: np.ndarray
    counts: np.ndarray
    densities: np.ndarray  # semicircle density at bin midpoints
    ks_statistic: float
    interval_count: int
    interval_expected: float
    outliers_observed: list[float]
    outliers_predicted: list[float]

    def summary(self) -> dict[str, float]:
        return {
            "ks_statistic": self.ks_statistic,
            "interval_count": float(self.interval_count),
            "interval_expected": self.interval_expected,
            "n_outliers_observed": float(len(self.outliers_observed)),
        }


def ks_distance_to_semicircle(sorted_values: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance between an empirical CDF and the semicircle CDF."""
    m = len(sorted_values)
    if m == 0:
        raise ValueError("need at least one value")
    dist = 0.0
    for i, x in enumerate(sorted_values):
        fx = semicircle_cdf(float(x))
        dist = max(dist, abs(fx - i / m), abs(fx - (i + 1) / m))
    return dist


def esd_experiment(
    params: ModelParams,
    bins: int = 80,
    epsilon: float = 0.1,
    trial: int = 0,
    interval: tuple[float, float] = (-0.5, 0.5),
) -> EsdResult:
    """Full spectrum of one dense instance: histogram, KS distance, interval count.

    The dense path (materialize, tridiagonalize, Sturm bisection) caps n at
    5000.  The KS statistic uses the lowest n - r eigenvalues, leaving the
    spike-driven outliers out of the bulk comparison.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    spikes = sample_spike_ensemble(params, derive_stream(params.seed, "spike", trial))
    noise = sample_sparse_wigner(params, derive_stream(params.seed, "wigner", trial))
    op = SpikedOperator.build(params, noise, spikes)
    d, e = tridiagonalize_householder(densify(op))
    lam = tridiag_eigenvalues(d, e, tol=1e-11)
    bulk = lam[: params.n - params.r] if params.r else lam
    ks = ks_distance_to_semicircle(bulk)
    n_int = count_eigs_in_interval(d, e, interval[0], interval[1])
    expected = params.n * (semicircle_cdf(interval[1]) - semicircle_cdf(interval[0]))
    threshold = detection_threshold(epsilon)
    edges = np.linspace(-2.5, max(lam[-1] + 0.1, 2.5), bins + 1)
    counts, _ = np.histogram(lam, bins=edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    return EsdResult(
        eigenvalues=lam,
        bin_edges=edges,
        counts=counts,
        densities=np.array([semicircle_pdf(float(x)) for x in mids]),
        ks_statistic=ks,
        interval_count=n_int,
        interval_expected=expected,
        outliers_observed=[float(x) for x in lam[lam > threshold]][::-1],
        outliers_predicted=[bbp_eigenvalue(t) for t in params.thetas if t > 1.0],
    )


@dataclass
class LocalLawResult:
    """Sampled diagonal resolvent entries against the Stieltjes transform."""

    z: float
    indices: np.ndarray
    entries: np.ndarray
    reference: float
    max_deviation: float

    def summary(self) -> dict[str, float]:
        return {
            "z": self.z,
            "reference_m": self.reference,
            "max_deviation": self.max_deviation,
        }


def local_law_experiment(
    params: ModelParams,
    z: float,
    sample_indices: int,
    trial: int = 0,
    tol: float = 1e-8,
) -> LocalLawResult:
    """Max deviation of sampled R_ii(z) from m(z) for the pure-noise operator."""
    if params.r != 0:
        raise ValueError("local law experiment requires r = 0")
    if sample_indices < 1 or sample_indices > params.n:
        raise ValueError("sample_indices must be in [1, n]")
    noise = sample_sparse_wigner(params, derive_stream(params.seed, "wigner", trial))
    op = SpikedOperator.build(params, noise, SpikeEnsemble(n=params.n, thetas=(), columns=[]))
    rng = derive_stream(params.seed, "indices", trial)
    idx = np.sort(rng.choice(params.n, size=sample_indices, replace=False))
    entries = resolvent_diag_entries(op, z, idx, tol=tol)
    ref = stieltjes_m(z)
    return LocalLawResult(
        z=z,
        indices=idx,
        entries=entries,
        reference=ref,
        max_deviation=float(np.max(np.abs(entries - ref))),
    )


@dataclass
class SupportResult:
    """Support-size concentration across trials and spikes."""

    sizes: np.ndarray  # (trials, r)
    windows: list[tuple[float, float]]
    violations: int
    total: int
    reference_bound: float

    @property
    def violation_fraction(self) -> float:
        return self.violations / self.total if self.total else 0.0

    def summary(self) -> dict[str, float]:
        return {
            "violation_fraction": self.violation_fraction,
            "violations": float(self.violations),
            "total_pairs": float(self.total),
            "reference_bound": self.reference_bound,
        }


def support_concentration_experiment(params: ModelParams, trials: int) -> SupportResult:
    """Fraction of (trial, spike) pairs outside the concentration window."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if params.r < 1:
        raise ValueError("needs at least one spike")
    windows = [support_window(params.n * p_i) for p_i in params.p_list]
    sizes = np.zeros((trials, params.r))
    violations = 0
    for t in range(trials):
        ens = sample_spike_ensemble(params, derive_stream(params.seed, "spike", t))
        for j, size in enumerate(ens.support_sizes):
            sizes[t, j] = size
            lo, hi = windows[j]
            violations += not lo <= size <= hi
    return SupportResult(
        sizes=sizes,
        windows=windows,
        violations=violations,
        total=trials * params.r,
        reference_bound=params.r * params.np_min**-2,
    )


def _power_iteration_top(gram: np.ndarray, iters: int = 500, tol: float = 1e-13) -> float:
    """Largest eigenvalue of a small PSD matrix by plain power iteration."""
    r = gram.shape[0]
    v = np.ones(r) / math.sqrt(r)
    lam = 0.0
    for _ in range(iters):
        w = gram @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        new_lam = float(v @ gram @ v)
        if abs(new_lam - lam) <= tol * max(1.0, abs(new_lam)):
            return new_lam
        lam = new_lam
    return lam


@dataclass
class NormResult:
    """Scaled squared operator norm of the spike matrix across trials."""

    values: np.ndarray  # (1/np) |V|_2^2 per trial
    bound: float
    exceed_fraction: float

    def summary(self) -> dict[str, float]:
        return {
            "mean_value": float(self.values.mean()),
            "bound": self.bound,
            "exceed_fraction": self.exceed_fraction,
        }


def spike_norm_experiment(
    params: ModelParams, trials: int, gamma: float = 1.0
) -> NormResult:
    """(1/np)|V|_2^2 versus its concentration bound around r.

    The squared operator norm is the top eigenvalue of the r x r Gram matrix
    of the scaled columns v_j / sqrt(n p_j), found by power iteration.  The
    exceedance fraction counts trials where value - r overshoots
    r/(np log(np)^gamma) + r log(np) sqrt(np)/np at np = min_j n p_j.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    np_eff = params.np_min
    if params.r and np_eff <= math.e:
        raise ValueError("needs np > e")
    values = np.zeros(trials)
    for t in range(trials):
        ens = sample_spike_ensemble(params, derive_stream(params.seed, "spike", t))
        if params.r == 0:
            continue
        cols = ens.to_dense()
        for j, p_j in enumerate(params.p_list):
            cols[:, j] /= math.sqrt(params.n * p_j)
        values[t] = _power_iteration_top(cols.T @ cols)
    if params.r == 0:
        return NormResult(values=values, bound=0.0, exceed_fraction=0.0)
    log_np = math.log(np_eff)
    bound = params.r / (np_eff * log_np**gamma) + params.r * log_np * math.sqrt(np_eff) / np_eff
    exceed = float(np.mean(values - params.r > bound))
    return NormResult(values=values, bound=bound, exceed_fraction=exceed)


# ---------------------------------------------------------------------------
# campaign driver with incremental persistence
# ---------------------------------------------------------------------------


def write_manifest(outdir: Path, payload: dict) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _record_path(outdir: Path, trial: int) -> Path:
    return outdir / "records" / f"trial_{trial:05d}.json"


def _write_record(outdir: Path, rec: TrialRecord, digest: str) -> None:
    path = _record_path(outdir, rec.trial_index)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"config_hash": digest, "record": rec.to_json_dict()}
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
    tmp.replace(path)


def _load_existing_records(outdir: Path, digest: str, trials: list[int]) -> dict[int, TrialRecord]:
    out: dict[int, TrialRecord] = {}
    for trial in trials:
        path = _record_path(outdir, trial)
        if not path.exists():
            continue
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError):
            continue
        if payload.get("config_hash") != digest:
            continue
        out[trial] = TrialRecord.from_json_dict(payload["record"])
    return out


def run_trial_campaign(
    kind: str,
    params: ModelParams,
    solver: SolverSettings,
    trials: list[int],
    output_dir: str | Path | None = None,
    workers: int = 1,
    epsilon: float = 0.1,
    store_vectors: bool = False,
    summary_fn=None,
    manifest_extra: dict | None = None,
) -> CampaignResult:
    """Run (or resume) a set of trials, optionally in parallel worker processes.

    Completed records are written to output_dir/records as they finish, so a
    killed campaign resumes from disk.  Results are canonically ordered by
    trial index; worker count never changes the output bytes.  A worker
    failure aborts the campaign with completed records preserved.
    """
    if not trials:
        raise ValueError("empty trial list")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    digest = config_hash(params, solver)
    outdir = Path(output_dir) if output_dir is not None else None
    done: dict[int, TrialRecord] = {}
    if outdir is not None:
        write_manifest(
            outdir,
            {
                "schema_version": SCHEMA_VERSION,
                "status": "running",
                "experiment": kind,
                "config_hash": digest,
                "model": _params_to_dict(params),
                "solver": solver.to_json_dict(),
                "trials": list(trials),
                "epsilon": epsilon,
                "aggregates": None,
                **(manifest_extra or {}),
            },
        )
        done = _load_existing_records(outdir, digest, trials)
    missing = [t for t in trials if t not in done]
    tasks = [(kind, params, solver, epsilon, store_vectors, t) for t in missing]

    def record_done(rec: TrialRecord) -> None:
        done[rec.trial_index] = rec
        if outdir is not None:
            _write_record(outdir, rec, digest)

    if tasks:
        if workers == 1:
            for task in tasks:
                _, rec = _trial_task(task)
                record_done(rec)
        else:
            # fork keeps children independent of how __main__ was launched and
            # inherits the BLAS configuration, so results match the serial path
            ctx = get_context("fork")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                futures = [pool.submit(_trial_task, task) for task in tasks]
                completed, pending = wait(futures, return_when=FIRST_EXCEPTION)
                failure = None
                for fut in completed:
                    err = fut.exception()
                    if err is not None:
                        failure = err
                        break
                    _, rec = fut.result()
                    record_done(rec)
                if failure is not None:
                    for fut in pending:
                        fut.cancel()
                    raise CampaignError(
                        f"worker failed ({failure}); {len(done)} completed records preserved"
                    ) from failure
    records = [done[t] for t in trials]
    summary = summary_fn(records) if summary_fn else None
    result = CampaignResult.from_records(records, digest, summary)
    if outdir is not None:
        with open(outdir / "campaign.csv", "w", encoding="utf-8") as fh:
            fh.write(result.csv_text())
        write_manifest(
            outdir,
            {
                "schema_version": SCHEMA_VERSION,
                "status": "complete",
                "experiment": kind,
                "config_hash": digest,
                "model": _params_to_dict(params),
                "solver": solver.to_json_dict(),
                "trials": list(trials),
                "epsilon": epsilon,
                "aggregates": result.aggregates,
                **(manifest_extra or {}),
            },
        )
    return result


def run_campaign(config) -> CampaignResult:
    """Generic parallel driver over a resolved campaign configuration.

    Dispatches the trial-parallel experiment kinds (simulate, detect,
    recover, subspace) with incremental persistence under
    config.output_dir.  Single-shot experiment kinds have their own entry
    points.
    """
    kind = config.experiment
    manifest_extra = None
    if hasattr(config, "to_json_dict"):
        manifest_extra = {
            "config": config.to_json_dict(),
            "warnings": list(getattr(config, "warnings", [])),
        }
    if kind == "detect":
        return detection_experiment(
            config.model,
            epsilon=config.epsilon,
            trials=config.trials,
            solver=config.solver,
            output_dir=config.output_dir,
            workers=config.workers,
            manifest_extra=manifest_extra,
        )
    if kind == "recover":
        return recovery_experiment(
            config.model,
            trials=config.trials,
            solver=config.solver,
            output_dir=config.output_dir,
            workers=config.workers,
            manifest_extra=manifest_extra,
        )
    if kind == "subspace":
        return subspace_recovery_experiment(
            config.model,
            trials=config.trials,
            solver=config.solver,
            output_dir=config.output_dir,
            workers=config.workers,
            manifest_extra=manifest_extra,
        )
    if kind == "simulate":
        return run_trial_campaign(
            "simulate",
            config.model,
            config.solver,
            list(range(config.trials)),
            output_dir=config.output_dir,
            workers=config.workers,
            epsilon=config.epsilon,
            store_vectors=getattr(config, "store_vectors", False),
            manifest_extra=manifest_extra,
        )
    raise ValueError(f"run_campaign does not handle experiment kind {kind!r}")


def load_campaign(output_dir: str | Path) -> CampaignResult:
    """Load a persisted campaign and verify its aggregates recompute exactly."""
    outdir = Path(output_dir)
    with open(outdir / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    digest = manifest["config_hash"]
    trials = manifest["trials"]
    records = _load_existing_records(outdir, digest, trials)
    if len(records) != len(trials):
        raise CampaignError(
            f"campaign incomplete: {len(records)} of {len(trials)} records present"
        )
    ordered = [records[t] for t in trials]
    recomputed = aggregate_records(ordered)
    stored = manifest.get("aggregates") or {}
    for key, stats in recomputed.items():
        if key not in stored or any(
            not math.isclose(stored[key][s], stats[s], rel_tol=0.0, abs_tol=0.0)
            for s in stats
        ):
            raise CampaignError(f"stored aggregates disagree with records at {key!r}")
    result = CampaignResult(records=ordered, aggregates=stored, config_hash=digest)
    return result


def detection_summary(records: list[TrialRecord]) -> dict[str, float]:
    planted_missed = [1.0 - r.extras["planted_detected"] for r in records]
    false_alarms = [r.extras["null_false_alarm"] for r in records]
    type1 = float(np.mean(false_alarms))
    type2 = float(np.mean(planted_missed))
    return {"type1_error": type1, "type2_error": type2, "combined_error": type1 + type2}


def detection_experiment(
    params: ModelParams,
    epsilon: float,
    trials: int,
    solver: SolverSettings | None = None,
    output_dir: str | Path | None = None,
    workers: int = 1,
    manifest_extra: dict | None = None,
) -> CampaignResult:
    """Paired planted/null campaign classified by lambda_1 > 2 + epsilon."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    solver = solver or SolverSettings(k=max(1, params.r))
    return run_trial_campaign(
        "detect",
        params,
        solver,
        list(range(trials)),
        output_dir=output_dir,
        workers=workers,
        epsilon=epsilon,
        summary_fn=detection_summary,
        manifest_extra=manifest_extra,
    )


def recovery_experiment(
    params: ModelParams,
    trials: int,
    solver: SolverSettings | None = None,
    output_dir: str | Path | None = None,
    workers: int = 1,
    manifest_extra: dict | None = None,
) -> CampaignResult:
    """Squared self- and cross-overlap campaign for distinct signal values."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if has_repeated_thetas(params):
        raise ValueError(
            "repeated signal values: individual spike recovery is ill-posed, "
            "use subspace_recovery_experiment"
        )
    solver = solver or SolverSettings(k=params.r + 1 if params.r else 1)
    return run_trial_campaign(
        "recover",
        params,
        solver,
        list(range(trials)),
        output_dir=output_dir,
        workers=workers,
        manifest_extra=manifest_extra,
    )


def subspace_recovery_experiment(
    params: ModelParams,
    trials: int,
    solver: SolverSettings | None = None,
    output_dir: str | Path | None = None,
    workers: int = 1,
    manifest_extra: dict | None = None,
) -> CampaignResult:
    """Block-summed overlap campaign for repeated signal values."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    solver = solver or SolverSettings(k=params.r + 1 if params.r else 1)
    return run_trial_campaign(
        "subspace",
        params,
        solver,
        list(range(trials)),
        output_dir=output_dir,
        workers=workers,
        manifest_extra=manifest_extra,
    )


@dataclass
class SweepResult:
    """Recovery statistics along a grid of signal strengths."""

    rows: list[dict[str, float]]  # theta, mean, std, predicted, trials
    campaigns: list[CampaignResult]

    def csv_text(self) -> str:
        lines = [SWEEP_HEADER]
        for row in self.rows:
            lines.append(
                f"{_fmt(row['theta'])},{_fmt(row['mean_overlap_sq'])},"
                f"{_fmt(row['std_overlap_sq'])},{_fmt(row['predicted_overlap_sq'])},"
                f"{int(row['trials'])}"
            )
        return "\n".join(lines) + "\n"


def theta_sweep(
    params: ModelParams,
    theta_grid: list[float],
    trials: int,
    solver: SolverSettings | None = None,
    output_dir: str | Path | None = None,
    workers: int = 1,
) -> SweepResult:
    """Single-spike recovery across a grid of signal strengths.

    Grid points use disjoint trial-index ranges so their streams are
    independent.  Each row reports the mean and standard deviation of the
    squared overlap with the analysis-normalized spike.
    """
    if not theta_grid:
        raise ValueError("theta grid must be non-empty")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    solver = solver or SolverSettings(k=2)
    rows = []
    campaigns = []
    outdir = Path(output_dir) if output_dir is not None else None
    for g, theta in enumerate(theta_grid):
        point = ModelParams(
            n=params.n,
            p=params.p if not isinstance(params.p, tuple) else params.p[0],
            q=params.q,
            r=1,
            thetas=(float(theta),),
            spike_prior=params.spike_prior,
            wigner_prior=params.wigner_prior,
            seed=params.seed,
        )
        trial_ids = list(range(g * trials, (g + 1) * trials))
        sub = run_trial_campaign(
            "recover",
            point,
            solver,
            trial_ids,
            output_dir=None if outdir is None else outdir / f"theta_{g:02d}",
            workers=workers,
        )
        stats = sub.aggregates["overlap_sq_paper[1,1]"]
        rows.append(
            {
                "theta": float(theta),
                "mean_overlap_sq": stats["mean"],
                "std_overlap_sq": stats["std"],
                "predicted_overlap_sq": bbp_overlap(float(theta)),
                "trials": trials,
            }
        )
        campaigns.append(sub)
    result = SweepResult(rows=rows, campaigns=campaigns)
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "sweep.csv", "w", encoding="utf-8") as fh:
            fh.write(result.csv_text())
    return result


def histogram_csv_text(result: EsdResult) -> str:
    lines = [HISTOGRAM_HEADER]
    for left, right, count, dens in zip(
        result.bin_edges[:-1], result.bin_edges[1:], result.counts, result.densities
    ):
        lines.append(f"{_fmt(left)},{_fmt(right)},{int(count)},{_fmt(dens)}")
    return "\n".join(lines) + "\n"
