"""Command-line entry point: parse config, validate the parameter regime,
dispatch experiments, write results.

Configuration comes from a JSON file (--config) with individual flags
overriding file values.  Every run echoes its fully resolved configuration
into the output manifest before any trial starts.  Progress goes to stderr;
machine-readable output goes to files, except the `theory` subcommand which
prints its predictions as JSON on stdout.

Exit codes: 0 success, 1 configuration error, 2 solver failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .experiments import (
    CampaignError,
    SolverSettings,
    TrialError,
    config_hash as experiments_config_hash,
    esd_experiment,
    histogram_csv_text,
    local_law_experiment,
    run_campaign,
    spike_norm_experiment,
    support_concentration_experiment,
    theta_sweep,
    write_manifest,
    _params_to_dict,
    _fmt,
    CSV_HEADER,
    SCHEMA_VERSION,
)
from .rand_models import ConfigurationError, ModelParams
from .sparse_linalg import LinalgError
from .theory import bbp_eigenvalue, bbp_overlap

EXPERIMENTS = (
    "simulate",
    "detect",
    "recover",
    "subspace",
    "esd",
    "locallaw",
    "support",
    "norm",
    "sweep",
    "theory",
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_IO = 3

_FILE_KEYS = {
    "n", "p", "q", "r", "thetas", "spike_prior", "wigner_prior", "seed",
    "k", "tol", "max_iter", "experiment", "trials", "epsilon", "theta_grid",
    "output_dir", "workers", "tolerance_file", "bins", "z", "sample_indices",
    "store_vectors",
}


class ConfigError(ValueError):
    """One aggregated configuration failure listing every detected problem."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class CampaignConfig:
    """Fully resolved run configuration."""

    model: ModelParams
    solver: SolverSettings
    experiment: str
    trials: int
    epsilon: float
    output_dir: Path
    workers: int
    theta_grid: list[float] | None = None
    tolerance_file: Path | None = None
    store_vectors: bool = False
    bins: int = 80
    z: float = 3.0
    sample_indices: int = 50
    warnings: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "model": _params_to_dict(self.model),
            "solver": self.solver.to_json_dict(),
            "experiment": self.experiment,
            "trials": self.trials,
            "epsilon": self.epsilon,
            "output_dir": str(self.output_dir),
            "workers": self.workers,
            "theta_grid": self.theta_grid,
            "tolerance_file": None if self.tolerance_file is None else str(self.tolerance_file),
            "store_vectors": self.store_vectors,
            "bins": self.bins,
            "z": self.z,
            "sample_indices": self.sample_indices,
            "warnings": list(self.warnings),
        }


def _parse_float_list(text: str) -> list[float]:
    return [float(x) for x in str(text).split(",") if str(x).strip() != ""]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparse-bbp",
        description="Doubly sparse spiked Wigner model: sampling, spectra, verification campaigns.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="|".join(EXPERIMENTS))
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--p", type=str, default=None, help="spike sparsity, scalar or comma list")
        p.add_argument("--q", type=float, default=None)
        p.add_argument("--r", type=int, default=None)
        p.add_argument("--thetas", type=str, default=None, help="comma list, non-increasing")
        p.add_argument("--spike-prior", type=str, default=None, choices=("gaussian", "rademacher"))
        p.add_argument("--wigner-prior", type=str, default=None, choices=("gaussian", "rademacher"))
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--epsilon", type=float, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--max-iter", type=int, default=None)
        p.add_argument("--theta-grid", type=str, default=None, help="comma list for sweep")
        p.add_argument("--bins", type=int, default=None)
        p.add_argument("--z", type=float, default=None)
        p.add_argument("--indices", type=int, default=None, help="sampled resolvent indices")
        p.add_argument("--store-vectors", action="store_true", default=None)
        p.add_argument("--tolerance-file", type=str, default=None)
    return parser


def parse_config(args: argparse.Namespace) -> CampaignConfig:
    """Merge config file and flags (flags win) into a validated CampaignConfig.

    Every detected problem is reported in one aggregated error.
    """
    problems: list[str] = []
    raw: dict = {}
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as err:
            raise ConfigError([f"cannot read config file: {err}"]) from err
        except json.JSONDecodeError as err:
            raise ConfigError([f"config file is not valid JSON: {err}"]) from err
        if not isinstance(raw, dict):
            raise ConfigError(["config file must contain a JSON object"])
        for key in sorted(set(raw) - _FILE_KEYS):
            problems.append(f"unknown config key {key!r}")

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        if key in raw and raw[key] is not None:
            return raw[key]
        return default

    def coerce(value, kind, key):
        try:
            return kind(value)
        except (TypeError, ValueError):
            problems.append(f"{key}: expected {kind.__name__}, got {value!r}")
            return None

    n = coerce(pick(args.n, "n", None), int, "n") if pick(args.n, "n", None) is not None else None
    q = coerce(pick(args.q, "q", None), float, "q") if pick(args.q, "q", None) is not None else None
    r_value = pick(args.r, "r", None)
    r = coerce(r_value, int, "r") if r_value is not None else None
    seed = coerce(pick(args.seed, "seed", 0), int, "seed")
    trials = coerce(pick(args.trials, "trials", 1), int, "trials")
    epsilon = coerce(pick(args.epsilon, "epsilon", 0.1), float, "epsilon")
    env_workers = os.environ.get("SPARSE_BBP_WORKERS")
    workers = coerce(
        pick(args.workers, "workers", env_workers if env_workers is not None else 1),
        int,
        "workers",
    )
    bins = coerce(pick(args.bins, "bins", 80), int, "bins")
    z = coerce(pick(args.z, "z", 3.0), float, "z")
    sample_indices = coerce(pick(args.indices, "sample_indices", 50), int, "sample_indices")
    tol = coerce(pick(args.tol, "tol", 1e-8), float, "tol")
    max_iter = coerce(pick(args.max_iter, "max_iter", 500), int, "max_iter")
    store_vectors = bool(pick(args.store_vectors, "store_vectors", False))
    experiment = args.experiment or raw.get("experiment")
    if experiment not in EXPERIMENTS:
        problems.append(f"unknown experiment {experiment!r}")

    p_value = pick(args.p, "p", None)
    if p_value is None:
        p: float | tuple | None = None
    elif isinstance(p_value, str):
        parts = _parse_float_list(p_value) if p_value else []
        p = parts[0] if len(parts) == 1 else tuple(parts)
    elif isinstance(p_value, (list, tuple)):
        p = tuple(float(x) for x in p_value)
    else:
        p = coerce(p_value, float, "p")

    thetas_value = pick(args.thetas, "thetas", [])
    if isinstance(thetas_value, str):
        try:
            thetas = tuple(_parse_float_list(thetas_value))
        except ValueError:
            problems.append(f"thetas: expected comma-separated floats, got {thetas_value!r}")
            thetas = ()
    elif isinstance(thetas_value, (list, tuple)):
        thetas = tuple(float(x) for x in thetas_value)
    else:
        problems.append(f"thetas: expected list, got {thetas_value!r}")
        thetas = ()
    if r is None:
        r = len(thetas)

    grid_value = pick(args.theta_grid, "theta_grid", None)
    if grid_value is None:
        theta_grid = None
    elif isinstance(grid_value, str):
        theta_grid = _parse_float_list(grid_value)
    elif isinstance(grid_value, (list, tuple)):
        theta_grid = [float(x) for x in grid_value]
    else:
        problems.append(f"theta_grid: expected list, got {grid_value!r}")
        theta_grid = None

    for key, value in (("n", n), ("p", p), ("q", q)):
        if value is None and experiment != "theory":
            problems.append(f"missing required field {key!r}")
    if experiment == "theory" and not thetas:
        problems.append("theory experiment needs at least one theta")
    if experiment == "sweep" and not theta_grid:
        problems.append("sweep experiment needs a theta_grid")
    if trials is not None and trials < 1:
        problems.append(f"trials must be >= 1, got {trials}")
    if workers is not None and workers < 1:
        problems.append(f"workers must be >= 1, got {workers}")

    model = None
    if not problems:
        model_kwargs = dict(
            n=n if n is not None else 1,
            p=p if p is not None else 1.0,
            q=q if q is not None else 0.0,
            r=r,
            thetas=thetas,
            seed=seed,
        )
        spike_prior = pick(args.spike_prior, "spike_prior", None)
        wigner_prior = pick(args.wigner_prior, "wigner_prior", None)
        if spike_prior is not None:
            model_kwargs["spike_prior"] = spike_prior
        if wigner_prior is not None:
            model_kwargs["wigner_prior"] = wigner_prior
        try:
            model = ModelParams(**model_kwargs)
        except ConfigurationError as err:
            problems.append(str(err))
    if problems:
        raise ConfigError(problems)

    k_default = max(1, model.r + (1 if experiment in ("simulate", "recover", "subspace", "sweep") else 0))
    k = coerce(pick(args.k, "k", k_default), int, "k")
    solver = SolverSettings(k=k, tol=tol, max_iter=max_iter)
    out = pick(args.out, "output_dir", "sparse_bbp_out")
    tolerance_file = pick(args.tolerance_file, "tolerance_file", None)
    return CampaignConfig(
        model=model,
        solver=solver,
        experiment=experiment,
        trials=trials,
        epsilon=epsilon,
        output_dir=Path(out),
        workers=workers,
        theta_grid=theta_grid,
        tolerance_file=None if tolerance_file is None else Path(tolerance_file),
        store_vectors=store_vectors,
        bins=bins,
        z=z,
        sample_indices=sample_indices,
    )


def validate_regime(config: CampaignConfig) -> list[str]:
    """Check the configuration against the asymptotic regime of the theory.

    Non-fatal warnings flag a noise sparsity factor tau = qn/log n <= 3 or a
    spike support scale np <= 20 (outside the asymptotic regime the predictions address).
    A detection run whose threshold 2 + epsilon sits at or above the smallest
    supercritical outlier is a fatal misconfiguration.
    """
    warnings: list[str] = []
    model = config.model
    if config.experiment == "theory":
        return warnings
    if model.n > 1:
        tau = model.q * model.n / math.log(model.n)
        if tau <= 3.0:
            warnings.append(
                f"noise sparsity factor tau = qn/log(n) = {tau:.3g} <= 3: "
                "outside the validated regime"
            )
    if model.r >= 1 and model.np_min <= 20.0:
        warnings.append(
            f"spike support scale np = {model.np_min:.3g} <= 20: "
            "outside the validated regime"
        )
    supercritical = [t for t in model.thetas if t > 1.0]
    if config.experiment == "detect":
        if supercritical:
            smallest = min(bbp_eigenvalue(t) for t in supercritical)
            if 2.0 + config.epsilon >= smallest:
                raise ConfigError(
                    [
                        f"detection threshold 2+epsilon = {2.0 + config.epsilon:.6g} is not "
                        f"below the smallest supercritical outlier {smallest:.6g}; "
                        "decrease epsilon"
                    ]
                )
        else:
            warnings.append("no supercritical signal: detection cannot succeed")
    config.warnings = warnings
    return warnings


def _write_rows_csv(path: Path, rows: list[tuple]) -> None:
    lines = [CSV_HEADER]
    for trial, quantity, i, j, observed, predicted, deviation in rows:
        lines.append(
            f"{trial},{quantity},{i},{j},{_fmt(observed)},{_fmt(predicted)},{_fmt(deviation)}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _manifest_payload(config: CampaignConfig, status: str, aggregates=None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "status": status,
        "experiment": config.experiment,
        "config_hash": experiments_config_hash(config.model, config.solver),
        "config": config.to_json_dict(),
        "model": _params_to_dict(config.model),
        "solver": config.solver.to_json_dict(),
        "epsilon": config.epsilon,
        "aggregates": aggregates,
        "warnings": list(config.warnings),
    }


def dispatch(config: CampaignConfig) -> int:
    """Run the configured experiment and write its outputs."""
    nan = float("nan")
    progress = lambda msg: print(msg, file=sys.stderr, flush=True)  # noqa: E731

    if config.experiment == "theory":
        for theta in config.model.thetas:
            print(
                json.dumps(
                    {
                        "theta": theta,
                        "lambda": bbp_eigenvalue(theta),
                        "overlap": bbp_overlap(theta),
                    }
                )
            )
        return EXIT_OK

    outdir = config.output_dir
    progress(f"[sparse-bbp] {config.experiment}: n={config.model.n} trials={config.trials}")

    if config.experiment in ("simulate", "recover", "subspace", "detect"):
        result = run_campaign(config)
        progress(f"[sparse-bbp] complete: {len(result.records)} records -> {outdir}")
        return EXIT_OK

    if config.experiment == "sweep":
        write_manifest(outdir, _manifest_payload(config, "running"))
        sweep = theta_sweep(
            config.model,
            config.theta_grid,
            trials=config.trials,
            solver=config.solver,
            output_dir=outdir,
            workers=config.workers,
        )
        write_manifest(
            outdir, _manifest_payload(config, "complete", {"rows": sweep.rows})
        )
        progress(f"[sparse-bbp] sweep complete: {len(sweep.rows)} grid points -> {outdir}")
        return EXIT_OK

    if config.experiment == "esd":
        write_manifest(outdir, _manifest_payload(config, "running"))
        result = esd_experiment(
            config.model, bins=config.bins, epsilon=config.epsilon
        )
        (outdir / "histogram.csv").write_text(histogram_csv_text(result), encoding="utf-8")
        rows = [
            (0, "ks_statistic", -1, -1, result.ks_statistic, nan, nan),
            (0, "interval_count", -1, -1, float(result.interval_count),
             result.interval_expected, result.interval_count - result.interval_expected),
        ]
        for i, lam in enumerate(result.outliers_observed):
            pred = result.outliers_predicted[i] if i < len(result.outliers_predicted) else nan
            rows.append((0, "outlier", i + 1, -1, lam, pred,
                         lam - pred if not math.isnan(pred) else nan))
        _write_rows_csv(outdir / "campaign.csv", rows)
        aggregates = result.summary()
        aggregates["outliers_observed"] = result.outliers_observed
        aggregates["outliers_predicted"] = result.outliers_predicted
        write_manifest(outdir, _manifest_payload(config, "complete", aggregates))
        progress(f"[sparse-bbp] esd complete: KS={result.ks_statistic:.4f} -> {outdir}")
        return EXIT_OK

    if config.experiment == "locallaw":
        write_manifest(outdir, _manifest_payload(config, "running"))
        result = local_law_experiment(
            config.model, z=config.z, sample_indices=config.sample_indices,
            tol=config.solver.tol,
        )
        rows = [
            (0, "resolvent_entry", int(i) + 1, -1, float(v), result.reference,
             float(v) - result.reference)
            for i, v in zip(result.indices, result.entries)
        ]
        _write_rows_csv(outdir / "campaign.csv", rows)
        write_manifest(outdir, _manifest_payload(config, "complete", result.summary()))
        progress(f"[sparse-bbp] locallaw complete: max dev={result.max_deviation:.4f}")
        return EXIT_OK

    if config.experiment == "support":
        write_manifest(outdir, _manifest_payload(config, "running"))
        result = support_concentration_experiment(config.model, trials=config.trials)
        rows = []
        for t in range(result.sizes.shape[0]):
            for j in range(result.sizes.shape[1]):
                expected = config.model.n * config.model.p_list[j]
                rows.append((t, "support_size", -1, j + 1, result.sizes[t, j],
                             expected, result.sizes[t, j] - expected))
        _write_rows_csv(outdir / "campaign.csv", rows)
        write_manifest(outdir, _manifest_payload(config, "complete", result.summary()))
        progress(f"[sparse-bbp] support complete: violations={result.violations}")
        return EXIT_OK

    if config.experiment == "norm":
        write_manifest(outdir, _manifest_payload(config, "running"))
        result = spike_norm_experiment(config.model, trials=config.trials)
        rows = [
            (t, "spike_norm_sq_scaled", -1, -1, float(v), float(config.model.r),
             float(v) - config.model.r)
            for t, v in enumerate(result.values)
        ]
        _write_rows_csv(outdir / "campaign.csv", rows)
        write_manifest(outdir, _manifest_payload(config, "complete", result.summary()))
        progress(f"[sparse-bbp] norm complete: exceed={result.exceed_fraction:.3f}")
        return EXIT_OK

    raise ConfigError([f"unknown experiment {config.experiment!r}"])  # pragma: no cover


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_OK if err.code == 0 else EXIT_CONFIG
    try:
        config = parse_config(args)
        warnings = validate_regime(config)
        for w in warnings:
            print(f"[sparse-bbp] warning: {w}", file=sys.stderr, flush=True)
    except ConfigError as err:
        for problem in err.problems:
            print(f"[sparse-bbp] config error: {problem}", file=sys.stderr, flush=True)
        return EXIT_CONFIG
    try:
        return dispatch(config)
    except ConfigError as err:
        for problem in err.problems:
            print(f"[sparse-bbp] config error: {problem}", file=sys.stderr, flush=True)
        return EXIT_CONFIG
    except (TrialError, LinalgError, CampaignError) as err:
        print(f"[sparse-bbp] solver failure: {err}", file=sys.stderr, flush=True)
        return EXIT_SOLVER
    except OSError as err:
        print(f"[sparse-bbp] i/o failure: {err}", file=sys.stderr, flush=True)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
