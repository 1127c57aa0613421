"""Command-line front end: `sl run`, `sl select-penalty`, `sl summary`.

Configuration is a single JSON document; command-line flags override file
values and the SL_SEED environment variable sits between them for the
master seed.  Progress and warnings go to stderr, result tables to stdout,
and artifacts (CSV/JSON) to the configured output directory.

Exit codes: 0 success, 2 configuration error, 3 simulation failure,
4 initialization failure, 5 penalty grid with no valid cell.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, InitializationError, ModelValidationError, SimulationError
from .external import ExternalSimulatorSpec, external_model
from .models import BUILTIN_MODELS, builtin_model, ma2_observed_summary, ma2_proposal_covariance
from .numerics import effective_sample_size
from .penalty import select_penalty
from .sampler import MhConfig, run_mcmc
from .shrinkage import ShrinkageSpec

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3
EXIT_INIT = 4
EXIT_EMPTY_GRID = 5

_SHRINKAGE_VOCAB = {"none": "none", "glasso": "glasso", "warton": "Warton"}


def _fmt(value: float) -> str:
    """Full-precision decimal text for CSV cells."""
    return format(float(value), ".17g")


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})"
        ) from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top-level config must be a JSON object")
    return raw


def _take(raw: dict, key: str, default=None, required: bool = False):
    if key in raw:
        return raw.pop(key)
    if required:
        raise ConfigError(f"config key '{key}' is required")
    return default


def _as_matrix(value, key: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key '{key}': not a numeric matrix ({exc})") from exc
    if arr.ndim != 2:
        raise ConfigError(f"config key '{key}': expected a 2-d matrix")
    return arr


def _load_vector(path: str, key: str) -> np.ndarray:
    try:
        arr = np.loadtxt(path, dtype=np.float64, ndmin=1)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"config key '{key}': cannot load {path!r} ({exc})") from exc
    return np.ravel(arr)


def _resolve_model(raw: dict):
    """Build the model from the config; returns (model, pool_or_None, echo)."""
    spec = _take(raw, "model", required=True)
    if isinstance(spec, str):
        spec = {"name": spec}
    if not isinstance(spec, dict):
        raise ConfigError("config key 'model': expected a name or an object")
    spec = dict(spec)
    theta0 = raw.pop("theta0", None)
    if "name" in spec and "command" in spec:
        raise ConfigError("config key 'model': give either 'name' or 'command', not both")
    if "name" in spec:
        name = spec.pop("name")
        options = spec.pop("options", {})
        if spec:
            raise ConfigError(f"config key 'model': unknown keys {sorted(spec)}")
        if name not in BUILTIN_MODELS:
            raise ConfigError(
                f"config key 'model': unknown model {name!r}; available: {list(BUILTIN_MODELS)}"
            )
        if theta0 is not None:
            options = dict(options)
            options["theta0"] = theta0
        try:
            model = builtin_model(name, options)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"config key 'model': {exc}") from exc
        echo = {"name": name, "options": dict(options)}
        return model, None, echo
    if "command" in spec:
        command = spec.pop("command")
        timeout = spec.pop("timeout", 30.0)
        if spec:
            raise ConfigError(f"config key 'model': unknown keys {sorted(spec)}")
        if isinstance(command, str):
            command = [command]
        if theta0 is None:
            raise ConfigError("config key 'theta0' is required for external simulators")
        try:
            sim_spec = ExternalSimulatorSpec(command=tuple(command), timeout=float(timeout))
            model, pool = external_model(sim_spec, theta0)
        except SimulationError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"config key 'model': {exc}") from exc
        echo = {"command": list(sim_spec.command), "timeout": sim_spec.timeout, "theta0": list(map(float, np.atleast_1d(theta0)))}
        return model, pool, echo
    raise ConfigError("config key 'model': needs 'name' (built-in) or 'command' (external)")


def _resolve_s_obs(raw: dict, model, model_echo: dict) -> tuple[np.ndarray, str]:
    ssy = _take(raw, "ssy")
    y = _take(raw, "y")
    if ssy is not None and y is not None:
        raise ConfigError("give either 'ssy' or 'y', not both")
    if ssy is not None:
        if isinstance(ssy, (list, tuple)):
            return np.asarray(ssy, dtype=np.float64), "inline"
        return _load_vector(str(ssy), "ssy"), str(ssy)
    if y is not None:
        if "command" in model_echo:
            raise ConfigError(
                "config key 'y': external simulators serve summaries; provide 'ssy'"
            )
        if isinstance(y, (list, tuple)):
            dataset = np.asarray(y, dtype=np.float64)
            source = "inline"
        else:
            dataset = _load_vector(str(y), "y")
            source = str(y)
        return np.atleast_1d(np.asarray(model.summarize(dataset, **model.sum_args), dtype=np.float64)), source
    if model_echo.get("name") == "ma2" and model_echo.get("options", {}).get("T", 50) == 50:
        return ma2_observed_summary(), "builtin:ma2"
    raise ConfigError("config key 'ssy' (or 'y') is required for this model")


def _resolve_shrinkage(raw: dict) -> ShrinkageSpec:
    kind = _take(raw, "shrinkage", "none")
    penalty = _take(raw, "penalty", 0.0)
    canonical = _SHRINKAGE_VOCAB.get(str(kind).lower())
    if canonical is None:
        raise ConfigError(
            f"config key 'shrinkage': unknown kind {kind!r}; "
            f"use one of {sorted(set(_SHRINKAGE_VOCAB.values()) | {'none', 'glasso'})}"
        )
    try:
        return ShrinkageSpec(str(kind).lower(), float(penalty))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"config key 'penalty': {exc}") from exc


def _resolve_run(raw: dict, seed_flag, workers_flag):
    model, pool, model_echo = _resolve_model(raw)
    try:
        s_obs, s_obs_source = _resolve_s_obs(raw, model, model_echo)

        cov = _take(raw, "cov_rand_walk")
        if cov is None:
            if model_echo.get("name") == "ma2":
                cov = ma2_proposal_covariance()
            else:
                raise ConfigError("config key 'cov_rand_walk' is required for this model")
        elif isinstance(cov, str):
            try:
                cov = np.loadtxt(cov, delimiter=",", dtype=np.float64, ndmin=2)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"config key 'cov_rand_walk': cannot load ({exc})") from exc
        else:
            cov = _as_matrix(cov, "cov_rand_walk")

        shrinkage = _resolve_shrinkage(raw)
        logit_bounds = _take(raw, "logit_bounds")
        if logit_bounds is not None:
            logit_bounds = _as_matrix(logit_bounds, "logit_bounds")

        master_seed = _take(raw, "master_seed", 0)
        env_seed = os.environ.get("SL_SEED")
        if env_seed is not None:
            try:
                master_seed = int(env_seed)
            except ValueError as exc:
                raise ConfigError(f"SL_SEED must be an integer, got {env_seed!r}") from exc
        if seed_flag is not None:
            master_seed = seed_flag

        workers = _take(raw, "workers", 1)
        if workers_flag is not None:
            workers = workers_flag

        try:
            cfg = MhConfig(
                n=_take(raw, "n", required=True),
                M=_take(raw, "M", required=True),
                cov_rand_walk=cov,
                s_obs=s_obs,
                method=_take(raw, "method", "BSL"),
                shrinkage=shrinkage,
                use_grc=bool(_take(raw, "use_grc", False)),
                logit_bounds=logit_bounds,
                master_seed=master_seed,
                workers=workers,
                verbose=bool(_take(raw, "verbose", False)),
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid sampler configuration: {exc}") from exc

        output_dir = _take(raw, "output_dir", required=True)
        if raw:
            raise ConfigError(f"unknown config keys: {sorted(raw)}")

        resolved = {
            "model": model_echo,
            "ssy": s_obs_source,
            "s_obs": [float(v) for v in cfg.s_obs],
            "n": cfg.n,
            "M": cfg.M,
            "method": cfg.method,
            "shrinkage": _SHRINKAGE_VOCAB[cfg.shrinkage.kind],
            "penalty": cfg.shrinkage.penalty,
            "use_grc": cfg.use_grc,
            "logit_bounds": None if cfg.logit_bounds is None else cfg.logit_bounds.tolist(),
            "cov_rand_walk": cfg.cov_rand_walk.tolist(),
            "theta0": [float(v) for v in model.theta0],
            "master_seed": cfg.master_seed,
            "workers": cfg.workers,
            "verbose": cfg.verbose,
            "output_dir": str(output_dir),
        }
        return model, pool, cfg, Path(output_dir), resolved
    except BaseException:
        if pool is not None:
            pool.close()
        raise


def _six_number(values: np.ndarray) -> dict:
    q1, median, q3 = np.percentile(values, [25.0, 50.0, 75.0])
    return {
        "min": float(np.min(values)),
        "q1": float(q1),
        "median": float(median),
        "mean": float(np.mean(values)),
        "q3": float(q3),
        "max": float(np.max(values)),
    }


def _chain_stats(theta: np.ndarray, loglike: np.ndarray) -> dict:
    names = [f"theta{i + 1}" for i in range(theta.shape[1])]
    return {
        "parameters": names,
        "theta_summary": {name: _six_number(theta[:, i]) for i, name in enumerate(names)},
        "loglike_summary": _six_number(loglike),
        # a single-row chain (M=0) has no autocorrelation to speak of
        "ess": {
            name: float(effective_sample_size(theta[:, i])) if theta.shape[0] > 1 else 0.0
            for i, name in enumerate(names)
        },
    }


def _print_stats(stats: dict, acceptance: float, early: float, fh=None) -> None:
    fh = fh or sys.stdout
    names = stats["parameters"]
    cols = ["Min.", "1st Qu.", "Median", "Mean", "3rd Qu.", "Max.", "ESS"]
    keys = ["min", "q1", "median", "mean", "q3", "max"]
    width = max(len(name) for name in names) + 2
    fh.write("Summary of theta:\n")
    fh.write(" " * width + "".join(f"{c:>10}" for c in cols) + "\n")
    for name in names:
        row = stats["theta_summary"][name]
        cells = "".join(f"{row[k]:>10.4f}" for k in keys)
        fh.write(f"{name:<{width}}{cells}{stats['ess'][name]:>10.0f}\n")
    fh.write("\nSummary of log-likelihood:\n")
    fh.write("".join(f"{c:>10}" for c in cols[:-1]) + "\n")
    row = stats["loglike_summary"]
    fh.write("".join(f"{row[k]:>10.2f}" for k in keys) + "\n")
    fh.write(f"\nAcceptance rate: {acceptance:.4f}\n")
    fh.write(f"Early rejection rate: {early:.6f}\n")


def _write_matrix_csv(path: Path, header: list[str], matrix: np.ndarray) -> None:
    with path.open("w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in np.atleast_2d(matrix):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _cmd_run(args) -> int:
    raw = _load_config(args.config)
    model, pool, cfg, output_dir, resolved = _resolve_run(raw, args.seed, args.workers)
    try:
        chain = run_mcmc(model, cfg)
    finally:
        if pool is not None:
            pool.close()
    output_dir.mkdir(parents=True, exist_ok=True)
    _write_matrix_csv(output_dir / "theta.csv", resolved_param_names(cfg, model), chain.theta)
    _write_matrix_csv(output_dir / "loglike.csv", ["loglike"], chain.loglike.reshape(-1, 1))
    stats = _chain_stats(chain.theta, chain.loglike)
    diagnostics = {
        "acceptance_rate": chain.acceptance_rate,
        "early_rejection_rate": chain.early_rejection_rate,
        "n_accepted": chain.n_accepted,
        "n_early_rejected": chain.n_early_rejected,
        "elapsed_seconds": chain.elapsed,
        **stats,
        "config": resolved,
    }
    (output_dir / "diagnostics.json").write_text(
        json.dumps(diagnostics, indent=2) + "\n", newline="\n"
    )
    _print_stats(stats, chain.acceptance_rate, chain.early_rejection_rate)
    return EXIT_OK


def resolved_param_names(cfg: MhConfig, model) -> list[str]:
    return [f"theta{i + 1}" for i in range(model.p)]


def _cmd_select_penalty(args) -> int:
    raw = _load_config(args.config)
    model, pool, model_echo = _resolve_model(raw)
    try:
        s_obs, s_obs_source = _resolve_s_obs(raw, model, model_echo)
        theta = _take(raw, "theta")
        theta = model.theta0 if theta is None else np.asarray(theta, dtype=np.float64)
        n_values = _take(raw, "n_values", required=True)
        candidates = _take(raw, "candidates", required=True)
        method = _take(raw, "method", "BSL")
        kind = _take(raw, "shrinkage", "glasso")
        m_repeats = _take(raw, "M_repeats", 100)
        sigma_target = _take(raw, "sigma_target", 1.5)
        master_seed = _take(raw, "master_seed", 0)
        env_seed = os.environ.get("SL_SEED")
        if env_seed is not None:
            try:
                master_seed = int(env_seed)
            except ValueError as exc:
                raise ConfigError(f"SL_SEED must be an integer, got {env_seed!r}") from exc
        if args.seed is not None:
            master_seed = args.seed
        workers = _take(raw, "workers", 1)
        if args.workers is not None:
            workers = args.workers
        verbose = bool(_take(raw, "verbose", False))
        output_dir = Path(_take(raw, "output_dir", required=True))
        if raw:
            raise ConfigError(f"unknown config keys: {sorted(raw)}")
        try:
            grid = select_penalty(
                s_obs,
                model,
                theta,
                n_values,
                candidates,
                M_repeats=int(m_repeats),
                sigma_target=float(sigma_target),
                method=method,
                shrinkage=str(kind).lower(),
                master_seed=int(master_seed),
                workers=int(workers),
                verbose=verbose,
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid penalty-selection configuration: {exc}") from exc
    finally:
        if pool is not None:
            pool.close()

    output_dir.mkdir(parents=True, exist_ok=True)
    with (output_dir / "penalty_grid.csv").open("w", newline="\n") as fh:
        fh.write("n,penalty,sigma_hat\n")
        for n, cand, sigma in grid.rows():
            fh.write(f"{n},{_fmt(cand)},{_fmt(sigma)}\n")
    selected_payload = {
        "n_values": [int(n) for n in grid.n_values],
        "selected": [None if s is None else float(s) for s in grid.selected],
        "sigma_at_selected": [
            None if s is None else float(s) for s in grid.selected_sigma()
        ],
        "sigma_target": grid.sigma_target,
        "M_repeats": grid.M_repeats,
        "method": grid.method,
        "shrinkage": _SHRINKAGE_VOCAB[grid.shrinkage],
        "config": {
            "model": model_echo,
            "ssy": s_obs_source,
            "theta": [float(v) for v in theta],
            "n_values": [int(n) for n in grid.n_values],
            "candidates": [[float(c) for c in g] for g in grid.candidates],
            "master_seed": int(master_seed),
            "workers": int(workers),
            "output_dir": str(output_dir),
        },
    }
    (output_dir / "penalty_selected.json").write_text(
        json.dumps(selected_payload, indent=2) + "\n", newline="\n"
    )

    sys.stdout.write(f"{'n':>6} {'penalty':>12} {'sigma':>8}\n")
    for n_idx, n in enumerate(grid.n_values):
        sel = grid.selected[n_idx]
        sig = grid.selected_sigma()[n_idx]
        if sel is None:
            sys.stdout.write(f"{n:>6} {'-':>12} {'-':>8}\n")
        else:
            sys.stdout.write(f"{n:>6} {sel:>12.5f} {sig:>8.2f}\n")

    if all(s is None for s in grid.selected):
        sys.stderr.write("error: every penalty grid cell is invalid\n")
        return EXIT_EMPTY_GRID
    return EXIT_OK


def _cmd_summary(args) -> int:
    run_dir = Path(args.run_dir)
    theta_path = run_dir / "theta.csv"
    loglike_path = run_dir / "loglike.csv"
    diag_path = run_dir / "diagnostics.json"
    for path in (theta_path, loglike_path, diag_path):
        if not path.is_file():
            raise ConfigError(f"missing run artifact: {path}")
    theta = np.loadtxt(theta_path, delimiter=",", skiprows=1, ndmin=2)
    loglike = np.loadtxt(loglike_path, delimiter=",", skiprows=1, ndmin=1)
    diagnostics = json.loads(diag_path.read_text())
    burn_in = int(args.burn_in)
    thin = int(args.thin)
    if burn_in < 0:
        raise ConfigError("--burn-in must be nonnegative")
    if thin < 1:
        raise ConfigError("--thin must be positive")
    if theta.shape[0] - burn_in < 2:
        raise ConfigError(
            f"chain is empty after burn-in: {theta.shape[0]} rows, burn_in={burn_in}"
        )
    theta_used = theta[burn_in::thin]
    loglike_used = loglike[burn_in::thin]
    stats = _chain_stats(theta_used, loglike_used)
    payload = {
        "burn_in": burn_in,
        "thin": thin,
        "rows_used": int(theta_used.shape[0]),
        "acceptance_rate": diagnostics["acceptance_rate"],
        "early_rejection_rate": diagnostics["early_rejection_rate"],
        **stats,
    }
    (run_dir / "summary.json").write_text(json.dumps(payload, indent=2) + "\n", newline="\n")
    _print_stats(stats, diagnostics["acceptance_rate"], diagnostics["early_rejection_rate"])
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sl",
        description="Simulation-based Bayesian inference with synthetic likelihoods.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the MCMC sampler from a JSON config")
    p_run.add_argument("-c", "--config", required=True, help="path to the JSON config")
    p_run.add_argument("--seed", type=int, default=None, help="override the master seed")
    p_run.add_argument("--workers", type=int, default=None, help="override worker count")
    p_run.set_defaults(func=_cmd_run)

    p_sel = sub.add_parser("select-penalty", help="tabulate and select shrinkage penalties")
    p_sel.add_argument("-c", "--config", required=True, help="path to the JSON config")
    p_sel.add_argument("--seed", type=int, default=None, help="override the master seed")
    p_sel.add_argument("--workers", type=int, default=None, help="override worker count")
    p_sel.set_defaults(func=_cmd_select_penalty)

    p_sum = sub.add_parser("summary", help="summarize a finished run directory")
    p_sum.add_argument("run_dir", help="directory containing theta.csv etc.")
    p_sum.add_argument("--burn-in", type=int, default=0, dest="burn_in")
    p_sum.add_argument("--thin", type=int, default=1)
    p_sum.set_defaults(func=_cmd_summary)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ModelValidationError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except InitializationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INIT
    except SimulationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
