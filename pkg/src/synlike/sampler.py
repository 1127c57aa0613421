"""Pseudo-marginal random-walk Metropolis over model parameters.

Each proposal re-estimates the synthetic log-likelihood from n fresh
simulations; the current state's estimate is carried forward unchanged, so
the chain targets the pseudo-marginal posterior.  Proposals with zero prior
support are rejected before any simulation is spent ("early rejection").

Sampling may happen on a logit-reparameterised scale when parameter bounds
are supplied; the prior stays on the original scale and the Jacobian enters
the acceptance ratio.
"""

from __future__ import annotations

import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InitializationError, SimulationError
from .estimators import SlEstimate, semiparam_sl, standard_sl, unbiased_sl
from .model import Model
from .rng import RngStream, chain_stream, init_stream, likelihood_stream, thread_local_scratch
from .shrinkage import NO_SHRINKAGE, ShrinkageSpec

__all__ = [
    "MhConfig",
    "Chain",
    "METHODS",
    "logit_transform",
    "inverse_logit_transform",
    "log_jacobian",
    "SimulationRunner",
    "estimate_loglik",
    "run_mcmc",
]

METHODS = ("BSL", "uBSL", "semiBSL")

_INIT_ATTEMPTS = 3


def _canonical_method(method: str) -> str:
    lowered = str(method).lower()
    for known in METHODS:
        if lowered == known.lower():
            return known
    raise ValueError(f"unknown method {method!r}; use one of {METHODS}")


@dataclass
class MhConfig:
    """Sampler configuration.

    Parameters
    ----------
    n : int
        Simulations per likelihood estimate (>= 2; the unbiased estimator
        additionally needs ``n > d + 3``).
    M : int
        MCMC iterations (>= 0); the chain stores M+1 states.
    cov_rand_walk : array_like
        (p, p) positive-definite proposal covariance on the sampling scale.
    s_obs : array_like
        Observed summary the likelihood is estimated at.
    method : str
        "BSL", "uBSL", or "semiBSL" (case-insensitive).
    shrinkage : ShrinkageSpec
        Covariance (BSL) or copula-correlation (semiBSL) shrinkage; must be
        "none" for uBSL.
    use_grc : bool
        BSL only: rank-based correlation in place of the sample correlation.
    logit_bounds : array_like, optional
        (p, 2) bounds activating the logit reparameterisation.
    master_seed : int
        Seed of every random stream in the run.
    workers : int
        Worker threads for the simulation fan-out (results are identical
        for any worker count).
    verbose : bool
        Progress lines to stderr every ~1% of iterations.
    """

    n: int
    M: int
    cov_rand_walk: np.ndarray
    s_obs: np.ndarray
    method: str = "BSL"
    shrinkage: ShrinkageSpec = NO_SHRINKAGE
    use_grc: bool = False
    logit_bounds: np.ndarray | None = None
    master_seed: int = 0
    workers: int = 1
    verbose: bool = False

    def __post_init__(self):
        self.n = int(self.n)
        self.M = int(self.M)
        self.workers = int(self.workers)
        self.master_seed = int(self.master_seed)
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.M < 0:
            raise ValueError("M must be nonnegative")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        self.method = _canonical_method(self.method)
        if not isinstance(self.shrinkage, ShrinkageSpec):
            raise TypeError("shrinkage must be a ShrinkageSpec")
        if self.method == "uBSL" and self.shrinkage.kind != "none":
            raise ValueError("shrinkage is not available for the unbiased estimator")
        if self.use_grc and self.method != "BSL":
            raise ValueError("use_grc applies to method BSL only")
        self.cov_rand_walk = np.asarray(self.cov_rand_walk, dtype=np.float64)
        if self.cov_rand_walk.ndim != 2 or self.cov_rand_walk.shape[0] != self.cov_rand_walk.shape[1]:
            raise ValueError("cov_rand_walk must be a square matrix")
        self.s_obs = np.atleast_1d(np.asarray(self.s_obs, dtype=np.float64))
        if self.s_obs.ndim != 1 or not np.all(np.isfinite(self.s_obs)):
            raise ValueError("s_obs must be a finite vector")
        if self.logit_bounds is not None:
            b = np.asarray(self.logit_bounds, dtype=np.float64)
            if b.ndim != 2 or b.shape[1] != 2:
                raise ValueError("logit_bounds must have shape (p, 2)")
            if np.any(b[:, 0] >= b[:, 1]):
                raise ValueError("logit_bounds must satisfy lower < upper")
            self.logit_bounds = b


@dataclass
class Chain:
    """MCMC output.

    Attributes
    ----------
    theta : ndarray
        (M+1, p) states on the original parameter scale; row 0 is theta0.
    loglike : ndarray
        (M+1,) log-likelihood estimates carried by each state.
    acceptance_rate : float
        Accepted moves / M (0 when M = 0).
    early_rejection_rate : float
        Proposals rejected on prior support alone / M.
    elapsed : float
        Wall-clock seconds spent in the sampler.
    """

    theta: np.ndarray
    loglike: np.ndarray
    acceptance_rate: float
    early_rejection_rate: float
    elapsed: float
    n_accepted: int = field(default=0, repr=False)
    n_early_rejected: int = field(default=0, repr=False)


def _bounds_views(bounds: np.ndarray):
    lower = bounds[:, 0]
    upper = bounds[:, 1]
    two_sided = np.isfinite(lower) & np.isfinite(upper)
    lower_only = np.isfinite(lower) & ~np.isfinite(upper)
    upper_only = ~np.isfinite(lower) & np.isfinite(upper)
    return lower, upper, two_sided, lower_only, upper_only


def logit_transform(theta, bounds) -> np.ndarray:
    """Map bounded parameters to an unconstrained sampling scale.

    Two-sided bounds map by ``log((theta-a)/(b-theta))``; one-sided bounds
    degenerate to ``log(theta-a)`` or ``-log(b-theta)``; unbounded
    coordinates pass through.

    Parameters
    ----------
    theta : array_like
        Parameter on the original scale, strictly inside finite bounds.
    bounds : array_like
        (p, 2) matrix of (lower, upper), entries may be ``±inf``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    bounds = np.asarray(bounds, dtype=np.float64)
    lower, upper, two, lo_only, up_only = _bounds_views(bounds)
    finite_lo = np.isfinite(lower)
    finite_up = np.isfinite(upper)
    if np.any(theta[finite_lo] <= lower[finite_lo]) or np.any(theta[finite_up] >= upper[finite_up]):
        raise ValueError("theta must lie strictly inside its finite bounds")
    out = theta.copy()
    out[two] = np.log(theta[two] - lower[two]) - np.log(upper[two] - theta[two])
    out[lo_only] = np.log(theta[lo_only] - lower[lo_only])
    out[up_only] = -np.log(upper[up_only] - theta[up_only])
    return out


def inverse_logit_transform(theta_tilde, bounds) -> np.ndarray:
    """Inverse of :func:`logit_transform`."""
    x = np.atleast_1d(np.asarray(theta_tilde, dtype=np.float64))
    bounds = np.asarray(bounds, dtype=np.float64)
    lower, upper, two, lo_only, up_only = _bounds_views(bounds)
    out = x.copy()
    # Overflow-safe logistic: exp of a non-positive argument only.
    pos = x > 0
    sig = np.empty_like(x)
    sig[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    sig[~pos] = np.exp(x[~pos]) / (1.0 + np.exp(x[~pos]))
    out[two] = lower[two] + (upper[two] - lower[two]) * sig[two]
    # One-sided coordinates are unbounded on the far side and may saturate
    # to +-inf past the float range; the prior rejects those proposals.
    with np.errstate(over="ignore"):
        out[lo_only] = lower[lo_only] + np.exp(x[lo_only])
        out[up_only] = upper[up_only] - np.exp(-x[up_only])
    return out


def log_jacobian(theta_tilde, bounds) -> float:
    """Log |d theta / d theta_tilde| summed over coordinates.

    Added to the acceptance ratio so that sampling on the transformed
    scale still targets the prior stated on the original scale.
    """
    x = np.atleast_1d(np.asarray(theta_tilde, dtype=np.float64))
    bounds = np.asarray(bounds, dtype=np.float64)
    lower, upper, two, lo_only, up_only = _bounds_views(bounds)
    total = 0.0
    if np.any(two):
        xt = x[two]
        width = upper[two] - lower[two]
        total += float(np.sum(np.log(width) + xt - 2.0 * np.logaddexp(0.0, xt)))
    total += float(np.sum(x[lo_only]))
    total += float(np.sum(-x[up_only]))
    return total


class SimulationRunner:
    """Deterministic fan-out of n simulations at one parameter value.

    The j-th simulation always draws from ``parent.child(j)``, so results
    are bit-identical for any worker count and any scheduling order.
    """

    def __init__(self, model: Model, workers: int = 1):
        self.model = model
        self.workers = int(workers)
        self._executor = (
            ThreadPoolExecutor(max_workers=self.workers) if self.workers > 1 else None
        )
        self.n_simulations = 0

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self) -> "SimulationRunner":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def _one(self, parent: RngStream, j: int, theta: np.ndarray) -> np.ndarray:
        gen = thread_local_scratch().generator_for(parent.child(j))
        try:
            dataset = self.model.simulate(gen, theta, **self.model.sim_args)
            row = np.asarray(self.model.summarize(dataset, **self.model.sum_args), dtype=np.float64)
        except Exception as exc:
            raise SimulationError(j, str(exc)) from exc
        return np.atleast_1d(row)

    def summaries(self, parent: RngStream, n: int, theta) -> np.ndarray:
        """Simulate and summarize n replicates; rows in child-stream order."""
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        model = self.model
        if self._executor is None and model.simulate_batch is not None:
            datasets = model.simulate_batch(parent, n, theta, **model.sim_args)
            rows = [
                np.atleast_1d(np.asarray(model.summarize(ds, **model.sum_args), dtype=np.float64))
                for ds in datasets
            ]
            if len(rows) != n:
                raise SimulationError(len(rows), f"simulate_batch returned {len(rows)} datasets, expected {n}")
        elif self._executor is None:
            rows = [self._one(parent, j, theta) for j in range(n)]
        else:
            chunk = max(1, n // (4 * self.workers))
            rows = list(
                self._executor.map(
                    lambda j: self._one(parent, j, theta), range(n), chunksize=chunk
                )
            )
        self.n_simulations += n
        d = rows[0].shape[0] if model.d is None else model.d
        out = np.empty((n, d), dtype=np.float64)
        for j, row in enumerate(rows):
            if row.shape != (d,):
                raise SimulationError(j, f"summary length {row.shape} != ({d},)")
            out[j] = row
        if not np.all(np.isfinite(out)):
            bad = int(np.argwhere(~np.all(np.isfinite(out), axis=1))[0, 0])
            raise SimulationError(bad, "summary contains non-finite values")
        return out


def _make_estimator(cfg: MhConfig):
    """Bind the configured estimator to (s_obs, summaries)."""
    if cfg.method == "BSL":
        return lambda s: standard_sl(cfg.s_obs, s, cfg.shrinkage, use_grc=cfg.use_grc)
    if cfg.method == "uBSL":
        return lambda s: unbiased_sl(cfg.s_obs, s)
    return lambda s: semiparam_sl(cfg.s_obs, s, cfg.shrinkage)


def estimate_loglik(theta, model: Model, cfg: MhConfig, rng: RngStream) -> SlEstimate:
    """One synthetic-likelihood estimate at ``theta``.

    Runs ``cfg.n`` simulations (fanned over ``cfg.workers`` threads, or via
    ``model.simulate_batch`` when provided and ``workers == 1``), summarizes
    them, and dispatches to the configured estimator.
    """
    with SimulationRunner(model, cfg.workers) as runner:
        summaries = runner.summaries(rng, cfg.n, theta)
        return _make_estimator(cfg)(summaries)


def _progress(i: int, m_total: int, accepted: int, early: int, t_start: float) -> None:
    elapsed = time.perf_counter() - t_start
    rate = accepted / i
    eta = elapsed / i * (m_total - i)
    sys.stderr.write(
        f"[synlike] iteration {i}/{m_total}  acc={rate:.3f}  early={early}  eta={eta:.0f}s\n"
    )
    sys.stderr.flush()


def run_mcmc(model: Model, cfg: MhConfig, loglik_fn=None) -> Chain:
    """Random-walk Metropolis with a re-estimated synthetic likelihood.

    Parameters
    ----------
    model : Model
        Simulator bundle; ``log_prior(model.theta0)`` must be finite.
    cfg : MhConfig
        Run configuration, including the observed summary.
    loglik_fn : callable, optional
        Testing hook ``loglik_fn(theta, stream) -> float`` replacing the
        simulation-based estimate (used to validate the MH kernel against
        models with tractable likelihoods).

    Returns
    -------
    Chain

    Raises
    ------
    InitializationError
        When the starting point yields ``-inf`` log-likelihood on 3
        independent attempts.
    SimulationError
        When a simulator replicate fails.
    """
    t_start = time.perf_counter()
    p = model.p
    if cfg.cov_rand_walk.shape != (p, p):
        raise ConfigError(
            f"cov_rand_walk shape {cfg.cov_rand_walk.shape} does not match p={p}"
        )
    try:
        chol_prop = np.linalg.cholesky(cfg.cov_rand_walk)
    except np.linalg.LinAlgError as exc:
        raise ConfigError("cov_rand_walk must be positive definite") from exc
    bounds = cfg.logit_bounds
    if bounds is not None and bounds.shape != (p, 2):
        raise ConfigError(f"logit_bounds shape {bounds.shape} does not match p={p}")

    lp_cur = float(model.log_prior(model.theta0))
    if lp_cur == -np.inf:
        raise ConfigError("log_prior(theta0) is -inf")

    runner = SimulationRunner(model, cfg.workers)
    estimator = _make_estimator(cfg)

    def default_loglik(theta: np.ndarray, stream: RngStream) -> float:
        return estimator(runner.summaries(stream, cfg.n, theta)).log_lik

    loglik = loglik_fn if loglik_fn is not None else default_loglik

    try:
        ll_cur = -np.inf
        for attempt in range(_INIT_ATTEMPTS):
            ll_cur = float(loglik(model.theta0, init_stream(cfg.master_seed, attempt)))
            if ll_cur > -np.inf:
                break
        else:
            raise InitializationError(
                f"no finite log-likelihood at theta0 after {_INIT_ATTEMPTS} attempts; "
                "choose a starting point with non-negligible support"
            )

        theta_cur = model.theta0.copy()
        x_cur = logit_transform(theta_cur, bounds) if bounds is not None else theta_cur.copy()
        lj_cur = log_jacobian(x_cur, bounds) if bounds is not None else 0.0

        m_total = cfg.M
        theta_out = np.empty((m_total + 1, p), dtype=np.float64)
        loglike_out = np.empty(m_total + 1, dtype=np.float64)
        theta_out[0] = theta_cur
        loglike_out[0] = ll_cur

        chain_gen = chain_stream(cfg.master_seed).generator()
        accepted = 0
        early = 0
        report_every = max(1, m_total // 100) if cfg.verbose else 0

        for i in range(1, m_total + 1):
            x_prop = x_cur + chol_prop @ chain_gen.standard_normal(p)
            theta_prop = (
                inverse_logit_transform(x_prop, bounds) if bounds is not None else x_prop
            )
            lp_prop = float(model.log_prior(theta_prop))
            if lp_prop == -np.inf:
                early += 1
                theta_out[i] = theta_cur
                loglike_out[i] = ll_cur
                if report_every and i % report_every == 0:
                    _progress(i, m_total, accepted, early, t_start)
                continue
            ll_prop = float(loglik(theta_prop, likelihood_stream(cfg.master_seed, i)))
            lj_prop = log_jacobian(x_prop, bounds) if bounds is not None else 0.0
            log_ratio = (ll_prop + lp_prop + lj_prop) - (ll_cur + lp_cur + lj_cur)
            u = chain_gen.uniform()
            log_u = np.log(u) if u > 0.0 else -np.inf
            if log_u < log_ratio:
                theta_cur = theta_prop
                x_cur = x_prop
                ll_cur = ll_prop
                lp_cur = lp_prop
                lj_cur = lj_prop
                accepted += 1
            theta_out[i] = theta_cur
            loglike_out[i] = ll_cur
            if report_every and i % report_every == 0:
                _progress(i, m_total, accepted, early, t_start)
    finally:
        runner.close()

    elapsed = time.perf_counter() - t_start
    denom = max(m_total, 1)
    return Chain(
        theta=theta_out,
        loglike=loglike_out,
        acceptance_rate=accepted / denom,
        early_rejection_rate=early / denom,
        elapsed=elapsed,
        n_accepted=accepted,
        n_early_rejected=early,
    )
