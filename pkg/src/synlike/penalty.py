"""Shrinkage-penalty selection by targeting the log-likelihood noise level.

For each simulation count n and each candidate penalty, the synthetic
log-likelihood at a representative parameter value is re-estimated over
``M_repeats`` independent simulation sets; the candidate whose estimated
standard deviation lands closest to ``sigma_target`` is selected.  One
batch of ``max(n_values)`` simulations per repeat is shared by every
(n, candidate) cell: smaller n subset the first rows, and every candidate
reuses the same fitted moments, which removes between-cell noise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMarginError, PenaltyGridWarning, ShrinkageNumericalError
from .estimators import semiparam_fit, semiparam_loglik
from .model import Model
from .numerics import as_summary_vector, moments, mvn_logpdf
from .rng import penalty_stream
from .sampler import SimulationRunner, _canonical_method
from .shrinkage import ShrinkageSpec, shrink_correlation, shrink_covariance

__all__ = ["PenaltyGrid", "select_penalty"]

_INVALID_FRACTION = 0.10


@dataclass
class PenaltyGrid:
    """Penalty-selection results over an (n, candidate) grid.

    Attributes
    ----------
    n_values : list of int
        Simulation counts, in the order given.
    candidates : list of ndarray
        Candidate penalties per n.
    sigma_hat : list of ndarray
        Estimated log-likelihood standard deviation per (n, candidate);
        NaN marks an invalid cell.
    selected : list of float or None
        Chosen penalty per n (None if every cell for that n is invalid).
    M_repeats : int
    sigma_target : float
    method : str
    shrinkage : str
        Shrinkage kind the penalties apply to.
    """

    n_values: list[int]
    candidates: list[np.ndarray]
    sigma_hat: list[np.ndarray]
    selected: list[float | None]
    M_repeats: int
    sigma_target: float
    method: str = "BSL"
    shrinkage: str = "glasso"
    valid_repeats: list[np.ndarray] = field(default_factory=list, repr=False)

    def selected_sigma(self) -> list[float | None]:
        """sigma_hat at the selected penalty, per n."""
        out: list[float | None] = []
        for n_idx, choice in enumerate(self.selected):
            if choice is None:
                out.append(None)
                continue
            k = int(np.argmin(np.abs(self.candidates[n_idx] - choice)))
            out.append(float(self.sigma_hat[n_idx][k]))
        return out

    def rows(self):
        """Yield (n, penalty, sigma_hat) for every grid cell, in order."""
        for n_idx, n in enumerate(self.n_values):
            for k, cand in enumerate(self.candidates[n_idx]):
                yield int(n), float(cand), float(self.sigma_hat[n_idx][k])


def _normalise_candidates(candidates, n_count: int, kind: str) -> list[np.ndarray]:
    items = list(candidates)
    if not items:
        raise ValueError("candidates must be non-empty")
    per_n = all(np.ndim(item) == 1 or isinstance(item, (list, tuple, np.ndarray)) for item in items)
    scalar_grid = all(np.ndim(item) == 0 for item in items)
    if scalar_grid:
        grids = [np.asarray(items, dtype=np.float64)] * n_count
    elif per_n:
        if len(items) != n_count:
            raise ValueError(
                f"got {len(items)} candidate grids for {n_count} n values"
            )
        grids = [np.asarray(item, dtype=np.float64) for item in items]
    else:
        raise ValueError("candidates must be a flat grid or one grid per n")
    for grid in grids:
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError("each candidate grid must be a non-empty vector")
        for value in grid:
            ShrinkageSpec(kind, float(value))  # range validation
    return grids


def select_penalty(
    s_obs,
    model: Model,
    theta,
    n_values,
    candidates,
    M_repeats: int = 100,
    sigma_target: float = 1.5,
    method: str = "BSL",
    shrinkage: str = "glasso",
    master_seed: int = 0,
    workers: int = 1,
    verbose: bool = False,
) -> PenaltyGrid:
    """Choose the penalty whose log-likelihood noise is closest to target.

    Parameters
    ----------
    s_obs : array_like
        Observed summary the log-likelihood is evaluated at.
    model : Model
        Simulator bundle.
    theta : array_like
        Representative parameter value with non-negligible support.
    n_values : sequence of int
        Simulation counts to tabulate; within a repeat the largest n is
        simulated once and smaller n use its leading rows.
    candidates : sequence
        Either one flat penalty grid shared by all n, or one grid per n.
    M_repeats : int
        Independent repeats behind each standard-deviation estimate (>= 2).
    sigma_target : float
        Target log-likelihood standard deviation.
    method : str
        "BSL" or "semiBSL" (shrinkage applies to the covariance or to the
        copula correlation respectively).
    shrinkage : str
        "glasso" or "warton".
    master_seed, workers, verbose
        As in the sampler.

    Returns
    -------
    PenaltyGrid
        Ties in ``|sigma_hat - sigma_target|`` resolve toward the larger
        penalty.  Cells where 10% or more of the repeats are degenerate are
        invalid (NaN) and excluded from selection; occasional degenerate
        repeats below that fraction are dropped with a warning.
    """
    method = _canonical_method(method)
    if method not in ("BSL", "semiBSL"):
        raise ValueError("penalty selection applies to BSL or semiBSL only")
    kind = str(shrinkage).lower()
    if kind not in ("glasso", "warton"):
        raise ValueError("shrinkage must be 'glasso' or 'warton'")
    M_repeats = int(M_repeats)
    if M_repeats < 2:
        raise ValueError("M_repeats must be at least 2")
    n_values = [int(n) for n in n_values]
    if not n_values:
        raise ValueError("n_values must be non-empty")
    min_n = 2 if method == "BSL" else 3
    if any(n < min_n for n in n_values):
        raise ValueError(f"every n must be at least {min_n} for method {method}")
    grids = _normalise_candidates(candidates, len(n_values), kind)
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    s_obs = as_summary_vector(s_obs)
    n_max = max(n_values)

    log_vals = [np.full((M_repeats, grid.size), -np.inf) for grid in grids]
    specs = [[ShrinkageSpec(kind, float(v)) for v in grid] for grid in grids]

    with SimulationRunner(model, workers) as runner:
        for m in range(M_repeats):
            s_all = runner.summaries(penalty_stream(master_seed, m), n_max, theta)
            for n_idx, n in enumerate(n_values):
                subset = s_all[:n]
                if method == "BSL":
                    mom = moments(subset)
                    for k, spec in enumerate(specs[n_idx]):
                        try:
                            sigma = shrink_covariance(mom.sigma, spec)
                            ll = mvn_logpdf(s_obs, mom.mu, sigma)
                        except (ShrinkageNumericalError, DegenerateMarginError):
                            ll = -np.inf
                        log_vals[n_idx][m, k] = ll
                else:
                    try:
                        fit = semiparam_fit(s_obs, subset)
                    except DegenerateMarginError:
                        continue  # row already -inf for every candidate
                    for k, spec in enumerate(specs[n_idx]):
                        try:
                            corr = shrink_correlation(fit.grc, spec)
                            ll = semiparam_loglik(fit, corr)
                        except (ShrinkageNumericalError, DegenerateMarginError):
                            ll = -np.inf
                        log_vals[n_idx][m, k] = ll
            if verbose:
                import sys

                sys.stderr.write(f"[synlike] penalty repeat {m + 1}/{M_repeats}\n")

    sigma_hat: list[np.ndarray] = []
    selected: list[float | None] = []
    valid_repeats: list[np.ndarray] = []
    for n_idx, n in enumerate(n_values):
        grid = grids[n_idx]
        sig = np.full(grid.size, np.nan)
        counts = np.zeros(grid.size, dtype=np.int64)
        for k in range(grid.size):
            vals = log_vals[n_idx][:, k]
            finite = np.isfinite(vals)
            n_bad = int(M_repeats - finite.sum())
            counts[k] = int(finite.sum())
            if n_bad == 0:
                sig[k] = float(np.std(vals, ddof=1))
            elif n_bad < _INVALID_FRACTION * M_repeats and finite.sum() >= 2:
                warnings.warn(
                    f"n={n}, penalty={grid[k]:g}: dropped {n_bad}/{M_repeats} "
                    "degenerate repeats",
                    PenaltyGridWarning,
                    stacklevel=2,
                )
                sig[k] = float(np.std(vals[finite], ddof=1))
            else:
                warnings.warn(
                    f"n={n}, penalty={grid[k]:g}: {n_bad}/{M_repeats} repeats "
                    "degenerate, cell marked invalid",
                    PenaltyGridWarning,
                    stacklevel=2,
                )
        sigma_hat.append(sig)
        valid_repeats.append(counts)
        usable = np.isfinite(sig)
        if not np.any(usable):
            warnings.warn(
                f"n={n}: no valid candidate, nothing selected",
                PenaltyGridWarning,
                stacklevel=2,
            )
            selected.append(None)
            continue
        # Closest to target; exact ties resolve toward the larger penalty.
        gap = np.abs(sig - sigma_target)
        best = None
        for k in range(grid.size):
            if not usable[k]:
                continue
            key = (gap[k], -grid[k])
            if best is None or key < best[0]:
                best = (key, k)
        selected.append(float(grid[best[1]]))

    return PenaltyGrid(
        n_values=n_values,
        candidates=grids,
        sigma_hat=sigma_hat,
        selected=selected,
        M_repeats=M_repeats,
        sigma_target=float(sigma_target),
        method=method,
        shrinkage=kind,
        valid_repeats=valid_repeats,
    )
