"""Penalised covariance and correlation estimation.

Two families: the graphical lasso (l1-penalised precision, off-diagonals
only) and Warton's convex shrinkage of the correlation toward the identity.
Both are exposed for covariances and, separately, for correlation matrices
(the latter is what the copula-based estimator shrinks).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.covariance import graphical_lasso as _sk_graphical_lasso
from sklearn.exceptions import ConvergenceWarning

from .errors import DegenerateMarginError, ShrinkageNumericalError

__all__ = [
    "ShrinkageSpec",
    "NO_SHRINKAGE",
    "GlassoResult",
    "glasso",
    "warton_covariance",
    "warton_correlation",
    "glasso_correlation",
    "shrink_covariance",
    "shrink_correlation",
]

GLASSO_TOL = 1e-4
GLASSO_MAX_ITER = 10_000

_KINDS = ("none", "glasso", "warton")


@dataclass(frozen=True)
class ShrinkageSpec:
    """Which shrinkage to apply and how hard.

    Parameters
    ----------
    kind : str
        One of ``"none"``, ``"glasso"``, ``"warton"`` (case-insensitive).
    penalty : float
        Lambda for glasso (``>= 0``) or gamma for Warton (``in [0, 1]``).
        Ignored for ``"none"``.
    """

    kind: str = "none"
    penalty: float = 0.0

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in _KINDS:
            raise ValueError(f"unknown shrinkage kind {self.kind!r}; use one of {_KINDS}")
        object.__setattr__(self, "kind", kind)
        penalty = float(self.penalty)
        if kind == "glasso" and penalty < 0.0:
            raise ValueError("glasso penalty must be nonnegative")
        if kind == "warton" and not 0.0 <= penalty <= 1.0:
            raise ValueError("warton penalty must lie in [0, 1]")
        object.__setattr__(self, "penalty", penalty)


NO_SHRINKAGE = ShrinkageSpec("none", 0.0)


@dataclass(frozen=True)
class GlassoResult:
    """Graphical-lasso solution.

    Attributes
    ----------
    covariance : ndarray
        Estimated covariance, symmetric.
    precision : ndarray
        Estimated sparse precision, symmetric.
    iterations : int
        Coordinate-descent sweeps performed.
    converged : bool
        False when the sweep limit was hit before the tolerance.
    """

    covariance: np.ndarray
    precision: np.ndarray
    iterations: int
    converged: bool


def _check_square(mat, what: str) -> np.ndarray:
    arr = np.asarray(mat, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{what} must be a square matrix, got shape {arr.shape}")
    return arr


def glasso(
    s_cov,
    lam: float,
    tol: float = GLASSO_TOL,
    max_iter: int = GLASSO_MAX_ITER,
    penalize_diagonal: bool = False,
) -> GlassoResult:
    """l1-penalised covariance estimate via the graphical lasso.

    By default only off-diagonal precision entries are penalised, so the
    returned covariance keeps the sample variances on its diagonal.  With
    ``penalize_diagonal=True`` the l1 penalty covers the whole precision
    matrix; since precision diagonals are positive, that is exactly the
    off-diagonal problem on ``s_cov + lam*I``, and every returned variance
    is the sample variance plus ``lam``.

    Parameters
    ----------
    s_cov : array_like
        Symmetric sample covariance with positive diagonal.
    lam : float
        Nonnegative l1 penalty.
    tol, max_iter : float, int
        Coordinate-descent stopping tolerance and sweep limit.  On
        non-convergence the best iterate is returned with
        ``converged=False`` and a warning.
    penalize_diagonal : bool
        Whether the penalty also applies to diagonal precision entries.

    Returns
    -------
    GlassoResult
    """
    arr = _check_square(s_cov, "covariance")
    if np.any(np.diag(arr) <= 0.0):
        raise DegenerateMarginError("covariance diagonal must be positive")
    lam = float(lam)
    if lam < 0.0:
        raise ValueError("penalty must be nonnegative")
    if penalize_diagonal:
        # Precision diagonals stay positive, so penalising them just adds a
        # +lam subgradient: the full-l1 solution is the off-diagonal-only
        # solution of the diagonally inflated input.
        arr = arr + lam * np.eye(arr.shape[0])
    if arr.shape[0] == 1:
        # nothing off-diagonal to penalise; the solver refuses 1x1 inputs
        return GlassoResult(
            covariance=arr.copy(), precision=1.0 / arr, iterations=0, converged=True
        )
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cov, prec, n_iter = _sk_graphical_lasso(
                arr, alpha=lam, tol=tol, max_iter=max_iter, return_n_iter=True
            )
    except (FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        raise ShrinkageNumericalError(f"graphical lasso failed: {exc}") from exc
    # The solver's inner lasso warns on degenerate subproblems (e.g. exactly
    # diagonal input) even when the solution is exact; only the outer loop's
    # own warning signals real non-convergence.
    converged = not any(
        issubclass(w.category, ConvergenceWarning) and "graphical_lasso" in str(w.message)
        for w in caught
    )
    for w in caught:
        if not issubclass(w.category, ConvergenceWarning):
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    if not converged:
        warnings.warn(
            f"graphical lasso did not converge within {max_iter} sweeps",
            UserWarning,
            stacklevel=2,
        )
    cov = 0.5 * (cov + cov.T)
    prec = 0.5 * (prec + prec.T)
    return GlassoResult(covariance=cov, precision=prec, iterations=int(n_iter), converged=converged)


def warton_covariance(s_cov, gamma: float) -> np.ndarray:
    """Shrink a covariance's correlation toward the identity.

    Decomposes ``S`` into standard deviations and correlation, replaces the
    correlation ``C`` with ``gamma*C + (1-gamma)*I`` and rescales back.
    Algebraically this is ``gamma*S + (1-gamma)*diag(S)``, which is how it
    is computed so the endpoints are exact.

    Parameters
    ----------
    s_cov : array_like
        Symmetric covariance with positive diagonal.
    gamma : float
        Shrinkage weight in [0, 1]; 1 returns the input, 0 its diagonal.
    """
    arr = _check_square(s_cov, "covariance")
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    diag = np.diag(arr)
    if np.any(diag <= 0.0):
        raise DegenerateMarginError("covariance diagonal must be positive")
    return gamma * arr + (1.0 - gamma) * np.diag(diag)


def warton_correlation(corr, gamma: float) -> np.ndarray:
    """Convex combination of a correlation matrix with the identity."""
    arr = _check_square(corr, "correlation")
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    if not np.allclose(np.diag(arr), 1.0, atol=1e-8):
        raise ValueError("correlation matrix must have unit diagonal")
    out = gamma * arr + (1.0 - gamma) * np.eye(arr.shape[0])
    np.fill_diagonal(out, 1.0)
    return out


def glasso_correlation(corr, lam: float, tol: float = GLASSO_TOL, max_iter: int = GLASSO_MAX_ITER) -> np.ndarray:
    """Graphical lasso on a correlation matrix, renormalised to unit diagonal."""
    arr = _check_square(corr, "correlation")
    if not np.allclose(np.diag(arr), 1.0, atol=1e-8):
        raise ValueError("correlation matrix must have unit diagonal")
    result = glasso(arr, lam, tol=tol, max_iter=max_iter)
    w = result.covariance
    scale = np.sqrt(np.diag(w))
    out = w / np.outer(scale, scale)
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 1.0)
    return out


def shrink_covariance(sigma, spec: ShrinkageSpec) -> np.ndarray:
    """Apply the configured shrinkage to a covariance matrix.

    The glasso penalty covers the whole precision matrix here: inflating
    the variances along with sparsifying the dependence keeps the
    log-likelihood's spread falling as the penalty grows even when the
    sample covariance is singular, which penalty selection relies on.
    """
    if spec.kind == "none":
        return np.asarray(sigma, dtype=np.float64)
    if spec.kind == "glasso":
        return glasso(sigma, spec.penalty, penalize_diagonal=True).covariance
    return warton_covariance(sigma, spec.penalty)


def shrink_correlation(corr, spec: ShrinkageSpec) -> np.ndarray:
    """Apply the configured shrinkage to a correlation matrix."""
    if spec.kind == "none":
        return np.asarray(corr, dtype=np.float64)
    if spec.kind == "glasso":
        return glasso_correlation(corr, spec.penalty)
    return warton_correlation(corr, spec.penalty)
