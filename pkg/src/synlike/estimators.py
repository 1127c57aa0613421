"""Synthetic-likelihood log-density estimators.

Three interchangeable estimators of ``log p(s_obs | theta)`` from a matrix
of simulated summaries: a plug-in multivariate normal, an unbiased normal
density estimator, and a semi-parametric one built from KDE marginals tied
together by a Gaussian copula over rank-based correlations.

All estimators return ``-inf`` (never raise) when the fitted density is
degenerate at the observed summary, so the sampler can treat that as an
ordinary rejection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, logsumexp

from .errors import DegenerateMarginError, InsufficientSimulationsError, ShrinkageNumericalError
from .numerics import (
    as_summary_matrix,
    as_summary_vector,
    moments,
    mvn_logpdf,
    ranks,
    std_normal_cdf,
    std_normal_quantile,
)
from .shrinkage import NO_SHRINKAGE, ShrinkageSpec, shrink_correlation, shrink_covariance

__all__ = [
    "SlEstimate",
    "SemiParamFit",
    "GhuryeOlkinTerms",
    "standard_sl",
    "unbiased_sl",
    "gaussian_rank_correlation",
    "silverman_bandwidth",
    "kde_gaussian",
    "semiparam_fit",
    "semiparam_loglik",
    "semiparam_sl",
]

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class SlEstimate:
    """One synthetic-likelihood evaluation.

    Attributes
    ----------
    log_lik : float
        Estimated log-likelihood; ``-inf`` marks a degenerate fit (reject
        path), ``+inf`` and NaN never occur.
    estimator : str
        ``"standard"``, ``"unbiased"``, or ``"semiparametric"``.
    n_used : int
        Number of simulated summaries behind the estimate.
    """

    log_lik: float
    estimator: str
    n_used: int


@dataclass(frozen=True)
class SemiParamFit:
    """Fitted pieces of the semi-parametric estimator at one parameter.

    Attributes
    ----------
    grc : ndarray
        Gaussian rank correlation of the simulated summaries, (d, d).
    marginal_log_densities : ndarray
        Per-margin KDE log-density at the observed summary.
    marginal_cdf_values : ndarray
        Per-margin KDE CDF at the observed summary, clamped into
        ``[1/(2n), 1 - 1/(2n)]``.
    eta_obs : ndarray
        Normal scores of the clamped CDF values.
    n : int
        Number of simulated summaries.
    """

    grc: np.ndarray
    marginal_log_densities: np.ndarray
    marginal_cdf_values: np.ndarray
    eta_obs: np.ndarray
    n: int


@dataclass(frozen=True)
class GhuryeOlkinTerms:
    """Intermediate quantities of the unbiased normal density estimator."""

    m_n: np.ndarray
    psi_arg: np.ndarray
    log_c_ratio: float


def _chol_logdet(mat: np.ndarray) -> float | None:
    """Log-determinant via Cholesky, or None when not positive definite."""
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return None
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def standard_sl(
    s_obs,
    s_sim,
    shrinkage: ShrinkageSpec = NO_SHRINKAGE,
    use_grc: bool = False,
) -> SlEstimate:
    """Plug-in multivariate-normal synthetic log-likelihood.

    Fits a normal to the simulated summaries by sample mean and covariance
    and evaluates its log-density at the observed summary.

    Parameters
    ----------
    s_obs : array_like
        Observed summary, length d.
    s_sim : array_like
        Simulated summaries, shape (n, d) with n >= 2.
    shrinkage : ShrinkageSpec
        Optional covariance shrinkage applied before evaluation.
    use_grc : bool
        Replace the sample correlation with the Gaussian rank correlation,
        rescaled by the sample standard deviations (requires n >= 3).

    Returns
    -------
    SlEstimate
        ``log_lik = -inf`` when the (shrunk) covariance is not positive
        definite.
    """
    arr = as_summary_matrix(s_sim)
    mom = moments(arr)
    s_obs = as_summary_vector(s_obs, arr.shape[1])
    if use_grc:
        sd = np.sqrt(np.diag(mom.sigma))
        sigma = gaussian_rank_correlation(arr) * np.outer(sd, sd)
    else:
        sigma = mom.sigma
    try:
        sigma = shrink_covariance(sigma, shrinkage)
    except (ShrinkageNumericalError, DegenerateMarginError):
        return SlEstimate(-np.inf, "standard", mom.n)
    log_lik = mvn_logpdf(s_obs, mom.mu, sigma)
    if np.isnan(log_lik):
        log_lik = -np.inf
    return SlEstimate(float(log_lik), "standard", mom.n)


def _log_c(k: int, v: float) -> float:
    """log of the Wishart-type normalising constant c(k, v)."""
    i = np.arange(1, k + 1)
    return (
        -0.5 * k * v * np.log(2.0)
        - 0.25 * k * (k - 1) * np.log(np.pi)
        - float(np.sum(gammaln(0.5 * (v - i + 1.0))))
    )


def ghurye_olkin_terms(s_obs, s_sim) -> GhuryeOlkinTerms:
    """Building blocks of the unbiased estimator at one evaluation point."""
    arr = as_summary_matrix(s_sim)
    n, d = arr.shape
    if n <= d + 3:
        raise InsufficientSimulationsError(
            f"unbiased estimator needs n > d + 3, got n={n}, d={d}"
        )
    mom = moments(arr)
    s_obs = as_summary_vector(s_obs, d)
    m_n = (n - 1) * mom.sigma
    diff = s_obs - mom.mu
    psi_arg = m_n - np.outer(diff, diff) / (1.0 - 1.0 / n)
    psi_arg = 0.5 * (psi_arg + psi_arg.T)
    log_c_ratio = _log_c(d, n - 2) - _log_c(d, n - 1)
    return GhuryeOlkinTerms(m_n=m_n, psi_arg=psi_arg, log_c_ratio=log_c_ratio)


def unbiased_sl(s_obs, s_sim) -> SlEstimate:
    """Unbiased multivariate-normal density estimator, on the log scale.

    Unlike the plug-in estimator, its exponential is exactly unbiased for
    the true normal density of the summaries, which makes the MCMC target
    independent of the simulation count n.

    Parameters
    ----------
    s_obs : array_like
        Observed summary, length d.
    s_sim : array_like
        Simulated summaries, shape (n, d) with n > d + 3.

    Returns
    -------
    SlEstimate
        ``log_lik = -inf`` when either the scatter matrix or the rank-one
        downdate inside the estimator is not positive definite.
    """
    arr = as_summary_matrix(s_sim)
    n, d = arr.shape
    terms = ghurye_olkin_terms(s_obs, arr)
    logdet_m = _chol_logdet(terms.m_n)
    logdet_psi = _chol_logdet(terms.psi_arg)
    if logdet_m is None or logdet_psi is None:
        return SlEstimate(-np.inf, "unbiased", n)
    log_lik = (
        -0.5 * d * _LOG_2PI
        + terms.log_c_ratio
        - 0.5 * d * np.log1p(-1.0 / n)
        - 0.5 * (n - d - 2) * logdet_m
        + 0.5 * (n - d - 3) * logdet_psi
    )
    if np.isnan(log_lik):
        log_lik = -np.inf
    return SlEstimate(float(log_lik), "unbiased", n)


def gaussian_rank_correlation(s_sim) -> np.ndarray:
    """Correlation from normal scores of within-column ranks.

    Robust to monotone transformations of margins and to heavy tails; used
    as the copula correlation of the semi-parametric estimator.

    Parameters
    ----------
    s_sim : array_like
        Simulated summaries, shape (n, d) with n >= 3.

    Returns
    -------
    ndarray
        Symmetric (d, d) matrix with exact unit diagonal, entries in [-1, 1].
    """
    arr = as_summary_matrix(s_sim)
    n, d = arr.shape
    if n < 3:
        raise InsufficientSimulationsError(
            f"rank correlation needs at least 3 simulations, got {n}"
        )
    scores = np.empty_like(arr)
    for j in range(d):
        scores[:, j] = std_normal_quantile(ranks(arr[:, j]) / (n + 1.0))
    denom = float(np.sum(std_normal_quantile(np.arange(1, n + 1) / (n + 1.0)) ** 2))
    corr = scores.T @ scores / denom
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return np.clip(corr, -1.0, 1.0)


def silverman_bandwidth(values) -> float:
    """Gaussian-kernel bandwidth ``0.9 * min(sd, IQR/1.34) * n^(-1/5)``.

    Falls back to the standard deviation when the IQR is zero; raises when
    the sample has no spread at all.
    """
    vals = np.asarray(values, dtype=np.float64)
    n = vals.shape[0]
    if n < 2:
        raise InsufficientSimulationsError("bandwidth needs at least 2 values")
    sd = float(np.std(vals, ddof=1))
    q75, q25 = np.percentile(vals, [75.0, 25.0])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0.0 else sd
    if spread <= 0.0:
        raise DegenerateMarginError("sample has zero spread, bandwidth undefined")
    return 0.9 * spread * n ** (-0.2)


def kde_gaussian(s_col, x: float, bandwidth: float | None = None) -> tuple[float, float]:
    """Gaussian kernel density and distribution estimates at one point.

    Parameters
    ----------
    s_col : array_like
        Sample of one summary coordinate, length n >= 2.
    x : float
        Evaluation point.
    bandwidth : float, optional
        Kernel bandwidth; defaults to :func:`silverman_bandwidth`.

    Returns
    -------
    (log_density, cdf) : tuple of floats
        ``log_density`` is the log of the kernel density estimate,
        ``cdf`` the kernel CDF estimate (not clamped).
    """
    vals = np.asarray(s_col, dtype=np.float64)
    if vals.ndim != 1:
        raise ValueError(f"expected a 1-d margin sample, got shape {vals.shape}")
    n = vals.shape[0]
    if n < 2:
        raise InsufficientSimulationsError("kernel estimate needs at least 2 values")
    h = silverman_bandwidth(vals) if bandwidth is None else float(bandwidth)
    if h <= 0.0:
        raise ValueError("bandwidth must be positive")
    z = (float(x) - vals) / h
    log_density = float(logsumexp(-0.5 * z * z)) - np.log(n) - np.log(h) - 0.5 * _LOG_2PI
    cdf = float(np.mean(std_normal_cdf(z)))
    return log_density, cdf


def semiparam_fit(s_obs, s_sim) -> SemiParamFit:
    """Fit KDE marginals and the rank correlation for one evaluation.

    CDF values are clamped into ``[1/(2n), 1 - 1/(2n)]`` before the normal
    scores, so an observed summary outside the simulated range degrades the
    likelihood instead of producing infinities.
    """
    arr = as_summary_matrix(s_sim)
    n, d = arr.shape
    s_obs = as_summary_vector(s_obs, d)
    grc = gaussian_rank_correlation(arr)
    log_dens = np.empty(d)
    cdf_vals = np.empty(d)
    for j in range(d):
        log_dens[j], cdf_vals[j] = kde_gaussian(arr[:, j], s_obs[j])
    lo = 1.0 / (2.0 * n)
    cdf_vals = np.clip(cdf_vals, lo, 1.0 - lo)
    eta = std_normal_quantile(cdf_vals)
    return SemiParamFit(
        grc=grc,
        marginal_log_densities=log_dens,
        marginal_cdf_values=cdf_vals,
        eta_obs=eta,
        n=n,
    )


def semiparam_loglik(fit: SemiParamFit, corr: np.ndarray) -> float:
    """Assemble the semi-parametric log-likelihood from a fit and a copula
    correlation (possibly shrunk).  Returns ``-inf`` on a non-PD matrix."""
    try:
        chol = np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        return -np.inf
    if np.any(np.isinf(fit.marginal_log_densities)):
        return -np.inf
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    w = solve_triangular(chol, fit.eta_obs, lower=True, check_finite=False)
    quad = float(w @ w) - float(fit.eta_obs @ fit.eta_obs)
    log_lik = -0.5 * logdet - 0.5 * quad + float(np.sum(fit.marginal_log_densities))
    if np.isnan(log_lik):
        return -np.inf
    return log_lik


def semiparam_sl(
    s_obs,
    s_sim,
    shrinkage: ShrinkageSpec = NO_SHRINKAGE,
) -> SlEstimate:
    """Semi-parametric synthetic log-likelihood.

    KDE marginals evaluated at the observed summary are combined through a
    Gaussian copula whose correlation is the Gaussian rank correlation of
    the simulated summaries.  Shrinkage, if any, applies to that
    correlation matrix.

    Parameters
    ----------
    s_obs : array_like
        Observed summary, length d.
    s_sim : array_like
        Simulated summaries, shape (n, d) with n >= 3.
    shrinkage : ShrinkageSpec
        Correlation shrinkage for the copula.

    Returns
    -------
    SlEstimate
        ``log_lik = -inf`` when the shrunk correlation is not positive
        definite or any marginal density vanishes at the observed summary.
    """
    fit = semiparam_fit(s_obs, s_sim)
    try:
        corr = shrink_correlation(fit.grc, shrinkage)
    except (ShrinkageNumericalError, DegenerateMarginError):
        return SlEstimate(-np.inf, "semiparametric", fit.n)
    return SlEstimate(semiparam_loglik(fit, corr), "semiparametric", fit.n)
