"""Built-in models: an MA(2) time-series benchmark and a conjugate
Gaussian toy model used as a correctness oracle for the sampler.

The MA(2) observed dataset and random-walk proposal covariance shipped in
``synlike/data`` are frozen artifacts generated once (see
``scripts/make_ma2_assets.py``) so experiment runs are reproducible
bit-for-bit.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np
from scipy.linalg import toeplitz

from .model import Model, as_generator

__all__ = [
    "ma2_simulate",
    "ma2_log_prior",
    "ma2_true_covariance",
    "ma2_model",
    "ma2_observed_summary",
    "ma2_proposal_covariance",
    "gaussian_toy_model",
    "gaussian_toy_posterior",
    "builtin_model",
    "BUILTIN_MODELS",
]

MA2_DEFAULT_T = 50
MA2_THETA0 = (0.6, 0.2)


def ma2_simulate(rng, theta, T: int = MA2_DEFAULT_T) -> np.ndarray:
    """Simulate a second-order moving-average series of length T.

    ``y_t = z_t + theta1 * z_(t-1) + theta2 * z_(t-2)`` with iid standard
    normal innovations, so T + 2 normals are drawn per series.

    Parameters
    ----------
    rng : RngStream or numpy Generator
        Source of the innovations.
    theta : array_like
        (theta1, theta2); the simulation is defined for any values.
    T : int
        Series length (>= 3).
    """
    gen = as_generator(rng)
    theta = np.asarray(theta, dtype=np.float64)
    if T < 3:
        raise ValueError("T must be at least 3")
    z = gen.standard_normal(T + 2)
    return z[2:] + theta[0] * z[1:-1] + theta[1] * z[:-2]


def ma2_log_prior(theta) -> float:
    """Uniform (unnormalised) prior on the invertibility triangle.

    Support: -1 < theta2 < 1, theta1 + theta2 > -1, theta1 - theta2 < 1.
    """
    theta = np.asarray(theta, dtype=np.float64)
    t1, t2 = float(theta[0]), float(theta[1])
    inside = (-1.0 < t2 < 1.0) and (t1 + t2 > -1.0) and (t1 - t2 < 1.0)
    return 0.0 if inside else -np.inf


def ma2_true_covariance(theta, T: int = MA2_DEFAULT_T) -> np.ndarray:
    """Exact covariance of the MA(2) series: banded Toeplitz.

    Diagonal ``1 + theta1^2 + theta2^2``, first off-diagonal
    ``theta1 * (1 + theta2)``, second off-diagonal ``theta2``, zero beyond.
    """
    theta = np.asarray(theta, dtype=np.float64)
    t1, t2 = float(theta[0]), float(theta[1])
    col = np.zeros(T)
    col[0] = 1.0 + t1 * t1 + t2 * t2
    col[1] = t1 * (1.0 + t2)
    col[2] = t2
    return toeplitz(col)


def _ma2_summarize(dataset) -> np.ndarray:
    return np.asarray(dataset, dtype=np.float64)


def ma2_model(T: int = MA2_DEFAULT_T, theta0=MA2_THETA0, check: bool = True) -> Model:
    """MA(2) model with the raw series as its summary statistic."""
    return Model(
        simulate=ma2_simulate,
        summarize=_ma2_summarize,
        theta0=np.asarray(theta0, dtype=np.float64),
        log_prior=ma2_log_prior,
        sim_args={"T": int(T)},
        name="ma2",
        check=check,
    )


def ma2_observed_summary() -> np.ndarray:
    """The frozen observed MA(2) series shipped with the package (T=50)."""
    path = resources.files("synlike").joinpath("data/ma2_observed.csv")
    with resources.as_file(path) as file_path:
        return np.loadtxt(file_path, dtype=np.float64)


def ma2_proposal_covariance() -> np.ndarray:
    """The frozen random-walk proposal covariance for the MA(2) runs."""
    path = resources.files("synlike").joinpath("data/ma2_proposal_cov.json")
    payload = json.loads(path.read_text())
    return np.asarray(payload["cov_rand_walk"], dtype=np.float64)


def gaussian_toy_model(
    prior_mean: float = 0.0,
    prior_sd: float = 2.0,
    obs_noise_sd: float = 1.0,
    n_obs: int = 25,
    theta0: float | None = None,
    check: bool = True,
) -> Model:
    """Scalar normal-mean model with a conjugate normal prior.

    The simulator draws ``n_obs`` iid N(theta, obs_noise_sd^2) points and
    the summary is their mean, so the summary likelihood is exactly
    N(theta, obs_noise_sd^2 / n_obs) and the posterior is available in
    closed form (:func:`gaussian_toy_posterior`).
    """
    prior_mean = float(prior_mean)
    prior_sd = float(prior_sd)
    obs_noise_sd = float(obs_noise_sd)
    n_obs = int(n_obs)
    if prior_sd <= 0 or obs_noise_sd <= 0:
        raise ValueError("prior_sd and obs_noise_sd must be positive")
    if n_obs < 1:
        raise ValueError("n_obs must be positive")

    def simulate(gen, theta, n_obs=n_obs, obs_noise_sd=obs_noise_sd):
        return gen.normal(float(theta[0]), obs_noise_sd, size=n_obs)

    def summarize(dataset):
        return np.atleast_1d(np.mean(dataset))

    def log_prior(theta):
        z = (float(theta[0]) - prior_mean) / prior_sd
        return -0.5 * z * z - 0.5 * np.log(2.0 * np.pi) - np.log(prior_sd)

    return Model(
        simulate=simulate,
        summarize=summarize,
        theta0=np.array([prior_mean if theta0 is None else float(theta0)]),
        log_prior=log_prior,
        name="gaussian-toy",
        check=check,
    )


def gaussian_toy_posterior(
    prior_mean: float,
    prior_sd: float,
    obs_noise_sd: float,
    n_obs: int,
    s_obs: float,
) -> tuple[float, float]:
    """Exact posterior (mean, sd) of the toy model given an observed mean.

    Posterior precision is prior precision plus ``n_obs / obs_noise_sd^2``.
    """
    prior_prec = 1.0 / (float(prior_sd) ** 2)
    lik_prec = float(n_obs) / (float(obs_noise_sd) ** 2)
    post_prec = prior_prec + lik_prec
    post_mean = (prior_prec * float(prior_mean) + lik_prec * float(s_obs)) / post_prec
    return post_mean, post_prec**-0.5


BUILTIN_MODELS = ("ma2", "gaussian-toy")


def builtin_model(name: str, options: dict | None = None) -> Model:
    """Construct a built-in model by CLI name."""
    options = dict(options or {})
    if name == "ma2":
        model = ma2_model(
            T=int(options.pop("T", MA2_DEFAULT_T)),
            theta0=options.pop("theta0", MA2_THETA0),
        )
    elif name == "gaussian-toy":
        model = gaussian_toy_model(
            prior_mean=options.pop("prior_mean", 0.0),
            prior_sd=options.pop("prior_sd", 2.0),
            obs_noise_sd=options.pop("obs_noise_sd", 1.0),
            n_obs=options.pop("n_obs", 25),
            theta0=options.pop("theta0", None),
        )
    else:
        raise ValueError(f"unknown built-in model {name!r}; available: {BUILTIN_MODELS}")
    if options:
        raise ValueError(f"unknown options for model {name!r}: {sorted(options)}")
    return model
