import math

import numpy as np
import pytest

from oracles import fd_log_jacobian
from synlike.errors import ConfigError, InitializationError, SimulationError
from synlike.estimators import standard_sl
from synlike.model import Model
from synlike.models import gaussian_toy_model, gaussian_toy_posterior
from synlike.rng import likelihood_stream
from synlike.sampler import (
    MhConfig,
    SimulationRunner,
    estimate_loglik,
    inverse_logit_transform,
    log_jacobian,
    logit_transform,
    run_mcmc,
)
from synlike.shrinkage import NO_SHRINKAGE, ShrinkageSpec

MIXED_BOUNDS = np.array(
    [
        [-1.0, 2.0],  # two-sided
        [0.5, np.inf],  # lower only
        [-np.inf, 3.0],  # upper only
        [-np.inf, np.inf],  # unbounded
    ]
)


def _inside_mixed(gen):
    return np.array(
        [
            gen.uniform(-0.999, 1.999),
            0.5 + math.exp(gen.uniform(-3, 3)),
            3.0 - math.exp(gen.uniform(-3, 3)),
            gen.standard_normal() * 5,
        ]
    )


class TestLogitTransform:
    def test_round_trip(self):
        gen = np.random.default_rng(0)
        for _ in range(25):
            theta = _inside_mixed(gen)
            tilde = logit_transform(theta, MIXED_BOUNDS)
            np.testing.assert_allclose(
                inverse_logit_transform(tilde, MIXED_BOUNDS), theta, rtol=1e-12, atol=1e-12
            )

    def test_reverse_round_trip(self):
        gen = np.random.default_rng(1)
        for _ in range(25):
            tilde = gen.standard_normal(4) * 3
            theta = inverse_logit_transform(tilde, MIXED_BOUNDS)
            np.testing.assert_allclose(
                logit_transform(theta, MIXED_BOUNDS), tilde, rtol=1e-9, atol=1e-9
            )

    def test_midpoint_maps_to_zero(self):
        bounds = np.array([[2.0, 10.0]])
        np.testing.assert_allclose(logit_transform([6.0], bounds), [0.0], atol=1e-15)

    def test_unbounded_is_identity(self):
        bounds = np.array([[-np.inf, np.inf]] * 3)
        theta = np.array([-5.0, 0.0, 7.5])
        np.testing.assert_array_equal(logit_transform(theta, bounds), theta)
        np.testing.assert_array_equal(inverse_logit_transform(theta, bounds), theta)

    def test_boundary_rejected(self):
        bounds = np.array([[0.0, 1.0]])
        for bad in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(ValueError):
                logit_transform([bad], bounds)

    def test_huge_arguments_saturate_safely(self):
        # toward a finite bound the value saturates at the bound; on the
        # unbounded side it may exceed float range (the prior rejects that)
        theta = inverse_logit_transform(np.array([800.0, -800.0, 800.0, 0.0]), MIXED_BOUNDS)
        assert -1.0 < theta[0] <= 2.0
        assert theta[1] == 0.5
        assert theta[2] == 3.0
        runaway = inverse_logit_transform(np.array([0.0, 800.0, -800.0, 0.0]), MIXED_BOUNDS)
        assert runaway[1] == np.inf
        assert runaway[2] == -np.inf

    def test_inverse_hits_bounds_only_in_the_limit(self):
        bounds = np.array([[0.0, 1.0]])
        lo = inverse_logit_transform([-40.0], bounds)[0]
        hi = inverse_logit_transform([40.0], bounds)[0]
        assert 0.0 <= lo < 1e-15
        assert 1.0 - 1e-15 < hi <= 1.0


class TestLogJacobian:
    def test_unbounded_is_zero(self):
        bounds = np.array([[-np.inf, np.inf]] * 2)
        assert log_jacobian(np.array([3.0, -1.0]), bounds) == 0.0

    def test_unit_interval_at_zero(self):
        # dtheta/dtilde of the logistic at 0 is 1/4
        bounds = np.array([[0.0, 1.0]])
        np.testing.assert_allclose(log_jacobian([0.0], bounds), math.log(0.25), rtol=1e-15)

    def test_matches_finite_differences(self):
        gen = np.random.default_rng(2)
        for _ in range(15):
            tilde = gen.standard_normal(4) * 2
            want = fd_log_jacobian(
                lambda x: inverse_logit_transform(x, MIXED_BOUNDS), tilde
            )
            np.testing.assert_allclose(
                log_jacobian(tilde, MIXED_BOUNDS), want, atol=1e-6
            )

    def test_extreme_arguments_finite(self):
        assert np.isfinite(log_jacobian(np.array([900.0, 5.0, -5.0, 0.0]), MIXED_BOUNDS))


class TestMhConfig:
    def _base(self, **kw):
        args = dict(n=10, M=5, cov_rand_walk=np.eye(1), s_obs=[0.0])
        args.update(kw)
        return MhConfig(**args)

    def test_defaults(self):
        cfg = self._base()
        assert cfg.method == "BSL"
        assert cfg.shrinkage is NO_SHRINKAGE
        assert cfg.workers == 1

    def test_method_case_insensitive(self):
        assert self._base(method="ubsl").method == "uBSL"
        assert self._base(method="SEMIBSL").method == "semiBSL"

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            self._base(n=1)
        with pytest.raises(ValueError):
            self._base(M=-1)
        with pytest.raises(ValueError):
            self._base(workers=0)
        with pytest.raises(ValueError):
            self._base(method="abc")
        with pytest.raises(ValueError):
            self._base(s_obs=[np.nan])
        with pytest.raises(ValueError):
            self._base(cov_rand_walk=np.zeros((1, 2)))
        with pytest.raises(TypeError):
            self._base(shrinkage="glasso")

    def test_unbiased_estimator_refuses_shrinkage(self):
        with pytest.raises(ValueError, match="shrinkage"):
            self._base(method="uBSL", shrinkage=ShrinkageSpec("glasso", 0.1))
        self._base(method="uBSL")  # without shrinkage it's fine

    def test_grc_flag_is_bsl_only(self):
        with pytest.raises(ValueError, match="use_grc"):
            self._base(method="semiBSL", use_grc=True)
        assert self._base(use_grc=True).use_grc

    def test_logit_bounds_validated(self):
        with pytest.raises(ValueError):
            self._base(logit_bounds=[[1.0, 0.0]])
        cfg = self._base(logit_bounds=[[0.0, 1.0]])
        assert cfg.logit_bounds.shape == (1, 2)


def _counting_model(theta0=(0.4,), d=2, check=True):
    """Toy model that counts simulator invocations."""
    calls = {"n": 0}

    def simulate(gen, theta):
        calls["n"] += 1
        return gen.normal(theta[0], 1.0, size=6)

    def summarize(dataset):
        return np.array([np.mean(dataset), np.var(dataset)])[:d]

    model = Model(simulate=simulate, summarize=summarize, theta0=list(theta0), check=check)
    calls["n"] = 0  # ignore the smoke-test simulations
    return model, calls


class TestSimulationRunner:
    def test_rows_follow_child_streams(self, toy_model):
        parent = likelihood_stream(5, 9)
        with SimulationRunner(toy_model, workers=1) as runner:
            got = runner.summaries(parent, 7, toy_model.theta0)
        want = np.vstack(
            [toy_model.summary_of(parent.child(j), toy_model.theta0) for j in range(7)]
        )
        np.testing.assert_array_equal(got, want)

    def test_thread_count_never_changes_results(self, toy_model):
        parent = likelihood_stream(17, 3)
        results = {}
        for workers in (1, 2, 4):
            with SimulationRunner(toy_model, workers=workers) as runner:
                results[workers] = runner.summaries(parent, 23, toy_model.theta0)
        np.testing.assert_array_equal(results[1], results[2])
        np.testing.assert_array_equal(results[1], results[4])

    def test_simulation_counter(self):
        model, calls = _counting_model()
        with SimulationRunner(model, workers=1) as runner:
            runner.summaries(likelihood_stream(0, 1), 11, model.theta0)
            assert runner.n_simulations == 11
            assert calls["n"] == 11

    def test_batch_fast_path_used_when_serial(self):
        batch_called = {"n": 0}

        def simulate(gen, theta):
            return gen.normal(theta[0], 1.0, size=4)

        def simulate_batch(stream, n, theta):
            batch_called["n"] += 1
            return [simulate(stream.child(j).generator(), theta) for j in range(n)]

        model = Model(
            simulate=simulate,
            summarize=lambda d: np.atleast_1d(np.mean(d)),
            theta0=[0.1],
            simulate_batch=simulate_batch,
        )
        parent = likelihood_stream(1, 2)
        with SimulationRunner(model, workers=1) as runner:
            fast = runner.summaries(parent, 9, model.theta0)
        assert batch_called["n"] == 1
        with SimulationRunner(model, workers=2) as runner:
            threaded = runner.summaries(parent, 9, model.theta0)
        assert batch_called["n"] == 1  # parallel path must not take the shortcut
        np.testing.assert_array_equal(fast, threaded)

    def test_failing_replicate_reports_index(self):
        k = {"n": 0}

        def simulate(gen, theta):
            if k["n"] == 3:
                raise RuntimeError("solver diverged")
            k["n"] += 1
            return gen.normal(0.0, 1.0, size=3)

        model = Model(
            simulate=simulate,
            summarize=lambda d: np.atleast_1d(np.mean(d)),
            theta0=[0.0],
            check=False,
        )
        model.d = 1
        with SimulationRunner(model, workers=1) as runner:
            with pytest.raises(SimulationError) as err:
                runner.summaries(likelihood_stream(0, 0), 8, model.theta0)
        assert err.value.index == 3
        assert "solver diverged" in str(err.value)

    def test_nonfinite_summary_reports_first_bad_row(self):
        k = {"n": 0}

        def summarize(dataset):
            k["n"] += 1
            return np.array([np.nan if k["n"] == 5 else 1.0])

        model = Model(
            simulate=lambda gen, theta: gen.normal(size=2),
            summarize=summarize,
            theta0=[0.0],
            check=False,
        )
        model.d = 1
        with SimulationRunner(model, workers=1) as runner:
            with pytest.raises(SimulationError) as err:
                runner.summaries(likelihood_stream(0, 0), 8, model.theta0)
        assert err.value.index == 4  # 5th summarize call -> row index 4

    def test_wrong_summary_length_rejected(self):
        k = {"n": 0}

        def summarize(dataset):
            k["n"] += 1
            return np.zeros(3 if k["n"] == 2 else 2)

        model = Model(
            simulate=lambda gen, theta: gen.normal(size=2),
            summarize=summarize,
            theta0=[0.0],
            check=False,
        )
        model.d = 2
        with SimulationRunner(model, workers=1) as runner:
            with pytest.raises(SimulationError):
                runner.summaries(likelihood_stream(0, 0), 4, model.theta0)


class TestEstimateLoglik:
    def test_equals_manual_pipeline(self, toy_model):
        cfg = MhConfig(n=15, M=0, cov_rand_walk=np.eye(1), s_obs=[0.4])
        stream = likelihood_stream(7, 1)
        est = estimate_loglik(toy_model.theta0, toy_model, cfg, stream)
        rows = np.vstack(
            [toy_model.summary_of(stream.child(j), toy_model.theta0) for j in range(15)]
        )
        assert est.log_lik == standard_sl(cfg.s_obs, rows).log_lik
        assert est.estimator == "standard"
        assert est.n_used == 15

    def test_method_dispatch(self, toy_model):
        stream = likelihood_stream(3, 1)
        for method, name in [("BSL", "standard"), ("uBSL", "unbiased"), ("semiBSL", "semiparametric")]:
            cfg = MhConfig(n=12, M=0, cov_rand_walk=np.eye(1), s_obs=[0.1], method=method)
            est = estimate_loglik(toy_model.theta0, toy_model, cfg, stream)
            assert est.estimator == name
            assert np.isfinite(est.log_lik)


def _exact_toy_loglik(model_kw=None):
    """Closed-form summary likelihood of the toy model, for kernel tests."""
    kw = dict(prior_mean=0.0, prior_sd=2.0, obs_noise_sd=1.0, n_obs=25)
    kw.update(model_kw or {})
    sd = kw["obs_noise_sd"] / math.sqrt(kw["n_obs"])

    def loglik(theta, stream, s_obs):
        z = (s_obs - float(theta[0])) / sd
        return -0.5 * z * z - math.log(sd) - 0.5 * math.log(2 * math.pi)

    return loglik, kw


class TestRunMcmc:
    def test_zero_iterations(self, toy_model):
        cfg = MhConfig(n=8, M=0, cov_rand_walk=np.eye(1), s_obs=[0.2], master_seed=4)
        chain = run_mcmc(toy_model, cfg)
        assert chain.theta.shape == (1, 1)
        np.testing.assert_array_equal(chain.theta[0], toy_model.theta0)
        assert chain.loglike.shape == (1,)
        assert chain.acceptance_rate == 0.0
        assert chain.early_rejection_rate == 0.0

    def test_reruns_are_bit_identical(self, toy_model):
        cfg = MhConfig(n=10, M=60, cov_rand_walk=[[0.2]], s_obs=[0.3], master_seed=9)
        a = run_mcmc(toy_model, cfg)
        b = run_mcmc(toy_model, cfg)
        np.testing.assert_array_equal(a.theta, b.theta)
        np.testing.assert_array_equal(a.loglike, b.loglike)
        assert a.acceptance_rate == b.acceptance_rate

    def test_worker_count_never_changes_the_chain(self, toy_model):
        chains = {}
        for workers in (1, 4):
            cfg = MhConfig(
                n=12, M=40, cov_rand_walk=[[0.2]], s_obs=[0.3], master_seed=2, workers=workers
            )
            chains[workers] = run_mcmc(toy_model, cfg)
        np.testing.assert_array_equal(chains[1].theta, chains[4].theta)
        np.testing.assert_array_equal(chains[1].loglike, chains[4].loglike)

    def test_early_rejection_spends_no_simulations(self):
        model, calls = _counting_model(theta0=(0.0,), d=1)
        theta0 = model.theta0.copy()

        def prior(theta):
            return 0.0 if np.array_equal(theta, theta0) else -np.inf

        model.log_prior = prior
        cfg = MhConfig(n=9, M=30, cov_rand_walk=np.eye(1), s_obs=[0.0], master_seed=1)
        chain = run_mcmc(model, cfg)
        # no proposal can exactly hit theta0 again, so everything early-rejects
        assert chain.early_rejection_rate == 1.0
        assert chain.acceptance_rate == 0.0
        assert chain.n_early_rejected == 30
        assert calls["n"] == 9  # the single initialisation estimate
        assert np.all(chain.theta == theta0[0])
        assert np.all(chain.loglike == chain.loglike[0])

    def test_loglik_carried_forward_until_acceptance(self):
        model = gaussian_toy_model(check=False)

        def noisy_loglik(theta, stream):
            return float(-0.5 * theta[0] ** 2 + 0.3 * stream.generator().standard_normal())

        cfg = MhConfig(n=2, M=400, cov_rand_walk=[[0.5]], s_obs=[0.0], master_seed=3)
        chain = run_mcmc(model, cfg, loglik_fn=noisy_loglik)
        moved = chain.theta[1:, 0] != chain.theta[:-1, 0]
        ll_changed = chain.loglike[1:] != chain.loglike[:-1]
        # the pseudo-marginal carries the estimate with the state: they move together
        np.testing.assert_array_equal(moved, ll_changed)
        assert 0 < chain.n_accepted < 400

    def test_deterministic_loglik_stays_consistent_with_state(self):
        model = gaussian_toy_model(check=False)
        loglik, kw = _exact_toy_loglik()
        s_obs = 0.55
        cfg = MhConfig(n=2, M=300, cov_rand_walk=[[0.4]], s_obs=[s_obs], master_seed=5)
        chain = run_mcmc(model, cfg, loglik_fn=lambda t, s: loglik(t, s, s_obs))
        want = np.array([loglik(t, None, s_obs) for t in chain.theta])
        np.testing.assert_allclose(chain.loglike, want, rtol=1e-12)

    def test_posterior_matches_conjugate_answer(self):
        model = gaussian_toy_model(check=False)
        loglik, kw = _exact_toy_loglik()
        s_obs = 0.8
        cfg = MhConfig(n=2, M=6000, cov_rand_walk=[[0.3]], s_obs=[s_obs], master_seed=7)
        chain = run_mcmc(model, cfg, loglik_fn=lambda t, s: loglik(t, s, s_obs))
        want_mean, want_sd = gaussian_toy_posterior(
            kw["prior_mean"], kw["prior_sd"], kw["obs_noise_sd"], kw["n_obs"], s_obs
        )
        draws = chain.theta[1000:, 0]
        assert abs(draws.mean() - want_mean) < 4 * want_sd / math.sqrt(200)
        assert abs(draws.std(ddof=1) - want_sd) < 0.25 * want_sd

    def test_bounded_sampling_stays_inside(self):
        model = gaussian_toy_model(theta0=0.7, check=False)
        model.bounds = np.array([[0.2, 1.4]])
        loglik, _ = _exact_toy_loglik()
        cfg = MhConfig(
            n=2,
            M=600,
            cov_rand_walk=[[1.5]],
            s_obs=[0.7],
            master_seed=8,
            logit_bounds=model.bounds,
        )
        chain = run_mcmc(model, cfg, loglik_fn=lambda t, s: loglik(t, s, 0.7))
        assert np.all(chain.theta > 0.2)
        assert np.all(chain.theta < 1.4)
        assert chain.n_accepted > 0

    def test_initialization_retries_then_succeeds(self):
        model = gaussian_toy_model(check=False)
        attempts = []

        def flaky(theta, stream):
            attempts.append(stream.stream_id)
            return -np.inf if len(attempts) < 3 else 0.0

        cfg = MhConfig(n=2, M=0, cov_rand_walk=np.eye(1), s_obs=[0.0], master_seed=0)
        chain = run_mcmc(model, cfg, loglik_fn=flaky)
        assert len(attempts) == 3
        assert len(set(attempts)) == 3  # each attempt uses its own stream
        assert chain.loglike[0] == 0.0

    def test_initialization_gives_up_after_three_attempts(self):
        model = gaussian_toy_model(check=False)
        count = {"n": 0}

        def hopeless(theta, stream):
            count["n"] += 1
            return -np.inf

        cfg = MhConfig(n=2, M=0, cov_rand_walk=np.eye(1), s_obs=[0.0])
        with pytest.raises(InitializationError, match="3 attempts"):
            run_mcmc(model, cfg, loglik_fn=hopeless)
        assert count["n"] == 3

    def test_config_errors(self, toy_model):
        bad_shape = MhConfig(n=4, M=1, cov_rand_walk=np.eye(2), s_obs=[0.0])
        with pytest.raises(ConfigError, match="cov_rand_walk"):
            run_mcmc(toy_model, bad_shape)
        not_pd = MhConfig(n=4, M=1, cov_rand_walk=[[-1.0]], s_obs=[0.0])
        with pytest.raises(ConfigError, match="positive definite"):
            run_mcmc(toy_model, not_pd)

    def test_prior_excluding_theta0_rejected(self):
        model = gaussian_toy_model(check=False)
        model.log_prior = lambda theta: -np.inf
        cfg = MhConfig(n=2, M=1, cov_rand_walk=np.eye(1), s_obs=[0.0])
        with pytest.raises(ConfigError, match="log_prior"):
            run_mcmc(model, cfg, loglik_fn=lambda t, s: 0.0)

    def test_verbose_reports_progress(self, capsys):
        model = gaussian_toy_model(check=False)
        cfg = MhConfig(
            n=2, M=6, cov_rand_walk=[[0.1]], s_obs=[0.0], master_seed=1, verbose=True
        )
        run_mcmc(model, cfg, loglik_fn=lambda t, s: 0.0)
        err = capsys.readouterr().err
        assert "iteration" in err
        assert "acc=" in err
