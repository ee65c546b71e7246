"""Tests for post-change parameter estimation and the adaptive detector."""

import numpy as np
import pytest

from shmseq.detector import (
    DetectorState,
    GaussianParams,
    GeometricPrior,
    PointMassPrior,
    update,
)
from shmseq.errors import EmptyStream, EstimatesUnready, InsufficientTraining
from shmseq.estimator import (
    AdaptiveDetector,
    estimate_params,
    exact_log_posterior,
    fit_predamage,
    jensen_lower_bound,
    prior_weighted_log_likelihood,
    weighted_moments,
)

from helpers import double_sum_estimate


def tight_instance(rng, m=2, n_lo=5, n_hi=50):
    """A feature-like instance: tight covariances, so per-sample densities > 1."""
    n = int(rng.integers(n_lo, n_hi + 1))
    lam = int(rng.integers(1, n + 1))
    g = GaussianParams(rng.normal(0, 0.3, m), np.diag(rng.uniform(0.02, 0.1, m) ** 2))
    th = GaussianParams(g.mean + rng.normal(0, 0.2, m), np.diag(rng.uniform(0.02, 0.1, m) ** 2))
    xs = np.vstack(
        [
            rng.multivariate_normal(g.mean, g.cov, size=lam - 1).reshape(lam - 1, m),
            rng.multivariate_normal(th.mean, th.cov, size=n - lam + 1),
        ]
    )
    return xs, g, th


class TestEstimateParams:
    @pytest.mark.parametrize("seed", range(10))
    def test_single_sum_equals_double_sum(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 51))
        prior = GeometricPrior(float(rng.uniform(0.01, 0.3)))
        xs = rng.normal(size=(n, 2))
        mu_o, cov_o, den_o = double_sum_estimate(xs, prior.mass(np.arange(1, n + 1)))
        mu, cov, wsum = weighted_moments(xs, prior)
        assert np.abs(mu - mu_o).max() < 1e-10
        assert np.abs(cov - cov_o).max() < 1e-10
        assert abs(wsum - den_o) < 1e-10

    def test_running_sums_equal_double_sum(self):
        rng = np.random.default_rng(3)
        prior = GeometricPrior(0.05)
        xs = rng.normal(size=(40, 3))
        det = AdaptiveDetector(GaussianParams(np.zeros(3), np.eye(3)), prior, 0.5)
        for row in xs:
            det.update(row)
        mu_o, cov_o, den_o = double_sum_estimate(xs, prior.mass(np.arange(1, 41)))
        mu, cov = det.raw_estimate()
        assert abs(det.sum_w - den_o) < 1e-10
        assert np.abs(mu - mu_o).max() < 1e-10
        assert np.abs(cov - cov_o).max() < 1e-10

    def test_point_mass_at_one_is_plain_mle(self):
        rng = np.random.default_rng(5)
        xs = rng.normal(size=(40, 3))
        mu, cov, wsum = weighted_moments(xs, PointMassPrior(1))
        assert np.allclose(mu, xs.mean(axis=0), atol=1e-13)
        assert np.allclose(cov, np.cov(xs.T, ddof=0), atol=1e-12)
        assert wsum == 40.0

    def test_point_mass_at_k_is_mle_of_suffix(self):
        rng = np.random.default_rng(6)
        xs = rng.normal(size=(30, 2))
        mu, cov, _ = weighted_moments(xs, PointMassPrior(7))
        assert np.allclose(mu, xs[6:].mean(axis=0), atol=1e-13)
        assert np.allclose(cov, np.cov(xs[6:].T, ddof=0), atol=1e-12)

    def test_single_sample(self):
        est = estimate_params(np.array([[2.0, -1.0]]), GeometricPrior(0.1))
        assert np.allclose(est.mean, [2.0, -1.0])
        assert np.allclose(est.cov, 1e-9 * np.eye(2))  # ridge floor only

    def test_empty_stream(self):
        with pytest.raises(EmptyStream):
            estimate_params(np.empty((0, 2)), GeometricPrior(0.1))

    def test_monte_carlo_accuracy(self):
        """50 pre-change + 500 post-change samples pin the parameters down."""
        mu1 = np.array([2.0, -1.0])
        cov1 = np.diag([2.0, 0.5])
        mu_errs, cov_errs = [], []
        for seed in range(100):
            rng = np.random.default_rng(40_000 + seed)
            xs = np.vstack(
                [
                    rng.multivariate_normal([0.0, 0.0], np.eye(2), size=50),
                    rng.multivariate_normal(mu1, cov1, size=500),
                ]
            )
            est = estimate_params(xs, GeometricPrior(1e-2))
            mu_errs.append(np.abs(est.mean - mu1).max())
            cov_errs.append(np.abs(est.cov - cov1).max())
        assert np.median(mu_errs) < 0.15
        assert np.median(cov_errs) < 0.3

    def test_consistency_error_shrinks_with_samples(self):
        mu1 = np.array([1.5, -0.5])
        errs = {50: [], 500: []}
        for seed in range(60):
            rng = np.random.default_rng(90_000 + seed)
            post = rng.multivariate_normal(mu1, np.eye(2) * 0.8, size=500)
            pre = rng.multivariate_normal([0.0, 0.0], np.eye(2), size=20)
            for n_post in (50, 500):
                est = estimate_params(np.vstack([pre, post[:n_post]]), GeometricPrior(1e-2))
                errs[n_post].append(np.abs(est.mean - mu1).max())
        assert np.median(errs[500]) < np.median(errs[50])


class TestJensenBound:
    @pytest.mark.parametrize("seed", range(25))
    def test_bound_below_exact_posterior(self, seed):
        rng = np.random.default_rng(10_000 + seed)
        xs, g, th = tight_instance(rng)
        prior = GeometricPrior(float(rng.uniform(0.01, 0.3)))
        bound = jensen_lower_bound(xs, prior, g, th)
        exact = exact_log_posterior(xs, prior, g, th)
        assert bound < exact  # strict: the geometric prior is not a point mass

    def test_point_mass_equality_single_sample(self):
        g = GaussianParams([0.0], [[0.04]])
        th = GaussianParams([0.1], [[0.02]])
        xs = np.array([[0.05]])
        bound = jensen_lower_bound(xs, PointMassPrior(1), g, th)
        exact = exact_log_posterior(xs, PointMassPrior(1), g, th)
        assert abs(bound - exact) < 1e-12
        assert abs(exact) < 1e-12  # the posterior is exactly one

    def test_identical_distributions_stay_finite_and_below(self):
        rng = np.random.default_rng(2)
        g = GaussianParams([0.1, -0.2], np.diag([0.01, 0.02]))
        xs = rng.multivariate_normal(g.mean, g.cov, size=12)
        prior = GeometricPrior(0.05)
        bound = jensen_lower_bound(xs, prior, g, g)
        exact = exact_log_posterior(xs, prior, g, g)
        assert np.isfinite(bound)
        assert bound <= exact

    def test_exact_log_posterior_matches_recursion(self):
        rng = np.random.default_rng(8)
        xs, g, th = tight_instance(rng, n_lo=10, n_hi=20)
        prior = GeometricPrior(0.08)
        state = DetectorState()
        for row in xs:
            state = update(state, row, g, th, prior)
        assert abs(np.exp(exact_log_posterior(xs, prior, g, th)) - state.posterior) < 1e-10

    def test_estimate_is_stationary_point_of_surrogate(self):
        """Nudging the mean estimate must not improve the surrogate objective."""
        rng = np.random.default_rng(77)
        xs = rng.multivariate_normal([0.2, -0.1], np.diag([0.004, 0.002]), size=30)
        prior = GeometricPrior(0.05)
        g = GaussianParams([0.0, 0.0], np.diag([0.003, 0.003]))
        est = estimate_params(xs, prior)
        base = prior_weighted_log_likelihood(xs, prior, g, est)
        for i in range(2):
            for sign in (1.0, -1.0):
                mu = est.mean.copy()
                mu[i] += sign * 1e-4
                moved = prior_weighted_log_likelihood(xs, prior, g, GaussianParams(mu, est.cov))
                assert moved <= base + 1e-6


class TestFitPredamage:
    def test_two_point_set_exact(self):
        params = fit_predamage(np.array([[1.0, 0.0], [-1.0, 0.0]]))
        assert np.allclose(params.mean, [0.0, 0.0])
        # unbiased covariance diag(2, 0) plus ridge 1e-6 * trace / m
        assert np.allclose(params.cov, np.diag([2.0, 0.0]) + 1e-6 * np.eye(2))

    def test_monte_carlo_identity_covariance(self):
        rng = np.random.default_rng(13)
        params = fit_predamage(rng.multivariate_normal(np.zeros(3), np.eye(3), size=10_000))
        assert np.abs(params.mean).max() < 0.05
        assert np.abs(params.cov - np.eye(3)).max() < 0.1

    def test_insufficient_training(self):
        with pytest.raises(InsufficientTraining):
            fit_predamage(np.zeros((3, 7)))
        with pytest.raises(InsufficientTraining):
            fit_predamage(np.array([[1.0]]))


class TestAdaptiveDetector:
    def test_warmup_guard(self):
        g = GaussianParams(np.zeros(7), np.eye(7))
        det = AdaptiveDetector(g, GeometricPrior(0.01), 1e-3)
        rng = np.random.default_rng(0)
        for _ in range(5):
            posterior = det.update(rng.normal(size=7))
            assert posterior == 0.0
        assert not det.is_ready
        with pytest.raises(EstimatesUnready):
            det.params_estimate
        for _ in range(3):
            det.update(rng.normal(size=7))
        assert det.is_ready
        assert det.params_estimate.dim == 7

    def test_detects_strong_change_after_true_step(self):
        g = GaussianParams([0.0], [[1.0]])
        det = AdaptiveDetector(g, GeometricPrior(1e-2), 1e-4)
        rng = np.random.default_rng(42)
        lam = 25
        tau = None
        for n in range(1, 80):
            x = rng.normal(0.0, 1.0) if n < lam else rng.normal(4.0, 1.0)
            det.update([x])
            if det.detection_time is not None:
                tau = det.detection_time
                break
        assert tau is not None and tau >= lam
        assert tau - lam <= 10

    def test_barely_lags_known_detector_under_huge_separation(self):
        """KL ~ 300: both detectors fire essentially at the change step."""
        import math

        g = GaussianParams([0.0], [[1.0]])
        f = GaussianParams([math.sqrt(600.0)], [[1.0]])
        prior = GeometricPrior(1e-2)
        lam, horizon = 20, 60
        close = 0
        for seed in range(20):
            rng = np.random.default_rng(300_000 + seed)
            xs = np.concatenate(
                [rng.normal(0, 1, lam - 1), rng.normal(f.mean[0], 1, horizon - lam + 1)]
            )
            state = DetectorState()
            det = AdaptiveDetector(g, prior, 1e-5)
            tau_known = tau_adaptive = None
            for x in xs:
                state = update(state, [x], g, f, prior)
                if state.posterior >= 1 - 1e-5 and tau_known is None:
                    tau_known = state.step
                det.update([x])
                tau_adaptive = det.detection_time
                if tau_known is not None and tau_adaptive is not None:
                    break
            if (
                tau_known is not None
                and tau_adaptive is not None
                and lam <= tau_known
                and lam <= tau_adaptive
                and (tau_adaptive - tau_known) <= 5
            ):
                close += 1
        assert close >= 18  # >= 90% of trials

    def test_matches_known_detector_with_frozen_estimate(self):
        """Re-running the known-f detector at the final estimate replays the math."""
        rng = np.random.default_rng(4)
        g = GaussianParams([0.0, 0.0], np.eye(2) * 0.01)
        prior = GeometricPrior(0.01)
        det = AdaptiveDetector(g, prior, 1e-6)
        xs = np.vstack(
            [
                rng.multivariate_normal([0.0, 0.0], np.eye(2) * 0.01, size=12),
                rng.multivariate_normal([0.05, -0.03], np.eye(2) * 0.012, size=4),
            ]
        )
        for row in xs:
            det.update(row)
        state = DetectorState()
        for row in xs:
            state = update(state, row, g, det.params_estimate, prior)
        assert 0.0 < det.posterior < 1.0
        assert abs(det.posterior - state.posterior) < 1e-9
