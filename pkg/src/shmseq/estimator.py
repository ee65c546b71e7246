"""Maximum-likelihood estimation of the unknown post-change distribution.

When the post-damage feature distribution f is unknown, its parameters are
estimated from the running stream itself by maximizing a concavified
surrogate of the log posterior (Jensen bound). The closed-form solution is a
prior-weighted mean/covariance in which sample n carries the prior CDF
weight Pi(n) = P(change <= n):

    mu_hat    = sum_n Pi(n) x[n]               / sum_n Pi(n)
    Sigma_hat = sum_n Pi(n) (x[n]-mu)(x[n]-mu)' / sum_n Pi(n)

(the k-then-n double sum of the estimator collapses to these single sums).
The adaptive detector refreshes the estimate at every step and re-scores the
stored stream with the frozen current estimate before thresholding.
"""

from __future__ import annotations

import numpy as np

from .detector import (
    GaussianParams,
    hypothesis_log_weights,
    log_density,
    log_density_many,
    logsumexp,
    posterior_from_weights,
)
from .errors import EmptyStream, EstimatesUnready, InsufficientTraining

DEFAULT_RIDGE_SCALE = 1e-6
DEFAULT_RIDGE_FLOOR = 1e-9


def _as_matrix(dsfs) -> np.ndarray:
    if isinstance(dsfs, np.ndarray):
        return np.atleast_2d(np.asarray(dsfs, dtype=float))
    rows = [np.atleast_1d(np.asarray(getattr(x, "values", x), dtype=float)) for x in dsfs]
    if not rows:
        return np.empty((0, 0))
    return np.vstack(rows)


def ridge_regularize(
    cov: np.ndarray,
    scale: float = DEFAULT_RIDGE_SCALE,
    floor: float = DEFAULT_RIDGE_FLOOR,
) -> np.ndarray:
    """Add delta*I with delta = max(scale * trace / m, floor).

    Early-stream covariance estimates are rank deficient; the ridge keeps
    them invertible without visibly moving converged estimates.
    """
    m = cov.shape[0]
    delta = max(scale * float(np.trace(cov)) / m, floor)
    return cov + delta * np.eye(m)


def weighted_moments(dsfs, prior) -> tuple[np.ndarray, np.ndarray, float]:
    """Bare closed-form estimate: (mu_hat, Sigma_hat, weight sum), no ridge.

    Sample n carries the prior CDF weight Pi(n); the covariance may be
    singular for short streams.
    """
    x = _as_matrix(dsfs)
    n = x.shape[0]
    if n == 0:
        raise EmptyStream("cannot estimate parameters from zero samples")
    w = np.asarray(prior.cdf(np.arange(1, n + 1)), dtype=float)
    wsum = float(w.sum())
    if wsum <= 0.0:
        raise ValueError("prior assigns zero mass to every observed step")
    mu = (w @ x) / wsum
    xc = x - mu
    cov = (xc.T * w) @ xc / wsum
    return mu, 0.5 * (cov + cov.T), wsum


def estimate_params(
    dsfs,
    prior,
    *,
    ridge_scale: float = DEFAULT_RIDGE_SCALE,
    ridge_floor: float = DEFAULT_RIDGE_FLOOR,
) -> GaussianParams:
    """Closed-form ridge-regularized post-change parameter estimate from x[1..N]."""
    mu, cov, _ = weighted_moments(dsfs, prior)
    return GaussianParams(mean=mu, cov=ridge_regularize(cov, ridge_scale, ridge_floor))


def fit_predamage(
    training,
    *,
    ridge_scale: float = DEFAULT_RIDGE_SCALE,
    ridge_floor: float = DEFAULT_RIDGE_FLOOR,
) -> GaussianParams:
    """Baseline distribution from healthy-regime feature vectors.

    Sample mean and unbiased (n-1) sample covariance, ridge regularized.
    Requires at least max(2, m) vectors for an m-dimensional feature.
    """
    x = _as_matrix(training)
    n, m = x.shape
    if n < max(2, m):
        raise InsufficientTraining(f"got {n} training vectors of dimension {m}, need >= {max(2, m)}")
    mu = x.mean(axis=0)
    xc = x - mu
    cov = xc.T @ xc / (n - 1)
    cov = ridge_regularize(0.5 * (cov + cov.T), ridge_scale, ridge_floor)
    return GaussianParams(mean=mu, cov=cov)


def exact_log_posterior(dsfs, prior, g: GaussianParams, f: GaussianParams) -> float:
    """ln P(change <= N | x[1..N]) by direct hypothesis enumeration (log domain)."""
    x = _as_matrix(dsfs)
    log_w, log_nc = hypothesis_log_weights(log_density_many(g, x), log_density_many(f, x), prior)
    return float(logsumexp(log_w) - logsumexp(np.append(log_w, log_nc)))


def prior_weighted_log_likelihood(dsfs, prior, g: GaussianParams, theta: GaussianParams) -> float:
    """sum_k pi(k) [sum_{n<k} ln g(x[n]) + sum_{n>=k} ln f(x[n]; theta)].

    The theta-dependent part of the Jensen surrogate; `estimate_params` is
    its exact stationary point in (mu, Sigma).
    """
    x = _as_matrix(dsfs)
    n = x.shape[0]
    if n == 0:
        raise EmptyStream("cannot evaluate the bound on zero samples")
    log_g = log_density_many(g, x)
    log_f = log_density_many(theta, x)
    cum_g = np.concatenate(([0.0], np.cumsum(log_g)))
    cum_f = np.concatenate(([0.0], np.cumsum(log_f)))
    ks = np.arange(1, n + 1)
    per_k = cum_g[ks - 1] + (cum_f[n] - cum_f[ks - 1])
    return float(np.asarray(prior.mass(ks)) @ per_k)


def jensen_lower_bound(dsfs, prior, g: GaussianParams, theta: GaussianParams) -> float:
    """Concavified surrogate of the log posterior at candidate parameters theta.

    The log of the prior-weighted likelihood mixture is replaced by the
    prior-weighted sum of log likelihoods; the normalizer ln C is taken
    from the exact posterior computation on the same data (with f = theta)
    so the surrogate is directly comparable to `exact_log_posterior`.
    """
    x = _as_matrix(dsfs)
    if x.shape[0] == 0:
        raise EmptyStream("cannot evaluate the bound on zero samples")
    log_w, log_nc = hypothesis_log_weights(
        log_density_many(g, x), log_density_many(theta, x), prior
    )
    log_c = -float(logsumexp(np.append(log_w, log_nc)))
    return log_c + prior_weighted_log_likelihood(x, prior, g, theta)


class AdaptiveDetector:
    """Sequential detector for an unknown post-change distribution.

    Keeps the stream seen so far, refreshes (mu_hat, Sigma_hat) through
    running prior-CDF sums at every step, re-scores all stored samples with
    the frozen current estimate, and applies the same posterior threshold as
    the known-parameter detector. Until ``warmup`` samples (default m + 1)
    have arrived the covariance estimate is rank deficient even with the
    ridge, so detection is suppressed and the posterior reported as 0.
    """

    def __init__(
        self,
        g: GaussianParams,
        prior,
        alpha: float,
        *,
        sensor_id: int = 0,
        warmup: int | None = None,
        ridge_scale: float = DEFAULT_RIDGE_SCALE,
        ridge_floor: float = DEFAULT_RIDGE_FLOOR,
    ) -> None:
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie strictly between 0 and 1")
        self.g = g
        self.prior = prior
        self.alpha = alpha
        self.sensor_id = sensor_id
        self.warmup = g.dim + 1 if warmup is None else int(warmup)
        self.ridge_scale = ridge_scale
        self.ridge_floor = ridge_floor
        self.posterior = 0.0
        self.detection_time: int | None = None
        self._rows = np.empty((64, g.dim))
        self._log_g = np.empty(64)
        self._n = 0
        self._sum_w = 0.0
        self._sum_wx = np.zeros(g.dim)
        self._sum_wxx = np.zeros((g.dim, g.dim))
        self._estimate: GaussianParams | None = None

    @property
    def dim(self) -> int:
        return self.g.dim

    @property
    def step(self) -> int:
        return self._n

    @property
    def is_ready(self) -> bool:
        return self.step >= self.warmup

    @property
    def sum_w(self) -> float:
        return self._sum_w

    @property
    def sum_wx(self) -> np.ndarray:
        return self._sum_wx.copy()

    @property
    def sum_wxx(self) -> np.ndarray:
        return self._sum_wxx.copy()

    @property
    def params_estimate(self) -> GaussianParams:
        if not self.is_ready or self._estimate is None:
            raise EstimatesUnready(
                f"estimates need {self.warmup} samples, have {self.step}"
            )
        return self._estimate

    def raw_estimate(self) -> tuple[np.ndarray, np.ndarray]:
        """Current (mu_hat, pre-ridge Sigma_hat) from the running sums."""
        if self._sum_w <= 0.0:
            raise EmptyStream("no samples ingested yet")
        mu = self._sum_wx / self._sum_w
        cov = self._sum_wxx / self._sum_w - np.outer(mu, mu)
        return mu, 0.5 * (cov + cov.T)

    def update(self, x) -> float:
        """Ingest one feature sample; return the current posterior."""
        v = np.atleast_1d(np.asarray(getattr(x, "values", x), dtype=float))
        if self._n == self._rows.shape[0]:
            self._rows = np.vstack([self._rows, np.empty_like(self._rows)])
            self._log_g = np.concatenate([self._log_g, np.empty_like(self._log_g)])
        self._rows[self._n] = v
        self._log_g[self._n] = log_density(self.g, v)
        self._n += 1
        pi_n = float(self.prior.cdf(self._n))
        self._sum_w += pi_n
        self._sum_wx += pi_n * v
        self._sum_wxx += pi_n * np.outer(v, v)

        if not self.is_ready:
            self.posterior = 0.0
            return 0.0

        mu, cov = self.raw_estimate()
        self._estimate = GaussianParams._trusted(
            mu, ridge_regularize(cov, self.ridge_scale, self.ridge_floor)
        )
        log_f = log_density_many(self._estimate, self._rows[: self._n])
        log_w, log_nc = hypothesis_log_weights(self._log_g[: self._n], log_f, self.prior)
        self.posterior = posterior_from_weights(log_w, log_nc)
        if self.detection_time is None and self.posterior >= 1.0 - self.alpha:
            self.detection_time = self._n
        return self.posterior
