"""Bayesian sequential change-point detection on Gaussian feature streams.

The change time is given a geometric prior. At step N the detector keeps one
hypothesis per candidate change step k = 1..N ("the distribution switched
from g to f at step k") plus a no-change hypothesis, each with a log weight

    w_k  = ln pi(k) + sum_{n<k} ln g(x[n]) + sum_{n>=k} ln f(x[n]),
    w_nc = ln P(change > N) + sum_{n<=N} ln g(x[n]).

The posterior probability that the change has already happened is the
normalized weight mass of the change hypotheses. Everything is carried in
the log domain: the raw products of hundreds of densities underflow long
before any realistic detection horizon. A detection is declared (and
latched) the first time the posterior reaches 1 - alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateDelay, DimensionMismatch, NotPositiveDefinite

LOG_2PI = float(np.log(2.0 * np.pi))

# Hypotheses this far (in log weight) below the leader carry < exp(-700)
# relative mass and are dropped to bound per-sensor memory.
DEFAULT_COMPACT_SPAN = 700.0


@dataclass
class GaussianParams:
    """Mean and covariance of a feature distribution, with cached Cholesky factor.

    The covariance must be symmetric and positive definite: its smallest
    eigenvalue has to exceed ``pd_floor``. The lower-triangular factor and
    log determinant are computed once at construction; density evaluations
    never invert the unfactored matrix.
    """

    mean: np.ndarray
    cov: np.ndarray
    pd_floor: float = 1e-10
    chol: np.ndarray = field(init=False, repr=False)
    log_det: float = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        m = self.mean.size
        if self.cov.shape != (m, m):
            raise DimensionMismatch(
                f"covariance shape {self.cov.shape} does not match mean dimension {m}"
            )
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.cov))):
            raise ValueError("distribution parameters must be finite")
        scale = max(float(np.abs(self.cov).max()), 1.0)
        if float(np.abs(self.cov - self.cov.T).max()) > 1e-8 * scale:
            raise ValueError("covariance must be symmetric")
        self.cov = 0.5 * (self.cov + self.cov.T)
        min_eig = float(np.linalg.eigvalsh(self.cov).min())
        if not min_eig > self.pd_floor:
            raise NotPositiveDefinite(
                f"smallest covariance eigenvalue {min_eig:.3e} not above floor {self.pd_floor:.0e}"
            )
        self.chol = np.linalg.cholesky(self.cov)
        self.log_det = 2.0 * float(np.log(np.diag(self.chol)).sum())

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def _trusted(cls, mean: np.ndarray, cov: np.ndarray, pd_floor: float = 1e-10):
        # fast path for covariances already symmetric by construction
        # (per-step re-estimation); still fails closed on a non-PD matrix
        obj = object.__new__(cls)
        obj.mean = mean
        obj.cov = cov
        obj.pd_floor = pd_floor
        try:
            obj.chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as err:
            raise NotPositiveDefinite(str(err)) from err
        obj.log_det = 2.0 * float(np.log(np.diag(obj.chol)).sum())
        return obj


def logsumexp(a) -> float:
    """Log of the summed exponentials, shifted by the maximum for stability."""
    a = np.asarray(a, dtype=float)
    hi = a.max()
    if not np.isfinite(hi):
        return float(hi)
    return float(hi + np.log(np.exp(a - hi).sum()))


def _vector(x) -> np.ndarray:
    # accepts a plain array or anything carrying a .values array (DsfVector)
    return np.atleast_1d(np.asarray(getattr(x, "values", x), dtype=float))


def log_density(params: GaussianParams, x) -> float:
    """Gaussian log density ln N(x; mean, cov) via the cached triangular factor."""
    v = _vector(x)
    if v.size != params.dim:
        raise DimensionMismatch(f"point has dimension {v.size}, expected {params.dim}")
    z = solve_triangular(params.chol, v - params.mean, lower=True, check_finite=False)
    return -0.5 * (params.dim * LOG_2PI + params.log_det + float(z @ z))


def log_density_many(params: GaussianParams, xs: np.ndarray) -> np.ndarray:
    """Row-wise Gaussian log density for an (N, m) sample matrix."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if xs.shape[1] != params.dim:
        raise DimensionMismatch(f"points have dimension {xs.shape[1]}, expected {params.dim}")
    z = solve_triangular(params.chol, (xs - params.mean).T, lower=True, check_finite=False)
    return -0.5 * (params.dim * LOG_2PI + params.log_det + np.sum(z * z, axis=0))


@dataclass(frozen=True)
class GeometricPrior:
    """Geometric prior on the change step: P(change = k) = rho * (1-rho)^(k-1)."""

    rho: float

    def __post_init__(self) -> None:
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie strictly between 0 and 1")

    def log_mass(self, k):
        k = np.asarray(k)
        out = math.log(self.rho) + (k - 1) * math.log1p(-self.rho)
        return float(out) if out.ndim == 0 else out

    def mass(self, k):
        return np.exp(self.log_mass(k))

    def log_tail(self, n):
        n = np.asarray(n)
        out = n * math.log1p(-self.rho)
        return float(out) if out.ndim == 0 else out

    def tail(self, n):
        """P(change > n)."""
        return np.exp(self.log_tail(n))

    def cdf(self, n):
        """P(change <= n) = 1 - (1-rho)^n."""
        n = np.asarray(n)
        out = -np.expm1(n * math.log1p(-self.rho))
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PointMassPrior:
    """Degenerate prior putting all mass on a single change step.

    Used by the parameter estimator as the everything-after-k limit of the
    geometric prior; log masses are -inf off the atom, so it is not meant
    for the recursive detector (whose log weights must stay finite).
    """

    k0: int

    def __post_init__(self) -> None:
        if self.k0 < 1:
            raise ValueError("the change step must be >= 1")

    def log_mass(self, k):
        k = np.asarray(k)
        out = np.where(k == self.k0, 0.0, -np.inf)
        return float(out) if out.ndim == 0 else out

    def mass(self, k):
        k = np.asarray(k)
        out = np.where(k == self.k0, 1.0, 0.0)
        return float(out) if out.ndim == 0 else out

    def log_tail(self, n):
        n = np.asarray(n)
        out = np.where(n < self.k0, 0.0, -np.inf)
        return float(out) if out.ndim == 0 else out

    def tail(self, n):
        n = np.asarray(n)
        out = np.where(n < self.k0, 1.0, 0.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, n):
        n = np.asarray(n)
        out = np.where(n >= self.k0, 1.0, 0.0)
        return float(out) if out.ndim == 0 else out


@dataclass
class DetectorState:
    """Running state of one sensor's detector.

    ``hypothesis_steps`` / ``hypothesis_log_w`` hold the surviving
    change-at-k hypotheses; ``cum_log_g`` is the accumulated ln g of all
    samples so far and ``log_no_change`` the no-change hypothesis weight.
    ``detection_time``, once set, never changes.
    """

    sensor_id: int = 0
    step: int = 0
    hypothesis_steps: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    hypothesis_log_w: np.ndarray = field(default_factory=lambda: np.empty(0))
    cum_log_g: float = 0.0
    log_no_change: float = 0.0
    posterior: float = 0.0
    detection_time: int | None = None


def posterior_from_weights(log_w, log_no_change: float) -> float:
    """Posterior change probability from hypothesis log weights."""
    total = logsumexp(np.append(log_w, log_no_change))
    p = -math.expm1(log_no_change - total)
    return min(max(p, 0.0), 1.0)


def update(
    state: DetectorState,
    x,
    g: GaussianParams,
    f: GaussianParams,
    prior: GeometricPrior,
    *,
    compact_span: float = DEFAULT_COMPACT_SPAN,
) -> DetectorState:
    """Advance the detector by one feature sample and return the new state.

    Every surviving change hypothesis accrues ln f(x); the previous
    no-change hypothesis spawns the change-at-(N+1) hypothesis; the new
    no-change weight picks up ln g(x) and one more prior tail factor.
    """
    lg = log_density(g, x)
    lf = log_density(f, x)
    n_new = state.step + 1

    steps = np.append(state.hypothesis_steps, n_new)
    log_w = np.append(
        state.hypothesis_log_w + lf,
        prior.log_mass(n_new) + state.cum_log_g + lf,
    )
    cum_log_g = state.cum_log_g + lg
    log_no_change = prior.log_tail(n_new) + cum_log_g

    posterior = posterior_from_weights(log_w, log_no_change)

    keep = log_w >= max(float(log_w.max()), log_no_change) - compact_span
    return DetectorState(
        sensor_id=state.sensor_id,
        step=n_new,
        hypothesis_steps=steps[keep],
        hypothesis_log_w=log_w[keep],
        cum_log_g=cum_log_g,
        log_no_change=log_no_change,
        posterior=posterior,
        detection_time=state.detection_time,
    )


def detect(state: DetectorState, alpha: float) -> int | None:
    """Latch and return the first step at which the posterior reached 1 - alpha.

    Meant to be applied after every update; the detector keeps running after
    a detection (the posterior is still reported) for diagnostics.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")
    if state.detection_time is None and state.step >= 1 and state.posterior >= 1.0 - alpha:
        state.detection_time = state.step
    return state.detection_time


def hypothesis_log_weights(log_g: np.ndarray, log_f: np.ndarray, prior) -> tuple[np.ndarray, float]:
    """All N+1 hypothesis log weights from per-sample log densities.

    Direct (non-recursive) evaluation used by the adaptive detector, which
    must re-score the stored stream whenever the post-change estimate moves.
    """
    log_g = np.asarray(log_g, dtype=float)
    log_f = np.asarray(log_f, dtype=float)
    n = log_g.size
    if n == 0 or log_f.size != n:
        raise ValueError("need matching, non-empty density arrays")
    cum_g = np.concatenate(([0.0], np.cumsum(log_g)))
    cum_f = np.concatenate(([0.0], np.cumsum(log_f)))
    ks = np.arange(1, n + 1)
    log_w = prior.log_mass(ks) + cum_g[ks - 1] + (cum_f[n] - cum_f[ks - 1])
    log_no_change = prior.log_tail(n) + cum_g[n]
    return log_w, float(log_no_change)


def expected_delay(alpha: float, rho: float, kl: float) -> float:
    """Asymptotic (alpha -> 0) mean detection delay |ln alpha| / (-ln(1-rho) + KL)."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    if kl < 0.0:
        raise ValueError("kl must be non-negative")
    denom = -math.log1p(-rho) + kl
    if denom <= 0.0:
        raise DegenerateDelay("zero prior drift and zero divergence give an infinite delay")
    return abs(math.log(alpha)) / denom
