"""Shared generators and independent oracles for the test suite.

The oracles deliberately avoid the library's computation paths: densities
use the explicit inverse/determinant formula, posteriors are enumerated in
the linear domain, and the estimator identity is the literal double sum.
"""

import numpy as np


def gen_ar(coefs, n, rng, burn=500, scale=1.0):
    """Simulate a stationary AR process with unit-variance innovations."""
    coefs = np.asarray(coefs, dtype=float)
    p = coefs.size
    x = np.zeros(n + burn)
    e = rng.normal(0.0, scale, size=n + burn)
    for i in range(p, n + burn):
        x[i] = coefs @ x[i - p : i][::-1] + e[i]
    return x[burn:]


def naive_logpdf(xs, mean, cov):
    """Gaussian log density via explicit inverse and determinant."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    mean = np.atleast_1d(mean)
    cov = np.atleast_2d(cov)
    inv = np.linalg.inv(cov)
    det = np.linalg.det(cov)
    d = xs - mean
    quad = np.einsum("ij,jk,ik->i", d, inv, d)
    return -0.5 * (mean.size * np.log(2.0 * np.pi) + np.log(det) + quad)


def brute_posterior(xs, g_mean, g_cov, f_mean, f_cov, rho):
    """Linear-domain enumeration of the change posterior at the last step."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    n = xs.shape[0]
    dg = np.exp(naive_logpdf(xs, g_mean, g_cov))
    df = np.exp(naive_logpdf(xs, f_mean, f_cov))
    num = 0.0
    for k in range(1, n + 1):
        pk = rho * (1.0 - rho) ** (k - 1)
        num += pk * np.prod(dg[: k - 1]) * np.prod(df[k - 1 :])
    tail = (1.0 - rho) ** n * np.prod(dg)
    return num / (num + tail)


def double_sum_estimate(xs, masses):
    """Literal k-then-n double-sum form of the post-change estimate."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    n, m = xs.shape
    masses = np.asarray(masses, dtype=float)
    num_mu = np.zeros(m)
    den = 0.0
    for k in range(1, n + 1):
        num_mu += masses[k - 1] * xs[k - 1 :].sum(axis=0)
        den += masses[k - 1] * (n - k + 1)
    mu = num_mu / den
    s = np.zeros((m, m))
    for k in range(1, n + 1):
        xc = xs[k - 1 :] - mu
        s += masses[k - 1] * (xc.T @ xc)
    return mu, s / den, den


def random_spd(rng, m, jitter=0.3):
    a = rng.normal(size=(m, m))
    return a @ a.T + m * jitter * np.eye(m)


def uniform_building_frequencies(stories, mass, stiffness):
    """Closed-form natural frequencies (Hz) of a uniform shear building."""
    j = np.arange(1, stories + 1)
    omega = 2.0 * np.sqrt(stiffness / mass) * np.sin((2 * j - 1) * np.pi / (2 * (2 * stories + 1)))
    return omega / (2.0 * np.pi)
