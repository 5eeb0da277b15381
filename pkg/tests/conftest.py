"""Shared oracles for the test suite.

The oracles here are deliberately independent of the package: Bessel
functions come from an arbitrary-precision power series, densities are
integrated on dense grids.
"""

import math

import mpmath
import numpy as np
import pytest

mpmath.mp.dps = 40


def bessel_series(order, x):
    """I_p(x) from its power series in 40-digit arithmetic."""
    x = mpmath.mpf(x)
    total = mpmath.mpf(0)
    k = 0
    while True:
        term = (x / 2) ** (2 * k + order) / (mpmath.factorial(k) * mpmath.factorial(k + order))
        total += term
        if k > 4 and term <= total * mpmath.mpf(10) ** -35:
            return total
        k += 1


def ratio_series(kappa):
    return float(bessel_series(1, kappa) / bessel_series(0, kappa))


def grid_posterior(prior_mu, prior_kappa, obs, obs_kappas, n=10_000):
    """Normalised density of ``exp(sum k_m cos(y_m - s)) * M(s; mu, kappa)``
    on an ``n``-point grid over (-pi, pi]."""
    s = np.linspace(-math.pi, math.pi, n, endpoint=False) + 2 * math.pi / n
    log_p = prior_kappa * np.cos(s - prior_mu)
    for y, k in zip(obs, obs_kappas):
        log_p = log_p + k * np.cos(y - s)
    p = np.exp(log_p - log_p.max())
    ds = 2 * math.pi / n
    return s, p / (p.sum() * ds), ds


def grid_kl(p, q, ds):
    """KL(p || q) for densities tabulated on the same uniform grid."""
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])) * ds)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
