"""
Two-piece skewed Student-t, standardized to zero mean and unit variance.

The skew parameter xi scales the two halves of a unit-variance Student-t
(xi > 1 stretches the right half); the result is shifted and scaled so the
first two moments are 0 and 1.
"""

import numpy as np
from scipy import special, stats

from ...exceptions import ParameterError
from ...schemas import SkewtParams


def _check(p: SkewtParams):
    if not (p.shape > 2.0 and p.skew > 0.0):
        raise ParameterError(f"skew-t needs shape > 2 and skew > 0, got {p}")


def _moments(p: SkewtParams):
    nu, xi = p.shape, p.skew
    m1 = 2.0 * np.sqrt(nu - 2.0) * np.exp(special.gammaln((nu + 1.0) / 2.0) - special.gammaln(nu / 2.0)) \
        / (np.sqrt(np.pi) * (nu - 1.0))
    mu = m1 * (xi - 1.0 / xi)
    sigma = np.sqrt((1.0 - m1 ** 2) * (xi ** 2 + 1.0 / xi ** 2) + 2.0 * m1 ** 2 - 1.0)
    return mu, sigma


def _std_scale(nu: float) -> float:
    return np.sqrt(nu / (nu - 2.0))


def _std_pdf(x, nu):
    s = _std_scale(nu)
    return stats.t.pdf(x * s, nu) * s


def _std_cdf(x, nu):
    return stats.t.cdf(x * _std_scale(nu), nu)


def _std_ppf(q, nu):
    return stats.t.ppf(q, nu) / _std_scale(nu)


def _finite(z):
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ParameterError("skew-t evaluated at a non-finite point")
    return z


def skewt_pdf(z, p: SkewtParams):
    _check(p)
    z = _finite(z)
    mu, sigma = _moments(p)
    xi, nu = p.skew, p.shape
    x = z * sigma + mu
    g = 2.0 / (xi + 1.0 / xi)
    scaled = np.where(x < 0.0, x * xi, x / xi)
    return g * _std_pdf(scaled, nu) * sigma


def skewt_logpdf(z, p: SkewtParams):
    _check(p)
    z = np.asarray(z, dtype=float)
    mu, sigma = _moments(p)
    xi, nu = p.skew, p.shape
    x = z * sigma + mu
    scaled = np.where(x < 0.0, x * xi, x / xi)
    s = _std_scale(nu)
    return (np.log(2.0 / (xi + 1.0 / xi)) + np.log(sigma) + np.log(s)
            + stats.t.logpdf(scaled * s, nu))


def skewt_cdf(z, p: SkewtParams):
    _check(p)
    z = _finite(z)
    mu, sigma = _moments(p)
    xi, nu = p.skew, p.shape
    x = z * sigma + mu
    g = 2.0 / (xi + 1.0 / xi)
    lower = (g / xi) * _std_cdf(np.minimum(x, 0.0) * xi, nu)
    upper = 1.0 - g * xi * _std_cdf(-np.maximum(x, 0.0) / xi, nu)
    return np.clip(np.where(x < 0.0, lower, upper), 0.0, 1.0)


def skewt_quantile(u, p: SkewtParams):
    _check(p)
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0.0) & (u < 1.0))):
        raise ParameterError("skew-t quantile needs probabilities strictly inside (0, 1)")
    mu, sigma = _moments(p)
    xi, nu = p.skew, p.shape
    g = 2.0 / (xi + 1.0 / xi)
    split = 1.0 / (1.0 + xi ** 2)
    lower = _std_ppf(np.minimum(u * xi / g, 1.0 - 1e-16), nu) / xi
    upper = -xi * _std_ppf(np.minimum((1.0 - u) / (g * xi), 1.0 - 1e-16), nu)
    x = np.where(u < split, lower, upper)
    return (x - mu) / sigma


def skewt_sample(n: int, p: SkewtParams, rng: np.random.Generator):
    """Draws by inversion"""
    u = rng.uniform(size=n)
    u = np.clip(u, 1e-16, 1.0 - 1e-16)
    return skewt_quantile(u, p)
