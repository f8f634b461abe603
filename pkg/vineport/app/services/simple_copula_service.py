"""
Single-family d-dimensional copulas used as comparison models:
Gaussian, Student-t and exchangeable Clayton, Gumbel, Frank and Joe.
"""

import numpy as np
from loguru import logger
from scipy import optimize, stats
from scipy.special import gammaln, poch

from ...exceptions import DimensionError, InsufficientDataError, ParameterError
from ...schemas import FAMILY_BOUNDS, FamilyId, SimpleCopula
from ..utils.seeding import as_seed_sequence
from .bicop_service import tau_to_param
from .vine_service import dependence_matrix

SIMPLE_FAMILIES = ("gaussian", "student", "clayton", "gumbel", "frank", "joe")
_ARCHIMEDEAN = {
    "clayton": FamilyId.CLAYTON,
    "gumbel": FamilyId.GUMBEL,
    "frank": FamilyId.FRANK,
    "joe": FamilyId.JOE,
}


def nearest_correlation(matrix: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """Eigenvalue clipping followed by rescaling to a unit diagonal"""
    values, vectors = np.linalg.eigh((matrix + matrix.T) / 2.0)
    repaired = vectors @ np.diag(np.maximum(values, floor)) @ vectors.T
    scale = np.sqrt(np.diag(repaired))
    repaired = repaired / np.outer(scale, scale)
    np.fill_diagonal(repaired, 1.0)
    return repaired


def _gaussian_loglik(u: np.ndarray, corr: np.ndarray) -> float:
    z = stats.norm.ppf(np.clip(u, 1e-10, 1 - 1e-10))
    sign, logdet = np.linalg.slogdet(corr)
    if sign <= 0:
        return -np.inf
    quad = np.sum(z * (z @ (np.linalg.inv(corr) - np.eye(corr.shape[0]))), axis=1)
    return float(np.sum(-0.5 * logdet - 0.5 * quad))


def _student_loglik(u: np.ndarray, corr: np.ndarray, nu: float) -> float:
    n, d = u.shape
    z = stats.t.ppf(np.clip(u, 1e-10, 1 - 1e-10), nu)
    sign, logdet = np.linalg.slogdet(corr)
    if sign <= 0:
        return -np.inf
    quad = np.sum(z * (z @ np.linalg.inv(corr)), axis=1)
    const = gammaln((nu + d) / 2) + (d - 1) * gammaln(nu / 2) - d * gammaln((nu + 1) / 2) - 0.5 * logdet
    joint = -(nu + d) / 2 * np.log1p(quad / nu)
    margins = -(nu + 1) / 2 * np.sum(np.log1p(z ** 2 / nu), axis=1)
    return float(n * const + np.sum(joint - margins))


def _clayton_loglik(u: np.ndarray, theta: float) -> float:
    n, d = u.shape
    u = np.clip(u, 1e-10, 1 - 1e-10)
    const = np.sum(np.log1p(np.arange(d) * theta))
    total = np.sum(np.expm1(-theta * np.log(u)), axis=1) + 1.0
    per_obs = const - (theta + 1.0) * np.sum(np.log(u), axis=1) - (1.0 / theta + d) * np.log(total)
    return float(np.sum(per_obs))


def fit_simple(u: np.ndarray, family: str) -> SimpleCopula:
    """
    Moment-style fit from Kendall's tau.

    Gaussian and Student-t use the correlation sin(pi tau / 2), repaired to
    the nearest correlation matrix; the Student-t degrees of freedom then
    maximize the likelihood. Archimedean families invert the average
    pairwise tau. The likelihood is reported where a closed form density is
    implemented (Gaussian, Student-t, Clayton).
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[1] < 2:
        raise DimensionError(f"simple copula needs an n x d matrix with d >= 2, got {u.shape}")
    if family not in SIMPLE_FAMILIES:
        raise ParameterError(f"unknown simple copula '{family}', expected one of {SIMPLE_FAMILIES}")
    n, d = u.shape
    if n < 30:
        raise InsufficientDataError(f"simple copula fit needs at least 30 observations, got {n}")

    taus = dependence_matrix(u, "kendall")
    if family in ("gaussian", "student"):
        corr = nearest_correlation(np.sin(np.pi * taus / 2.0))
        if family == "gaussian":
            return SimpleCopula(family=family, dim=d, correlation=corr, loglik=_gaussian_loglik(u, corr))
        lo, hi = FAMILY_BOUNDS[FamilyId.STUDENT][1]
        result = optimize.minimize_scalar(lambda nu: -_student_loglik(u, corr, nu), bounds=(lo, hi),
                                          method="bounded", options={"xatol": 1e-4})
        nu = float(result.x)
        return SimpleCopula(family=family, dim=d, correlation=corr, nu=nu, loglik=_student_loglik(u, corr, nu))

    mean_tau = float(np.mean(taus[np.triu_indices(d, 1)]))
    fam = _ARCHIMEDEAN[family]
    lo, hi = FAMILY_BOUNDS[fam][0]
    if family == "frank":
        lo = 1e-4
    try:
        theta = tau_to_param(fam, max(mean_tau, 0.0))[0] if mean_tau > 0 else lo
    except ParameterError:
        theta = hi
    if mean_tau <= 0:
        logger.warning(f"⚠️ Average tau {mean_tau:.3f} is not positive; {family} copula set near independence")
    theta = float(np.clip(theta, lo, hi))
    loglik = _clayton_loglik(u, theta) if family == "clayton" else float("nan")
    return SimpleCopula(family=family, dim=d, theta=theta, loglik=loglik)


def _positive_stable(alpha: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Frailty with Laplace transform exp(-t ** alpha), 0 < alpha <= 1"""
    if alpha >= 1.0:
        return np.ones(size)
    angle = rng.uniform(0.0, np.pi, size=size)
    expo = rng.exponential(size=size)
    return (np.sin(alpha * angle) / np.sin(angle) ** (1.0 / alpha)
            * (np.sin((1.0 - alpha) * angle) / expo) ** ((1.0 - alpha) / alpha))


def _sibuya(alpha: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """
    Integer frailty with Laplace transform 1 - (1 - exp(-t)) ** alpha.

    Drawn by inversion of the survival function
    P(V > k) = Gamma(k + 1 - alpha) / (Gamma(k + 1) Gamma(1 - alpha)),
    bisecting on log(1 + k) since the tail decays like k ** -alpha.
    """
    if alpha >= 1.0:
        return np.ones(size)
    target = np.log1p(-rng.uniform(size=size))
    const = gammaln(1.0 - alpha)

    def log_survival(x):
        return np.log(poch(x + 1.0, -alpha)) - const

    lo = np.zeros(size)
    hi = np.full(size, 700.0)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        above = log_survival(np.expm1(mid)) > target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return np.maximum(np.ceil(np.expm1(hi)), 1.0)


def simple_simulate(model: SimpleCopula, n: int, rng_seed) -> np.ndarray:
    """n x d draws; Archimedean families use the frailty construction"""
    if n < 1:
        raise ParameterError(f"simulation size must be positive, got {n}")
    rng = np.random.default_rng(as_seed_sequence(rng_seed))
    d = model.dim
    if model.family in ("gaussian", "student"):
        chol = np.linalg.cholesky(model.correlation)
        z = rng.standard_normal(size=(n, d)) @ chol.T
        if model.family == "gaussian":
            out = stats.norm.cdf(z)
        else:
            scale = np.sqrt(rng.chisquare(model.nu, size=(n, 1)) / model.nu)
            out = stats.t.cdf(z / scale, model.nu)
        return np.clip(out, 1e-10, 1 - 1e-10)

    theta = model.theta
    if model.family == "clayton":
        frailty = rng.gamma(1.0 / theta, 1.0, size=n)
    elif model.family == "gumbel":
        frailty = _positive_stable(1.0 / theta, n, rng)
    elif model.family == "joe":
        frailty = _sibuya(1.0 / theta, n, rng)
    else:
        frailty = rng.logseries(-np.expm1(-theta), size=n).astype(float)
    s = rng.exponential(size=(n, d)) / frailty[:, None]
    if model.family == "clayton":
        out = np.exp(-np.log1p(s) / theta)
    elif model.family == "gumbel":
        out = np.exp(-s ** (1.0 / theta))
    elif model.family == "joe":
        out = 1.0 - (-np.expm1(-s)) ** (1.0 / theta)
    else:
        out = -np.log1p(np.expm1(-theta) * np.exp(-s)) / theta
    return np.clip(out, 1e-10, 1 - 1e-10)
