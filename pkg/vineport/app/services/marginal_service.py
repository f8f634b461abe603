"""
AR(1)-GARCH(1,1) marginals with standardized skew-t innovations
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from loguru import logger
from scipy import optimize, signal
from scipy.special import expit, logit

from ...config import THREADS
from ...exceptions import DimensionError, EstimationError, InsufficientDataError, ParameterError
from ...schemas import ArGarchParams, MarginalFit, SkewtParams
from .skewt import skewt_cdf, skewt_logpdf, skewt_quantile

MIN_OBS = 250
PERSISTENCE_CAP = 1.0 - 1e-6
SHAPE_LOG_CLIP = 10.0


def _unpack(x: np.ndarray) -> Tuple[float, ...]:
    mu, phi, log_omega, x_p, x_a, log_xi, d = x
    persistence = PERSISTENCE_CAP * expit(x_p)
    alpha = persistence * expit(x_a)
    beta = persistence - alpha
    nu = 2.0 + np.exp(np.clip(d, -SHAPE_LOG_CLIP, SHAPE_LOG_CLIP))
    return mu, phi, np.exp(log_omega), alpha, beta, np.exp(log_xi), nu


def _pack(mu, phi, omega, alpha, beta, xi, nu) -> np.ndarray:
    persistence = alpha + beta
    return np.array([
        mu, phi, np.log(omega),
        logit(persistence / PERSISTENCE_CAP), logit(alpha / persistence),
        np.log(xi), np.log(nu - 2.0),
    ])


def _filter(series: np.ndarray, mu, phi, omega, alpha, beta, h0):
    """Innovations and conditional variances; the first observation seeds the AR lag"""
    eps = series[1:] - mu - phi * series[:-1]
    drive = np.empty_like(eps)
    drive[0] = h0
    drive[1:] = omega + alpha * eps[:-1] ** 2
    h = signal.lfilter([1.0], [1.0, -beta], drive)
    return eps, h


def garch_loglik(series: np.ndarray, params: ArGarchParams, h0: float) -> float:
    eps, h = _filter(series, params.mu, params.phi, params.omega, params.alpha, params.beta, h0)
    z = eps / np.sqrt(h)
    return float(np.sum(skewt_logpdf(z, params.skewt) - 0.5 * np.log(h)))


def _negative_loglik(x, series, h0):
    mu, phi, omega, alpha, beta, xi, nu = _unpack(x)
    if not np.isfinite(omega) or omega <= 0.0 or not np.isfinite(xi) or xi <= 0.0:
        return 1e12
    eps, h = _filter(series, mu, phi, omega, alpha, beta, h0)
    if np.any(~(h > 0.0)):
        return 1e12
    z = eps / np.sqrt(h)
    value = np.sum(skewt_logpdf(z, SkewtParams(skew=xi, shape=nu)) - 0.5 * np.log(h))
    return -value if np.isfinite(value) else 1e12


def starting_point(series: np.ndarray) -> np.ndarray:
    var = float(np.var(series))
    return _pack(float(np.mean(series)), 0.0, 0.05 * var, 0.05, 0.90, 1.0, 8.0)


def fit_ar_garch(series: Sequence[float], max_iter: int = 2000, restarts: int = 2, label: str = "") -> MarginalFit:
    """Maximum likelihood fit of the AR(1)-GARCH(1,1) skew-t model"""
    series = np.asarray(series, dtype=float)
    if series.ndim != 1 or len(series) < MIN_OBS:
        raise InsufficientDataError(f"AR-GARCH fit needs at least {MIN_OBS} observations, got {len(series)}")
    if not np.all(np.isfinite(series)):
        raise ParameterError("AR-GARCH fit needs finite returns")
    h0 = float(np.var(series))
    if h0 <= 0.0:
        raise EstimationError(f"series {label or '?'} has zero variance")

    x0 = starting_point(series)
    f0 = _negative_loglik(x0, series, h0)
    best_x, best_f, converged, iterations = x0, f0, False, 0

    x = x0
    for attempt in range(restarts + 1):
        result = optimize.minimize(
            _negative_loglik, x, args=(series, h0), method="Nelder-Mead",
            options={"maxiter": max_iter, "maxfev": 2 * max_iter, "xatol": 1e-7, "fatol": 1e-9, "adaptive": True},
        )
        iterations += int(result.nit)
        improved = result.fun < best_f - 1e-9
        if result.fun <= best_f:
            best_x, best_f = result.x, float(result.fun)
        converged = bool(result.success)
        if not improved:
            break
        x = best_x

    if not converged:
        logger.warning(f"⚠️ AR-GARCH fit {label or ''} hit the iteration cap; reporting best point")

    mu, phi, omega, alpha, beta, xi, nu = _unpack(best_x)
    params = ArGarchParams(
        mu=mu, phi=phi, omega=omega, alpha=alpha, beta=beta,
        skewt=SkewtParams(skew=xi, shape=nu),
    )
    eps, h = _filter(series, mu, phi, omega, alpha, beta, h0)
    loglik = garch_loglik(series, params, h0)
    logger.debug(
        f"AR-GARCH {label}: mu={mu:.4f} phi={phi:.4f} omega={omega:.4f} "
        f"alpha={alpha:.4f} beta={beta:.4f} xi={xi:.3f} nu={nu:.2f} ll={loglik:.3f}"
    )
    return MarginalFit(
        params=params,
        variances=h,
        residuals=eps / np.sqrt(h),
        loglik=loglik,
        last_return=float(series[-1]),
        last_variance=float(h[-1]),
        last_innovation=float(eps[-1]),
        converged=converged,
        iterations=iterations,
        label=label,
    )


def fit_marginals(values: np.ndarray, labels: Optional[List[str]] = None, max_iter: int = 2000) -> List[MarginalFit]:
    """Fit every column; columns are independent so they run in parallel"""
    values = np.asarray(values, dtype=float)
    labels = labels or [f"x{j + 1}" for j in range(values.shape[1])]
    return Parallel(n_jobs=THREADS, prefer="threads")(
        delayed(fit_ar_garch)(values[:, j], max_iter=max_iter, label=labels[j])
        for j in range(values.shape[1])
    )


def pit_residuals(fit: MarginalFit) -> np.ndarray:
    u = skewt_cdf(fit.residuals, fit.params.skewt)
    return np.clip(u, 1e-10, 1.0 - 1e-10)


def forecast_one_step(fit: MarginalFit) -> Tuple[float, float]:
    p = fit.params
    mean = p.mu + p.phi * fit.last_return
    variance = p.omega + p.alpha * fit.last_innovation ** 2 + p.beta * fit.last_variance
    return float(mean), float(variance)


def reconstruct_returns(u: np.ndarray, fits: Sequence[MarginalFit]) -> np.ndarray:
    """Map copula uniforms to one-step-ahead returns asset by asset"""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[1] != len(fits):
        raise DimensionError(f"uniform matrix has {u.shape[1]} columns for {len(fits)} fitted assets")
    u = np.clip(u, 1e-10, 1.0 - 1e-10)
    out = np.empty_like(u)
    for j, fit in enumerate(fits):
        mean, variance = forecast_one_step(fit)
        out[:, j] = mean + np.sqrt(variance) * skewt_quantile(u[:, j], fit.params.skewt)
    return out


def simulate_ar_garch(params: ArGarchParams, n: int, rng: np.random.Generator, burn: int = 500) -> np.ndarray:
    """Sample path of the model, used for recovery checks and synthetic panels"""
    total = n + burn
    z = skewt_quantile(np.clip(rng.uniform(size=total), 1e-12, 1 - 1e-12), params.skewt)
    r = np.empty(total)
    h = params.omega / (1.0 - params.alpha - params.beta)
    prev_r, prev_eps = params.mu / (1.0 - params.phi) if abs(params.phi) < 1 else 0.0, 0.0
    for t in range(total):
        h = params.omega + params.alpha * prev_eps ** 2 + params.beta * h
        eps = np.sqrt(h) * z[t]
        r[t] = params.mu + params.phi * prev_r + eps
        prev_r, prev_eps = r[t], eps
    return r[burn:]
