"""
Long-only allocation on simulated return scenarios: global minimum variance,
minimum CVaR (Rockafellar-Uryasev linear program) and maximum Sharpe ratio.
"""

import math
from typing import Tuple

import numpy as np
from loguru import logger
from scipy import optimize, sparse

from ...exceptions import DimensionError, EstimationError, InsufficientDataError, ParameterError
from ...schemas import PortfolioWeights, StrategySpec

RIDGE = 1e-10
KKT_TOL = 1e-12


def empirical_cvar(returns: np.ndarray, alpha: float) -> float:
    """Mean loss over the floor(alpha * T) worst returns, as a positive number"""
    returns = np.asarray(returns, dtype=float).ravel()
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"CVaR level must lie in (0, 1), got {alpha}")
    k = int(math.floor(alpha * len(returns) + 1e-9))
    if k < 1:
        raise InsufficientDataError(
            f"CVaR at level {alpha} needs at least {math.ceil(1.0 / alpha)} returns, got {len(returns)}"
        )
    return float(-np.mean(np.sort(returns)[:k]))


def portfolio_var_es(portfolio_returns: np.ndarray, level: float) -> Tuple[float, float]:
    """Empirical VaR and ES as return thresholds (negative numbers for losses)"""
    port = np.asarray(portfolio_returns, dtype=float)
    var = float(np.quantile(port, level))
    tail = port[port < var]
    if tail.size == 0:
        tail = port[port <= var]
    return var, float(tail.mean())


def _check_scenarios(scenarios: np.ndarray) -> np.ndarray:
    scenarios = np.asarray(scenarios, dtype=float)
    if scenarios.ndim == 1:
        scenarios = scenarios[:, None]
    if scenarios.ndim != 2:
        raise DimensionError(f"scenarios must be an S x d matrix, got shape {scenarios.shape}")
    if not np.all(np.isfinite(scenarios)):
        raise ParameterError("scenario matrix contains non-finite entries")
    if scenarios.shape[0] < scenarios.shape[1]:
        raise InsufficientDataError(f"need at least as many scenarios as assets, got {scenarios.shape}")
    return scenarios


def regularized_covariance(scenarios: np.ndarray) -> np.ndarray:
    sigma = np.atleast_2d(np.cov(scenarios, rowvar=False))
    try:
        np.linalg.cholesky(sigma)
        return sigma
    except np.linalg.LinAlgError:
        pass
    d = sigma.shape[0]
    ridge = RIDGE * max(np.trace(sigma) / d, 1.0)
    logger.debug(f"🔧 Covariance not positive definite; adding ridge {ridge:.3e}")
    sigma = sigma + ridge * np.eye(d)
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as e:
        raise EstimationError("scenario covariance is indefinite after regularization") from e
    return sigma


def _polish(sigma: np.ndarray, a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    Active-set refinement of min y'Sy subject to a'y = 1, y >= 0.

    Starting from the support of `y`, solve the equality-constrained problem
    on the support and move one index in or out until the KKT conditions
    hold. Returns `y` unchanged if no KKT point is reached.
    """
    d = len(a)
    support = set(np.flatnonzero(y > 1e-9)) or {int(np.argmax(a))}
    for _ in range(4 * d + 4):
        idx = sorted(support)
        sub = sigma[np.ix_(idx, idx)]
        try:
            direction = np.linalg.solve(sub, a[idx])
        except np.linalg.LinAlgError:
            return y
        scale = a[idx] @ direction
        if scale <= 0:
            return y
        candidate = np.zeros(d)
        candidate[idx] = direction / scale
        if np.any(candidate[idx] < 0):
            support.discard(idx[int(np.argmin(candidate[idx]))])
            if not support:
                return y
            continue
        grad = 2.0 * sigma @ candidate
        nu = 2.0 * candidate @ sigma @ candidate
        slack = grad - nu * a
        outside = [j for j in range(d) if j not in support]
        worst = min(outside, key=lambda j: slack[j]) if outside else None
        if worst is None or slack[worst] >= -KKT_TOL * max(1.0, abs(nu)):
            return candidate
        support.add(worst)
    return y


def _min_quadratic(sigma: np.ndarray, a: np.ndarray, start: np.ndarray) -> Tuple[np.ndarray, bool, str]:
    result = optimize.minimize(
        lambda y: y @ sigma @ y,
        start,
        jac=lambda y: 2.0 * sigma @ y,
        method="SLSQP",
        bounds=[(0.0, None)] * len(a),
        constraints=({"type": "eq", "fun": lambda y: a @ y - 1.0, "jac": lambda y: a},),
        tol=1e-15,
        options={"maxiter": 1000},
    )
    y = np.clip(result.x, 0.0, None)
    return _polish(sigma, a, y), bool(result.success), str(result.message)


def _to_weights(y: np.ndarray) -> np.ndarray:
    w = np.clip(y, 0.0, None)
    return w / w.sum()


def gmv_weights(sigma: np.ndarray) -> PortfolioWeights:
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    d = sigma.shape[0]
    if d == 1:
        return PortfolioWeights(values=np.ones(1), objective=float(sigma[0, 0]))
    y, ok, message = _min_quadratic(sigma, np.ones(d), np.full(d, 1.0 / d))
    w = _to_weights(y)
    if not ok:
        logger.warning(f"⚠️ GMV solver reported: {message}")
    return PortfolioWeights(values=w, objective=float(w @ sigma @ w), message=message)


def tangency_weights(mu: np.ndarray, sigma: np.ndarray, risk_free: float = 0.0) -> PortfolioWeights:
    """
    Maximum Sharpe ratio over the long-only simplex.

    Solved as min y'Sy subject to y'(mu - rf) = 1, y >= 0 and renormalized.
    Without a positive excess return the GMV portfolio is returned, flagged.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    excess = mu - risk_free
    d = len(mu)
    if not np.any(excess > 0):
        logger.warning("⚠️ No asset has a positive mean excess return; using GMV weights")
        gmv = gmv_weights(sigma)
        return PortfolioWeights(values=gmv.values, objective=_sharpe(gmv.values, mu, sigma, risk_free),
                                fallback=True, message="no positive excess return; GMV fallback")
    if d == 1:
        return PortfolioWeights(values=np.ones(1), objective=_sharpe(np.ones(1), mu, sigma, risk_free))
    k = int(np.argmax(excess))
    start = np.zeros(d)
    start[k] = 1.0 / excess[k]
    y, ok, message = _min_quadratic(sigma, excess, start)
    w = _to_weights(y)
    if not ok:
        logger.warning(f"⚠️ Max-SR solver reported: {message}")
    return PortfolioWeights(values=w, objective=_sharpe(w, mu, sigma, risk_free), message=message)


def _sharpe(w: np.ndarray, mu: np.ndarray, sigma: np.ndarray, risk_free: float) -> float:
    vol = math.sqrt(max(float(w @ sigma @ w), 0.0))
    return float((w @ mu - risk_free) / vol) if vol > 0 else float("nan")


def min_variance(scenarios: np.ndarray) -> PortfolioWeights:
    scenarios = _check_scenarios(scenarios)
    return gmv_weights(regularized_covariance(scenarios))


def max_sharpe(scenarios: np.ndarray, risk_free: float = 0.0) -> PortfolioWeights:
    scenarios = _check_scenarios(scenarios)
    return tangency_weights(scenarios.mean(axis=0), regularized_covariance(scenarios), risk_free)


def min_cvar(scenarios: np.ndarray, alpha: float = 0.10) -> PortfolioWeights:
    """
    Rockafellar-Uryasev linear program over x = (w, zeta, s):

        min  zeta + sum(s) / (alpha S)
        s.t. s_i >= -w.r_i - zeta,  s >= 0,  w >= 0,  sum(w) = 1
    """
    scenarios = _check_scenarios(scenarios)
    n_scen, d = scenarios.shape
    if n_scen * alpha < 1.0 - 1e-9:
        raise InsufficientDataError(f"min-CVaR at level {alpha} needs at least {math.ceil(1 / alpha)} scenarios")
    if d == 1:
        return PortfolioWeights(values=np.ones(1), objective=empirical_cvar(scenarios[:, 0], alpha))

    cost = np.concatenate([np.zeros(d), [1.0], np.full(n_scen, 1.0 / (alpha * n_scen))])
    a_ub = sparse.hstack([
        sparse.csr_matrix(-scenarios),
        sparse.csr_matrix(-np.ones((n_scen, 1))),
        -sparse.identity(n_scen, format="csr"),
    ], format="csr")
    a_eq = np.concatenate([np.ones(d), [0.0], np.zeros(n_scen)])[None, :]
    bounds = [(0.0, None)] * d + [(None, None)] + [(0.0, None)] * n_scen
    result = optimize.linprog(cost, A_ub=a_ub, b_ub=np.zeros(n_scen), A_eq=a_eq, b_eq=[1.0],
                              bounds=bounds, method="highs")
    if result.status != 0:
        logger.error(f"❌ Min-CVaR LP failed: {result.message}")
        raise EstimationError(f"min-CVaR linear program failed: {result.message}")
    w = _to_weights(result.x[:d])
    return PortfolioWeights(values=w, objective=float(result.fun), message=str(result.message))


def optimize_weights(scenarios: np.ndarray, strategy: StrategySpec) -> PortfolioWeights:
    if strategy.kind == "gmv":
        return min_variance(scenarios)
    if strategy.kind == "cvar":
        return min_cvar(scenarios, strategy.alpha)
    return max_sharpe(scenarios, strategy.risk_free)


def equal_weights(d: int) -> PortfolioWeights:
    return PortfolioWeights(values=np.full(d, 1.0 / d), message="equally weighted")
