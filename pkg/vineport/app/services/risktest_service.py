"""
VaR and ES forecast evaluation.

VaR and ES forecasts are return thresholds (negative numbers for losses);
an exceedance is a day with r_t < VaR_t.
"""

from typing import Optional, Tuple

import numpy as np
from loguru import logger
from scipy import stats
from scipy.special import xlogy

from ...exceptions import EstimationError, InsufficientDataError, ParameterError
from ...schemas import (
    BacktestLedger,
    CondCalibrationResult,
    ErTestResult,
    EsTestReport,
    HitSequence,
    VarTestReport,
)
from ..utils.seeding import as_seed_sequence

MIN_VAR_OBS = 50
MIN_CALIBRATION_OBS = 250
MIN_EXCEEDANCES = 5
DQ_LAGS = 4


def _bernoulli_loglik(zeros: float, ones: float, prob: float) -> float:
    return float(xlogy(zeros, 1.0 - prob) + xlogy(ones, prob))


def unconditional_coverage(n_obs: int, n_hits: int, level: float) -> float:
    """Kupiec likelihood ratio; the N = 0 and N = T cases use the limiting form"""
    observed = n_hits / n_obs
    restricted = _bernoulli_loglik(n_obs - n_hits, n_hits, level)
    free = _bernoulli_loglik(n_obs - n_hits, n_hits, observed)
    return float(max(-2.0 * (restricted - free), 0.0))


def independence_lr(hits: np.ndarray) -> float:
    """First-order Markov likelihood ratio against serially independent hits"""
    prev, curr = hits[:-1].astype(int), hits[1:].astype(int)
    n00 = np.sum((prev == 0) & (curr == 0))
    n01 = np.sum((prev == 0) & (curr == 1))
    n10 = np.sum((prev == 1) & (curr == 0))
    n11 = np.sum((prev == 1) & (curr == 1))
    pi01 = n01 / (n00 + n01) if n00 + n01 else 0.0
    pi11 = n11 / (n10 + n11) if n10 + n11 else 0.0
    pi = (n01 + n11) / max(n00 + n01 + n10 + n11, 1)
    restricted = _bernoulli_loglik(n00 + n10, n01 + n11, pi)
    free = _bernoulli_loglik(n00, n01, pi01) + _bernoulli_loglik(n10, n11, pi11)
    return float(max(-2.0 * (restricted - free), 0.0))


def dynamic_quantile(hits: np.ndarray, var: np.ndarray, level: float) -> Optional[float]:
    """Wald statistic of (I_t - p) on a constant, four hit lags and VaR_t; None if rank deficient"""
    demeaned = hits - level
    n = len(hits)
    y = demeaned[DQ_LAGS:]
    lags = [demeaned[DQ_LAGS - k:n - k] for k in range(1, DQ_LAGS + 1)]
    design = np.column_stack([np.ones(n - DQ_LAGS), *lags, var[DQ_LAGS:]])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        return None
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(beta @ design.T @ design @ beta / (level * (1.0 - level)))


def var_backtest(h: HitSequence) -> VarTestReport:
    returns = np.asarray(h.returns, dtype=float)
    var = np.asarray(h.var, dtype=float)
    n_obs, level = len(returns), h.level
    if n_obs < MIN_VAR_OBS:
        raise InsufficientDataError(f"VaR backtest needs at least {MIN_VAR_OBS} days, got {n_obs}")

    hits = h.hits
    n_hits = int(hits.sum())
    flags = []
    if n_hits in (0, n_obs):
        flags.append("no exceedances" if n_hits == 0 else "exceedance every day")
        logger.warning(f"⚠️ VaR {level}: {flags[-1]}; UC uses the limiting form")

    uc = unconditional_coverage(n_obs, n_hits, level)
    cc = uc + independence_lr(hits)
    dq = dynamic_quantile(hits, var, level)
    if dq is None:
        flags.append("DQ regressors rank deficient")
    exceed = hits.astype(bool)

    return VarTestReport(
        level=level,
        n_obs=n_obs,
        ne=n_hits,
        uc=uc,
        uc_p=float(stats.chi2.sf(uc, 1)),
        cc=cc,
        cc_p=float(stats.chi2.sf(cc, 2)),
        dq=dq,
        dq_p=None if dq is None else float(stats.chi2.sf(dq, DQ_LAGS + 2)),
        ad=float(np.mean(np.abs(returns[exceed] - var[exceed]))) if n_hits else None,
        ae=n_hits / (level * n_obs),
        aql=float(np.mean((level - hits) * (returns - var))),
        flags=flags,
    )


def _t_stat(x: np.ndarray) -> float:
    mean, sd = x.mean(), x.std(ddof=1)
    if sd > 0:
        return float(mean / sd * np.sqrt(len(x)))
    if mean == 0:
        return 0.0
    return float(np.copysign(np.inf, mean))


def exceedance_residuals(h: HitSequence) -> np.ndarray:
    """(ES_t - r_t) / sigma_t on exceedance days; positive means the loss was worse than forecast"""
    exceed = h.hits.astype(bool)
    vol = np.asarray(h.vol, dtype=float)[exceed]
    if np.any(~(vol > 0)):
        raise ParameterError("volatility forecasts must be positive on exceedance days")
    return (np.asarray(h.es)[exceed] - np.asarray(h.returns)[exceed]) / vol


def es_er_test(h: HitSequence, B: int = 5000, seed: int = 42) -> ErTestResult:
    """
    One-sided exceedance residual test.

    H0: the standardized residuals have mean <= 0; H1: mean > 0, i.e. the
    ES forecasts understate losses. The bootstrap p-value resamples the
    centred residuals and compares t statistics.
    """
    x = exceedance_residuals(h)
    n = len(x)
    if n < MIN_EXCEEDANCES:
        raise InsufficientDataError(f"ER test needs at least {MIN_EXCEEDANCES} exceedances, got {n}")
    if B < 1:
        raise ParameterError(f"bootstrap replications must be positive, got {B}")

    t0 = _t_stat(x)
    if np.all(x == 0):
        return ErTestResult(statistic=0.0, p_bootstrap=1.0, p_asymptotic=1.0, n_exceedances=n, replications=B)

    rng = np.random.default_rng(as_seed_sequence(seed))
    centred = x - x.mean()
    draws = centred[rng.integers(0, n, size=(B, n))]
    means, sds = draws.mean(axis=1), draws.std(axis=1, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_boot = np.where(sds > 0, means / sds * np.sqrt(n), np.where(means == 0, 0.0, np.sign(means) * np.inf))
    p_boot = float(np.mean(t_boot >= t0))
    p_asym = float(stats.t.sf(t0, df=n - 1))
    logger.info(f"📊 ER test: t={t0:.3f} p_boot={p_boot:.3f} p_asym={p_asym:.3f} ({n} exceedances)")
    return ErTestResult(statistic=t0, p_bootstrap=p_boot, p_asymptotic=p_asym, n_exceedances=n, replications=B)


def identification_function(h: HitSequence) -> np.ndarray:
    """T x 2 matrix (p - I_t, ES_t - VaR_t + I_t (VaR_t - r_t) / p)"""
    hits = h.hits
    var, es, r = np.asarray(h.var), np.asarray(h.es), np.asarray(h.returns)
    return np.column_stack([h.level - hits, es - var + hits * (var - r) / h.level])


def _wald(moments: np.ndarray) -> Tuple[float, float]:
    n, k = moments.shape
    mean = moments.mean(axis=0)
    if np.all(mean == 0):
        return 0.0, 1.0
    omega = moments.T @ moments / n
    if np.linalg.matrix_rank(omega) < k:
        raise EstimationError("moment covariance is singular; calibration statistic not computable")
    stat = float(n * mean @ np.linalg.solve(omega, mean))
    return stat, float(stats.chi2.sf(stat, k))


def es_cond_calibration(h: HitSequence) -> CondCalibrationResult:
    """Simple test on the unconditional mean; general test adds one lag of each component as instrument"""
    n = len(h.returns)
    if n < MIN_CALIBRATION_OBS:
        raise InsufficientDataError(f"calibration test needs at least {MIN_CALIBRATION_OBS} days, got {n}")
    v = identification_function(h)
    simple, simple_p = _wald(v)
    current, lagged = v[1:], v[:-1]
    instrumented = np.column_stack([current, current * lagged[:, [0]], current * lagged[:, [1]]])
    general, general_p = _wald(instrumented)
    return CondCalibrationResult(simple=simple, simple_p=simple_p, general=general, general_p=general_p)


def es_backtest(h: HitSequence, B: int = 5000, seed: int = 42) -> EsTestReport:
    """Both ES tests; a test that cannot be computed is reported as a flag"""
    flags = []
    er = calibration = None
    try:
        er = es_er_test(h, B, seed)
    except (InsufficientDataError, ParameterError) as e:
        flags.append(f"ER not computable: {e}")
        logger.warning(f"⚠️ {flags[-1]}")
    try:
        calibration = es_cond_calibration(h)
    except (InsufficientDataError, EstimationError) as e:
        flags.append(f"calibration not computable: {e}")
        logger.warning(f"⚠️ {flags[-1]}")
    return EsTestReport(level=h.level, er=er, calibration=calibration, flags=flags)


def hit_sequence_from_ledger(ledger: BacktestLedger, level: float) -> HitSequence:
    frame = ledger.frame
    var_col, es_col = ledger.var_column(level), ledger.es_column(level)
    missing = [c for c in ("ret", var_col, es_col, "vol") if c not in frame.columns]
    if missing:
        raise ParameterError(f"ledger has no columns {missing} for level {level}")
    return HitSequence(
        returns=frame["ret"].to_numpy(dtype=float),
        var=frame[var_col].to_numpy(dtype=float),
        es=frame[es_col].to_numpy(dtype=float),
        vol=frame["vol"].to_numpy(dtype=float),
        level=level,
    )
