"""
Rolling-window and in-sample portfolio experiments.

Each out-of-sample day t uses the W previous returns: AR-GARCH margins,
PIT residuals, copula fit, simulated one-step scenarios, then the
configured optimizer. The ledger records drifted pre-trade weights,
turnover, gross and net wealth from $100 and the risk forecasts made at
the held weights.
"""

from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from loguru import logger

from ...config import THREADS
from ...exceptions import DataError, InsufficientDataError, ParameterError, VineportError
from ...schemas import (
    BacktestConfig,
    BacktestLedger,
    PerfReport,
    PortfolioWeights,
    ReturnPanel,
    VineModel,
    WindowForecast,
)
from ..utils.seeding import derive_seed
from .marginal_service import MIN_OBS, fit_marginals, pit_residuals, reconstruct_returns
from .portfolio_service import empirical_cvar, equal_weights, optimize_weights, portfolio_var_es
from .simple_copula_service import SIMPLE_FAMILIES, fit_simple, simple_simulate
from .vine_service import fit_vine, refit_parameters, vine_simulate

INITIAL_WEALTH = 100.0
REPORT_CVAR_LEVEL = 0.10
REPORT_TC_BPS = 10.0
MEASURES = ("SR", "CVaR", "StdDev")


def _unit_scale(units: str) -> float:
    return 100.0 if units == "percent" else 1.0


def risk_forecast(scenarios: np.ndarray, weights: np.ndarray, levels: Sequence[float]) -> Tuple[Dict, Dict, float]:
    """VaR, ES per level and volatility of the portfolio scenario returns"""
    port = np.asarray(scenarios, dtype=float) @ np.asarray(weights, dtype=float)
    var, es = {}, {}
    for level in levels:
        var[level], es[level] = portfolio_var_es(port, level)
    return var, es, float(np.std(port, ddof=1))


def fit_copula(u: np.ndarray, config: BacktestConfig, frozen=None):
    if frozen is not None:
        return refit_parameters(u, frozen) if isinstance(frozen, VineModel) else fit_simple(u, frozen.family)
    if config.copula_model in SIMPLE_FAMILIES:
        return fit_simple(u, config.copula_model)
    return fit_vine(u, config.copula_model, config.family_set, config.dependence, config.joint_mle)


def simulate_copula(model, n: int, seed) -> np.ndarray:
    if isinstance(model, VineModel):
        return vine_simulate(model, n, seed)
    return simple_simulate(model, n, seed)


def run_window(values: np.ndarray, config: BacktestConfig, seed=None, frozen=None,
               labels: Optional[List[str]] = None) -> WindowForecast:
    """
    Allocation and risk forecasts from one W x d estimation window.

    `frozen` holds a previously selected copula whose structure and families
    are kept while the parameters are re-estimated.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise DataError(f"window must be a W x d matrix, got shape {values.shape}")
    if values.shape[0] < MIN_OBS:
        raise InsufficientDataError(f"estimation window needs at least {MIN_OBS} days, got {values.shape[0]}")
    if not np.all(np.isfinite(values)):
        raise DataError("estimation window contains missing values")
    seed = seed if seed is not None else derive_seed(config.seed, "window", values.shape[0])
    d = values.shape[1]
    flags: List[str] = []
    model = None

    if config.allocation == "copula":
        fits = fit_marginals(values, labels)
        flags += [f"marginal {f.label} not converged" for f in fits if not f.converged]
        u = np.column_stack([pit_residuals(f) for f in fits])
        model = fit_copula(u, config, frozen)
        if isinstance(model, VineModel):
            flags += model.flags
        scenarios = reconstruct_returns(simulate_copula(model, config.n_sim, seed), fits)
    else:
        scenarios = values

    if config.allocation == "eqw":
        weights = equal_weights(d)
    else:
        weights = optimize_weights(scenarios, config.strategy)
        if weights.fallback:
            flags.append(weights.message)

    var, es, vol = risk_forecast(scenarios, weights.values, config.var_levels)
    return WindowForecast(weights=weights, var=var, es=es, vol=vol, scenarios=scenarios, model=model, flags=flags)


def _safe_window(values, config, t, frozen, labels) -> WindowForecast:
    try:
        return run_window(values, config, derive_seed(config.seed, "window", t), frozen, labels)
    except (VineportError, ValueError, np.linalg.LinAlgError, FloatingPointError) as e:
        logger.warning(f"⚠️ Window ending before day {t} failed, carrying weights forward: {e}")
        return WindowForecast(failed=True, flags=[f"window failed: {e}"])


def _window_stream(values: np.ndarray, config: BacktestConfig, days: List[int], frozen,
                   labels) -> Iterator[Tuple[int, WindowForecast]]:
    """Windows in order-preserving parallel batches; only one batch of scenarios is held at a time"""
    size = max(4, 2 * THREADS)
    w = config.window
    for start in range(0, len(days), size):
        batch = days[start:start + size]
        results = Parallel(n_jobs=THREADS, prefer="threads")(
            delayed(_safe_window)(values[t - w:t], config, t, frozen, labels) for t in batch
        )
        yield from zip(batch, results)


class _LedgerWriter:
    """Day-by-day accounting of weights, turnover and wealth"""

    def __init__(self, d: int, config: BacktestConfig):
        self.config = config
        self.scale = _unit_scale(config.units)
        self.cost = config.tc_bps / 1e4
        self.held = np.zeros(d)
        self.wealth_gross = INITIAL_WEALTH
        self.wealth_net = INITIAL_WEALTH
        self.rows: List[list] = []

    def record(self, day, returns: np.ndarray, target: Optional[np.ndarray], var: Dict, es: Dict,
               vol: float, flags: List[str]):
        pre_trade = self.held
        weights = pre_trade if target is None else target
        turnover = 0.0 if target is None else float(np.abs(target - pre_trade).sum())
        ret = float(weights @ returns)
        growth = 1.0 + ret / self.scale
        self.wealth_gross *= growth
        self.wealth_net *= growth * (1.0 - self.cost * turnover)
        if growth > 0:
            self.held = weights * (1.0 + returns / self.scale) / growth
        else:
            self.held = weights.copy()
        risk = []
        for level in self.config.var_levels:
            risk += [var.get(level, np.nan), es.get(level, np.nan)]
        self.rows.append([str(day), *weights, ret, turnover, self.wealth_gross, self.wealth_net,
                          *risk, vol, ";".join(flags)])


def _empty_ledger(assets, config, label) -> BacktestLedger:
    return BacktestLedger(frame=pd.DataFrame(), assets=list(assets), var_levels=list(config.var_levels),
                          units=config.units, label=label)


def run_backtest(panel: ReturnPanel, config: BacktestConfig, label: str = "") -> BacktestLedger:
    """
    Rolling out-of-sample run over days W..T-1 (0-based).

    Rebalancing happens every `cadence` days; in between the weights drift
    with realized returns and turnover is zero. A failed window keeps the
    previous target (equal weights before the first success) and its risk
    forecasts fall back to historical simulation on the window.
    """
    values, w = panel.values, config.window
    n_obs, d = values.shape
    if n_obs <= w:
        raise InsufficientDataError(f"backtest needs more than {w} observations, got {n_obs}")
    if d != len(panel.assets):
        raise DataError("panel assets and columns disagree")

    label = label or f"{config.allocation}-{config.strategy.kind}"
    days = list(range(w, n_obs))
    rebalance = [t for t in days if (t - w) % config.cadence == 0]
    logger.info(f"🚀 Backtest {label}: {len(days)} days, {len(rebalance)} rebalances, window {w}")

    frozen = None
    first: List[Tuple[int, WindowForecast]] = []
    if config.freeze_structure and config.allocation == "copula":
        opening = _safe_window(values[0:w], config, w, None, panel.assets)
        frozen = opening.model
        first = [(w, opening)]
        rebalance_rest = rebalance[1:]
    else:
        rebalance_rest = rebalance

    def stream():
        yield from first
        yield from _window_stream(values, config, rebalance_rest, frozen, panel.assets)

    windows = stream()
    writer = _LedgerWriter(d, config)
    target = equal_weights(d).values
    scenarios = None
    n_failed = 0
    for t in days:
        flags: List[str] = []
        if (t - w) % config.cadence == 0:
            day, forecast = next(windows)
            if day != t:
                raise ParameterError(f"window stream out of order: expected day {t}, got {day}")
            flags += forecast.flags
            if forecast.failed:
                n_failed += 1
                scenarios = values[t - w:t]
                var, es, vol = risk_forecast(scenarios, target, config.var_levels)
            else:
                target = forecast.weights.values
                scenarios = forecast.scenarios
                var, es, vol = forecast.var, forecast.es, forecast.vol
            writer.record(panel.dates[t], values[t], target, var, es, vol, flags)
        else:
            var, es, vol = risk_forecast(scenarios, writer.held, config.var_levels)
            writer.record(panel.dates[t], values[t], None, var, es, vol, flags)

    ledger = _empty_ledger(panel.assets, config, label)
    ledger.frame = pd.DataFrame(writer.rows, columns=ledger.columns())
    if n_failed:
        logger.warning(f"⚠️ Backtest {label}: {n_failed} windows failed and carried weights forward")
    logger.info(f"✅ Backtest {label} done: terminal wealth {writer.wealth_gross:.4f} gross, "
                f"{writer.wealth_net:.4f} net")
    return ledger


def run_in_sample(panel: ReturnPanel, config: BacktestConfig, label: str = "") -> Tuple[PortfolioWeights, BacktestLedger, PerfReport]:
    """Fit on the whole sample, optimize once, then buy and hold from $100"""
    label = label or f"in-sample-{config.allocation}-{config.strategy.kind}"
    forecast = run_window(panel.values, config, derive_seed(config.seed, "in-sample"), labels=panel.assets)
    writer = _LedgerWriter(panel.n_assets, config)
    for t in range(panel.n_obs):
        target = forecast.weights.values if t == 0 else None
        writer.record(panel.dates[t], panel.values[t], target, forecast.var, forecast.es, forecast.vol,
                      forecast.flags if t == 0 else [])
    ledger = _empty_ledger(panel.assets, config, label)
    ledger.frame = pd.DataFrame(writer.rows, columns=ledger.columns())
    return forecast.weights, ledger, performance_report(ledger)


def _filtered(ledger: BacktestLedger, start=None, end=None) -> pd.DataFrame:
    frame = ledger.frame
    if frame.empty:
        raise InsufficientDataError("ledger is empty")
    dates = pd.to_datetime(frame["date"])
    mask = pd.Series(True, index=frame.index)
    if start is not None:
        mask &= dates >= pd.Timestamp(start)
    if end is not None:
        mask &= dates <= pd.Timestamp(end)
    return frame.loc[mask]


def net_returns(ledger: BacktestLedger) -> pd.Series:
    """Daily net-of-cost returns in percent, indexed by date"""
    wealth = ledger.frame["wealth_net"].to_numpy(dtype=float)
    previous = np.concatenate([[INITIAL_WEALTH], wealth[:-1]])
    return pd.Series(100.0 * (wealth / previous - 1.0), index=pd.to_datetime(ledger.frame["date"]), name="net")


def performance_report(ledger: BacktestLedger, start=None, end=None) -> PerfReport:
    """Percent statistics over the (optionally date-filtered) ledger"""
    frame = _filtered(ledger, start, end)
    if frame.empty:
        raise InsufficientDataError(f"no ledger days between {start} and {end}")
    net = net_returns(ledger).loc[pd.to_datetime(frame["date"])].to_numpy()
    gross = 1.0 + frame["ret"].to_numpy(dtype=float) / _unit_scale(ledger.units)
    turnover = frame["turnover"].to_numpy(dtype=float)

    mean = float(net.mean())
    std = float(net.std(ddof=1)) if len(net) > 1 else 0.0
    try:
        cvar = empirical_cvar(net, REPORT_CVAR_LEVEL)
    except InsufficientDataError:
        logger.warning(f"⚠️ {len(net)} days are too few for a {REPORT_CVAR_LEVEL:.0%} CVaR")
        cvar = float("nan")
    return PerfReport(
        mean=mean,
        std=std,
        sharpe=mean / std if std > 0 else float("nan"),
        cvar=cvar,
        starr=mean / cvar if cvar > 0 else float("nan"),
        terminal_wealth=float(INITIAL_WEALTH * np.prod(gross)),
        terminal_wealth_tc=float(INITIAL_WEALTH * np.prod(gross * (1.0 - REPORT_TC_BPS / 1e4 * turnover))),
        avg_turnover=float(turnover.mean()),
        n_days=len(net),
    )


def _measure(returns: np.ndarray, measure: str) -> float:
    if measure == "StdDev":
        return float(np.std(returns, ddof=1))
    if measure == "SR":
        std = np.std(returns, ddof=1)
        return float(np.mean(returns) / std) if std > 0 else float("nan")
    if measure == "CVaR":
        return empirical_cvar(returns, REPORT_CVAR_LEVEL)
    raise ParameterError(f"unknown measure '{measure}', expected one of {MEASURES}")


def rolling_realized(ledger: BacktestLedger, horizon: int = 500, measure: str = "SR") -> pd.Series:
    """Measure over the trailing `horizon` net returns, one value per date from the horizon-th day on"""
    if measure not in MEASURES:
        raise ParameterError(f"unknown measure '{measure}', expected one of {MEASURES}")
    net = net_returns(ledger)
    if len(net) < horizon:
        raise InsufficientDataError(f"ledger has {len(net)} days, fewer than the horizon {horizon}")
    rolling = net.rolling(horizon)
    if measure == "StdDev":
        series = rolling.std()
    elif measure == "SR":
        series = rolling.mean() / rolling.std()
    else:
        series = rolling.apply(lambda x: empirical_cvar(x, REPORT_CVAR_LEVEL), raw=True)
    return series.iloc[horizon - 1:].rename(measure)


def quarterly_outcomes(ledgers: Sequence[BacktestLedger], measure: str) -> pd.DataFrame:
    """Long table (strategy, quarter, value) of a measure per calendar quarter"""
    if measure not in MEASURES:
        raise ParameterError(f"unknown measure '{measure}', expected one of {MEASURES}")
    rows = []
    for ledger in ledgers:
        net = net_returns(ledger)
        for quarter, returns in net.groupby(net.index.to_period("Q")):
            try:
                value = _measure(returns.to_numpy(), measure)
            except InsufficientDataError:
                logger.warning(f"⚠️ {ledger.label} {quarter}: too few days for {measure}, skipped")
                continue
            rows.append({"strategy": ledger.label, "quarter": str(quarter), "value": value})
    return pd.DataFrame(rows, columns=["strategy", "quarter", "value"])
