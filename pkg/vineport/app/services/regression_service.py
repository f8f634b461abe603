"""
Strategy-effect regression: a quarterly performance measure on strategy
dummies plus calendar-quarter dummies, with one strategy as the reference.
"""

import numpy as np
import pandas as pd
import statsmodels.api as sm
from loguru import logger

from ...exceptions import EstimationError, InsufficientDataError, ParameterError
from ...schemas import RegressionRow, RegressionTable

T_STAT_CAP = 1e6


def _design(table: pd.DataFrame, reference: str) -> pd.DataFrame:
    others = sorted(s for s in table["strategy"].unique() if s != reference)
    quarters = sorted(table["quarter"].unique())
    strategy = pd.Categorical(table["strategy"], categories=[reference, *others])
    quarter = pd.Categorical(table["quarter"], categories=quarters)
    parts = [
        pd.Series(1.0, index=table.index, name="const"),
        pd.get_dummies(strategy, drop_first=True, dtype=float).set_axis(table.index),
        pd.get_dummies(quarter, prefix="q", drop_first=True, dtype=float).set_axis(table.index),
    ]
    return pd.concat(parts, axis=1)


def _capped_t(coef: float, se: float) -> float:
    if se > 0 and np.isfinite(se):
        return float(np.clip(coef / se, -T_STAT_CAP, T_STAT_CAP))
    if coef == 0:
        return 0.0
    return float(np.copysign(T_STAT_CAP, coef))


def strategy_regression(table: pd.DataFrame, reference: str = "EQW") -> RegressionTable:
    """
    OLS of `value` on strategy and quarter dummies.

    `table` has columns strategy, quarter, value. Coefficients on the
    strategy dummies are mean differences from the reference strategy
    after removing quarter effects. t statistics are capped at +-1e6.
    """
    missing = {"strategy", "quarter", "value"} - set(table.columns)
    if missing:
        raise ParameterError(f"regression table lacks columns {sorted(missing)}")
    table = table.dropna(subset=["value"]).reset_index(drop=True)
    if reference not in set(table["strategy"]):
        raise ParameterError(f"reference strategy '{reference}' not present in the table")
    if table["strategy"].nunique() < 2 or table["quarter"].nunique() < 2:
        raise InsufficientDataError("regression needs at least two strategies and two quarters")

    design = _design(table, reference)
    if np.linalg.matrix_rank(design.to_numpy()) < design.shape[1]:
        raise EstimationError("strategy and quarter dummies are collinear")
    if len(table) <= design.shape[1]:
        logger.warning(f"⚠️ Regression has {len(table)} rows for {design.shape[1]} regressors; residual variance is zero")

    result = sm.OLS(table["value"].astype(float), design).fit()
    with np.errstate(divide="ignore", invalid="ignore"):
        bse = np.sqrt(np.maximum(np.diag(result.cov_params().to_numpy()), 0.0))
    rows = [
        RegressionRow(term=str(term), coef=float(coef), t_stat=_capped_t(float(coef), float(se)))
        for term, coef, se in zip(design.columns, result.params.to_numpy(), bse)
    ]
    return RegressionTable(rows=rows, r_squared=float(result.rsquared), n_obs=int(result.nobs), reference=reference)
