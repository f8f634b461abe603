import os
from typing import List

import pandas as pd
from loguru import logger

from ...config import RunConfig
from ..services.backtest_service import (
    MEASURES,
    performance_report,
    risk_forecast,
    rolling_realized,
    run_backtest,
    run_in_sample,
)
from ..services.portfolio_service import optimize_weights
from ..utils.file_utils import read_csv_artifact, write_csv, write_json, write_ledger
from .data import load_panel


def optimize_command(config: RunConfig) -> List[str]:
    """Weights and risk forecasts on the scenarios written by `simulate`"""
    scenarios = read_csv_artifact(os.path.join(config.output_dir, "simulated_returns.csv"))
    weights = optimize_weights(scenarios.to_numpy(dtype=float), config.strategy_spec())
    var, es, vol = risk_forecast(scenarios.to_numpy(dtype=float), weights.values, config.var_levels)
    table = pd.DataFrame({"asset": list(scenarios.columns), "weight": weights.values})
    summary = {
        "strategy": config.strategy,
        "weights": dict(zip(scenarios.columns, weights.values)),
        "objective": weights.objective,
        "fallback": weights.fallback,
        "message": weights.message,
        "var": {str(k): v for k, v in var.items()},
        "es": {str(k): v for k, v in es.items()},
        "vol": vol,
    }
    return [
        write_csv(table, os.path.join(config.output_dir, "weights.csv")),
        write_json(summary, os.path.join(config.output_dir, "weights.json")),
    ]


def backtest_command(config: RunConfig) -> List[str]:
    """Rolling backtest ledger, its performance summary and rolling measures"""
    panel = load_panel(config, filtered=False)
    settings = config.to_backtest_config()
    ledger = run_backtest(panel, settings)
    outputs = [write_ledger(ledger, os.path.join(config.output_dir, "ledger.csv"))]

    report = performance_report(ledger, config.start, config.end)
    outputs.append(write_json({"label": ledger.label, **report.model_dump()},
                              os.path.join(config.output_dir, "summary.json")))

    if ledger.n_days >= config.rolling_horizon:
        rolling = pd.concat([rolling_realized(ledger, config.rolling_horizon, m) for m in MEASURES], axis=1)
        rolling.index = rolling.index.strftime("%Y-%m-%d")
        outputs.append(write_csv(rolling.rename_axis("date"), os.path.join(config.output_dir, "rolling.csv"),
                                 index=True))
    else:
        logger.info(f"ℹ️ Ledger shorter than the rolling horizon {config.rolling_horizon}; no rolling measures")
    return outputs


def in_sample_command(config: RunConfig) -> List[str]:
    """Whole-period fit and a single allocation held from the first day"""
    panel = load_panel(config)
    weights, ledger, report = run_in_sample(panel, config.to_backtest_config())
    table = pd.DataFrame({"asset": panel.assets, "weight": weights.values})
    logger.info(f"✅ In-sample {config.allocation} weights over {panel.n_obs} days, Sharpe {report.sharpe:.4f}")
    return [
        write_csv(table, os.path.join(config.output_dir, "in_sample_weights.csv")),
        write_ledger(ledger, os.path.join(config.output_dir, "in_sample_ledger.csv")),
        write_json({"label": ledger.label, "fallback": weights.fallback, **report.model_dump()},
                   os.path.join(config.output_dir, "in_sample_summary.json")),
    ]
