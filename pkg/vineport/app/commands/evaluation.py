import os
from typing import List

import pandas as pd

from ...config import RunConfig
from ...exceptions import ConfigError
from ..services.backtest_service import quarterly_outcomes
from ..services.regression_service import strategy_regression
from ..services.risktest_service import es_backtest, hit_sequence_from_ledger, var_backtest
from ..utils.file_utils import read_ledger, write_csv, write_json

DEFAULT_MEASURE = {"sr": "SR", "cvar": "CVaR", "gmv": "StdDev"}


def _ledger_paths(config: RunConfig) -> List[str]:
    return config.ledgers or [os.path.join(config.output_dir, "ledger.csv")]


def var_test_command(config: RunConfig) -> List[str]:
    rows = []
    for path in _ledger_paths(config):
        ledger = read_ledger(path, config.units)
        for level in config.var_levels:
            report = var_backtest(hit_sequence_from_ledger(ledger, level))
            row = report.model_dump()
            row["flags"] = ";".join(report.flags)
            rows.append({"ledger": ledger.label, **row})
    table = pd.DataFrame(rows)
    return [write_csv(table, os.path.join(config.output_dir, "var_tests.csv"))]


def es_test_command(config: RunConfig) -> List[str]:
    rows, details = [], []
    for path in _ledger_paths(config):
        ledger = read_ledger(path, config.units)
        for level in config.var_levels:
            report = es_backtest(hit_sequence_from_ledger(ledger, level), config.er_replications, config.seed)
            details.append({"ledger": ledger.label, **report.model_dump()})
            er, cc = report.er, report.calibration
            rows.append({
                "ledger": ledger.label,
                "level": level,
                "cc_simple": cc.simple if cc else None,
                "cc_simple_p": cc.simple_p if cc else None,
                "cc_general": cc.general if cc else None,
                "cc_general_p": cc.general_p if cc else None,
                "er_stat": er.statistic if er else None,
                "er_p_bootstrap": er.p_bootstrap if er else None,
                "er_p_asymptotic": er.p_asymptotic if er else None,
                "n_exceedances": er.n_exceedances if er else None,
                "flags": ";".join(report.flags),
            })
    return [
        write_csv(pd.DataFrame(rows), os.path.join(config.output_dir, "es_tests.csv")),
        write_json(details, os.path.join(config.output_dir, "es_tests.json")),
    ]


def regress_command(config: RunConfig) -> List[str]:
    """Strategy-effect regression across the ledgers listed in the config"""
    if len(config.ledgers) < 2:
        raise ConfigError("regress needs at least two ledgers in the 'ledgers' key")
    ledgers = [read_ledger(path, config.units) for path in config.ledgers]
    measure = config.regression_measure or DEFAULT_MEASURE[config.strategy]
    outcomes = quarterly_outcomes(ledgers, measure)
    table = strategy_regression(outcomes, config.reference)
    coefficients = pd.DataFrame([row.model_dump() for row in table.rows])
    return [
        write_csv(outcomes, os.path.join(config.output_dir, "quarterly_outcomes.csv")),
        write_csv(coefficients, os.path.join(config.output_dir, "regression.csv")),
        write_json({"measure": measure, **table.model_dump()}, os.path.join(config.output_dir, "regression.json")),
    ]
