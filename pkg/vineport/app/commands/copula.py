import os
from typing import List

import numpy as np
import pandas as pd
from loguru import logger

from ...config import RunConfig
from ...exceptions import DataError
from ...schemas import VineModel
from ..services.backtest_service import fit_copula, simulate_copula
from ..services.gof_service import ecp2_test, ecp_test
from ..services.marginal_service import reconstruct_returns
from ..services.vine_service import implied_tau
from ..utils.file_utils import (
    FULL_PRECISION,
    read_copula_model,
    read_csv_artifact,
    read_marginal_fits,
    write_copula_model,
    write_csv,
    write_json,
)
from ..utils.seeding import derive_seed


def read_uniforms(config: RunConfig) -> pd.DataFrame:
    frame = read_csv_artifact(os.path.join(config.output_dir, "pit.csv"))
    values = frame.drop(columns=["date"], errors="ignore")
    if values.shape[1] < 2:
        raise DataError("pit.csv needs at least two asset columns")
    return values


def fit_vine_command(config: RunConfig) -> List[str]:
    """Copula fit on the PIT uniforms: model JSON plus a per-edge table"""
    uniforms = read_uniforms(config)
    u = np.clip(uniforms.to_numpy(dtype=float), 1e-10, 1 - 1e-10)
    model = fit_copula(u, config.to_backtest_config())
    outputs = [write_copula_model(model, os.path.join(config.output_dir, "copula_model.json"),
                                  assets=list(uniforms.columns))]
    if isinstance(model, VineModel):
        edges = pd.DataFrame(implied_tau(model))
        outputs.append(write_csv(edges, os.path.join(config.output_dir, "vine_edges.csv")))
        logger.info(f"✅ {model.structure.kind} with {model.n_params} parameters, loglik {model.loglik:.4f}")
    return outputs


def gof_command(config: RunConfig) -> List[str]:
    u = np.clip(read_uniforms(config).to_numpy(dtype=float), 1e-10, 1 - 1e-10)
    model = read_copula_model(os.path.join(config.output_dir, "copula_model.json"))
    test = ecp2_test if config.gof_test == "ECP2" else ecp_test
    report = test(u, model, config.gof_statistic, config.gof_replications, config.seed, config.gof_model_draws)
    row = report.model_dump()
    return [
        write_csv(pd.DataFrame([row]), os.path.join(config.output_dir, "gof.csv")),
        write_json(row, os.path.join(config.output_dir, "gof.json")),
    ]


def simulate_command(config: RunConfig) -> List[str]:
    """Simulated copula uniforms and the one-step-ahead returns they imply"""
    model = read_copula_model(os.path.join(config.output_dir, "copula_model.json"))
    fits = read_marginal_fits(os.path.join(config.output_dir, "marginals.json"))
    w = simulate_copula(model, config.simulate_n, derive_seed(config.seed, "simulate"))
    returns = reconstruct_returns(w, fits)
    labels = [fit.label for fit in fits]
    return [
        write_csv(pd.DataFrame(w, columns=labels), os.path.join(config.output_dir, "simulated_uniforms.csv"),
                  float_format=FULL_PRECISION),
        write_csv(pd.DataFrame(returns, columns=labels), os.path.join(config.output_dir, "simulated_returns.csv"),
                  float_format=FULL_PRECISION),
    ]
