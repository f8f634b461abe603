import os
from typing import List

import numpy as np
import pandas as pd
from loguru import logger

from ...config import RunConfig
from ..services.describe_service import describe
from ..services.marginal_service import fit_marginals, pit_residuals
from ..utils.file_utils import FULL_PRECISION, load_returns, write_csv, write_marginal_fits


def load_panel(config: RunConfig, filtered: bool = True):
    panel = load_returns(config.data_path, prices=config.prices, units=config.units)
    if filtered and (config.start or config.end):
        keep = [i for i, d in enumerate(panel.dates)
                if (config.start is None or d >= config.start) and (config.end is None or d <= config.end)]
        if not keep:
            logger.warning(f"⚠️ No rows between {config.start} and {config.end}; using the full panel")
        else:
            panel = panel.rows(keep[0], keep[-1] + 1)
    return panel


def describe_command(config: RunConfig) -> List[str]:
    panel = load_panel(config)
    table = describe(panel, config.var_level)
    return [write_csv(table, os.path.join(config.output_dir, "describe.csv"))]


def fit_marginals_command(config: RunConfig) -> List[str]:
    """AR(1)-GARCH(1,1) skew-t per asset, parameter table and PIT uniforms"""
    panel = load_panel(config)
    fits = fit_marginals(panel.values, panel.assets, max_iter=config.max_iter)
    table = pd.DataFrame([
        {
            "asset": fit.label,
            "mu": fit.params.mu,
            "phi": fit.params.phi,
            "omega": fit.params.omega,
            "alpha": fit.params.alpha,
            "beta": fit.params.beta,
            "skew": fit.params.skewt.skew,
            "shape": fit.params.skewt.shape,
            "loglik": fit.loglik,
            "converged": fit.converged,
        }
        for fit in fits
    ])
    uniforms = pd.DataFrame(np.column_stack([pit_residuals(f) for f in fits]), columns=panel.assets)
    # the first observation only seeds the AR lag
    uniforms.insert(0, "date", [str(d) for d in panel.dates[1:]])
    return [
        write_csv(table, os.path.join(config.output_dir, "marginals.csv")),
        write_csv(uniforms, os.path.join(config.output_dir, "pit.csv"), float_format=FULL_PRECISION),
        write_marginal_fits(fits, os.path.join(config.output_dir, "marginals.json")),
    ]
