import numpy as np
import pandas as pd
from loguru import logger
from scipy import stats

from ...exceptions import DataError
from ...schemas import ReturnPanel
from .portfolio_service import empirical_cvar

DESCRIBE_COLUMNS = ["asset", "mean", "sd", "median", "min", "max", "skewness", "kurtosis",
                    "var", "cvar", "jb", "jb_p", "flag"]


def describe(panel: ReturnPanel, level: float = 0.10) -> pd.DataFrame:
    """Per-asset summary; VaR and CVaR are empirical and reported as positive losses"""
    if panel.n_obs == 0:
        raise DataError("cannot describe an empty panel")
    rows = []
    for j, asset in enumerate(panel.assets):
        x = panel.values[:, j]
        sd = float(np.std(x, ddof=1)) if len(x) > 1 else 0.0
        row = {
            "asset": asset,
            "mean": float(np.mean(x)),
            "sd": sd,
            "median": float(np.median(x)),
            "min": float(np.min(x)),
            "max": float(np.max(x)),
            "var": float(-np.quantile(x, level)),
            "cvar": empirical_cvar(x, level) if len(x) * level >= 1 else float("nan"),
            "flag": "",
        }
        if sd > 0:
            jb = stats.jarque_bera(x)
            row.update(skewness=float(stats.skew(x)), kurtosis=float(stats.kurtosis(x)),
                       jb=float(jb[0]), jb_p=float(jb[1]))
        else:
            logger.warning(f"⚠️ {asset} is constant; moments and Jarque-Bera not computable")
            row.update(skewness=float("nan"), kurtosis=float("nan"), jb=float("nan"), jb_p=float("nan"),
                       flag="constant series")
        rows.append(row)
    return pd.DataFrame(rows, columns=DESCRIBE_COLUMNS)
