"""
Environment and run configuration
"""

import json
import os
from datetime import date
from typing import List, Literal, Optional

from dotenv import load_dotenv
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .exceptions import ConfigError
from .schemas import BacktestConfig, StrategySpec

load_dotenv()

THREADS = max(1, int(os.getenv("VINEPORT_THREADS", "1")))

# Block size for simulation; results do not depend on the worker count
SIM_BLOCK_ROWS = 5000


class RunConfig(BaseModel):
    """Flat run configuration read from a JSON file (keys in docs/config.md)"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    data_path: str
    output_dir: str = "output"
    prices: bool = False
    units: Literal["percent", "decimal"] = "percent"
    seed: int = 42

    # descriptive statistics
    var_level: float = Field(0.10, gt=0.0, lt=1.0)

    # allocation
    strategy: Literal["sr", "cvar", "gmv"] = "sr"
    alpha: float = Field(0.10, gt=0.0, lt=1.0)
    risk_free: float = 0.0

    # copula
    copula_model: Literal["cvine", "dvine", "rvine", "gaussian", "student", "clayton", "gumbel", "frank", "joe"] = "rvine"
    family_set: str = "mixed"
    dependence: Literal["kendall", "pearson"] = "kendall"
    joint_mle: bool = False

    # backtest
    window: int = Field(500, ge=250)
    n_sim: int = Field(10000, ge=1000)
    tc_bps: float = Field(10.0, ge=0.0)
    cadence: int = Field(1, ge=1)
    freeze_structure: bool = False
    allocation: Literal["copula", "historical", "eqw"] = "copula"
    var_levels: List[float] = [0.01]
    start: Optional[date] = None
    end: Optional[date] = None
    rolling_horizon: int = Field(500, ge=2)

    # goodness of fit
    gof_test: Literal["ECP", "ECP2"] = "ECP"
    gof_statistic: Literal["CvM", "KS"] = "CvM"
    gof_replications: int = Field(100, ge=100)
    gof_model_draws: int = Field(100000, ge=1000)

    # forecast evaluation
    er_replications: int = Field(5000, ge=100)

    # simulate / regress
    simulate_n: int = Field(1000, ge=1)
    ledgers: List[str] = []
    regression_measure: Optional[Literal["SR", "CVaR", "StdDev"]] = None
    reference: str = "EQW"

    max_iter: int = Field(2000, ge=100)

    @field_validator("family_set")
    @classmethod
    def _known_family_set(cls, value):
        from .app.services.bicop_service import FAMILY_SETS
        if value not in FAMILY_SETS:
            raise ValueError(f"unknown family_set '{value}', expected one of {sorted(FAMILY_SETS)}")
        return value

    def strategy_spec(self) -> StrategySpec:
        return StrategySpec(kind=self.strategy, alpha=self.alpha, risk_free=self.risk_free)

    def to_backtest_config(self) -> BacktestConfig:
        return BacktestConfig(
            window=self.window,
            n_sim=self.n_sim,
            strategy=self.strategy_spec(),
            copula_model=self.copula_model,
            family_set=self.family_set,
            dependence=self.dependence,
            joint_mle=self.joint_mle,
            allocation=self.allocation,
            tc_bps=self.tc_bps,
            cadence=self.cadence,
            freeze_structure=self.freeze_structure,
            var_levels=self.var_levels,
            units=self.units,
            seed=self.seed,
        )


def load_run_config(path: str) -> RunConfig:
    """Parse and validate a JSON run configuration"""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}")

    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a flat JSON object")

    try:
        config = RunConfig(**raw)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        logger.error(f"❌ Invalid config {path}: {problems}")
        raise ConfigError(f"invalid config {path}: {problems}")

    logger.debug(f"Loaded run config from {path}: {config.model_dump(mode='json')}")
    return config
