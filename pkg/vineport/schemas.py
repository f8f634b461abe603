from datetime import date, datetime
from enum import IntEnum
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class SkewtParams(BaseModel):
    """Two-piece skewed Student-t, standardized to mean 0 and variance 1"""
    model_config = ConfigDict(frozen=True)

    skew: float = Field(1.0, gt=0.0)
    shape: float = Field(8.0, gt=2.0)


class ArGarchParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    mu: float
    phi: float
    omega: float = Field(gt=0.0)
    alpha: float = Field(ge=0.0)
    beta: float = Field(ge=0.0)
    skewt: SkewtParams = SkewtParams()

    @model_validator(mode="after")
    def _stationary(self):
        if self.alpha + self.beta >= 1.0:
            raise ValueError(f"alpha + beta must be < 1 (got {self.alpha + self.beta})")
        return self


class MarginalFit(BaseModel):
    """AR(1)-GARCH(1,1) fit plus the filtered state needed for forecasting"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    params: ArGarchParams
    variances: np.ndarray
    residuals: np.ndarray
    loglik: float
    last_return: float
    last_variance: float
    last_innovation: float
    converged: bool = True
    iterations: int = 0
    label: str = ""

    @model_validator(mode="after")
    def _positive_variances(self):
        if len(self.variances) != len(self.residuals):
            raise ValueError("variances and residuals must have equal length")
        if np.any(~(self.variances > 0)):
            raise ValueError("fitted variances must be strictly positive")
        return self


class FamilyId(IntEnum):
    INDEPENDENCE = 0
    GAUSSIAN = 1
    STUDENT = 2
    CLAYTON = 3
    GUMBEL = 4
    FRANK = 5
    JOE = 6
    BB1 = 7
    BB6 = 8
    BB7 = 9
    BB8 = 10


# Admissible parameter box per family (closed intervals)
FAMILY_BOUNDS: Dict[FamilyId, Tuple[Tuple[float, float], ...]] = {
    FamilyId.INDEPENDENCE: (),
    FamilyId.GAUSSIAN: ((-0.9999, 0.9999),),
    FamilyId.STUDENT: ((-0.9999, 0.9999), (2.0001, 50.0)),
    FamilyId.CLAYTON: ((1e-4, 28.0),),
    FamilyId.GUMBEL: ((1.0, 17.0),),
    FamilyId.FRANK: ((-35.0, 35.0),),
    FamilyId.JOE: ((1.0, 30.0),),
    FamilyId.BB1: ((1e-4, 7.0), (1.0, 7.0)),
    FamilyId.BB6: ((1.0, 6.0), (1.0, 8.0)),
    FamilyId.BB7: ((1.0, 6.0), (1e-4, 25.0)),
    FamilyId.BB8: ((1.0, 8.0), (1e-4, 1.0)),
}

ROTATING_FAMILIES = frozenset({
    FamilyId.CLAYTON, FamilyId.GUMBEL, FamilyId.JOE,
    FamilyId.BB1, FamilyId.BB6, FamilyId.BB7, FamilyId.BB8,
})

ROTATION_OFFSETS = {0: 0, 180: 10, 90: 20, 270: 30}


class BicopSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: FamilyId
    rotation: Literal[0, 90, 180, 270] = 0
    params: Tuple[float, ...] = ()

    @model_validator(mode="after")
    def _check_box(self):
        bounds = FAMILY_BOUNDS[self.family]
        if len(self.params) != len(bounds):
            raise ValueError(
                f"{self.family.name} expects {len(bounds)} parameters, got {len(self.params)}"
            )
        for value, (low, high) in zip(self.params, bounds):
            if not (low <= value <= high):
                raise ValueError(
                    f"{self.family.name} parameter {value} outside [{low}, {high}]"
                )
        if self.rotation != 0 and self.family not in ROTATING_FAMILIES:
            raise ValueError(f"{self.family.name} does not admit rotation {self.rotation}")
        return self

    @property
    def n_params(self) -> int:
        return len(self.params)

    @property
    def code(self) -> int:
        """Numeric family code with the +10/+20/+30 rotation offsets"""
        return int(self.family) + ROTATION_OFFSETS[self.rotation]

    @classmethod
    def from_code(cls, code: int, params: Tuple[float, ...] = ()) -> "BicopSpec":
        """Inverse of `code`; 10, 20, 30 and 40 are BB8 in its four rotations"""
        code = int(code)
        offset = ((code - 1) // 10) * 10 if code > 10 else 0
        rotations = {v: k for k, v in ROTATION_OFFSETS.items()}
        if offset not in rotations:
            raise ValueError(f"unknown family code {code}")
        return cls(family=FamilyId(code - offset), rotation=rotations[offset], params=tuple(params))

    @property
    def label(self) -> str:
        suffix = f"{self.rotation}" if self.rotation else ""
        return f"{self.family.name.title()}{suffix}"


INDEPENDENCE_SPEC = BicopSpec(family=FamilyId.INDEPENDENCE)


class BicopFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    spec: BicopSpec
    loglik: float
    aic: float
    n_obs: int
    converged: bool = True


class VineEdge(BaseModel):
    """One pair-copula: conditioned pair {a, b} given the conditioning set"""
    model_config = ConfigDict(frozen=True)

    tree: int
    conditioned: Tuple[int, int]
    conditioning: Tuple[int, ...] = ()
    parents: Tuple[int, int]

    @property
    def members(self) -> frozenset:
        return frozenset(self.conditioned) | frozenset(self.conditioning)


class VineStructure(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["cvine", "dvine", "rvine"]
    dim: int = Field(ge=2)
    order: Optional[List[int]] = None
    trees: List[List[VineEdge]]

    @property
    def n_edges(self) -> int:
        return sum(len(tree) for tree in self.trees)

    def edges(self):
        for tree in self.trees:
            for edge in tree:
                yield edge


class VineModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    structure: VineStructure
    edge_specs: List[List[BicopSpec]]
    loglik: float
    method: Literal["sequential", "joint_mle"] = "sequential"
    converged: bool = True
    flags: List[str] = []

    @model_validator(mode="after")
    def _one_spec_per_edge(self):
        if [len(t) for t in self.edge_specs] != [len(t) for t in self.structure.trees]:
            raise ValueError("edge_specs must align with the structure trees")
        if not np.isfinite(self.loglik):
            raise ValueError("vine log-likelihood must be finite")
        return self

    @property
    def dim(self) -> int:
        return self.structure.dim

    @property
    def is_independence(self) -> bool:
        return all(spec.family == FamilyId.INDEPENDENCE for tree in self.edge_specs for spec in tree)

    @property
    def n_params(self) -> int:
        return sum(spec.n_params for tree in self.edge_specs for spec in tree)


class GofReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    test_kind: Literal["ECP", "ECP2"]
    statistic_kind: Literal["CvM", "KS"]
    statistic: float
    p_value: float = Field(ge=0.0, le=1.0)
    replications: int = Field(ge=100)


class StrategySpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["sr", "cvar", "gmv"] = "sr"
    alpha: float = Field(0.10, gt=0.0, lt=1.0)
    risk_free: float = 0.0


class PortfolioWeights(BaseModel):
    """Long-only, fully invested weight vector plus solver diagnostics"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    objective: float = float("nan")
    fallback: bool = False
    message: str = ""

    @field_validator("values")
    @classmethod
    def _on_simplex(cls, values):
        values = np.asarray(values, dtype=float)
        if np.any(values < -1e-10) or abs(values.sum() - 1.0) > 1e-8:
            raise ValueError(f"weights must be nonnegative and sum to one, got {values}")
        return values


class BacktestConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    window: int = Field(500, ge=250)
    n_sim: int = Field(10000, ge=1000)
    strategy: StrategySpec = StrategySpec()
    copula_model: Literal["cvine", "dvine", "rvine", "gaussian", "student", "clayton", "gumbel", "frank", "joe"] = "rvine"
    family_set: str = "mixed"
    dependence: Literal["kendall", "pearson"] = "kendall"
    joint_mle: bool = False
    allocation: Literal["copula", "historical", "eqw"] = "copula"
    tc_bps: float = Field(10.0, ge=0.0)
    cadence: int = Field(1, ge=1)
    freeze_structure: bool = False
    var_levels: List[float] = [0.01]
    units: Literal["percent", "decimal"] = "percent"
    seed: int = 42

    @field_validator("var_levels")
    @classmethod
    def _levels_in_unit_interval(cls, levels):
        if not levels or any(not (0.0 < p < 1.0) for p in levels):
            raise ValueError("var_levels must be a nonempty list of probabilities in (0, 1)")
        return levels


class BacktestLedger(BaseModel):
    """Per-day ledger; frame columns follow the fixed CSV order"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    frame: pd.DataFrame
    assets: List[str]
    var_levels: List[float]
    units: Literal["percent", "decimal"] = "percent"
    label: str = ""

    @property
    def n_days(self) -> int:
        return len(self.frame)

    def weight_columns(self) -> List[str]:
        return [f"w{j + 1}" for j in range(len(self.assets))]

    @staticmethod
    def level_tag(level: float) -> str:
        """0.01 -> '1', 0.025 -> '2.5'"""
        return f"{level * 100:g}"

    @classmethod
    def var_column(cls, level: float) -> str:
        return f"var_{cls.level_tag(level)}"

    @classmethod
    def es_column(cls, level: float) -> str:
        return f"es_{cls.level_tag(level)}"

    def columns(self) -> List[str]:
        risk = []
        for level in self.var_levels:
            risk += [self.var_column(level), self.es_column(level)]
        return ["date", *self.weight_columns(), "ret", "turnover", "wealth_gross", "wealth_net", *risk, "vol", "flag"]


class WindowForecast(BaseModel):
    """Allocation and one-step risk forecasts produced from one estimation window"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    weights: Optional[PortfolioWeights] = None
    var: Dict[float, float] = {}
    es: Dict[float, float] = {}
    vol: float = float("nan")
    scenarios: Optional[np.ndarray] = None
    model: Optional[Any] = None
    failed: bool = False
    flags: List[str] = []


class PerfReport(BaseModel):
    """All figures in percent, as in the performance tables"""
    model_config = ConfigDict(frozen=True)

    mean: float
    std: float
    sharpe: float
    cvar: float
    starr: float
    terminal_wealth: float
    terminal_wealth_tc: float
    avg_turnover: float
    n_days: int


class HitSequence(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    returns: np.ndarray
    var: np.ndarray
    es: np.ndarray
    vol: np.ndarray
    level: float = Field(gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _aligned(self):
        n = len(self.returns)
        if not (len(self.var) == len(self.es) == len(self.vol) == n):
            raise ValueError("returns, VaR, ES and volatility forecasts must be aligned")
        return self

    @property
    def hits(self) -> np.ndarray:
        return (self.returns < self.var).astype(float)


class VarTestReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    level: float
    n_obs: int
    ne: int = Field(ge=0)
    uc: float
    uc_p: float
    cc: float
    cc_p: float
    dq: Optional[float] = None
    dq_p: Optional[float] = None
    ad: Optional[float] = None
    ae: float
    aql: float
    flags: List[str] = []


class ErTestResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    statistic: float
    p_bootstrap: float
    p_asymptotic: float
    n_exceedances: int
    replications: int


class CondCalibrationResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    simple: float
    simple_p: float
    general: float
    general_p: float


class RegressionRow(BaseModel):
    term: str
    coef: float
    t_stat: float


class RegressionTable(BaseModel):
    rows: List[RegressionRow]
    r_squared: float
    n_obs: int
    reference: str


class ReturnPanel(BaseModel):
    """T x d log returns with a strictly increasing date index"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dates: List[date]
    assets: List[str]
    values: np.ndarray
    units: Literal["percent", "decimal"] = "percent"

    @model_validator(mode="after")
    def _consistent(self):
        if self.values.ndim != 2 or self.values.shape != (len(self.dates), len(self.assets)):
            raise ValueError("values must be a T x d matrix matching dates and assets")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("panel contains missing or non-finite cells")
        return self

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def n_assets(self) -> int:
        return self.values.shape[1]

    def rows(self, start: int, stop: int) -> "ReturnPanel":
        return ReturnPanel(
            dates=self.dates[start:stop], assets=self.assets,
            values=self.values[start:stop], units=self.units,
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=pd.Index(self.dates, name="date"), columns=self.assets)


class RunManifest(BaseModel):
    command: str
    config: Dict
    seed: int
    version: str
    input_digest: str
    started_at: datetime
    finished_at: Optional[datetime] = None
    outputs: List[str] = []


class EsTestReport(BaseModel):
    """ES evaluation row: exceedance residuals plus conditional calibration"""
    model_config = ConfigDict(frozen=True)

    level: float
    er: Optional[ErTestResult] = None
    calibration: Optional[CondCalibrationResult] = None
    flags: List[str] = []


class SimpleCopula(BaseModel):
    """Single-family d-dimensional copula used as a comparison model"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    family: Literal["gaussian", "student", "clayton", "gumbel", "frank", "joe"]
    dim: int = Field(ge=2)
    correlation: Optional[np.ndarray] = None
    nu: Optional[float] = None
    theta: Optional[float] = None
    loglik: float = float("nan")

    @model_validator(mode="after")
    def _parameters_present(self):
        if self.family in ("gaussian", "student"):
            if self.correlation is None or self.correlation.shape != (self.dim, self.dim):
                raise ValueError(f"{self.family} copula needs a {self.dim}x{self.dim} correlation matrix")
        if self.family == "student" and (self.nu is None or self.nu <= 2.0):
            raise ValueError("student copula needs nu > 2")
        if self.family in ("clayton", "gumbel", "frank", "joe") and self.theta is None:
            raise ValueError(f"{self.family} copula needs theta")
        return self
