"""
Empirical copula process goodness-of-fit tests with parametric bootstrap
"""

from typing import Union

import numpy as np
from joblib import Parallel, delayed
from loguru import logger

from ...config import THREADS
from ...exceptions import ParameterError
from ...schemas import GofReport, SimpleCopula, VineModel
from ..utils.seeding import derive_seed
from .simple_copula_service import fit_simple, simple_simulate
from .vine_service import refit_parameters, rosenblatt, vine_simulate

MIN_REPLICATIONS = 100
EVAL_CHUNK = 256

CopulaModel = Union[VineModel, SimpleCopula]


class EmpiricalCopula:
    """C_n(t) = (1/n) * #{i : u_i <= t componentwise}"""

    def __init__(self, u: np.ndarray):
        self.u = np.atleast_2d(np.asarray(u, dtype=float))

    @property
    def n(self) -> int:
        return self.u.shape[0]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(points.shape[0])
        for start in range(0, points.shape[0], EVAL_CHUNK):
            block = points[start:start + EVAL_CHUNK]
            below = np.all(self.u[None, :, :] <= block[:, None, :], axis=2)
            out[start:start + EVAL_CHUNK] = below.mean(axis=1)
        return out


def empirical_copula(u: np.ndarray) -> EmpiricalCopula:
    return EmpiricalCopula(u)


def _is_independence(model: CopulaModel) -> bool:
    return isinstance(model, VineModel) and model.is_independence


def simulate_model(model: CopulaModel, n: int, seed) -> np.ndarray:
    if isinstance(model, VineModel):
        return vine_simulate(model, n, seed)
    return simple_simulate(model, n, seed)


def refit_model(u: np.ndarray, model: CopulaModel) -> CopulaModel:
    if isinstance(model, VineModel):
        return refit_parameters(u, model)
    return fit_simple(u, model.family)


def model_cdf(model: CopulaModel, points: np.ndarray, n_draws: int, seed) -> np.ndarray:
    """Model copula at `points`: exact for independence, otherwise from `n_draws` simulated draws"""
    if _is_independence(model):
        return np.prod(points, axis=1)
    return EmpiricalCopula(simulate_model(model, n_draws, seed))(points)


def gof_statistic(empirical: np.ndarray, fitted: np.ndarray, kind: str) -> float:
    gap = empirical - fitted
    if kind == "CvM":
        return float(np.sum(gap ** 2))
    if kind == "KS":
        return float(np.max(np.abs(gap)))
    raise ParameterError(f"unknown statistic '{kind}', expected CvM or KS")


def _check(u: np.ndarray, model: CopulaModel, statistic: str, B: int) -> np.ndarray:
    if B < MIN_REPLICATIONS:
        raise ParameterError(f"bootstrap needs at least {MIN_REPLICATIONS} replications, got {B}")
    if statistic not in ("CvM", "KS"):
        raise ParameterError(f"unknown statistic '{statistic}', expected CvM or KS")
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[1] != model.dim:
        raise ParameterError(f"data of shape {u.shape} does not match a {model.dim}-dimensional model")
    return u


def _ecp_value(u, model, statistic, n_draws, seed) -> float:
    return gof_statistic(EmpiricalCopula(u)(u), model_cdf(model, u, n_draws, seed), statistic)


def _ecp2_value(u, model, statistic) -> float:
    w = rosenblatt(u, model)
    return gof_statistic(EmpiricalCopula(w)(w), np.prod(w, axis=1), statistic)


def _replicate(b, model, n, statistic, n_draws, seed, transformed) -> float:
    sample = simulate_model(model, n, derive_seed(seed, "gof-sample", b))
    refitted = refit_model(sample, model)
    if transformed and isinstance(refitted, VineModel):
        return _ecp2_value(sample, refitted, statistic)
    return _ecp_value(sample, refitted, statistic, n_draws, derive_seed(seed, "gof-model", b))


def _run(u, model, statistic, B, seed, n_draws, transformed) -> GofReport:
    u = _check(u, model, statistic, B)
    if transformed and not isinstance(model, VineModel):
        raise ParameterError("ECP2 needs a vine model (Rosenblatt transform)")
    if transformed:
        observed = _ecp2_value(u, model, statistic)
    else:
        observed = _ecp_value(u, model, statistic, n_draws, derive_seed(seed, "gof-observed"))
    boot = Parallel(n_jobs=THREADS, prefer="threads")(
        delayed(_replicate)(b, model, u.shape[0], statistic, n_draws, seed, transformed) for b in range(B)
    )
    p_value = float(np.mean(np.asarray(boot) >= observed))
    kind = "ECP2" if transformed else "ECP"
    logger.info(f"📊 {kind}-{statistic}: statistic={observed:.6f} p={p_value:.3f} (B={B})")
    return GofReport(test_kind=kind, statistic_kind=statistic, statistic=observed, p_value=p_value, replications=B)


def ecp_test(u: np.ndarray, model: CopulaModel, statistic: str = "CvM", B: int = 100, seed: int = 42,
             n_draws: int = 100000) -> GofReport:
    return _run(u, model, statistic, B, seed, n_draws, transformed=False)


def ecp2_test(u: np.ndarray, model: VineModel, statistic: str = "CvM", B: int = 100, seed: int = 42,
              n_draws: int = 100000) -> GofReport:
    """Rosenblatt-transform the data, then compare with the independence copula"""
    return _run(u, model, statistic, B, seed, n_draws, transformed=True)
