"""
Bivariate copula operations on BicopSpec, including the 90/180/270 degree
rotations:

    180:  C(u, v) = u + v - 1 + C0(1 - u, 1 - v)
     90:  C(u, v) = v - C0(1 - u, v)
    270:  C(u, v) = u - C0(u, 1 - v)
"""

from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import optimize, stats

from ...exceptions import EstimationError, InsufficientDataError, ParameterError
from ...schemas import (
    FAMILY_BOUNDS, INDEPENDENCE_SPEC, ROTATING_FAMILIES, BicopFit, BicopSpec, FamilyId,
)
from .bicop_families import get_family

CLIP = 1e-10
MIN_PAIR_OBS = 30
MAX_TIE_FRACTION = 0.5
INDEPENDENCE_Z = 1.959963984540054
STUDENT_NU_CAP = FAMILY_BOUNDS[FamilyId.STUDENT][1][1]

Candidate = Tuple[FamilyId, int]


def _clip(u):
    return np.clip(np.asarray(u, dtype=float), CLIP, 1.0 - CLIP)


def transpose_spec(spec: BicopSpec) -> BicopSpec:
    """Spec of C(v, u); swaps the 90 and 270 rotations of an exchangeable family"""
    if spec.rotation in (90, 270):
        return spec.model_copy(update={"rotation": 360 - spec.rotation})
    return spec


def bicop_cdf(u1, u2, spec: BicopSpec):
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    fam, p = get_family(spec.family), spec.params
    a, b = _clip(u1), _clip(u2)
    if spec.rotation == 0:
        c = fam.cdf(a, b, p)
    elif spec.rotation == 180:
        c = a + b - 1.0 + fam.cdf(_clip(1.0 - u1), _clip(1.0 - u2), p)
    elif spec.rotation == 90:
        c = b - fam.cdf(_clip(1.0 - u1), b, p)
    else:
        c = a - fam.cdf(a, _clip(1.0 - u2), p)
    c = np.clip(c, 0.0, 1.0)
    # exact uniform margins on the boundary of the square
    c = np.where(u2 >= 1.0, np.clip(u1, 0.0, 1.0), c)
    c = np.where(u1 >= 1.0, np.clip(u2, 0.0, 1.0), c)
    return np.where((u1 <= 0.0) | (u2 <= 0.0), 0.0, c)


def bicop_logpdf(u1, u2, spec: BicopSpec):
    fam, p = get_family(spec.family), spec.params
    a, b = _clip(u1), _clip(u2)
    if spec.rotation == 180:
        a, b = 1.0 - a, 1.0 - b
    elif spec.rotation == 90:
        a = 1.0 - a
    elif spec.rotation == 270:
        b = 1.0 - b
    return fam.log_pdf(a, b, p)


def bicop_pdf(u1, u2, spec: BicopSpec):
    return np.exp(bicop_logpdf(u1, u2, spec))


def bicop_loglik(u: np.ndarray, spec: BicopSpec) -> float:
    u = np.asarray(u, dtype=float)
    value = float(np.sum(bicop_logpdf(u[:, 0], u[:, 1], spec)))
    return value if np.isfinite(value) else -np.inf


def hfunc(u1, u2, spec: BicopSpec):
    """h(u1 | u2) = dC(u1, u2)/du2"""
    fam, p = get_family(spec.family), spec.params
    a, b = _clip(u1), _clip(u2)
    if spec.rotation == 0:
        h = fam.h2(a, b, p)
    elif spec.rotation == 180:
        h = 1.0 - fam.h2(1.0 - a, 1.0 - b, p)
    elif spec.rotation == 90:
        h = 1.0 - fam.h2(1.0 - a, b, p)
    else:
        h = fam.h2(a, 1.0 - b, p)
    return np.clip(h, 0.0, 1.0)


def hfunc_inv(w, u2, spec: BicopSpec):
    """Solve hfunc(u1 | u2) = w for u1"""
    fam, p = get_family(spec.family), spec.params
    w, b = _clip(w), _clip(u2)
    if spec.rotation == 0:
        u = fam.h2_inv(w, b, p)
    elif spec.rotation == 180:
        u = 1.0 - fam.h2_inv(1.0 - w, 1.0 - b, p)
    elif spec.rotation == 90:
        u = 1.0 - fam.h2_inv(1.0 - w, b, p)
    else:
        u = fam.h2_inv(w, 1.0 - b, p)
    return _clip(u)


def hfunc1(u1, u2, spec: BicopSpec):
    """h(u2 | u1) = dC(u1, u2)/du1"""
    return hfunc(u2, u1, transpose_spec(spec))


def hfunc1_inv(w, u1, spec: BicopSpec):
    """Solve hfunc1(u1, u2) = w for u2"""
    return hfunc_inv(w, u1, transpose_spec(spec))


def bicop_sample(n: int, spec: BicopSpec, rng_seed=None) -> np.ndarray:
    """n x 2 draws by conditional inversion"""
    if n < 1:
        raise ParameterError(f"sample size must be positive, got {n}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    w = rng.uniform(size=(n, 2))
    v = w[:, 0]
    u = hfunc_inv(w[:, 1], v, spec)
    return np.column_stack([u, v])


def param_to_tau(spec: BicopSpec) -> float:
    tau = float(get_family(spec.family).tau(spec.params))
    return -tau if spec.rotation in (90, 270) else tau


def _closed_form_param(family: FamilyId, tau: float) -> Optional[float]:
    if family in (FamilyId.GAUSSIAN, FamilyId.STUDENT):
        return float(np.sin(np.pi * tau / 2.0))
    if family == FamilyId.CLAYTON:
        return 2.0 * tau / (1.0 - tau)
    if family == FamilyId.GUMBEL:
        return 1.0 / (1.0 - tau)
    return None


def tau_to_param(family: FamilyId, tau: float, rotation: int = 0) -> Tuple[float, ...]:
    """Parameter vector with the given Kendall tau; two-parameter families vary one parameter"""
    family = FamilyId(family)
    fam = get_family(family)
    if family == FamilyId.INDEPENDENCE:
        if abs(tau) > 1e-12:
            raise ParameterError("independence copula only attains tau = 0")
        return ()
    target = -tau if rotation in (90, 270) else tau
    bounds = FAMILY_BOUNDS[family]
    index = fam.tau_index
    base = list(fam.neutral) if fam.neutral else [0.0] * len(bounds)

    closed = _closed_form_param(family, target)
    if closed is not None:
        value = closed
    else:
        lo, hi = bounds[index]

        def gap(x):
            trial = list(base)
            trial[index] = x
            return fam.tau(tuple(trial)) - target

        g_lo, g_hi = gap(lo), gap(hi)
        if abs(g_lo) < 1e-12:
            value = lo
        elif abs(g_hi) < 1e-12:
            value = hi
        elif g_lo * g_hi > 0:
            raise ParameterError(
                f"tau={tau:.4f} outside the range reachable by {family.name} rotation {rotation}"
            )
        else:
            value = optimize.brentq(gap, lo, hi, xtol=1e-12, rtol=1e-12, maxiter=200)

    lo, hi = bounds[index]
    if not (lo <= value <= hi):
        raise ParameterError(f"tau={tau:.4f} outside the range reachable by {family.name} rotation {rotation}")
    params = list(base)
    params[index] = float(value)
    return tuple(params)


def tail_dependence(spec: BicopSpec) -> Tuple[float, float]:
    lower, upper = get_family(spec.family).tail(spec.params)
    if spec.rotation == 180:
        return float(upper), float(lower)
    if spec.rotation in (90, 270):
        return 0.0, 0.0
    return float(lower), float(upper)


def empirical_tau(u: np.ndarray) -> float:
    tau = stats.kendalltau(u[:, 0], u[:, 1])[0]
    return 0.0 if not np.isfinite(tau) else float(tau)


def independence_statistic(tau: float, n: int) -> float:
    return abs(tau) * np.sqrt(9.0 * n * (n - 1.0) / (2.0 * (2.0 * n + 5.0)))


def _check_pair(u: np.ndarray):
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[1] != 2:
        raise ParameterError(f"pair data must be n x 2, got shape {u.shape}")
    n = u.shape[0]
    if n < MIN_PAIR_OBS:
        raise InsufficientDataError(f"pair-copula fit needs at least {MIN_PAIR_OBS} observations, got {n}")
    for j in range(2):
        ties = 1.0 - len(np.unique(u[:, j])) / n
        if ties > MAX_TIE_FRACTION:
            raise EstimationError(f"degenerate pair data: {ties:.0%} tied values in column {j + 1}")
    return u


def _start_params(family: FamilyId, rotation: int, tau: float) -> Tuple[float, ...]:
    bounds = FAMILY_BOUNDS[family]
    fam = get_family(family)
    tau = float(np.clip(tau, -0.99, 0.99))
    try:
        params = tau_to_param(family, tau, rotation)
    except ParameterError:
        # unreachable tau: start at the nearest end of the solved parameter's box
        params = list(fam.neutral) if fam.neutral else [0.5 * (lo + hi) for lo, hi in bounds]
        lo, hi = bounds[fam.tau_index]
        sign = -tau if rotation in (90, 270) else tau
        params[fam.tau_index] = hi if sign > 0 else lo
    return tuple(float(np.clip(x, lo, hi)) for x, (lo, hi) in zip(params, bounds))


def fit_bicop(u: np.ndarray, family: FamilyId, rotation: int = 0) -> BicopFit:
    """Maximum likelihood within the family box, started from tau inversion"""
    u = _check_pair(u)
    family = FamilyId(family)
    n = u.shape[0]
    if family == FamilyId.INDEPENDENCE:
        return BicopFit(spec=INDEPENDENCE_SPEC, loglik=0.0, aic=0.0, n_obs=n)

    bounds = FAMILY_BOUNDS[family]
    tau = empirical_tau(u)
    start = _start_params(family, rotation, tau)
    start_spec = BicopSpec(family=family, rotation=rotation, params=start)
    start_ll = bicop_loglik(u, start_spec)

    def objective(x):
        try:
            spec = BicopSpec(family=family, rotation=rotation, params=tuple(float(v) for v in x))
        except ValueError:
            return 1e10
        ll = bicop_loglik(u, spec)
        return -ll if np.isfinite(ll) else 1e10

    best_spec, best_ll, converged = start_spec, start_ll, True
    try:
        result = optimize.minimize(objective, np.array(start), method="L-BFGS-B", bounds=bounds,
                                   options={"maxiter": 500, "ftol": 1e-12, "gtol": 1e-8})
        converged = bool(result.success)
        candidate = BicopSpec(
            family=family, rotation=rotation,
            params=tuple(float(np.clip(x, lo, hi)) for x, (lo, hi) in zip(result.x, bounds)),
        )
        candidate_ll = bicop_loglik(u, candidate)
        if candidate_ll >= best_ll:
            best_spec, best_ll = candidate, candidate_ll
    except (ValueError, FloatingPointError) as e:
        logger.warning(f"⚠️ {family.name} refinement failed ({e}); keeping tau-inversion start")
        converged = False

    if not np.isfinite(best_ll):
        raise EstimationError(f"{family.name} rotation {rotation} log-likelihood is not finite")

    if family == FamilyId.STUDENT and best_spec.params[1] >= STUDENT_NU_CAP - 1e-6:
        logger.debug("Student-t degrees of freedom at the cap; reporting Gaussian")
        return fit_bicop(u, FamilyId.GAUSSIAN, 0)

    k = best_spec.n_params
    return BicopFit(spec=best_spec, loglik=best_ll, aic=-2.0 * best_ll + 2.0 * k, n_obs=n, converged=converged)


def _legal_rotations(family: FamilyId) -> List[int]:
    return [0, 90, 180, 270] if family in ROTATING_FAMILIES else [0]


def _expand(families: Iterable[FamilyId]) -> List[Candidate]:
    return [(f, r) for f in families for r in _legal_rotations(f)]


ALL_FAMILIES = [f for f in FamilyId if f != FamilyId.INDEPENDENCE]

FAMILY_SETS: Dict[str, List[Candidate]] = {
    "mixed": _expand(ALL_FAMILIES),
    "independence": [(FamilyId.INDEPENDENCE, 0)],
    "gaussian": _expand([FamilyId.GAUSSIAN]),
    "student": _expand([FamilyId.STUDENT]),
    "clayton": _expand([FamilyId.CLAYTON]),
    "gumbel": _expand([FamilyId.GUMBEL]),
    "frank": _expand([FamilyId.FRANK]),
    "joe": _expand([FamilyId.JOE]),
    "bb1": _expand([FamilyId.BB1]),
    "bb6": _expand([FamilyId.BB6]),
    "bb7": _expand([FamilyId.BB7]),
    "bb8": _expand([FamilyId.BB8]),
    "onepar": _expand([FamilyId.GAUSSIAN, FamilyId.CLAYTON, FamilyId.GUMBEL, FamilyId.FRANK, FamilyId.JOE]),
}


def candidate_set(family_set: str) -> List[Candidate]:
    if family_set not in FAMILY_SETS:
        raise ParameterError(f"unknown family set '{family_set}'")
    return list(FAMILY_SETS[family_set])


def preselect_rotations(candidates: Sequence[Candidate], tau: float) -> List[Candidate]:
    """Keep rotations whose concordance sign matches tau"""
    wanted = {0, 180} if tau >= 0 else {90, 270}
    kept = [(f, r) for f, r in candidates if f not in ROTATING_FAMILIES or r in wanted]
    return kept or list(candidates)


def select_bicop(u: np.ndarray, candidates: Sequence[Candidate], independence_test: bool = True) -> BicopFit:
    """AIC choice among candidates after an asymptotic Kendall-tau independence test"""
    if not candidates:
        raise ParameterError("candidate set is empty")
    u = _check_pair(u)
    n = u.shape[0]
    tau = empirical_tau(u)
    only_independence = all(f == FamilyId.INDEPENDENCE for f, _ in candidates)
    if only_independence or (independence_test and independence_statistic(tau, n) < INDEPENDENCE_Z):
        return BicopFit(spec=INDEPENDENCE_SPEC, loglik=0.0, aic=0.0, n_obs=n)

    best: Optional[BicopFit] = None
    for family, rotation in preselect_rotations(candidates, tau):
        try:
            fit = fit_bicop(u, family, rotation)
        except EstimationError as e:
            logger.warning(f"⚠️ Skipping {FamilyId(family).name}{rotation or ''}: {e}")
            continue
        if best is None or fit.aic < best.aic:
            best = fit
    if best is None:
        logger.warning("⚠️ No candidate could be fitted; using independence")
        return BicopFit(spec=INDEPENDENCE_SPEC, loglik=0.0, aic=0.0, n_obs=n, converged=False)
    return best
