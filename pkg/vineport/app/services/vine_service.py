"""
Vine copula estimation, evaluation and simulation
"""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from loguru import logger
from scipy import optimize, stats

from ...config import SIM_BLOCK_ROWS, THREADS
from ...exceptions import DimensionError, EstimationError, InsufficientDataError, ParameterError
from ...schemas import (
    FAMILY_BOUNDS, INDEPENDENCE_SPEC, BicopFit, BicopSpec, FamilyId, VineEdge, VineModel, VineStructure,
)
from ..utils.seeding import as_seed_sequence
from .bicop_service import (
    MIN_PAIR_OBS, bicop_logpdf, candidate_set, fit_bicop, hfunc, hfunc1, hfunc1_inv, hfunc_inv,
    param_to_tau, select_bicop, tail_dependence,
)
from .vine_structure import (
    EdgeId, admissible_pairs, build_cvine, build_dvine, cvine_order, dvine_order, edge_at, join_edges,
    maximum_spanning_pairs, peel,
)

JOINT_TOL = 1e-6
JOINT_MAX_CYCLES = 50


def _check_uniforms(u: np.ndarray, dim: Optional[int] = None) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim != 2:
        raise DimensionError(f"expected an n x d matrix of uniforms, got shape {u.shape}")
    if dim is not None and u.shape[1] != dim:
        raise DimensionError(f"model has dimension {dim}, data has {u.shape[1]} columns")
    return u


def dependence_matrix(u: np.ndarray, measure: str = "kendall") -> np.ndarray:
    if measure == "pearson":
        return np.corrcoef(u, rowvar=False)
    d = u.shape[1]
    out = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            tau = stats.kendalltau(u[:, i], u[:, j])[0]
            out[i, j] = out[j, i] = 0.0 if not np.isfinite(tau) else tau
    return out


def _pair_dependence(x: np.ndarray, y: np.ndarray, measure: str) -> float:
    if measure == "pearson":
        value = np.corrcoef(x, y)[0, 1]
    else:
        value = stats.kendalltau(x, y)[0]
    return 0.0 if not np.isfinite(value) else float(value)


class ConditionalCache:
    """
    Conditional distribution values F(x | D) produced while walking a vine.

    For each edge the pair (F(a | D + b), F(b | D + a)) is stored under the
    edge id, aligned with its conditioned pair (a, b).
    """

    def __init__(self, structure: VineStructure, u: np.ndarray):
        self.structure = structure
        self.u = u
        self.values: Dict[EdgeId, Tuple[np.ndarray, np.ndarray]] = {}

    def parent_value(self, edge_id: EdgeId, var: int) -> np.ndarray:
        """F(var | conditioning set of the edge)"""
        t, _ = edge_id
        edge = edge_at(self.structure, edge_id)
        if t == 0:
            return self.u[:, var]
        for p in edge.parents:
            parent = self.structure.trees[t - 1][p]
            if var in parent.conditioned:
                return self.values[(t - 1, p)][parent.conditioned.index(var)]
        raise ParameterError(f"variable {var} is not conditioned in a parent of edge {edge_id}")

    def inputs(self, edge_id: EdgeId) -> Tuple[np.ndarray, np.ndarray]:
        edge = edge_at(self.structure, edge_id)
        a, b = edge.conditioned
        return self.parent_value(edge_id, a), self.parent_value(edge_id, b)

    def store(self, edge_id: EdgeId, spec: BicopSpec, u1: np.ndarray, u2: np.ndarray):
        self.values[edge_id] = (hfunc(u1, u2, spec), hfunc1(u1, u2, spec))


def vine_loglik(u: np.ndarray, model: VineModel) -> float:
    """Sum of log pair-copula densities over every edge and observation"""
    u = _check_uniforms(u, model.dim)
    return _loglik(u, model.structure, model.edge_specs)


def _loglik(u: np.ndarray, structure: VineStructure, edge_specs: List[List[BicopSpec]]) -> float:
    cache = ConditionalCache(structure, u)
    total = 0.0
    for t, tree in enumerate(structure.trees):
        for i in range(len(tree)):
            spec = edge_specs[t][i]
            u1, u2 = cache.inputs((t, i))
            if spec.family != FamilyId.INDEPENDENCE:
                total += float(np.sum(bicop_logpdf(u1, u2, spec)))
            if t < len(structure.trees) - 1:
                cache.store((t, i), spec, u1, u2)
    return total if np.isfinite(total) else -np.inf


def vine_logpdf(u: np.ndarray, model: VineModel) -> np.ndarray:
    """Per-observation log density"""
    u = _check_uniforms(u, model.dim)
    cache = ConditionalCache(model.structure, u)
    out = np.zeros(u.shape[0])
    for t, tree in enumerate(model.structure.trees):
        for i in range(len(tree)):
            spec = model.edge_specs[t][i]
            u1, u2 = cache.inputs((t, i))
            out += bicop_logpdf(u1, u2, spec)
            cache.store((t, i), spec, u1, u2)
    return out


def _fit_edge(u1: np.ndarray, u2: np.ndarray, candidates, label: str) -> Tuple[BicopFit, Optional[str]]:
    try:
        return select_bicop(np.column_stack([u1, u2]), candidates), None
    except (EstimationError, InsufficientDataError, ParameterError) as e:
        logger.warning(f"⚠️ Edge {label} downgraded to independence: {e}")
        return BicopFit(spec=INDEPENDENCE_SPEC, loglik=0.0, aic=0.0, n_obs=len(u1), converged=False), f"independence:{label}"


def _edge_label(edge: VineEdge) -> str:
    a, b = edge.conditioned
    given = ",".join(str(x + 1) for x in edge.conditioning)
    return f"{a + 1}{b + 1}" + (f"|{given}" if given else "")


def fit_sequential(u: np.ndarray, structure: VineStructure, candidates: Sequence = None) -> VineModel:
    """Tree-by-tree family selection and estimation"""
    u = _check_uniforms(u, structure.dim)
    if u.shape[0] < MIN_PAIR_OBS:
        raise InsufficientDataError(f"vine fit needs at least {MIN_PAIR_OBS} observations, got {u.shape[0]}")
    candidates = list(candidates) if candidates is not None else candidate_set("mixed")
    cache = ConditionalCache(structure, u)
    edge_specs: List[List[BicopSpec]] = []
    flags: List[str] = []
    total = 0.0
    for t, tree in enumerate(structure.trees):
        inputs = [cache.inputs((t, i)) for i in range(len(tree))]
        results = Parallel(n_jobs=THREADS, prefer="threads")(
            delayed(_fit_edge)(u1, u2, candidates, _edge_label(edge))
            for (u1, u2), edge in zip(inputs, tree)
        )
        specs = []
        for i, (fit, flag) in enumerate(results):
            specs.append(fit.spec)
            total += fit.loglik
            if flag:
                flags.append(flag)
            cache.store((t, i), fit.spec, *inputs[i])
        edge_specs.append(specs)
    logger.debug(f"Sequential {structure.kind} fit: loglik={total:.4f}")
    return VineModel(structure=structure, edge_specs=edge_specs, loglik=total, method="sequential", flags=flags)


def refit_parameters(u: np.ndarray, model: VineModel) -> VineModel:
    """Sequential re-estimation with structure and families held fixed"""
    u = _check_uniforms(u, model.dim)
    structure = model.structure
    cache = ConditionalCache(structure, u)
    edge_specs: List[List[BicopSpec]] = []
    flags: List[str] = []
    for t, tree in enumerate(structure.trees):
        specs = []
        for i, edge in enumerate(tree):
            old = model.edge_specs[t][i]
            u1, u2 = cache.inputs((t, i))
            spec = old
            if old.family != FamilyId.INDEPENDENCE:
                try:
                    spec = fit_bicop(np.column_stack([u1, u2]), old.family, old.rotation).spec
                except (EstimationError, InsufficientDataError) as e:
                    logger.warning(f"⚠️ Edge {_edge_label(edge)} keeps its previous parameters: {e}")
                    flags.append(f"stale:{_edge_label(edge)}")
            specs.append(spec)
            cache.store((t, i), spec, u1, u2)
        edge_specs.append(specs)
    loglik = _loglik(u, structure, edge_specs)
    return VineModel(structure=structure, edge_specs=edge_specs, loglik=loglik, method="sequential", flags=flags)


def select_order(u: np.ndarray, kind: str, candidates: Sequence = None, measure: str = "kendall") -> VineStructure:
    u = _check_uniforms(u)
    d = u.shape[1]
    if d < 2:
        raise DimensionError("vine structure needs at least 2 variables")
    if kind == "rvine":
        return _dissmann(u, candidates, measure)[0]
    weights = dependence_matrix(u, measure)
    if kind == "cvine":
        return build_cvine(cvine_order(weights))
    if kind == "dvine":
        return build_dvine(dvine_order(weights))
    raise ParameterError(f"unknown vine kind '{kind}'")


def _dissmann(u: np.ndarray, candidates: Sequence, measure: str) -> Tuple[VineStructure, VineModel]:
    """Tree-wise maximum spanning trees on |dependence|, fitting each tree before building the next"""
    d = u.shape[1]
    candidates = list(candidates) if candidates is not None else candidate_set("mixed")
    weights = dependence_matrix(u, measure)
    pairs = maximum_spanning_pairs(d, {(i, j): weights[i, j] for i in range(d) for j in range(i + 1, d)})
    trees = [[VineEdge(tree=0, conditioned=(i, j), parents=(i, j)) for i, j in pairs]]

    edge_specs: List[List[BicopSpec]] = []
    flags: List[str] = []
    total = 0.0
    values: Dict[Tuple[int, int], Tuple[np.ndarray, np.ndarray]] = {}
    for t in range(d - 1):
        tree = trees[t]
        partial = VineStructure(kind="rvine", dim=d, trees=trees)
        cache = ConditionalCache(partial, u)
        cache.values = values
        inputs = [cache.inputs((t, i)) for i in range(len(tree))]
        results = Parallel(n_jobs=THREADS, prefer="threads")(
            delayed(_fit_edge)(u1, u2, candidates, _edge_label(edge))
            for (u1, u2), edge in zip(inputs, tree)
        )
        specs = []
        for i, (fit, flag) in enumerate(results):
            specs.append(fit.spec)
            total += fit.loglik
            if flag:
                flags.append(flag)
            cache.store((t, i), fit.spec, *inputs[i])
        edge_specs.append(specs)
        if t == d - 2:
            break
        pair_weights = {}
        for i, j in admissible_pairs(tree):
            joined = join_edges(t + 1, tree[i], tree[j], i, j)
            x = values[(t, i)][tree[i].conditioned.index(joined.conditioned[0])]
            y = values[(t, j)][tree[j].conditioned.index(joined.conditioned[1])]
            pair_weights[(i, j)] = _pair_dependence(x, y, measure)
        chosen = maximum_spanning_pairs(len(tree), pair_weights)
        trees.append([join_edges(t + 1, tree[i], tree[j], i, j) for i, j in chosen])

    structure = VineStructure(kind="rvine", dim=d, trees=trees)
    model = VineModel(structure=structure, edge_specs=edge_specs, loglik=total, method="sequential", flags=flags)
    return structure, model


def fit_vine(u: np.ndarray, kind: str, family_set: str = "mixed", measure: str = "kendall",
             joint_mle: bool = False) -> VineModel:
    """Structure selection plus sequential fit, optionally refined by joint MLE"""
    u = _check_uniforms(u)
    candidates = candidate_set(family_set)
    if kind == "rvine":
        model = _dissmann(u, candidates, measure)[1]
    else:
        model = fit_sequential(u, select_order(u, kind, candidates, measure), candidates)
    return fit_joint_mle(u, model) if joint_mle else model


def _with_param(specs: List[List[BicopSpec]], t: int, i: int, k: int, value: float) -> List[List[BicopSpec]]:
    spec = specs[t][i]
    params = list(spec.params)
    params[k] = float(value)
    out = [list(tree) for tree in specs]
    out[t][i] = BicopSpec(family=spec.family, rotation=spec.rotation, params=tuple(params))
    return out


def fit_joint_mle(u: np.ndarray, model: VineModel) -> VineModel:
    """Coordinate-wise bounded refinement of every edge parameter with families fixed"""
    u = _check_uniforms(u, model.dim)
    structure = model.structure
    specs = [list(tree) for tree in model.edge_specs]
    best = _loglik(u, structure, specs)
    start = best
    converged = False
    for cycle in range(JOINT_MAX_CYCLES):
        cycle_start = best
        for t, tree in enumerate(specs):
            for i, spec in enumerate(tree):
                for k, (lo, hi) in enumerate(FAMILY_BOUNDS[spec.family]):
                    def objective(x):
                        ll = _loglik(u, structure, _with_param(specs, t, i, k, x))
                        return -ll if np.isfinite(ll) else 1e12
                    result = optimize.minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                                                      options={"xatol": 1e-8, "maxiter": 200})
                    if -result.fun > best:
                        specs = _with_param(specs, t, i, k, result.x)
                        best = -float(result.fun)
        if best - cycle_start < JOINT_TOL:
            converged = True
            break
    if not converged:
        logger.warning(f"⚠️ Joint MLE did not settle in {JOINT_MAX_CYCLES} cycles; keeping the sequential fit")
        return model.model_copy(update={"converged": False, "flags": model.flags + ["joint_mle_not_converged"]})
    logger.debug(f"Joint MLE: loglik {start:.4f} -> {best:.4f} after {cycle + 1} cycle(s)")
    return VineModel(structure=structure, edge_specs=specs, loglik=best, method="joint_mle", flags=model.flags)


def inverse_rosenblatt(w: np.ndarray, model: VineModel) -> np.ndarray:
    """Map independent uniforms (one column per variable) to the vine distribution"""
    w = _check_uniforms(w, model.dim)
    structure = model.structure
    u = np.empty_like(w)
    cache = ConditionalCache(structure, u)
    for x, chain in reversed(peel(structure)):
        v = w[:, x]
        for k in range(len(chain) - 1, -1, -1):
            edge_id = chain[k]
            edge = edge_at(structure, edge_id)
            spec = model.edge_specs[edge_id[0]][edge_id[1]]
            partner = edge.conditioned[1] if edge.conditioned[0] == x else edge.conditioned[0]
            other = cache.parent_value(edge_id, partner)
            if edge.conditioned[0] == x:
                v = hfunc_inv(v, other, spec)
            else:
                v = hfunc1_inv(v, other, spec)
        u[:, x] = v
        for edge_id in chain:
            spec = model.edge_specs[edge_id[0]][edge_id[1]]
            cache.store(edge_id, spec, *cache.inputs(edge_id))
    return u


def rosenblatt(u: np.ndarray, model: VineModel) -> np.ndarray:
    """Forward transform: column x becomes F(x | variables simulated before x)"""
    u = _check_uniforms(u, model.dim)
    structure = model.structure
    cache = ConditionalCache(structure, u)
    for t, tree in enumerate(structure.trees):
        for i in range(len(tree)):
            cache.store((t, i), model.edge_specs[t][i], *cache.inputs((t, i)))
    w = np.empty_like(u)
    for x, chain in peel(structure):
        if not chain:
            w[:, x] = u[:, x]
            continue
        top = chain[-1]
        edge = edge_at(structure, top)
        w[:, x] = cache.values[top][edge.conditioned.index(x)]
    return w


def _simulate_block(model: VineModel, rows: int, seed: np.random.SeedSequence) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return inverse_rosenblatt(rng.uniform(size=(rows, model.dim)), model)


def vine_simulate(model: VineModel, n: int, rng_seed) -> np.ndarray:
    """n x d draws in fixed-size row blocks, each with its own spawned seed"""
    if n < 1:
        raise ParameterError(f"simulation size must be positive, got {n}")
    n_blocks = -(-n // SIM_BLOCK_ROWS)
    children = as_seed_sequence(rng_seed).spawn(n_blocks)
    sizes = [min(SIM_BLOCK_ROWS, n - b * SIM_BLOCK_ROWS) for b in range(n_blocks)]
    blocks = Parallel(n_jobs=THREADS, prefer="threads")(
        delayed(_simulate_block)(model, rows, child) for rows, child in zip(sizes, children)
    )
    return np.vstack(blocks)


def implied_tau(model: VineModel) -> List[Dict]:
    """Per-edge family, parameters, Kendall tau and tail dependence"""
    rows = []
    for t, tree in enumerate(model.structure.trees):
        for i, edge in enumerate(tree):
            spec = model.edge_specs[t][i]
            lower, upper = tail_dependence(spec)
            rows.append({
                "tree": t + 1,
                "edge": _edge_label(edge),
                "family": spec.code,
                "name": spec.label,
                "rotation": spec.rotation,
                "par1": spec.params[0] if spec.n_params > 0 else 0.0,
                "par2": spec.params[1] if spec.n_params > 1 else 0.0,
                "tau": param_to_tau(spec),
                "lambda_l": lower,
                "lambda_u": upper,
            })
    return rows


def independence_vine(d: int, kind: str = "cvine") -> VineModel:
    structure = build_dvine(list(range(d))) if kind == "dvine" else build_cvine(list(range(d)))
    specs = [[INDEPENDENCE_SPEC for _ in tree] for tree in structure.trees]
    return VineModel(structure=structure, edge_specs=specs, loglik=0.0)
