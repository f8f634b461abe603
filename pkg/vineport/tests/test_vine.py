import numpy as np
import pytest

from vineport.app.services.bicop_service import bicop_loglik, bicop_pdf, candidate_set, hfunc, hfunc1
from vineport.app.services.vine_service import (
    fit_joint_mle,
    fit_sequential,
    fit_vine,
    implied_tau,
    independence_vine,
    inverse_rosenblatt,
    refit_parameters,
    rosenblatt,
    select_order,
    vine_loglik,
    vine_logpdf,
    vine_simulate,
)
from vineport.app.services.vine_structure import (
    build_cvine,
    build_dvine,
    check_proximity,
    from_structure_matrix,
    structure_matrix,
)
from vineport.exceptions import ParameterError
from vineport.schemas import BicopSpec, FamilyId, VineEdge, VineModel, VineStructure

from .conftest import PAIR_PARAMS


def edge_sets(structure):
    return [
        {(frozenset(e.conditioned), frozenset(e.conditioning)) for e in tree}
        for tree in structure.trees
    ]


def test_independence_vine_has_zero_loglik():
    u = np.random.default_rng(0).uniform(size=(200, 4))
    assert vine_loglik(u, independence_vine(4)) == 0.0
    assert vine_loglik(u, independence_vine(4, "dvine")) == 0.0


def test_two_dimensional_vine_is_the_pair_copula():
    spec = BicopSpec(family=FamilyId.GUMBEL, params=(1.7,))
    model = VineModel(structure=build_cvine([0, 1]), edge_specs=[[spec]], loglik=0.0)
    u = np.random.default_rng(1).uniform(size=(100, 2))
    assert vine_loglik(u, model) == pytest.approx(bicop_loglik(u, spec), rel=1e-12)


def test_three_dimensional_density_by_hand():
    clayton = BicopSpec(family=FamilyId.CLAYTON, params=(2.0,))
    frank = BicopSpec(family=FamilyId.FRANK, params=(3.0,))
    gauss = BicopSpec(family=FamilyId.GAUSSIAN, params=(0.4,))
    model = VineModel(structure=build_cvine([0, 1, 2]), edge_specs=[[clayton, frank], [gauss]], loglik=0.0)
    u = np.array([[0.2, 0.3, 0.6], [0.7, 0.5, 0.9], [0.45, 0.8, 0.1]])
    u0, u1, u2 = u.T
    expected = (bicop_pdf(u0, u1, clayton) * bicop_pdf(u0, u2, frank)
                * bicop_pdf(hfunc(u1, u0, clayton), hfunc(u2, u0, frank), gauss))
    assert np.allclose(np.exp(vine_logpdf(u, model)), expected, rtol=1e-10)


def conditional_cdf(u, model, a, given, memo):
    """F(a | given) by the h-function recursion, found by searching the edge labels"""
    key = (a, given)
    if key in memo:
        return memo[key]
    if not given:
        return u[:, a]
    for edge, spec in zip(model.structure.trees[len(given) - 1], model.edge_specs[len(given) - 1]):
        if a not in edge.conditioned:
            continue
        j = edge.conditioned[1] if edge.conditioned[0] == a else edge.conditioned[0]
        rest = given - {j}
        if j in given and frozenset(edge.conditioning) == rest:
            fa = conditional_cdf(u, model, a, rest, memo)
            fj = conditional_cdf(u, model, j, rest, memo)
            value = hfunc(fa, fj, spec) if edge.conditioned[0] == a else hfunc1(fj, fa, spec)
            memo[key] = value
            return value
    raise AssertionError(f"no edge gives F({a} | {sorted(given)})")


def brute_force_density(u, model):
    memo = {}
    density = np.ones(u.shape[0])
    for tree, specs in zip(model.structure.trees, model.edge_specs):
        for edge, spec in zip(tree, specs):
            given = frozenset(edge.conditioning)
            x, y = edge.conditioned
            density *= bicop_pdf(conditional_cdf(u, model, x, given, memo),
                                 conditional_cdf(u, model, y, given, memo), spec)
    return density


def random_vine(rng):
    d = int(rng.integers(3, 5))
    order = [int(x) for x in rng.permutation(d)]
    structure = build_cvine(order) if rng.uniform() < 0.5 else build_dvine(order)
    candidates = candidate_set("mixed")
    specs = []
    for tree in structure.trees:
        picks = [candidates[int(k)] for k in rng.integers(0, len(candidates), size=len(tree))]
        specs.append([BicopSpec(family=f, rotation=r, params=PAIR_PARAMS[f]) for f, r in picks])
    return VineModel(structure=structure, edge_specs=specs, loglik=0.0)


def test_density_matches_the_h_function_recursion():
    rng = np.random.default_rng(17)
    for _ in range(10):
        model = random_vine(rng)
        u = rng.uniform(0.05, 0.95, size=(25, model.structure.dim))
        assert np.allclose(np.exp(vine_logpdf(u, model)), brute_force_density(u, model), rtol=1e-8, atol=0.0)


def test_rosenblatt_round_trip(clayton_cvine):
    w = np.random.default_rng(2).uniform(0.01, 0.99, size=(50, 3))
    assert np.allclose(rosenblatt(inverse_rosenblatt(w, clayton_cvine), clayton_cvine), w, atol=1e-8)


def test_rosenblatt_of_independence_is_identity():
    u = np.random.default_rng(3).uniform(size=(20, 3))
    assert np.allclose(rosenblatt(u, independence_vine(3)), u)


@pytest.mark.parametrize("structure", [build_cvine([2, 0, 3, 1]), build_dvine([1, 3, 0, 2, 4])])
def test_structure_matrix_round_trip(structure):
    matrix = structure_matrix(structure)
    assert np.all(np.triu(matrix, 1) == 0)
    assert sorted(np.diag(matrix)) == list(range(1, structure.dim + 1))
    assert edge_sets(from_structure_matrix(matrix)) == edge_sets(structure)


def test_proximity_violation_is_rejected():
    good = build_dvine([0, 1, 2, 3])
    bad_edge = VineEdge(tree=1, conditioned=(0, 3), conditioning=(), parents=(0, 2))
    trees = [good.trees[0], [good.trees[1][0], bad_edge], good.trees[2]]
    with pytest.raises(ParameterError):
        check_proximity(VineStructure(kind="rvine", dim=4, trees=trees))
    assert check_proximity(good)


def test_cvine_root_has_the_strongest_dependence():
    clayton = BicopSpec(family=FamilyId.CLAYTON, params=(3.0,))
    weak = BicopSpec(family=FamilyId.INDEPENDENCE)
    model = VineModel(structure=build_cvine([2, 0, 1]), edge_specs=[[clayton, clayton], [weak]], loglik=0.0)
    u = vine_simulate(model, 800, 4)
    assert select_order(u, "cvine").order[0] == 2


def test_simulation_is_reproducible(clayton_cvine):
    a = vine_simulate(clayton_cvine, 300, 11)
    b = vine_simulate(clayton_cvine, 300, 11)
    c = vine_simulate(clayton_cvine, 300, 12)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.all((a > 0) & (a < 1))


def test_fitted_rvine_is_regular(clayton_sample):
    model = fit_vine(clayton_sample, "rvine", "onepar")
    assert check_proximity(model.structure)
    assert model.loglik == pytest.approx(vine_loglik(clayton_sample, model), rel=1e-8)
    first_tree = [row for row in implied_tau(model) if row["tree"] == 1]
    assert len(first_tree) == 2
    assert all(row["tau"] > 0.3 for row in first_tree)


def test_refit_keeps_structure_and_families(clayton_cvine, clayton_sample):
    refitted = refit_parameters(clayton_sample, clayton_cvine)
    assert refitted.structure == clayton_cvine.structure
    families = [[s.family for s in tree] for tree in refitted.edge_specs]
    assert families == [[FamilyId.CLAYTON, FamilyId.CLAYTON], [FamilyId.INDEPENDENCE]]
    assert refitted.edge_specs[0][0].params[0] == pytest.approx(2.0, abs=0.4)


@pytest.mark.slow
def test_joint_mle_does_not_lower_the_likelihood(clayton_sample):
    sequential = fit_vine(clayton_sample, "dvine", "onepar")
    joint = fit_vine(clayton_sample, "dvine", "onepar", joint_mle=True)
    assert joint.loglik >= sequential.loglik - 1e-8


@pytest.mark.slow
def test_clayton_cvine_recovery_and_joint_refinement():
    clayton = BicopSpec(family=FamilyId.CLAYTON, params=(2.0,))
    truth = VineModel(structure=build_cvine([0, 1, 2]), edge_specs=[[clayton, clayton], [clayton]], loglik=0.0)
    u = vine_simulate(truth, 5000, 21)
    sequential = fit_sequential(u, truth.structure, candidate_set("clayton"))
    for spec in (s for tree in sequential.edge_specs for s in tree):
        assert (spec.family, spec.rotation) == (FamilyId.CLAYTON, 0)
        assert spec.params[0] == pytest.approx(2.0, abs=0.25)
    joint = fit_joint_mle(u, sequential)
    assert joint.loglik >= sequential.loglik - 1e-8
