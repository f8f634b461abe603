import numpy as np
import pytest
from scipy import stats

from vineport.app.services.bicop_service import param_to_tau
from vineport.app.services.simple_copula_service import _sibuya, fit_simple, nearest_correlation, simple_simulate
from vineport.exceptions import DimensionError, InsufficientDataError, ParameterError
from vineport.schemas import BicopSpec, FamilyId, SimpleCopula


def kendall(u, i, j):
    return stats.kendalltau(u[:, i], u[:, j])[0]


def test_nearest_correlation_repairs_an_indefinite_matrix():
    bad = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
    fixed = nearest_correlation(bad)
    assert np.allclose(np.diag(fixed), 1.0)
    assert np.allclose(fixed, fixed.T)
    assert np.linalg.eigvalsh(fixed).min() > 0


def test_gaussian_fit_recovers_correlation():
    corr = np.array([[1.0, 0.6, 0.3], [0.6, 1.0, 0.2], [0.3, 0.2, 1.0]])
    u = simple_simulate(SimpleCopula(family="gaussian", dim=3, correlation=corr), 3000, 1)
    model = fit_simple(u, "gaussian")
    assert np.allclose(model.correlation, corr, atol=0.05)
    assert np.isfinite(model.loglik) and model.loglik > 0


def test_student_fit_reports_degrees_of_freedom():
    corr = np.array([[1.0, 0.5], [0.5, 1.0]])
    u = simple_simulate(SimpleCopula(family="student", dim=2, correlation=corr, nu=4.0), 3000, 2)
    model = fit_simple(u, "student")
    assert 2.0 < model.nu < 10.0
    assert model.correlation[0, 1] == pytest.approx(0.5, abs=0.05)


@pytest.mark.parametrize("family, theta, tau", [("clayton", 2.0, 0.5), ("gumbel", 2.0, 0.5), ("frank", 5.74, 0.5)])
def test_archimedean_simulation_and_fit(family, theta, tau):
    u = simple_simulate(SimpleCopula(family=family, dim=3, theta=theta), 3000, 3)
    assert u.shape == (3000, 3)
    for i, j in [(0, 1), (0, 2), (1, 2)]:
        assert kendall(u, i, j) == pytest.approx(tau, abs=0.04)
    assert fit_simple(u, family).theta == pytest.approx(theta, rel=0.15)


def test_joe_simulation_matches_pair_tau_and_refits():
    theta = 3.0
    tau = param_to_tau(BicopSpec(family=FamilyId.JOE, params=(theta,)))
    u = simple_simulate(SimpleCopula(family="joe", dim=3, theta=theta), 3000, 5)
    assert u.mean(axis=0) == pytest.approx([0.5, 0.5, 0.5], abs=0.02)
    for i, j in [(0, 1), (0, 2), (1, 2)]:
        assert kendall(u, i, j) == pytest.approx(tau, abs=0.04)
    assert fit_simple(u, "joe").theta == pytest.approx(theta, rel=0.15)


@pytest.mark.parametrize("alpha", [0.2, 1.0 / 3.0, 0.8])
def test_sibuya_frailty_laplace_transform(alpha):
    draws = _sibuya(alpha, 200000, np.random.default_rng(6))
    assert draws.min() >= 1.0
    assert np.all(draws == np.round(draws))
    assert np.mean(draws == 1.0) == pytest.approx(alpha, abs=0.01)
    for t in (0.5, 1.0, 2.0):
        assert np.mean(np.exp(-t * draws)) == pytest.approx(1.0 - (-np.expm1(-t)) ** alpha, abs=0.01)


def test_joe_at_theta_one_is_independence():
    u = simple_simulate(SimpleCopula(family="joe", dim=2, theta=1.0), 3000, 7)
    assert abs(kendall(u, 0, 1)) < 0.05


def test_clayton_loglik_is_reported():
    u = simple_simulate(SimpleCopula(family="clayton", dim=3, theta=2.0), 1000, 4)
    model = fit_simple(u, "clayton")
    assert np.isfinite(model.loglik) and model.loglik > 0


def test_input_checks():
    u = np.random.default_rng(0).uniform(size=(100, 3))
    with pytest.raises(ParameterError):
        fit_simple(u, "bb1")
    with pytest.raises(DimensionError):
        fit_simple(u[:, :1], "gaussian")
    with pytest.raises(InsufficientDataError):
        fit_simple(u[:10], "gaussian")
