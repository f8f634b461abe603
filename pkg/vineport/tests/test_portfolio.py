import numpy as np
import pytest

from vineport.app.services.portfolio_service import (
    empirical_cvar,
    equal_weights,
    gmv_weights,
    max_sharpe,
    min_cvar,
    min_variance,
    optimize_weights,
    portfolio_var_es,
    regularized_covariance,
    tangency_weights,
)
from vineport.exceptions import InsufficientDataError, ParameterError
from vineport.schemas import StrategySpec

GRID = np.linspace(0.0, 1.0, 2001)


@pytest.fixture(scope='module')
def scenarios():
    rng = np.random.default_rng(17)
    base = rng.standard_t(5, size=(1000, 2))
    return np.column_stack([0.05 + base[:, 0], 0.02 + 0.6 * base[:, 1] + 0.3 * base[:, 0]])


def test_min_variance_on_a_diagonal_covariance():
    s = np.array([[1.0, 2.0], [-1.0, -2.0], [1.0, -2.0], [-1.0, 2.0]])
    w = min_variance(s)
    assert w.values == pytest.approx([0.8, 0.2], abs=1e-9)


def test_empirical_cvar_takes_the_worst_tail_mean():
    r = np.arange(-9.0, 11.0)
    assert empirical_cvar(r, 0.10) == pytest.approx(8.5)
    with pytest.raises(InsufficientDataError):
        empirical_cvar(r[:5], 0.10)
    with pytest.raises(ParameterError):
        empirical_cvar(r, 1.0)


def test_var_and_es_are_return_thresholds():
    var, es = portfolio_var_es(np.arange(1.0, 101.0), 0.01)
    assert var == pytest.approx(1.99)
    assert es == pytest.approx(1.0)


def test_tangency_puts_everything_on_the_only_positive_asset():
    w = tangency_weights(np.array([0.1, 0.0]), np.eye(2))
    assert w.values == pytest.approx([1.0, 0.0], abs=1e-9)
    assert not w.fallback


def test_tangency_falls_back_to_gmv_without_positive_excess():
    sigma = np.diag([1.0, 4.0])
    w = tangency_weights(np.array([-0.1, -0.2]), sigma)
    assert w.fallback
    assert w.values == pytest.approx(gmv_weights(sigma).values)


def test_gmv_matches_a_grid_search(scenarios):
    sigma = regularized_covariance(scenarios)
    w = min_variance(scenarios)
    grid = min(np.array([g, 1 - g]) @ sigma @ np.array([g, 1 - g]) for g in GRID)
    assert w.objective <= grid + 1e-12


def test_max_sharpe_matches_a_grid_search(scenarios):
    mu, sigma = scenarios.mean(axis=0), regularized_covariance(scenarios)
    w = max_sharpe(scenarios)

    def sharpe(x):
        return x @ mu / np.sqrt(x @ sigma @ x)

    grid = max(sharpe(np.array([g, 1 - g])) for g in GRID)
    assert w.objective >= grid - 1e-9
    assert w.objective == pytest.approx(sharpe(w.values))


def test_min_cvar_matches_a_grid_search(scenarios):
    w = min_cvar(scenarios, 0.10)
    achieved = empirical_cvar(scenarios @ w.values, 0.10)
    assert w.objective == pytest.approx(achieved, abs=1e-6)
    grid = min(empirical_cvar(scenarios @ np.array([g, 1 - g]), 0.10) for g in GRID)
    assert achieved <= grid + 1e-6


def test_min_cvar_dominates_equal_weights():
    s = np.random.default_rng(3).standard_normal((500, 4)) * np.array([1.0, 2.0, 0.5, 1.5])
    w = min_cvar(s, 0.05)
    assert np.all(w.values >= 0) and w.values.sum() == pytest.approx(1.0)
    assert empirical_cvar(s @ w.values, 0.05) <= empirical_cvar(s @ equal_weights(4).values, 0.05) + 1e-7


def test_min_cvar_needs_enough_scenarios():
    with pytest.raises(InsufficientDataError):
        min_cvar(np.ones((5, 2)), 0.10)


def test_singular_covariance_is_regularized():
    x = np.random.default_rng(5).standard_normal(200)
    s = np.column_stack([x, x])
    sigma = regularized_covariance(s)
    np.linalg.cholesky(sigma)
    w = min_variance(s)
    assert w.values.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("kind", ["sr", "cvar", "gmv"])
def test_dispatch_returns_simplex_weights(scenarios, kind):
    w = optimize_weights(scenarios, StrategySpec(kind=kind))
    assert np.all(w.values >= 0)
    assert w.values.sum() == pytest.approx(1.0)
