import numpy as np
import pytest

from vineport.app.services.marginal_service import (
    fit_ar_garch,
    fit_marginals,
    forecast_one_step,
    garch_loglik,
    pit_residuals,
    reconstruct_returns,
    simulate_ar_garch,
)
from vineport.app.services.skewt import skewt_logpdf
from vineport.exceptions import DimensionError, EstimationError, InsufficientDataError
from vineport.schemas import ArGarchParams, MarginalFit, SkewtParams


def manual_fit(**state):
    params = ArGarchParams(mu=0.01, phi=0.1, omega=0.02, alpha=0.1, beta=0.8)
    defaults = dict(
        params=params, variances=np.ones(3), residuals=np.zeros(3), loglik=0.0,
        last_return=0.5, last_variance=1.0, last_innovation=1.0,
    )
    defaults.update(state)
    return MarginalFit(**defaults)


def test_one_step_forecast():
    mean, variance = forecast_one_step(manual_fit())
    assert mean == pytest.approx(0.06)
    assert variance == pytest.approx(0.92)


def test_loglik_follows_the_recursion():
    params = ArGarchParams(mu=0.05, phi=0.2, omega=0.1, alpha=0.1, beta=0.85, skewt=SkewtParams(skew=1.2, shape=6.0))
    r = np.array([0.3, -0.8, 1.1, 0.2, -0.4, 0.9])
    h0 = 0.7
    total, h, prev_eps = 0.0, h0, None
    for t in range(1, len(r)):
        eps = r[t] - params.mu - params.phi * r[t - 1]
        if prev_eps is not None:
            h = params.omega + params.alpha * prev_eps ** 2 + params.beta * h
        total += float(skewt_logpdf(eps / np.sqrt(h), params.skewt)) - 0.5 * np.log(h)
        prev_eps = eps
    assert garch_loglik(r, params, h0) == pytest.approx(total, rel=1e-12)


def test_constant_series_is_rejected():
    with pytest.raises(EstimationError):
        fit_ar_garch(np.full(300, 0.4))


def test_short_series_is_rejected():
    with pytest.raises(InsufficientDataError):
        fit_ar_garch(np.random.default_rng(0).standard_normal(100))


def test_pit_of_zero_residuals_is_one_half():
    assert np.allclose(pit_residuals(manual_fit()), 0.5)


def test_median_uniform_maps_to_forecast_mean():
    fits = [manual_fit(), manual_fit(last_return=-0.5)]
    out = reconstruct_returns(np.full((4, 2), 0.5), fits)
    assert np.allclose(out[:, 0], 0.06)
    assert np.allclose(out[:, 1], -0.04)


def test_reconstruct_checks_columns():
    with pytest.raises(DimensionError):
        reconstruct_returns(np.full((4, 3), 0.5), [manual_fit(), manual_fit()])


def test_fit_shapes_and_uniform_range():
    rng = np.random.default_rng(11)
    values = rng.standard_normal((400, 2))
    fits = fit_marginals(values, ["a", "b"], max_iter=500)
    assert [f.label for f in fits] == ["a", "b"]
    for fit in fits:
        assert len(fit.residuals) == 399
        assert fit.params.alpha + fit.params.beta < 1.0
        u = pit_residuals(fit)
        assert np.all((u > 0) & (u < 1))


@pytest.mark.slow
def test_parameter_recovery():
    truth = ArGarchParams(mu=0.05, phi=0.1, omega=0.05, alpha=0.08, beta=0.9, skewt=SkewtParams(skew=1.1, shape=8.0))
    series = simulate_ar_garch(truth, 4000, np.random.default_rng(5))
    fit = fit_ar_garch(series)
    p = fit.params
    assert abs(p.mu - truth.mu) < 0.05
    assert abs(p.phi - truth.phi) < 0.06
    assert abs((p.alpha + p.beta) - 0.98) < 0.03
    assert fit.loglik >= garch_loglik(series, truth, float(np.var(series))) - 1.0


@pytest.mark.slow
def test_garch_recovery_across_seeds():
    truth = ArGarchParams(mu=0.05, phi=0.1, omega=0.05, alpha=0.08, beta=0.9, skewt=SkewtParams(skew=1.1, shape=8.0))
    errors = []
    for seed in range(20):
        p = fit_ar_garch(simulate_ar_garch(truth, 5000, np.random.default_rng(seed))).params
        errors.append((abs(p.alpha - truth.alpha), abs(p.beta - truth.beta)))
    median_alpha, median_beta = np.median(np.array(errors), axis=0)
    assert median_alpha <= 0.03
    assert median_beta <= 0.03
