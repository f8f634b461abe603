import numpy as np
import pandas as pd
import pytest
from scipy import stats

from vineport.app.services.backtest_service import (
    net_returns,
    performance_report,
    quarterly_outcomes,
    rolling_realized,
    run_backtest,
    run_in_sample,
    run_window,
)
from vineport.app.services.simple_copula_service import simple_simulate
from vineport.app.utils.file_utils import write_ledger
from vineport.exceptions import DataError, InsufficientDataError, ParameterError
from vineport.schemas import BacktestConfig, BacktestLedger, ReturnPanel, SimpleCopula, StrategySpec

from .conftest import business_days


def eqw_config(**keys):
    keys.setdefault("window", 250)
    return BacktestConfig(allocation="eqw", n_sim=1000, **keys)


def ledger_from_returns(net_percent, dates, label="L"):
    """Ledger whose daily net return is `net_percent`, with zero turnover"""
    net_percent = np.asarray(net_percent, dtype=float)
    wealth = 100.0 * np.cumprod(1.0 + net_percent / 100.0)
    frame = pd.DataFrame({
        "date": [d.isoformat() for d in dates],
        "w1": 1.0,
        "ret": net_percent,
        "turnover": 0.0,
        "wealth_gross": wealth,
        "wealth_net": wealth,
        "var_1": -2.0,
        "es_1": -2.5,
        "vol": 1.0,
        "flag": "",
    })
    return BacktestLedger(frame=frame, assets=["x1"], var_levels=[0.01], label=label)


@pytest.fixture(scope='module')
def eqw_ledger(gaussian_panel):
    return run_backtest(gaussian_panel, eqw_config())


def test_ledger_layout(eqw_ledger, gaussian_panel):
    frame = eqw_ledger.frame
    assert list(frame.columns) == eqw_ledger.columns()
    assert list(frame.columns[:7]) == ["date", "w1", "w2", "w3", "ret", "turnover", "wealth_gross"]
    assert len(frame) == gaussian_panel.n_obs - 250
    assert frame["date"].iloc[0] == str(gaussian_panel.dates[250])
    assert eqw_ledger.label == "eqw-sr"


def test_wealth_recursion(eqw_ledger, gaussian_panel):
    frame = eqw_ledger.frame
    ret = frame["ret"].to_numpy()
    weights = frame[["w1", "w2", "w3"]].to_numpy()
    assert np.allclose(ret, np.sum(weights * gaussian_panel.values[250:], axis=1))
    gross = 100.0 * np.cumprod(1.0 + ret / 100.0)
    net = 100.0 * np.cumprod((1.0 + ret / 100.0) * (1.0 - 10.0 / 1e4 * frame["turnover"].to_numpy()))
    assert np.allclose(frame["wealth_gross"], gross)
    assert np.allclose(frame["wealth_net"], net)
    assert np.all(frame["wealth_net"] <= frame["wealth_gross"] + 1e-12)


def test_turnover_counts_buy_in_and_drift(eqw_ledger, gaussian_panel):
    frame = eqw_ledger.frame
    assert frame["turnover"].iloc[0] == pytest.approx(1.0)
    w = np.full(3, 1 / 3)
    r = gaussian_panel.values[250]
    held = w * (1 + r / 100) / (1 + w @ r / 100)
    assert frame["turnover"].iloc[1] == pytest.approx(np.abs(w - held).sum())
    assert np.allclose(frame[["w1", "w2", "w3"]].to_numpy(), 1 / 3)


def test_risk_forecasts_come_from_the_window(eqw_ledger, gaussian_panel):
    port = gaussian_panel.values[0:250] @ np.full(3, 1 / 3)
    assert eqw_ledger.frame["var_1"].iloc[0] == pytest.approx(np.quantile(port, 0.01))
    assert eqw_ledger.frame["vol"].iloc[0] == pytest.approx(np.std(port, ddof=1))
    assert np.all(eqw_ledger.frame["es_1"] <= eqw_ledger.frame["var_1"])


def test_cadence_keeps_weights_drifting(gaussian_panel):
    ledger = run_backtest(gaussian_panel.rows(0, 280), eqw_config(cadence=5))
    turnover = ledger.frame["turnover"].to_numpy()
    rebalance = np.arange(len(turnover)) % 5 == 0
    assert np.all(turnover[~rebalance] == 0.0)
    assert np.all(turnover[rebalance][1:] > 0.0)
    weights = ledger.frame[["w1", "w2", "w3"]].to_numpy()
    assert np.allclose(weights.sum(axis=1), 1.0)
    assert not np.allclose(weights[1], 1 / 3)


def test_failed_windows_carry_equal_weights():
    panel = ReturnPanel(dates=business_days(260), assets=["a", "b"], values=np.zeros((260, 2)))
    ledger = run_backtest(panel, BacktestConfig(window=250, n_sim=1000, copula_model="gaussian"))
    frame = ledger.frame
    assert np.allclose(frame[["w1", "w2"]].to_numpy(), 0.5)
    assert np.allclose(frame["wealth_gross"], 100.0)
    assert frame["wealth_net"].iloc[-1] == pytest.approx(100.0 * (1 - 10.0 / 1e4))
    assert frame["flag"].str.contains("window failed").all()
    assert np.allclose(frame["var_1"], 0.0)


def test_backtest_needs_more_rows_than_the_window(gaussian_panel):
    with pytest.raises(InsufficientDataError):
        run_backtest(gaussian_panel.rows(0, 250), eqw_config())


def test_window_input_checks():
    config = eqw_config()
    with pytest.raises(InsufficientDataError):
        run_window(np.zeros((100, 2)), config)
    bad = np.random.default_rng(0).standard_normal((300, 2))
    bad[5, 1] = np.nan
    with pytest.raises(DataError):
        run_window(bad, config)


def test_in_sample_buy_and_hold(gaussian_panel):
    weights, ledger, report = run_in_sample(gaussian_panel, eqw_config())
    assert weights.values == pytest.approx(np.full(3, 1 / 3))
    assert len(ledger.frame) == gaussian_panel.n_obs
    assert ledger.frame["turnover"].iloc[0] == pytest.approx(1.0)
    assert np.all(ledger.frame["turnover"].iloc[1:] == 0.0)
    assert report.n_days == gaussian_panel.n_obs


def test_performance_report_compounds():
    ledger = ledger_from_returns(np.full(100, 0.01), business_days(100))
    report = performance_report(ledger)
    assert report.terminal_wealth == pytest.approx(100.0 * 1.0001 ** 100)
    assert report.terminal_wealth_tc == pytest.approx(report.terminal_wealth)
    assert report.mean == pytest.approx(0.01)
    assert report.cvar == pytest.approx(-0.01)
    assert report.n_days == 100


def test_performance_report_date_filter():
    dates = business_days(100)
    ledger = ledger_from_returns(np.linspace(-1, 1, 100), dates)
    report = performance_report(ledger, start=dates[50])
    assert report.n_days == 50
    assert report.mean == pytest.approx(net_returns(ledger).iloc[50:].mean())
    with pytest.raises(InsufficientDataError):
        performance_report(ledger, start=dates[-1].replace(year=dates[-1].year + 1))


def test_rolling_series():
    ledger = ledger_from_returns(np.full(60, 0.02), business_days(60))
    std = rolling_realized(ledger, horizon=20, measure="StdDev")
    assert len(std) == 41
    assert np.all(std.to_numpy() < 1e-10)
    cvar = rolling_realized(ledger, horizon=20, measure="CVaR")
    assert np.allclose(cvar, -0.02)
    with pytest.raises(InsufficientDataError):
        rolling_realized(ledger, horizon=100)
    with pytest.raises(ParameterError):
        rolling_realized(ledger, horizon=20, measure="Sortino")


def test_quarterly_outcomes_cover_each_quarter():
    dates = business_days(200)
    rng = np.random.default_rng(1)
    ledgers = [ledger_from_returns(rng.standard_normal(200), dates, label) for label in ("EQW", "cvar")]
    table = quarterly_outcomes(ledgers, "StdDev")
    quarters = sorted({str(pd.Period(d, "Q")) for d in dates})
    assert list(table.columns) == ["strategy", "quarter", "value"]
    assert sorted(table["quarter"].unique()) == quarters
    assert set(table["strategy"]) == {"EQW", "cvar"}
    assert np.all(table["value"] > 0)


@pytest.mark.slow
def test_copula_backtest(gaussian_panel):
    config = BacktestConfig(window=250, n_sim=1000, copula_model="cvine", family_set="onepar", cadence=10,
                            strategy=StrategySpec(kind="cvar"), var_levels=[0.01, 0.05])
    ledger = run_backtest(gaussian_panel.rows(0, 300), config)
    frame = ledger.frame
    assert len(frame) == 50
    assert np.allclose(frame[["w1", "w2", "w3"]].sum(axis=1), 1.0)
    assert set(["var_1", "es_1", "var_5", "es_5"]) <= set(frame.columns)
    assert np.all(frame["var_5"] >= frame["var_1"])
    assert np.all(frame["wealth_net"] > 0)
    assert ledger.label == "copula-cvar"


def clayton_t_panel(n, seed, scales=(0.5, 1.0, 1.5, 2.0)):
    """Clayton (tau 0.4) dependence with Student-t(5) margins of increasing scale"""
    u = simple_simulate(SimpleCopula(family="clayton", dim=len(scales), theta=4.0 / 3.0), n, seed)
    values = stats.t.ppf(u, 5) * np.asarray(scales)
    return ReturnPanel(dates=business_days(n), assets=[f"a{j}" for j in range(len(scales))], values=values)


@pytest.mark.slow
def test_copula_backtest_is_reproducible(tmp_path):
    panel = clayton_t_panel(600, 31)
    config = BacktestConfig(window=500, n_sim=2000, copula_model="cvine", family_set="onepar",
                            strategy=StrategySpec(kind="cvar"))
    first = run_backtest(panel, config)
    second = run_backtest(panel, config)
    assert len(first.frame) == 100
    pd.testing.assert_frame_equal(first.frame, second.frame, check_exact=True)
    a = write_ledger(first, str(tmp_path / "first.csv"))
    b = write_ledger(second, str(tmp_path / "second.csv"))
    with open(a, "rb") as left, open(b, "rb") as right:
        assert left.read() == right.read()

    frame = first.frame
    growth = 1.0 + frame["ret"].to_numpy() / 100.0
    cost = 1.0 - config.tc_bps / 1e4 * frame["turnover"].to_numpy()
    previous = np.concatenate([[100.0], frame["wealth_net"].to_numpy()[:-1]])
    assert np.allclose(frame["wealth_net"].to_numpy(), previous * growth * cost, rtol=1e-12, atol=0.0)


@pytest.mark.slow
def test_min_cvar_beats_equal_weights_on_clayton_data():
    wins = 0
    for seed in range(10):
        panel = clayton_t_panel(500, 100 + seed)
        copula = BacktestConfig(window=250, n_sim=1000, copula_model="cvine", family_set="onepar", cadence=10,
                                tc_bps=0.0, strategy=StrategySpec(kind="cvar", alpha=0.10), seed=seed)
        eqw = BacktestConfig(window=250, n_sim=1000, allocation="eqw", tc_bps=0.0, seed=seed)
        vine_cvar = performance_report(run_backtest(panel, copula)).cvar
        eqw_cvar = performance_report(run_backtest(panel, eqw)).cvar
        wins += vine_cvar < eqw_cvar
    assert wins >= 8
