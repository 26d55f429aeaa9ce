import math

import numpy as np
import pandas as pd
import pytest

from core.data_ingest import PriceSeries, to_day
from core.errors import CoverageError, InfeasibleConstraintError, UndefinedSharpeError, ValidationError
from core.pattern import AlarmSeries
from core.trading import (
    DailyMarket,
    StrategyParams,
    Trade,
    TradeInterval,
    bias_ratio,
    fixed_duration_benchmark,
    generate_trades,
    random_strategy_pvalue,
    random_trades,
    score_trades,
    sharpe_per_trade,
    wealth_trajectory,
)
from tests.conftest import daily_series

START = to_day("2000-01-03")


def alarms(values):
    values = np.asarray(values, dtype=float)
    return AlarmSeries(START + np.arange(len(values)), values, "prediction", (10, 200))


def log_market(log_price, rates=None, cost_bps=0.0):
    log_price = np.asarray(log_price, dtype=float)
    prices = PriceSeries(START + np.arange(len(log_price)), log_price, log_scale=True)
    return DailyMarket.build(prices, rates, prices.start, prices.end, cost_bps)


def interval(a, b):
    return TradeInterval(START + a, START + b)


def trade(r, excess=None):
    return Trade(START, START + 1, r, r if excess is None else excess, 1)


def spans(trades):
    return [(int((t.entry_date - START).astype(int)), int((t.exit_date - START).astype(int))) for t in trades]


def test_strategy_params_are_validated():
    StrategyParams(0.2, 10, 10)
    for bad in ((1.5, 1, 1), (0.5, -1, 1), (0.5, 1, -2)):
        with pytest.raises(ValidationError):
            StrategyParams(*bad)


def test_no_alarm_no_trade():
    assert generate_trades(alarms(np.zeros(200)), StrategyParams(0.2, 10, 10)) == []


def test_single_pulse():
    values = np.zeros(100)
    values[10:20] = 0.9
    trades = generate_trades(alarms(values), StrategyParams(0.5, 2, 3))
    assert spans(trades) == [(12, 22)]
    # W - 1 - Os + Hp
    assert trades[0].duration_days == 10 - 1 - 2 + 3


def test_short_dips_keep_the_position_open():
    values = np.zeros(100)
    values[10:20] = 0.9
    values[22:30] = 0.9
    assert spans(generate_trades(alarms(values), StrategyParams(0.5, 2, 3))) == [(12, 32)]
    assert spans(generate_trades(alarms(values), StrategyParams(0.5, 2, 2))) == [(12, 21), (24, 31)]


def test_exit_is_clipped_and_late_entries_dropped():
    values = np.zeros(100)
    values[90:100] = 0.9
    assert spans(generate_trades(alarms(values), StrategyParams(0.5, 2, 3))) == [(92, 99)]
    assert generate_trades(alarms(values), StrategyParams(0.5, 20, 3)) == []


def test_threshold_is_strict():
    values = np.full(50, 0.5)
    assert generate_trades(alarms(values), StrategyParams(0.5, 0, 1)) == []


def test_log_return_of_a_doubling():
    lp = np.log(np.linspace(100.0, 200.0, 11))
    prices = PriceSeries(START + np.arange(11), np.exp(lp))
    market = DailyMarket.build(prices, None, prices.start, prices.end)
    report = score_trades([interval(0, 10)], market)
    assert report.trades[0].log_return == pytest.approx(math.log(2.0))
    assert report.trades[0].excess_log_return == pytest.approx(math.log(2.0))


def test_excess_return_subtracts_the_carry():
    rates = pd.Series([3.65], index=pd.DatetimeIndex(["1999-12-01"]))
    market = log_market(np.linspace(0.0, math.log(2.0), 11), rates)
    report = score_trades([interval(0, 10)], market)
    assert report.trades[0].excess_log_return == pytest.approx(math.log(2.0) - 10 * 1e-4)


def test_costs_are_charged_per_round_trip():
    market = log_market(np.zeros(20), cost_bps=5.0)
    report = score_trades([interval(2, 8)], market)
    assert report.trades[0].log_return == pytest.approx(-1e-3)


def four_trade_market():
    lp = np.zeros(100)
    lp[10], lp[25], lp[50], lp[80] = 0.05, -0.02, 0.03, -0.01
    return log_market(lp), [interval(0, 10), interval(20, 25), interval(40, 50), interval(60, 80)]


def test_strategy_aggregates():
    market, intervals = four_trade_market()
    report = score_trades(intervals, market)
    returns = np.array([0.05, -0.02, 0.03, -0.01])
    assert [t.log_return for t in report.trades] == pytest.approx(returns.tolist())
    assert report.cumulative_log_return == pytest.approx(0.05)
    assert report.cumulative_excess_log_return == pytest.approx(0.05)
    assert report.success_rate == 0.5
    assert report.total_holding_days == 45
    assert report.invested_fraction == pytest.approx(0.45)
    assert report.number_of_trades == 4
    assert report.average_return_per_trade == pytest.approx(0.0125)
    assert report.average_trade_duration == pytest.approx(11.25)
    assert report.sharpe_per_trade == pytest.approx(returns.mean() / returns.std(ddof=1))
    # sigma ~ 0.033: 0.03 inside [0, sigma], -0.02 and -0.01 inside [-sigma, 0)
    assert report.bias_ratio == pytest.approx(1 / 3)
    payload = report.to_dict()
    assert payload["number_of_trades"] == 4 and len(payload["trades"]) == 4


def test_empty_strategy_report():
    market, _ = four_trade_market()
    report = score_trades([], market)
    assert report.number_of_trades == 0 and report.sharpe_per_trade is None


def test_sharpe_per_trade():
    assert sharpe_per_trade([trade(0.01), trade(-0.01)]) == pytest.approx(0.0)
    with pytest.raises(UndefinedSharpeError):
        sharpe_per_trade([trade(0.01), trade(0.01)])
    with pytest.raises(UndefinedSharpeError):
        sharpe_per_trade([trade(0.01)])


def test_bias_ratio():
    assert bias_ratio([trade(0.02), trade(-0.02)]) == pytest.approx(0.5)
    assert bias_ratio([trade(0.01), trade(0.01), trade(0.01)]) == 0.0
    with pytest.raises(ValidationError):
        bias_ratio([])


def test_random_trades_respect_the_constraints():
    rng = np.random.default_rng(0)
    for _ in range(200):
        entry, exit_ = random_trades(rng, 5, 100, 1000)
        assert len(entry) == 5
        assert int(np.sum(exit_ - entry)) == 100
        assert np.all(exit_ > entry)
        assert entry[0] >= 0 and exit_[-1] < 1000
        assert np.all(entry[1:] > exit_[:-1])


def test_tight_placement_fills_the_period():
    entry, exit_ = random_trades(np.random.default_rng(1), 2, 98, 100)
    assert entry[0] == 0 and exit_[-1] == 99


def test_random_trades_reject_impossible_requests():
    rng = np.random.default_rng(1)
    with pytest.raises(InfeasibleConstraintError):
        random_trades(rng, 2, 99, 100)
    with pytest.raises(InfeasibleConstraintError):
        random_trades(rng, 5, 3, 100)


def random_walk_market(rng, n=1000):
    return log_market(np.cumsum(rng.normal(0.0, 0.01, n)))


def test_pvalues_are_seeded():
    market = random_walk_market(np.random.default_rng(2))
    report = score_trades([interval(100, 130), interval(400, 420), interval(700, 760)], market)
    first = random_strategy_pvalue(report, market, n=50, seed=5)
    assert first == random_strategy_pvalue(report, market, n=50, seed=5)
    assert set(first) == {"excess_return", "sharpe", "bias"}
    assert all(0.0 <= v <= 1.0 for v in first.values() if v is not None)


def test_a_dominant_strategy_is_significant():
    rng = np.random.default_rng(3)
    steps = rng.normal(0.0, 0.002, 1000)
    intervals = []
    for k in range(5):
        a = 100 + 180 * k
        steps[a + 1:a + 21] += 0.01
        intervals.append(interval(a, a + 20))
    market = log_market(np.cumsum(steps))
    report = score_trades(intervals, market)
    p = random_strategy_pvalue(report, market, n=200, seed=0)
    assert p["excess_return"] <= 0.05


@pytest.mark.slow
def test_random_strategies_have_uniform_pvalues():
    pvalues = []
    for trial in range(100):
        rng = np.random.default_rng(1000 + trial)
        market = random_walk_market(rng)
        entry, exit_ = random_trades(rng, 5, 100, len(market))
        intervals = [TradeInterval(market.days[a], market.days[b]) for a, b in zip(entry, exit_)]
        report = score_trades(intervals, market)
        pvalues.append(random_strategy_pvalue(report, market, n=100, seed=trial)["excess_return"])
    assert 0.4 <= np.mean(pvalues) <= 0.6


def test_infeasible_random_constraints():
    market = log_market(np.zeros(100))
    report = score_trades([interval(0, 50), interval(50, 99)], market)
    with pytest.raises(InfeasibleConstraintError):
        random_strategy_pvalue(report, market, n=10)
    with pytest.raises(ValidationError):
        random_strategy_pvalue(score_trades([], market), market, n=10)


def test_market_coverage():
    prices = daily_series("2000-01-03", np.linspace(100.0, 110.0, 30))
    with pytest.raises(CoverageError):
        DailyMarket.build(prices, None, "2000-01-01", "2000-01-20")
    late_rates = pd.Series([2.0], index=pd.DatetimeIndex(["2000-01-10"]))
    with pytest.raises(CoverageError):
        DailyMarket.build(prices, late_rates, "2000-01-03", "2000-01-20")
    market = DailyMarket.build(prices, None, "2000-01-03", "2000-01-20")
    assert len(market) == 18
    with pytest.raises(CoverageError):
        market.index("2000-01-25")


def test_weekend_prices_are_carried_forward():
    dates = np.array(["2000-01-07", "2000-01-10"], dtype="datetime64[D]")
    prices = PriceSeries(dates, np.array([100.0, 110.0]))
    market = DailyMarket.build(prices, None, "2000-01-07", "2000-01-10")
    assert np.allclose(np.exp(market.log_price), [100.0, 100.0, 100.0, 110.0])


def test_wealth_ends_at_the_cumulative_returns():
    rates = pd.Series([2.0, 4.0], index=pd.DatetimeIndex(["1999-12-01", "2000-02-01"]))
    market = log_market(np.cumsum(np.random.default_rng(4).normal(0.0, 0.01, 100)), rates, cost_bps=2.0)
    report = score_trades([interval(5, 20), interval(40, 41), interval(60, 95)], market)
    wealth = wealth_trajectory(report.trades, market)
    assert len(wealth) == len(market)
    assert wealth["log_wealth"].iloc[-1] == pytest.approx(report.cumulative_log_return)
    assert wealth["excess_log_wealth"].iloc[-1] == pytest.approx(report.cumulative_excess_log_return)
    assert wealth["log_wealth"].iloc[4] == 0.0


def test_fixed_duration_benchmark():
    market = log_market(np.zeros(200))
    report = score_trades([interval(0, 10), interval(50, 60), interval(100, 112)], market)
    benchmark = fixed_duration_benchmark(report, market)
    assert benchmark["duration_days"] == 11.0
    assert benchmark["sharpe"] is None

    noisy = random_walk_market(np.random.default_rng(5), n=300)
    benchmark = fixed_duration_benchmark(score_trades([interval(0, 10), interval(50, 70)], noisy), noisy)
    assert benchmark["duration_days"] == 15.0
    assert isinstance(benchmark["sharpe"], float)
    assert benchmark["bias"] >= 0.0
