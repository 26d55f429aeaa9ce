import numpy as np
import pytest

from core.data_ingest import to_day
from core.errors import UndefinedPosteriorError, ValidationError
from core.evaluation import (
    BayesEstimate,
    ErrorDiagramPoint,
    average_posterior,
    bayes_posterior,
    bayes_series,
    error_diagram,
    mean_diagonal_offset,
)
from core.pattern import AlarmSeries
from core.rebound import ReboundSet
from tests.conftest import daily_series

START = "1980-01-01"


def alarms(values, start=START, qualification=(10, 200)):
    values = np.asarray(values, dtype=float)
    return AlarmSeries(to_day(start) + np.arange(len(values)), values, "prediction", qualification)


def rebounds_at(offsets, start=START):
    return ReboundSet(to_day(start) + np.asarray(offsets, dtype=np.int64))


def test_perfect_index_gives_one_point():
    values = np.zeros(2000)
    values[[300, 900, 1500]] = 1.0
    points = error_diagram(alarms(values), rebounds_at([300, 900, 1500]))
    assert points == [ErrorDiagramPoint(1.0, 3 * 41 / 2000, 0.0)]
    assert mean_diagonal_offset(points) == pytest.approx(3 * 41 / 2000 - 1.0)


def test_constant_index_alarms_everywhere():
    points = error_diagram(alarms(np.full(500, 0.3)), rebounds_at([100, 250]))
    assert points == [ErrorDiagramPoint(0.3, 1.0, 0.0)]


def test_offset_moves_the_alarm_off_the_rebound():
    values = np.zeros(1000)
    values[500] = 1.0
    points = error_diagram(alarms(values), rebounds_at([500]), offset=30)
    assert points == [ErrorDiagramPoint(0.0, 0.99, 0.0)]


def test_overlapping_alarms_are_counted_once():
    values = np.zeros(1000)
    values[[500, 505]] = 1.0
    points = error_diagram(alarms(values), rebounds_at([500]))
    assert points[0].alarm_fraction == pytest.approx(46 / 1000)


def test_curve_is_monotone():
    rng = np.random.default_rng(0)
    values = np.round(rng.uniform(size=3000), 2)
    points = error_diagram(alarms(values), rebounds_at(rng.choice(np.arange(50, 2950), 30, replace=False)))
    assert points
    misses = [p.miss_fraction for p in points]
    fractions = [p.alarm_fraction for p in points]
    assert all(b < a for a, b in zip(misses, misses[1:]))
    assert all(b >= a for a, b in zip(fractions, fractions[1:]))
    assert points[-1].miss_fraction == 0.0


def test_no_rebounds_gives_an_empty_diagram():
    assert error_diagram(alarms(np.ones(100)), rebounds_at([])) == []
    assert error_diagram(alarms(np.ones(100)), rebounds_at([500])) == []
    assert np.isnan(mean_diagonal_offset([]))


def test_diagram_needs_daily_values():
    gappy = AlarmSeries(to_day(START) + np.array([0, 2, 3]), np.zeros(3), "prediction", (10, 200))
    with pytest.raises(ValidationError):
        error_diagram(gappy, rebounds_at([2]))
    with pytest.raises(ValidationError):
        error_diagram(alarms(np.zeros(10)), rebounds_at([2]), alarm_duration=0)


@pytest.mark.slow
def test_random_index_sits_on_the_diagonal():
    offsets = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        values = np.round(rng.uniform(size=12000), 2)
        reb = rng.choice(np.arange(100, 11900), 40, replace=False)
        offsets.append(mean_diagonal_offset(error_diagram(alarms(values), rebounds_at(reb))))
    assert abs(np.mean(offsets)) < 0.05


# ---------------------------------------------------------------------------
# Bayesian posterior
# ---------------------------------------------------------------------------

def wavy_prices(n=2000):
    # troughs every 400 days at 300, 700, 1100, 1500, 1900
    t = np.arange(n)
    return daily_series(START, 100.0 + 20.0 * np.sin(2 * np.pi * t / 400.0))


def test_zero_index_posterior_equals_prior():
    prices = wavy_prices()
    est = bayes_posterior(alarms(np.zeros(2000)), prices, 30, to_day(START) + 1999,
                          history_start=START, start=START)
    assert est.Lv == 0.0
    assert est.p_ri == 1.0
    assert est.p_ri_given_rebound == 1.0
    assert est.p_rebound == pytest.approx(21 * 5 / 2000)
    assert est.posterior == pytest.approx(est.p_rebound)


def counting_oracle(values, day_idx, reb_idx, half_width, D_rw=21, neighborhood=20, lookback=50):
    history = values[:day_idx + 1]
    Lv = max(values[i] for i in range(day_idx + 1) if i > day_idx - lookback)
    p_ri = sum(1 for v in history if v >= Lv) / len(history)
    visible = [r for r in reb_idx if r + half_width <= day_idx]
    prior = D_rw * len(visible) / len(history)
    hits = 0
    for r in visible:
        if any(history[j] >= Lv for j in range(len(history)) if abs(j - r) <= neighborhood):
            hits += 1
    likelihood = hits / len(visible) if visible else 0.0
    return Lv, p_ri, prior, likelihood, min(1.0, prior * likelihood / p_ri)


@pytest.mark.parametrize("day_idx", [250, 1000, 1333, 1999])
def test_posterior_matches_counting(day_idx):
    rng = np.random.default_rng(day_idx)
    values = np.round(rng.uniform(size=2000), 1)
    est = bayes_posterior(alarms(values), wavy_prices(), 30, to_day(START) + day_idx,
                          history_start=START, start=START)
    Lv, p_ri, prior, likelihood, posterior = counting_oracle(values, day_idx, [300, 700, 1100, 1500, 1900], 30)
    assert est.Lv == Lv
    assert est.p_ri == pytest.approx(p_ri)
    assert est.p_rebound == pytest.approx(prior)
    assert est.p_ri_given_rebound == pytest.approx(likelihood)
    assert est.posterior == pytest.approx(posterior)
    assert 0.0 <= est.posterior <= 1.0


def test_series_agrees_with_single_day_estimates():
    rng = np.random.default_rng(9)
    series = alarms(np.round(rng.uniform(size=2000), 1))
    prices = wavy_prices()
    estimates = bayes_series(series, prices, 30, start=to_day(START) + 200, history_start=START)
    assert len(estimates) == 1800
    by_day = {e.date: e for e in estimates}
    for offset in (200, 731, 1400, 1999):
        day = to_day(START) + offset
        assert by_day[day] == bayes_posterior(series, prices, 30, day, history_start=START, start=START)


def test_posterior_before_the_estimation_start_is_rejected():
    with pytest.raises(ValidationError):
        bayes_posterior(alarms(np.zeros(2000)), wavy_prices(), 30, to_day(START) + 100,
                        history_start=START, start=to_day(START) + 200)


def test_posterior_without_history_is_undefined():
    with pytest.raises(UndefinedPosteriorError):
        bayes_posterior(alarms(np.zeros(100)), wavy_prices(100), 30, "1979-06-01", history_start=START,
                        start="1979-01-01")


def test_average_posterior_keeps_common_days():
    day = to_day(START)
    a = [BayesEstimate(day, 0.5, 0.1, 0.02, 0.5, 0.1), BayesEstimate(day + 1, 0.5, 0.1, 0.02, 0.5, 0.2)]
    b = [BayesEstimate(day + 1, 0.5, 0.1, 0.02, 0.5, 0.4)]
    averaged = average_posterior({(10, 200): a, (15, 200): b})
    assert averaged == [(day + 1, pytest.approx(0.3))]
    assert average_posterior({}) == []
