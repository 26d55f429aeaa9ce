"""Alarm-index skill: error diagrams and Bayesian rebound probabilities."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from config.defaults import (
    ALARM_DURATION,
    ALARM_OFFSET,
    BAYES_NEIGHBORHOOD,
    BAYES_START,
    LEARNING_CUTOFF,
    LV_LOOKBACK,
    REBOUND_HALF_WIDTH,
    REBOUND_WIDTH,
)
from core.data_ingest import PriceSeries, day_number, to_day
from core.errors import UndefinedPosteriorError, ValidationError
from core.pattern import AlarmSeries
from core.rebound import ReboundSet, detect_rebounds

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ErrorDiagramPoint:
    threshold: float
    alarm_fraction: float
    miss_fraction: float


def _daily_grid(alarms: AlarmSeries) -> Tuple[np.ndarray, np.ndarray]:
    """Day numbers and values on every calendar day of the alarm period."""
    days = alarms.day_numbers
    if days.size == 0:
        return days, np.asarray(alarms.values, dtype=float)
    full = np.arange(days[0], days[-1] + 1)
    if full.size != days.size:
        raise ValidationError("alarm series must have one value per calendar day")
    return days, np.asarray(alarms.values, dtype=float)


def error_diagram(alarms: AlarmSeries, rebounds: ReboundSet, alarm_duration: int = ALARM_DURATION,
                  offset: int = ALARM_OFFSET) -> List[ErrorDiagramPoint]:
    """Sweep thresholds down the distinct RI values, one point per newly predicted rebound.

    A day with RI >= threshold opens an alarm of `alarm_duration` days centred on
    it (shifted by `offset`), clipped to the alarm period; overlapping alarms merge.
    """
    if alarm_duration < 1:
        raise ValidationError("alarm_duration must be >= 1")
    days, values = _daily_grid(alarms)
    if days.size == 0:
        return []
    n = days.size
    reb = rebounds.day_numbers
    reb = reb[(reb >= days[0]) & (reb <= days[-1])]
    if reb.size == 0:
        logger.warning("No rebounds inside the alarm period; error diagram is empty")
        return []
    reb_idx = (reb - days[0]).astype(int)

    before = (alarm_duration - 1) // 2
    after = alarm_duration - 1 - before
    covered = np.zeros(n, dtype=bool)
    order = np.argsort(-values, kind="stable")
    sorted_values = values[order]
    thresholds = np.unique(values)[::-1]

    points: List[ErrorDiagramPoint] = []
    predicted = 0
    pos = 0
    for threshold in thresholds:
        stop = int(np.searchsorted(-sorted_values, -threshold, side="right"))
        new = order[pos:stop]
        pos = stop
        if new.size == 0:
            continue
        lo = np.clip(new - before + offset, 0, n)
        hi = np.clip(new + after + offset + 1, 0, n)
        valid = hi > lo
        diff = np.zeros(n + 1, dtype=np.int64)
        np.add.at(diff, lo[valid], 1)
        np.add.at(diff, hi[valid], -1)
        covered |= np.cumsum(diff[:-1]) > 0

        count = int(covered[reb_idx].sum())
        if count > predicted:
            predicted = count
            points.append(ErrorDiagramPoint(float(threshold), float(covered.sum()) / n,
                                            1.0 - count / reb.size))
    return points


def mean_diagonal_offset(points: Sequence[ErrorDiagramPoint]) -> float:
    """Mean signed vertical distance to y = 1 - x; negative means better than random."""
    if not points:
        return float("nan")
    return float(np.mean([p.miss_fraction - (1.0 - p.alarm_fraction) for p in points]))


@dataclass(frozen=True)
class BayesEstimate:
    date: np.datetime64
    Lv: float
    p_ri: float
    p_rebound: float
    p_ri_given_rebound: float
    posterior: float


def _history(alarms: AlarmSeries, history_start, d) -> Tuple[np.ndarray, np.ndarray]:
    days = alarms.day_numbers
    values = np.asarray(alarms.values, dtype=float)
    keep = (days >= day_number(history_start)) & (days <= day_number(d))
    return days[keep], values[keep]


def _estimate(day: float, days: np.ndarray, values: np.ndarray, rebound_days: np.ndarray,
              D_rw: int, neighborhood: int, lookback: int) -> BayesEstimate:
    if days.size == 0:
        raise UndefinedPosteriorError(f"no alarm history before {to_day(int(day))}")
    recent = values[days > day - lookback]
    Lv = float(recent.max()) if recent.size else 0.0
    total = days.size
    p_ri = float(np.count_nonzero(values >= Lv)) / total
    if p_ri == 0:
        raise UndefinedPosteriorError(f"no history day reaches Lv={Lv}")

    n_rebound = rebound_days.size
    prior = D_rw * n_rebound / total
    hits = 0
    for r in rebound_days:
        near = values[np.abs(days - r) <= neighborhood]
        if near.size and near.max() >= Lv:
            hits += 1
    likelihood = hits / n_rebound if n_rebound else 0.0
    posterior = min(1.0, prior * likelihood / p_ri)
    return BayesEstimate(np.datetime64(int(day), "D"), Lv, p_ri, prior, likelihood, posterior)


def bayes_posterior(alarms: AlarmSeries, prices: PriceSeries, half_width: int, d,
                    D_rw: int = REBOUND_WIDTH, neighborhood: int = BAYES_NEIGHBORHOOD,
                    lookback: int = LV_LOOKBACK, history_start=LEARNING_CUTOFF,
                    start=BAYES_START) -> BayesEstimate:
    """P(rebound | RI >= Lv) on day d >= `start` from the alarm and price history up to d."""
    if day_number(d) < day_number(start):
        raise ValidationError(f"posterior requested for {d}, before the estimation start {start}")
    days, values = _history(alarms, history_start, d)
    visible = detect_rebounds(prices.truncate(d), half_width)
    rebound_days = visible.between(start=history_start).day_numbers
    return _estimate(day_number(d), days, values, rebound_days, D_rw, neighborhood, lookback)


def bayes_series(alarms: AlarmSeries, prices: PriceSeries, half_width: int = REBOUND_HALF_WIDTH,
                 start=BAYES_START, end=None, D_rw: int = REBOUND_WIDTH,
                 neighborhood: int = BAYES_NEIGHBORHOOD, lookback: int = LV_LOOKBACK,
                 history_start=LEARNING_CUTOFF) -> List[BayesEstimate]:
    """Posterior for every alarm day from `start` on.

    A rebound detected on the full series is visible on day d exactly when its
    closing window ends on or before the last trading day up to d, so detection
    runs once.
    """
    full = detect_rebounds(prices, half_width).between(start=history_start)
    reb = full.day_numbers
    trading = prices.times
    all_days = alarms.day_numbers
    values_all = np.asarray(alarms.values, dtype=float)
    first, last = day_number(start), day_number(end) if end is not None else all_days[-1]
    hist_mask = all_days >= day_number(history_start)
    h_days, h_values = all_days[hist_mask], values_all[hist_mask]

    estimates = []
    for day in all_days[(all_days >= first) & (all_days <= last)]:
        upto = int(np.searchsorted(h_days, day, side="right"))
        last_trade_idx = int(np.searchsorted(trading, day, side="right")) - 1
        if last_trade_idx < 0:
            continue
        visible = reb[reb + half_width <= trading[last_trade_idx]]
        try:
            estimates.append(_estimate(day, h_days[:upto], h_values[:upto], visible,
                                       D_rw, neighborhood, lookback))
        except UndefinedPosteriorError as exc:
            logger.debug(f"Skipping {np.datetime64(int(day), 'D')}: {exc}")
    logger.info(f"Computed {len(estimates)} daily posteriors from {start}")
    return estimates


def average_posterior(series: Dict[Tuple[int, int], List[BayesEstimate]]) -> List[Tuple[np.datetime64, float]]:
    """Per-day mean posterior across qualifications, over days every qualification covers."""
    if not series:
        return []
    per_day: Dict[np.datetime64, List[float]] = {}
    for estimates in series.values():
        for est in estimates:
            per_day.setdefault(est.date, []).append(est.posterior)
    n = len(series)
    return [(day, float(np.mean(vals))) for day, vals in sorted(per_day.items()) if len(vals) == n]
