"""Historical rebound detection (centered calendar-day minima) and proximity tests."""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np

from config.defaults import NEAR_DAYS, REBOUND_HALF_WIDTH
from core.data_ingest import PriceSeries, to_day
from core.errors import ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReboundSet:
    dates: np.ndarray
    half_width: int = REBOUND_HALF_WIDTH

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        dates.setflags(write=False)
        object.__setattr__(self, "dates", dates)

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def day_numbers(self) -> np.ndarray:
        return self.dates.astype("int64").astype(float)

    def between(self, start=None, end=None) -> "ReboundSet":
        """Rebounds with start <= date < end (either bound optional)."""
        keep = np.ones(len(self.dates), dtype=bool)
        if start is not None:
            keep &= self.dates >= to_day(start)
        if end is not None:
            keep &= self.dates < to_day(end)
        return ReboundSet(self.dates[keep], self.half_width)


def detect_rebounds(series: PriceSeries, half_width: int = REBOUND_HALF_WIDTH,
                    open_end: bool = False) -> ReboundSet:
    """Days whose price is the minimum of the window [d - hw, d + hw].

    The window must lie inside the series; with `open_end` the part after d may
    be cut short by the end of the data. Equal minima keep the earliest day.
    """
    if half_width < 1:
        raise ValidationError("half_width must be >= 1")
    needed = half_width if open_end else 2 * half_width
    if len(series) == 0 or series.span_days() <= needed:
        return ReboundSet(np.array([], dtype="datetime64[D]"), half_width)

    days = series.dates.astype("int64")
    prices = series.values
    lower = np.searchsorted(days, days - half_width, side="left")
    upper = np.searchsorted(days, days + half_width, side="right")
    inside = days - half_width >= days[0]
    if not open_end:
        inside &= days + half_width <= days[-1]

    found = []
    for i in np.flatnonzero(inside):
        if open_end and i == len(days) - 1:
            continue
        before = prices[lower[i]:i]
        after = prices[i + 1:upper[i]]
        if (before.size == 0 or prices[i] < before.min()) and (after.size == 0 or prices[i] <= after.min()):
            found.append(series.dates[i])

    rebounds = ReboundSet(np.array(found, dtype="datetime64[D]"), half_width)
    logger.info(f"Detected {len(rebounds)} rebounds at half-width {half_width} days")
    return rebounds


def is_near(tc: Union[float, np.datetime64, str], rebounds: ReboundSet, D: float = NEAR_DAYS) -> bool:
    """True iff some rebound lies within D days of tc (inclusive)."""
    if len(rebounds) == 0:
        return False
    t = float(tc) if isinstance(tc, (int, float, np.floating, np.integer)) else float(
        to_day(tc).astype("int64"))
    return bool(np.any(np.abs(rebounds.day_numbers - t) <= D))
