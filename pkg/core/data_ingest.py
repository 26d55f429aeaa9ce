"""Price loading, log transform and sliding-window generation."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from config.defaults import WINDOW_RULES
from core.errors import CoverageError, ParseError, ValidationError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def to_day(value) -> np.datetime64:
    """Coerce a date-like value to numpy day precision."""
    return np.datetime64(pd.Timestamp(value).date(), "D")


def day_number(day) -> float:
    """Days since 1970-01-01 as a float, the time unit used for fitting."""
    return float(to_day(day).astype("int64"))


@dataclass(frozen=True)
class PriceSeries:
    """Dated sequence of adjusted closes (or their logs when `log_scale`)."""

    dates: np.ndarray
    values: np.ndarray
    log_scale: bool = False

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        values = np.asarray(self.values, dtype=float)
        if dates.shape != values.shape or dates.ndim != 1:
            raise ValidationError("dates and values must be 1-D arrays of equal length")
        if len(dates) > 1 and not np.all(np.diff(dates.astype("int64")) > 0):
            raise ValidationError("dates must be strictly increasing")
        if not self.log_scale and np.any(~(values > 0)):
            raise ValidationError("every price must be > 0")
        dates.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def start(self) -> np.datetime64:
        return self.dates[0]

    @property
    def end(self) -> np.datetime64:
        return self.dates[-1]

    @property
    def times(self) -> np.ndarray:
        """Fractional days since 1970-01-01."""
        return self.dates.astype("int64").astype(float)

    def span_days(self) -> int:
        if len(self) == 0:
            return 0
        return int((self.end - self.start).astype("int64"))

    def to_series(self) -> pd.Series:
        return pd.Series(self.values, index=pd.DatetimeIndex(self.dates), name="price")

    def truncate(self, last_day) -> "PriceSeries":
        """Entries dated on or before `last_day`."""
        keep = self.dates <= to_day(last_day)
        return PriceSeries(self.dates[keep], self.values[keep], self.log_scale)


@dataclass(frozen=True, order=True)
class WindowSpec:
    t1: np.datetime64
    t2: np.datetime64

    @property
    def length(self) -> int:
        return int((self.t2 - self.t1).astype("int64"))

    def key(self) -> str:
        return f"{self.t1}_{self.t2}"


@dataclass(frozen=True)
class WindowRules:
    dt1_step: int = WINDOW_RULES["dt1_step"]
    dt2_step: int = WINDOW_RULES["dt2_step"]
    dt_min: int = WINDOW_RULES["dt_min"]
    dt_max: int = WINDOW_RULES["dt_max"]

    def __post_init__(self):
        if min(self.dt1_step, self.dt2_step, self.dt_min, self.dt_max) <= 0:
            raise ValidationError("window rule values must be strictly positive")
        if self.dt_min >= self.dt_max:
            raise ValidationError("dt_min must be smaller than dt_max")


def _read_two_columns(path: PathLike, names: List[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    raw = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=False,
                      names=names, keep_default_na=False)
    raw["line"] = np.arange(1, len(raw) + 1)
    raw = raw[(raw[names[0]].str.strip() != "") | (raw[names[1]].str.strip() != "")]
    if raw.empty:
        return raw

    # A first row is a header only when neither column parses
    first = pd.to_datetime(raw[names[0]].iloc[0].strip(), errors="coerce", format="ISO8601")
    first_value = pd.to_numeric(raw[names[1]].iloc[0].strip(), errors="coerce")
    if pd.isna(first) and pd.isna(first_value):
        raw = raw.iloc[1:]

    parsed_dates = pd.to_datetime(raw[names[0]].str.strip(), errors="coerce", format="ISO8601")
    parsed_values = pd.to_numeric(raw[names[1]].str.strip(), errors="coerce")
    bad = parsed_dates.isna() | parsed_values.isna()
    if bad.any():
        row = raw[bad].iloc[0]
        raise ParseError(f"cannot parse row {row[names[0]]!r},{row[names[1]]!r}",
                         line=int(row["line"]))
    return pd.DataFrame({names[0]: parsed_dates.dt.normalize(),
                         names[1]: parsed_values.astype(float),
                         "line": raw["line"]})


def load_price_csv(path: PathLike) -> PriceSeries:
    """Load a `date,price` CSV (optional header) into a validated PriceSeries."""
    frame = _read_two_columns(path, ["date", "price"])
    if frame.empty:
        return PriceSeries(np.array([], dtype="datetime64[D]"), np.array([], dtype=float))

    nonpositive = frame[frame["price"] <= 0]
    if not nonpositive.empty:
        line = int(nonpositive["line"].iloc[0])
        raise ValidationError(f"line {line}: non-positive price {nonpositive['price'].iloc[0]}")

    duplicated = frame[frame["date"].duplicated(keep="first")]
    if not duplicated.empty:
        line = int(duplicated["line"].iloc[0])
        raise ValidationError(f"line {line}: duplicate date {duplicated['date'].iloc[0].date()}")

    frame = frame.sort_values("date")
    series = PriceSeries(frame["date"].values.astype("datetime64[D]"), frame["price"].values)
    logger.info(f"Loaded {len(series)} prices from {path} ({series.start} .. {series.end})")
    return series


def load_rate_csv(path: PathLike) -> pd.Series:
    """Load a `date,annual_rate_percent` CSV into a date-indexed Series of percents."""
    frame = _read_two_columns(path, ["date", "rate"])
    if frame.empty:
        raise ValidationError(f"no risk-free rates in {path}")
    duplicated = frame[frame["date"].duplicated(keep="first")]
    if not duplicated.empty:
        raise ValidationError(f"line {int(duplicated['line'].iloc[0])}: duplicate date")
    frame = frame.sort_values("date")
    return pd.Series(frame["rate"].values, index=pd.DatetimeIndex(frame["date"]), name="rate")


def log_prices(series: PriceSeries) -> PriceSeries:
    if series.log_scale:
        return series
    return PriceSeries(series.dates, np.log(series.values), log_scale=True)


def generate_windows(series: PriceSeries, rules: Optional[WindowRules] = None,
                     anchor=None) -> List[WindowSpec]:
    """All (t1, t2) on the forward t1-grid and backward t2-grid within the length bounds.

    `anchor` overrides the t1-grid origin (defaults to the first data date).
    """
    rules = rules or WindowRules()
    if len(series) == 0:
        return []
    start = to_day(anchor) if anchor is not None else series.start
    end = series.end
    span = int((end - start).astype("int64"))
    if span < rules.dt_min:
        return []

    t1 = start.astype("int64") + np.arange(0, span + 1, rules.dt1_step)
    t2 = end.astype("int64") - np.arange(0, span + 1, rules.dt2_step)
    grid1, grid2 = np.meshgrid(t1, np.sort(t2), indexing="ij")
    length = grid2 - grid1
    keep = (length >= rules.dt_min) & (length <= rules.dt_max)

    windows = [WindowSpec(np.datetime64(int(a), "D"), np.datetime64(int(b), "D"))
               for a, b in zip(grid1[keep], grid2[keep])]
    logger.debug(f"Generated {len(windows)} windows over {span} days")
    return windows


def slice_window(series: PriceSeries, window: WindowSpec) -> PriceSeries:
    mask = (series.dates >= window.t1) & (series.dates <= window.t2)
    if not mask.any():
        raise CoverageError(f"window {window.t1}..{window.t2} contains no trading days")
    return PriceSeries(series.dates[mask], series.values[mask], series.log_scale)
