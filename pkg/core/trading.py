"""Alarm-driven long trades, per-trade statistics and random-strategy significance."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from config.defaults import COST_BPS, RANDOM_RUNS
from core.data_ingest import PriceSeries, to_day
from core.errors import (
    CoverageError,
    InfeasibleConstraintError,
    UndefinedSharpeError,
    ValidationError,
)
from core.pattern import AlarmSeries

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StrategyParams:
    Th: float
    Os: int
    Hp: int

    def __post_init__(self):
        if not 0.0 <= self.Th <= 1.0:
            raise ValidationError(f"Th must lie in [0, 1], got {self.Th}")
        if self.Os < 0 or self.Hp < 0:
            raise ValidationError("Os and Hp must be >= 0")


@dataclass(frozen=True)
class TradeInterval:
    entry_date: np.datetime64
    exit_date: np.datetime64

    def __post_init__(self):
        if not self.exit_date > self.entry_date:
            raise ValidationError(f"exit {self.exit_date} must follow entry {self.entry_date}")

    @property
    def duration_days(self) -> int:
        return int((self.exit_date - self.entry_date).astype("int64"))


@dataclass(frozen=True)
class Trade:
    entry_date: np.datetime64
    exit_date: np.datetime64
    log_return: float
    excess_log_return: float
    duration_days: int

    def __post_init__(self):
        if not self.exit_date > self.entry_date:
            raise ValidationError(f"exit {self.exit_date} must follow entry {self.entry_date}")


def generate_trades(alarms: AlarmSeries, params: StrategyParams) -> List[TradeInterval]:
    """Long positions from RI > Th episodes.

    An episode starts on the first day above Th and ends on the last day above Th
    that is followed by Hp days below it. Entry is Os days after the start, exit
    Hp days after the end, clipped to the last alarm day.
    """
    values = np.asarray(alarms.values, dtype=float)
    n = len(values)
    above = np.flatnonzero(values > params.Th)
    if above.size == 0:
        return []

    # a below-gap shorter than Hp keeps the position open
    breaks = np.flatnonzero(np.diff(above) - 1 >= max(params.Hp, 1))
    starts = np.concatenate([[above[0]], above[breaks + 1]])
    ends = np.concatenate([above[breaks], [above[-1]]])

    trades = []
    for s, e in zip(starts, ends):
        entry = s + params.Os
        exit_ = min(e + params.Hp, n - 1)
        if exit_ <= entry:
            continue
        trades.append(TradeInterval(alarms.dates[entry], alarms.dates[exit_]))
    return trades


@dataclass
class DailyMarket:
    """Log close and cumulative risk-free carry on every calendar day of a period."""

    days: np.ndarray
    log_price: np.ndarray
    cum_rf: np.ndarray
    cost: float = 0.0

    @classmethod
    def build(cls, prices: PriceSeries, rates: Optional[pd.Series], start, end,
              cost_bps: float = COST_BPS) -> "DailyMarket":
        start, end = to_day(start), to_day(end)
        if start < prices.start or end > prices.end:
            raise CoverageError(f"prices cover {prices.start}..{prices.end}, need {start}..{end}")
        calendar = pd.date_range(pd.Timestamp(start), pd.Timestamp(end), freq="D")
        close = prices.to_series().reindex(calendar, method="ffill")
        log_price = np.log(close.to_numpy()) if not prices.log_scale else close.to_numpy()

        if rates is None:
            daily = np.zeros(len(calendar))
        else:
            rate = rates.sort_index().reindex(calendar, method="ffill")
            if rate.isna().any():
                raise CoverageError(f"no risk-free rate on or before {rate[rate.isna()].index[0].date()}")
            daily = rate.to_numpy() / 100.0 / 365.0
        cum_rf = np.concatenate([[0.0], np.cumsum(daily)])[:-1]
        days = calendar.values.astype("datetime64[D]")
        return cls(days, log_price, cum_rf, cost=2.0 * cost_bps * 1e-4)

    def __len__(self) -> int:
        return len(self.days)

    def index(self, day) -> int:
        day = to_day(day)
        idx = int(np.searchsorted(self.days, day))
        if idx >= len(self.days) or self.days[idx] != day:
            raise CoverageError(f"{day} outside market data {self.days[0]}..{self.days[-1]}")
        return idx

    def returns(self, entry: np.ndarray, exit_: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(log_return, excess_log_return) for index arrays; cost is charged per round trip."""
        log_return = self.log_price[exit_] - self.log_price[entry] - self.cost
        excess = log_return - (self.cum_rf[exit_] - self.cum_rf[entry])
        return log_return, excess


def score_intervals(intervals: Sequence[TradeInterval], market: DailyMarket) -> List[Trade]:
    if not intervals:
        return []
    entry = np.array([market.index(iv.entry_date) for iv in intervals])
    exit_ = np.array([market.index(iv.exit_date) for iv in intervals])
    log_return, excess = market.returns(entry, exit_)
    return [Trade(iv.entry_date, iv.exit_date, float(r), float(x), iv.duration_days)
            for iv, r, x in zip(intervals, log_return, excess)]


def _std(values: np.ndarray) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def _sharpe(excess: np.ndarray, returns: np.ndarray) -> float:
    if len(returns) < 2:
        raise UndefinedSharpeError("Sharpe ratio per trade needs at least 2 trades")
    sigma = _std(returns)
    if sigma == 0:
        raise UndefinedSharpeError("per-trade returns have zero standard deviation")
    return float(np.mean(excess) / sigma)


def _bias(excess: np.ndarray) -> float:
    sigma = _std(excess)
    positive = np.count_nonzero((excess >= 0) & (excess <= sigma))
    negative = np.count_nonzero((excess >= -sigma) & (excess < 0))
    return positive / (1.0 + negative)


def sharpe_per_trade(trades: Sequence[Trade]) -> float:
    """S = mean(excess) / std(returns)."""
    return _sharpe(np.array([t.excess_log_return for t in trades]),
                   np.array([t.log_return for t in trades]))


def bias_ratio(trades: Sequence[Trade]) -> float:
    """#{r in [0, sigma]} / (1 + #{r in [-sigma, 0)}) over excess returns."""
    if not trades:
        raise ValidationError("bias ratio needs at least one trade")
    return _bias(np.array([t.excess_log_return for t in trades]))


@dataclass
class StrategyReport:
    trades: List[Trade]
    period_days: int
    cumulative_log_return: float = 0.0
    cumulative_excess_log_return: float = 0.0
    success_rate: float = 0.0
    total_holding_days: int = 0
    invested_fraction: float = 0.0
    sharpe_per_trade: Optional[float] = None
    bias_ratio: Optional[float] = None
    average_return_per_trade: float = 0.0
    average_trade_duration: float = 0.0
    number_of_trades: int = 0
    p_values: Dict[str, Optional[float]] = field(default_factory=dict)
    benchmark: Dict[str, Optional[float]] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        payload = {k: v for k, v in self.__dict__.items() if k != "trades"}
        payload["trades"] = [
            {"entry": str(t.entry_date), "exit": str(t.exit_date), "log_return": t.log_return,
             "excess": t.excess_log_return, "duration_days": t.duration_days}
            for t in self.trades
        ]
        return payload


def score_trades(intervals: Sequence[TradeInterval], market: DailyMarket) -> StrategyReport:
    """Table of per-strategy aggregates (p-values are filled in separately)."""
    trades = score_intervals(intervals, market)
    report = StrategyReport(trades=trades, period_days=len(market))
    if not trades:
        return report
    returns = np.array([t.log_return for t in trades])
    excess = np.array([t.excess_log_return for t in trades])
    durations = np.array([t.duration_days for t in trades])

    report.cumulative_log_return = float(returns.sum())
    report.cumulative_excess_log_return = float(excess.sum())
    report.success_rate = float(np.mean(returns > 0))
    report.total_holding_days = int(durations.sum())
    report.invested_fraction = report.total_holding_days / len(market)
    report.number_of_trades = len(trades)
    report.average_return_per_trade = float(returns.mean())
    report.average_trade_duration = float(durations.mean())
    report.bias_ratio = _bias(excess)
    try:
        report.sharpe_per_trade = _sharpe(excess, returns)
    except UndefinedSharpeError as exc:
        logger.warning(f"Sharpe ratio undefined: {exc}")
    return report


# ---------------------------------------------------------------------------
# Random strategies
# ---------------------------------------------------------------------------

def _composition(rng: np.random.Generator, total: int, parts: int) -> np.ndarray:
    """Uniform composition of `total` into `parts` positive integers."""
    if parts == 1:
        return np.array([total])
    cuts = np.sort(rng.choice(np.arange(1, total), size=parts - 1, replace=False))
    return np.diff(np.concatenate([[0], cuts, [total]]))


def _place(rng: np.random.Generator, durations: np.ndarray, period: int) -> Tuple[np.ndarray, np.ndarray]:
    """Uniform non-overlapping placement of closed intervals [entry, entry + d] in [0, period)."""
    k = len(durations)
    slack = period - int(np.sum(durations + 1))
    picks = np.sort(rng.choice(slack + k, size=k, replace=False))
    gaps = np.diff(np.concatenate([[-1], picks])) - 1
    entry = np.cumsum(gaps + np.concatenate([[0], durations[:-1] + 1]))
    return entry, entry + durations


def _check_feasible(durations: np.ndarray, period: int) -> None:
    needed = int(np.sum(durations + 1))
    if needed > period:
        raise InfeasibleConstraintError(
            f"{len(durations)} trades holding {int(durations.sum())} days do not fit in {period} days")


def random_trades(rng: np.random.Generator, count: int, holding_days: int, period: int):
    """Same count and total holding days as a reference strategy, durations resampled."""
    if count < 1 or holding_days < count:
        raise InfeasibleConstraintError(f"cannot split {holding_days} holding days into {count} trades")
    if holding_days + count > period:
        raise InfeasibleConstraintError(
            f"{count} trades holding {holding_days} days do not fit in {period} days")
    durations = _composition(rng, holding_days, count)
    return _place(rng, durations, period)


def _draw_rng(seed: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(i)]))


def random_strategy_pvalue(report: StrategyReport, market: DailyMarket, n: int = RANDOM_RUNS,
                           seed: int = 0, progress: bool = False) -> Dict[str, Optional[float]]:
    """Monte-Carlo p-values: fraction of random strategies doing at least as well.

    `excess_return` draws strategies with the same trade count and total holding
    days; `sharpe` and `bias` reuse the strategy's own durations in random order.
    """
    if not report.trades:
        raise ValidationError("random-strategy test needs a strategy with trades")
    durations = np.array([t.duration_days for t in report.trades])
    count, holding = len(durations), int(durations.sum())
    _check_feasible(durations, len(market))

    cum_excess = np.empty(n)
    sharpe = np.full(n, np.nan)
    bias = np.empty(n)
    for i in tqdm(range(n), desc="Random strategies", disable=not progress):
        rng = _draw_rng(seed, i)
        entry, exit_ = random_trades(rng, count, holding, len(market))
        cum_excess[i] = market.returns(entry, exit_)[1].sum()

        entry, exit_ = _place(rng, rng.permutation(durations), len(market))
        returns, excess = market.returns(entry, exit_)
        bias[i] = _bias(excess)
        try:
            sharpe[i] = _sharpe(excess, returns)
        except UndefinedSharpeError:
            pass

    p_values: Dict[str, Optional[float]] = {
        "excess_return": float(np.mean(cum_excess >= report.cumulative_excess_log_return)),
        "bias": float(np.mean(bias >= report.bias_ratio)),
        "sharpe": None,
    }
    valid = ~np.isnan(sharpe)
    if report.sharpe_per_trade is not None and valid.any():
        p_values["sharpe"] = float(np.mean(sharpe[valid] >= report.sharpe_per_trade))
    return p_values


def fixed_duration_benchmark(report: StrategyReport, market: DailyMarket) -> Dict[str, Optional[float]]:
    """Sharpe and bias ratio of every trade lasting the strategy's average duration."""
    duration = int(round(report.average_trade_duration))
    if duration < 1 or duration >= len(market):
        return {"duration_days": float(duration), "sharpe": None, "bias": None}
    entry = np.arange(0, len(market) - duration)
    returns, excess = market.returns(entry, entry + duration)
    try:
        sharpe = _sharpe(excess, returns)
    except UndefinedSharpeError:
        sharpe = None
    return {"duration_days": float(duration), "sharpe": sharpe, "bias": _bias(excess)}


def wealth_trajectory(trades: Sequence[Trade], market: DailyMarket) -> pd.DataFrame:
    """Daily marked-to-market log wealth; final values equal the cumulative sums."""
    n = len(market)
    step = np.diff(market.log_price, prepend=market.log_price[0])
    carry = np.diff(market.cum_rf, prepend=market.cum_rf[0])
    held = np.zeros(n, dtype=bool)
    charge = np.zeros(n)
    for t in trades:
        entry, exit_ = market.index(t.entry_date), market.index(t.exit_date)
        held[entry + 1:exit_ + 1] = True
        charge[exit_] += market.cost
    gain = np.where(held, step, 0.0) - charge
    log_wealth = np.cumsum(gain)
    excess_wealth = np.cumsum(gain - np.where(held, carry, 0.0))
    return pd.DataFrame({"date": market.days.astype(str), "log_wealth": log_wealth,
                         "excess_log_wealth": excess_wealth})
