"""Generate synthetic price and risk-free CSVs with planted negative bubbles for desk-scale runs."""

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from core.data_ingest import PriceSeries


def synthetic_prices(start: str, end: str, troughs: Optional[List[str]] = None, seed: int = 0,
                     depth: float = 0.35, width: int = 300, m: float = 0.5, omega: float = 7.0,
                     oscillation: float = 0.1, noise: float = 0.008,
                     drift: float = 0.0002) -> Tuple[PriceSeries, List[np.datetime64]]:
    """Business-day prices: drifting random walk plus LPPL-shaped crashes into each trough.

    Each trough at t_c lowers the log price by `depth` with an accelerating
    log-periodic decline over the `width` days before it and a mirrored recovery.
    """
    rng = np.random.default_rng(seed)
    dates = pd.bdate_range(start, end).values.astype("datetime64[D]")
    t = dates.astype("int64").astype(float)
    if troughs is None:
        span = t[-1] - t[0]
        count = max(1, int(span // (3 * width)))
        centers = t[0] + width + (np.arange(count) + 0.5) * (span - 2 * width) / count
    else:
        centers = np.array([np.datetime64(d, "D").astype("int64") for d in troughs], dtype=float)

    log_price = np.log(100.0) + drift * (t - t[0]) + np.cumsum(rng.normal(0.0, noise, len(t)))
    for tc in centers:
        distance = np.abs(t - tc)
        inside = distance < width
        dt = np.maximum(distance[inside], 1.0)
        shape = (dt / width) ** m * (1.0 + oscillation * np.cos(omega * np.log(dt)))
        log_price[inside] -= depth * (1.0 - np.minimum(shape, 1.0))

    trough_days = [np.datetime64(int(round(c)), "D") for c in centers]
    return PriceSeries(dates, np.exp(log_price)), trough_days


def main():
    parser = argparse.ArgumentParser(description="Write synthetic price/rate CSVs")
    parser.add_argument("output", help="Price CSV path (date,price)")
    parser.add_argument("--rates", help="Also write a constant risk-free CSV here")
    parser.add_argument("--rate", type=float, default=4.0, help="Annual rate in percent")
    parser.add_argument("--start", default="1960-01-04")
    parser.add_argument("--end", default="1980-12-31")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--width", type=int, default=300, help="Crash half-width in days")
    parser.add_argument("--depth", type=float, default=0.35, help="Crash depth in log-price")

    args = parser.parse_args()

    series, troughs = synthetic_prices(args.start, args.end, seed=args.seed,
                                       width=args.width, depth=args.depth)
    frame = pd.DataFrame({"date": series.dates.astype(str), "price": series.values})
    frame.to_csv(args.output, index=False, float_format="%.10g")
    print(f"Wrote {len(series)} prices to {args.output}")
    print(f"Planted troughs: {', '.join(str(d) for d in troughs)}")

    if args.rates:
        months = pd.date_range(pd.Timestamp(args.start).replace(day=1), args.end, freq="MS")
        pd.DataFrame({"date": months.strftime("%Y-%m-%d"), "annual_rate_percent": args.rate}) \
            .to_csv(args.rates, index=False)
        print(f"Wrote {len(months)} risk-free rates to {args.rates}")


if __name__ == "__main__":
    main()
