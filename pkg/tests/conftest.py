"""Shared fixtures: synthetic series, temporary CSVs and tiny configs."""

import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from core.data_ingest import PriceSeries, WindowSpec, to_day
from core.lppl_model import LpplParams, make_fit


def daily_series(start: str, values) -> PriceSeries:
    """Consecutive calendar days starting at `start`."""
    values = np.asarray(values, dtype=float)
    dates = to_day(start) + np.arange(len(values))
    return PriceSeries(dates, values.copy())


def fake_fit(t1: str, t2: str, tc_day: float, m=0.5, omega=8.0, phi=1.0, B=0.1, C=0.01, q=0.01):
    """An LpplFit with chosen nonlinear parameters, no optimisation involved."""
    params = LpplParams(A=5.0, B=B, C=C, m=m, omega=omega, phi=phi, tc=float(tc_day))
    return make_fit(params, WindowSpec(to_day(t1), to_day(t2)), q)


@pytest.fixture
def write_csv(tmp_path):
    def _write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text)
        return path
    return _write


@pytest.fixture
def gspc_path():
    path = os.getenv("NBR_GSPC_CSV")
    if not path or not Path(path).exists():
        pytest.skip("NBR_GSPC_CSV not set; historical S&P 500 file unavailable")
    return Path(path)


@pytest.fixture
def rate_series():
    return pd.Series([0.0], index=pd.DatetimeIndex(["1900-01-01"]), name="rate")
