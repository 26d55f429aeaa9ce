"""LPPL equation, hazard rate, linear-parameter slaving and bubble classification."""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from config.defaults import OMEGA_FILTER_MAX, PARAM_BOUNDS
from core.data_ingest import PriceSeries, WindowSpec, to_day
from core.errors import DegenerateBasisError, DomainError, ValidationError

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class LpplParams:
    A: float
    B: float
    C: float
    m: float
    omega: float
    phi: float
    tc: float

    def nonlinear(self) -> Tuple[float, float, float, float]:
        return (self.m, self.omega, self.phi, self.tc)

    def in_bounds(self) -> bool:
        m_lo, m_hi = PARAM_BOUNDS["m"]
        w_lo, w_hi = PARAM_BOUNDS["omega"]
        p_lo, p_hi = PARAM_BOUNDS["phi"]
        return (m_lo <= self.m <= m_hi and w_lo <= self.omega <= w_hi
                and p_lo <= self.phi <= p_hi)


class BubbleClass(str, Enum):
    POSITIVE = "PositiveBubble"
    NEGATIVE = "NegativeBubble"
    NEITHER = "Neither"


def hazard_positivity(B: float, C: float, m: float, omega: float) -> float:
    """b = -B m - |C| sqrt(m^2 + omega^2)."""
    return -B * m - abs(C) * math.sqrt(m * m + omega * omega)


@dataclass(frozen=True)
class LpplFit:
    params: LpplParams
    window: WindowSpec
    residual_q: float
    b: float
    group: Optional[int] = None

    def __post_init__(self):
        if not self.residual_q >= 0:
            raise ValidationError(f"residual_q must be >= 0, got {self.residual_q}")
        p = self.params
        expected = hazard_positivity(p.B, p.C, p.m, p.omega)
        if abs(expected - self.b) > 1e-9 * max(1.0, abs(expected)):
            raise ValidationError(f"stored b={self.b} disagrees with params ({expected})")

    @property
    def length(self) -> int:
        return self.window.length

    @property
    def tc(self) -> float:
        return self.params.tc

    def with_group(self, group: int) -> "LpplFit":
        return replace(self, group=group)

    def value(self, name: str) -> float:
        """Pattern parameter by name: m, omega, phi, B, b or q."""
        if name == "b":
            return self.b
        if name == "q":
            return self.residual_q
        return getattr(self.params, name)


def make_fit(params: LpplParams, window: WindowSpec, residual_q: float) -> LpplFit:
    b = hazard_positivity(params.B, params.C, params.m, params.omega)
    return LpplFit(params=params, window=window, residual_q=residual_q, b=b)


def evaluate_lppl(p: LpplParams, t):
    t_arr = np.asarray(t, dtype=float)
    dt = p.tc - t_arr
    if np.any(dt <= 0):
        raise DomainError(f"LPPL undefined at t >= tc ({p.tc})")
    power = dt ** p.m
    value = p.A + p.B * power + p.C * power * np.cos(p.omega * np.log(dt) - p.phi)
    return float(value) if np.ndim(t) == 0 else value


def hazard_rate(Bp: float, Cp: float, m: float, omega: float, phip: float, tc: float, t):
    t_arr = np.asarray(t, dtype=float)
    dt = tc - t_arr
    if np.any(dt <= 0):
        raise DomainError(f"hazard rate undefined at t >= tc ({tc})")
    power = dt ** (m - 1.0)
    value = Bp * power + Cp * power * np.cos(omega * np.log(dt) - phip)
    return float(value) if np.ndim(t) == 0 else value


def design_matrix(t: np.ndarray, m: float, omega: float, phi: float, tc: float) -> np.ndarray:
    """Regressors {1, (tc-t)^m, (tc-t)^m cos(omega ln(tc-t) - phi)}."""
    dt = tc - t
    if np.any(dt <= 0):
        raise DomainError(f"tc={tc} must exceed the last observation time {t.max()}")
    f = dt ** m
    g = f * np.cos(omega * np.log(dt) - phi)
    return np.column_stack([np.ones_like(t), f, g])


def solve_linear(t: np.ndarray, y: np.ndarray, m: float, omega: float, phi: float,
                 tc: float) -> Tuple[np.ndarray, np.ndarray]:
    """Least-squares (A, B, C) and residual vector for fixed nonlinear parameters."""
    X = design_matrix(t, m, omega, phi, tc)
    # cond(X^T X) == cond(X)^2; the solve itself goes through lstsq for accuracy
    cond = np.linalg.cond(X) ** 2
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise DegenerateBasisError(f"normal matrix condition number {cond:.3g} exceeds {MAX_CONDITION:.0e}")
    coef = np.linalg.lstsq(X, y, rcond=None)[0]
    return coef, y - X @ coef


def slave_linear_params(window: PriceSeries, m: float, omega: float, phi: float,
                        tc: float) -> Tuple[float, float, float, float]:
    """Returns (A, B, C, residual_q) with residual_q the RMS residual."""
    if len(window) == 0:
        raise ValidationError("cannot slave linear parameters on an empty window")
    coef, resid = solve_linear(window.times, window.values, m, omega, phi, tc)
    q = float(np.sqrt(np.mean(resid ** 2)))
    return float(coef[0]), float(coef[1]), float(coef[2]), q


def classify_fit(fit: LpplFit) -> BubbleClass:
    p = fit.params
    if p.B > 0 and fit.b < 0:
        return BubbleClass.NEGATIVE
    if p.B < 0 and fit.b >= 0 and 0 < p.m < 1:
        return BubbleClass.POSITIVE
    return BubbleClass.NEITHER


def omega_filter_flag(fit: LpplFit, omega_max: float = OMEGA_FILTER_MAX) -> bool:
    """True when the fit would be discarded by the omega > omega_max filter."""
    return fit.params.omega > omega_max


def critical_date(fit: LpplFit) -> np.datetime64:
    return np.datetime64(int(math.floor(fit.tc)), "D")


FIT_FIELDS = ["t1", "t2", "A", "B", "C", "m", "omega", "phi", "tc", "q", "b"]


def fit_to_record(fit: LpplFit) -> Dict[str, Any]:
    p = fit.params
    return {
        "t1": str(fit.window.t1),
        "t2": str(fit.window.t2),
        "A": p.A, "B": p.B, "C": p.C,
        "m": p.m, "omega": p.omega, "phi": p.phi, "tc": p.tc,
        "q": fit.residual_q,
        "b": fit.b,
    }


def fit_from_record(record: Dict[str, Any]) -> LpplFit:
    params = LpplParams(A=float(record["A"]), B=float(record["B"]), C=float(record["C"]),
                        m=float(record["m"]), omega=float(record["omega"]),
                        phi=float(record["phi"]), tc=float(record["tc"]))
    window = WindowSpec(to_day(record["t1"]), to_day(record["t2"]))
    return LpplFit(params=params, window=window, residual_q=float(record["q"]),
                   b=float(record["b"]))
