"""Tabu search seeding + Levenberg-Marquardt refinement of the LPPL nonlinear parameters."""

import hashlib
import json
import logging
from collections import deque
from dataclasses import asdict, dataclass
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from config.defaults import OPTIMIZER, PARAM_BOUNDS, TC_FACTOR
from core.data_ingest import PriceSeries, WindowSpec, day_number, slice_window
from core.errors import (
    FitFailure,
    InsufficientDataError,
    NumericError,
    NumericFailureError,
    ValidationError,
)
from core.lppl_model import LpplFit, LpplParams, make_fit, slave_linear_params, solve_linear

logger = logging.getLogger(__name__)

Nonlinear = Tuple[float, float, float, float]

MIN_OBSERVATIONS = 8
TABU_CELLS = 32
# tc must stay strictly after the last observation
TC_EPSILON = 1e-6


@dataclass(frozen=True)
class SearchBounds:
    m: Tuple[float, float] = PARAM_BOUNDS["m"]
    omega: Tuple[float, float] = PARAM_BOUNDS["omega"]
    phi: Tuple[float, float] = PARAM_BOUNDS["phi"]
    tc: Tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        for name in ("m", "omega", "phi", "tc"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValidationError(f"bound {name}: lower {lo} exceeds upper {hi}")

    @classmethod
    def for_window(cls, window: WindowSpec, tc_factor: float = TC_FACTOR) -> "SearchBounds":
        t1, t2 = day_number(window.t1), day_number(window.t2)
        return cls(tc=(t2, t2 + tc_factor * (t2 - t1)))

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.m[0], self.omega[0], self.phi[0], self.tc[0]])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.m[1], self.omega[1], self.phi[1], self.tc[1]])

    def project(self, x: np.ndarray, last_time: Optional[float] = None) -> np.ndarray:
        lo = self.lower
        if last_time is not None and lo[3] <= last_time:
            lo[3] = min(last_time + TC_EPSILON, self.tc[1])
        return np.clip(x, lo, self.upper)

    def contains(self, x: Sequence[float]) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


@dataclass(frozen=True)
class OptimizerConfig:
    tabu_iterations: int = OPTIMIZER["tabu_iterations"]
    tabu_neighbors: int = OPTIMIZER["tabu_neighbors"]
    tabu_list_size: int = OPTIMIZER["tabu_list_size"]
    lm_max_iterations: int = OPTIMIZER["lm_max_iterations"]
    lm_tolerance: float = OPTIMIZER["lm_tolerance"]
    seed: int = OPTIMIZER["seed"]
    restarts: int = OPTIMIZER["restarts"]
    tc_factor: float = TC_FACTOR

    def __post_init__(self):
        counts = (self.tabu_iterations, self.tabu_neighbors, self.tabu_list_size,
                  self.lm_max_iterations, self.restarts)
        if min(counts) < 1:
            raise ValidationError("optimizer counts must be >= 1")
        if not self.lm_tolerance > 0:
            raise ValidationError("lm_tolerance must be > 0")


def config_hash(cfg: OptimizerConfig) -> str:
    """Stable content hash of the optimizer configuration (seed included)."""
    payload = json.dumps(asdict(cfg), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def window_seed(master_seed: int, window: WindowSpec) -> int:
    """Per-window seed independent of scheduling order."""
    entropy = [int(master_seed), int(window.t1.astype("int64")) + 100000,
               int(window.t2.astype("int64")) + 100000]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def objective(window: PriceSeries, m: float, omega: float, phi: float, tc: float) -> float:
    """Sum of squared log-price residuals with (A, B, C) slaved."""
    _, resid = solve_linear(window.times, window.values, m, omega, phi, tc)
    return float(resid @ resid)


def _safe_objective(window: PriceSeries, x: np.ndarray) -> float:
    try:
        value = objective(window, *x)
    except NumericError:
        return np.inf
    return value if np.isfinite(value) else np.inf


def _check_size(window: PriceSeries) -> None:
    if len(window) < MIN_OBSERVATIONS:
        raise InsufficientDataError(
            f"window has {len(window)} observations; at least {MIN_OBSERVATIONS} required")


def tabu_search(window: PriceSeries, bounds: SearchBounds, cfg: OptimizerConfig,
                seed: Optional[int] = None) -> List[Nonlinear]:
    """Best `cfg.restarts` distinct-cell candidates (m, omega, phi, tc), best first."""
    _check_size(window)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    last_time = float(window.times[-1])
    lo = bounds.project(bounds.lower, last_time)
    hi = bounds.upper
    span = hi - lo
    scale = 0.05 * span
    safe_span = np.where(span > 0, span, 1.0)

    def cell(x: np.ndarray) -> Tuple[int, int, int]:
        idx = np.floor((x - lo) / safe_span * TABU_CELLS).astype(int)
        idx = np.clip(idx, 0, TABU_CELLS - 1)
        # phi is left free
        return int(idx[0]), int(idx[1]), int(idx[3])

    elite: Dict[Tuple[int, int, int], Tuple[float, np.ndarray]] = {}
    best_value = np.inf

    def record(x: np.ndarray, value: float) -> None:
        nonlocal best_value
        key = cell(x)
        if key not in elite or value < elite[key][0]:
            elite[key] = (value, x.copy())
        best_value = min(best_value, value)

    for _ in range(cfg.restarts):
        current = lo + rng.random(4) * span
        record(current, _safe_objective(window, current))
        tabu = deque([cell(current)], maxlen=cfg.tabu_list_size)

        for _ in range(cfg.tabu_iterations):
            proposals = np.clip(current + rng.normal(size=(cfg.tabu_neighbors, 4)) * scale, lo, hi)
            move, move_value = None, np.inf
            for x in proposals:
                value = _safe_objective(window, x)
                aspirated = value < best_value
                record(x, value)
                if cell(x) in tabu and not aspirated:
                    continue
                if move is None or value < move_value:
                    move, move_value = x, value
            if move is None:
                break
            current = move
            tabu.append(cell(current))

    ranked = sorted(elite.values(), key=lambda item: item[0])
    return [tuple(float(v) for v in x) for _, x in ranked[:cfg.restarts]]


def lm_refine(window: PriceSeries, init: Sequence[float], bounds: SearchBounds,
              cfg: OptimizerConfig, trace: Optional[List[float]] = None) -> Tuple[Nonlinear, float]:
    """Projected Levenberg-Marquardt on the nonlinear parameters (variable projection).

    Accepted steps never increase the objective; `trace` collects the accepted
    objective sequence when given.
    """
    t, y = window.times, window.values
    last_time = float(t[-1])
    lo, hi = bounds.project(bounds.lower, last_time), bounds.upper
    step = 1e-6 * (hi - lo)

    def residuals(x: np.ndarray) -> np.ndarray:
        return solve_linear(t, y, *x)[1]

    x = bounds.project(np.asarray(init, dtype=float), last_time)
    try:
        r = residuals(x)
    except NumericError as exc:
        raise NumericFailureError(f"cannot evaluate starting point: {exc}", last_iterate=x) from exc
    f = float(r @ r)
    if not np.isfinite(f):
        raise NumericFailureError("non-finite objective at starting point", last_iterate=x)
    if trace is not None:
        trace.append(f)

    lam = 1e-3
    for _ in range(cfg.lm_max_iterations):
        J = np.zeros((len(t), 4))
        for k in range(4):
            if step[k] == 0:
                continue
            h = step[k] if x[k] + step[k] <= hi[k] else -step[k]
            xk = x.copy()
            xk[k] += h
            try:
                J[:, k] = (residuals(xk) - r) / h
            except NumericError:
                J[:, k] = 0.0
        if not np.all(np.isfinite(J)):
            raise NumericFailureError("non-finite Jacobian", last_iterate=x)

        grad = J.T @ r
        hess = J.T @ J
        damping = np.maximum(np.diag(hess), 1e-12)
        accepted = False
        rel = 0.0
        while lam <= 1e12:
            try:
                delta = np.linalg.solve(hess + lam * np.diag(damping), -grad)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            candidate = bounds.project(x + delta, last_time)
            try:
                rc = residuals(candidate)
                fc = float(rc @ rc)
            except NumericError:
                fc = np.inf
            if np.isfinite(fc) and fc < f:
                rel = (f - fc) / max(f, 1e-300)
                x, r, f = candidate, rc, fc
                lam = max(lam / 10, 1e-12)
                accepted = True
                if trace is not None:
                    trace.append(f)
                break
            lam *= 10
        if not accepted or rel < cfg.lm_tolerance:
            break

    return tuple(float(v) for v in x), f


def fit_window(window: PriceSeries, bounds: SearchBounds, cfg: OptimizerConfig,
               spec: Optional[WindowSpec] = None, seed: Optional[int] = None) -> LpplFit:
    """Tabu candidates refined by LM; the best final fit with slaved linears."""
    spec = spec or WindowSpec(window.start, window.end)
    candidates = tabu_search(window, bounds, cfg, seed=seed)

    best: Optional[Tuple[float, Nonlinear]] = None
    for candidate in candidates:
        start_value = _safe_objective(window, np.asarray(candidate))
        try:
            refined, value = lm_refine(window, candidate, bounds, cfg)
        except NumericFailureError as exc:
            logger.debug(f"LM failed for {spec.key()} from {candidate}: {exc}")
            refined, value = candidate, start_value
        if np.isfinite(value) and (best is None or value < best[0]):
            best = (value, refined)

    if best is None:
        raise FitFailure(f"all {len(candidates)} candidates failed for window {spec.key()}")

    m, omega, phi, tc = best[1]
    A, B, C, q = slave_linear_params(window, m, omega, phi, tc)
    params = LpplParams(A=A, B=B, C=C, m=m, omega=omega, phi=phi, tc=tc)
    return make_fit(params, spec, q)


@dataclass
class FitOutcome:
    """Result of one window: a fit, or the failure message."""

    window: WindowSpec
    fit: Optional[LpplFit] = None
    error: Optional[str] = None


def _fit_task(args: Tuple[PriceSeries, WindowSpec, OptimizerConfig]) -> FitOutcome:
    series, spec, cfg = args
    try:
        window = slice_window(series, spec)
        bounds = SearchBounds.for_window(spec, cfg.tc_factor)
        fit = fit_window(window, bounds, cfg, spec=spec, seed=window_seed(cfg.seed, spec))
        return FitOutcome(window=spec, fit=fit)
    except NumericError as exc:
        return FitOutcome(window=spec, error=str(exc))
    except Exception as exc:  # data problems are per-window too
        return FitOutcome(window=spec, error=f"{type(exc).__name__}: {exc}")


def fit_windows(log_series: PriceSeries, windows: Sequence[WindowSpec], cfg: OptimizerConfig,
                jobs: int = 1, progress: bool = True) -> List[FitOutcome]:
    """Fit every window; results come back in window order whatever the worker count."""
    tasks = [(log_series, spec, cfg) for spec in windows]
    if jobs <= 1 or len(tasks) < 2:
        iterator = map(_fit_task, tasks)
        return list(tqdm(iterator, total=len(tasks), desc="Fitting windows", disable=not progress))
    with Pool(processes=jobs) as pool:
        iterator = pool.imap(_fit_task, tasks, chunksize=max(1, len(tasks) // (jobs * 8)))
        return list(tqdm(iterator, total=len(tasks), desc="Fitting windows", disable=not progress))
