"""Pattern recognition over LPPL fits: classes, groups, informative parameters,
questionnaires, traits, features and the rebound alarm index.

Traits are handled as integer codes (`TraitCodec`) so that daily scans over
thousands of fits stay vectorized; `Trait` objects are materialized on demand.
"""

import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from config.defaults import (
    GROUP_WIDTH,
    KDE_GRID_POINTS,
    KDE_PAD_BANDWIDTHS,
    KS_THRESHOLD,
    NEAR_DAYS,
    NUM_GROUPS,
    PARAM_BOUNDS,
    PATTERN_PARAMS,
    PREDICTION_STEP,
)
from core.data_ingest import day_number, to_day
from core.errors import InsufficientDataError, ValidationError
from core.kde import adaptive_kde
from core.lppl_model import BubbleClass, LpplFit, classify_fit
from core.rebound import ReboundSet, is_near

logger = logging.getLogger(__name__)


class ClassLabel(str, Enum):
    CLASS_I = "ClassI"
    CLASS_II = "ClassII"


def assign_class(fit: LpplFit, rebounds: ReboundSet, D: float = NEAR_DAYS) -> ClassLabel:
    return ClassLabel.CLASS_I if is_near(fit.tc, rebounds, D) else ClassLabel.CLASS_II


def assign_group(fit: Union[LpplFit, int]) -> int:
    """Length bin [100i, 100i + 100]; a shared boundary belongs to the lower bin."""
    length = fit.length if isinstance(fit, LpplFit) else int(fit)
    lowest, highest = GROUP_WIDTH, GROUP_WIDTH * (NUM_GROUPS + 1)
    if not lowest <= length <= highest:
        raise ValidationError(f"fit length {length} outside [{lowest}, {highest}]")
    return min(NUM_GROUPS, max(1, math.ceil(length / GROUP_WIDTH) - 1))


def learning_fit_set(fits: Iterable[LpplFit], cutoff, negative_only: bool = False) -> List[LpplFit]:
    """Fits with t_c and t_2 before the cutoff, grouped; optionally negative bubbles only."""
    cut = day_number(cutoff)
    selected = []
    for fit in fits:
        if fit.tc < cut and day_number(fit.window.t2) < cut:
            if negative_only and classify_fit(fit) is not BubbleClass.NEGATIVE:
                continue
            selected.append(fit if fit.group is not None else fit.with_group(assign_group(fit)))
    return selected


# ---------------------------------------------------------------------------
# Informative parameters
# ---------------------------------------------------------------------------

Interval = Tuple[float, float]


@dataclass(frozen=True)
class InformativeParam:
    id: int
    group: int
    param_index: int
    good_region: Tuple[Interval, ...]
    ks_distance: float = 0.0
    ks_pvalue: float = float("nan")

    def __post_init__(self):
        if self.id != 6 * self.group + self.param_index:
            raise ValidationError(f"IP id {self.id} != 6*{self.group}+{self.param_index}")

    @property
    def name(self) -> str:
        return PATTERN_PARAMS[self.param_index - 1]

    def contains(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        inside = np.zeros(values.shape, dtype=bool)
        for lo, hi in self.good_region:
            inside |= (values >= lo) & (values <= hi)
        return inside


def _regions(grid: np.ndarray, mask: np.ndarray) -> Tuple[Interval, ...]:
    """Maximal runs of True grid points as closed intervals."""
    if not mask.any():
        return ()
    padded = np.concatenate([[False], mask, [False]]).astype(int)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1) - 1
    return tuple((float(grid[a]), float(grid[b])) for a, b in zip(starts, stops))


def _shared_grid(name: str, values: np.ndarray, bandwidth: float, points: int, pad: float) -> np.ndarray:
    lo = values.min() - pad * bandwidth
    hi = values.max() + pad * bandwidth
    if name in PARAM_BOUNDS:
        lo = max(lo, PARAM_BOUNDS[name][0])
        hi = min(hi, PARAM_BOUNDS[name][1])
    if not hi > lo:
        hi = lo + max(bandwidth, 1e-9)
    return np.linspace(lo, hi, points)


def find_informative_params(learning_fits: Sequence[LpplFit], rebounds: ReboundSet,
                            D: float = NEAR_DAYS, threshold: float = KS_THRESHOLD,
                            grid_points: int = KDE_GRID_POINTS,
                            pad: float = KDE_PAD_BANDWIDTHS) -> List[InformativeParam]:
    """(group, parameter) pairs whose class-conditional KDE CDFs differ by more than `threshold`."""
    groups = np.array([f.group if f.group is not None else assign_group(f) for f in learning_fits])
    near = np.array([is_near(f.tc, rebounds, D) for f in learning_fits], dtype=bool)
    values = {name: np.array([f.value(name) for f in learning_fits], dtype=float)
              for name in PATTERN_PARAMS}

    found = []
    for group in range(1, NUM_GROUPS + 1):
        in_group = groups == group
        class_1 = in_group & near
        class_2 = in_group & ~near
        if class_1.sum() == 0 or class_2.sum() == 0:
            continue
        for j, name in enumerate(PATTERN_PARAMS, start=1):
            x1, x2 = values[name][class_1], values[name][class_2]
            try:
                kde_1, kde_2 = adaptive_kde(x1), adaptive_kde(x2)
            except InsufficientDataError:
                logger.debug(f"group {group} param {name}: too few samples for a KDE")
                continue
            bandwidth = max(kde_1.pilot_bandwidth, kde_2.pilot_bandwidth)
            grid = _shared_grid(name, np.concatenate([x1, x2]), bandwidth, grid_points, pad)
            distance = float(np.max(np.abs(kde_1.cdf(grid) - kde_2.cdf(grid))))
            if distance <= threshold:
                continue
            region = _regions(grid, kde_1.pdf(grid) > kde_2.pdf(grid))
            pvalue = float(stats.ks_2samp(x1, x2).pvalue)
            found.append(InformativeParam(id=6 * group + j, group=group, param_index=j,
                                          good_region=region, ks_distance=distance,
                                          ks_pvalue=pvalue))

    found.sort(key=lambda ip: ip.id)
    logger.info(f"Found {len(found)} informative parameters from {len(learning_fits)} learning fits")
    return found


# ---------------------------------------------------------------------------
# Questionnaires
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Questionnaire:
    t_scan: np.datetime64
    answers: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.answers)


class QuestionnaireBuilder:
    """Answers for many scan days over a fixed fit subset and IP list."""

    def __init__(self, fits: Sequence[LpplFit], ips: Sequence[InformativeParam], D: float = NEAR_DAYS):
        self.ips = list(ips)
        self.D = D
        tc = np.array([f.tc for f in fits], dtype=float)
        order = np.argsort(tc, kind="stable")
        self.tc_sorted = tc[order]
        sorted_fits = [fits[i] for i in order]
        groups = np.array([f.group if f.group is not None else assign_group(f) for f in sorted_fits],
                          dtype=int)

        L, n = len(self.ips), len(sorted_fits)
        inside = np.zeros((L, n), dtype=np.int64)
        outside = np.zeros((L, n), dtype=np.int64)
        for row, ip in enumerate(self.ips):
            member = groups == ip.group
            vals = np.array([f.value(ip.name) for f in sorted_fits], dtype=float)
            hit = ip.contains(vals)
            inside[row] = member & hit
            outside[row] = member & ~hit
        zeros = np.zeros((L, 1), dtype=np.int64)
        self._cum_in = np.concatenate([zeros, np.cumsum(inside, axis=1)], axis=1)
        self._cum_out = np.concatenate([zeros, np.cumsum(outside, axis=1)], axis=1)

    def answers(self, days: np.ndarray) -> np.ndarray:
        """(len(days), L) matrix of answers in {-1, 0, 1}; `days` are day numbers."""
        days = np.asarray(days, dtype=float)
        lo = np.searchsorted(self.tc_sorted, days - self.D, side="left")
        hi = np.searchsorted(self.tc_sorted, days + self.D, side="right")
        p_in = self._cum_in[:, hi] - self._cum_in[:, lo]
        p_out = self._cum_out[:, hi] - self._cum_out[:, lo]
        return np.sign(p_in - p_out).T.astype(np.int8)


def build_questionnaire(t_scan, fits: Sequence[LpplFit], ips: Sequence[InformativeParam],
                        D: float = NEAR_DAYS) -> Questionnaire:
    if not ips:
        raise ValidationError("questionnaires need at least one informative parameter")
    row = QuestionnaireBuilder(fits, ips, D).answers(np.array([day_number(t_scan)]))[0]
    return Questionnaire(t_scan=to_day(t_scan), answers=tuple(int(a) for a in row))


# ---------------------------------------------------------------------------
# Traits
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class Trait:
    p: int
    q: int
    r: int
    values: Tuple[int, ...]


def trait_universe_size(L: int) -> int:
    """Distinct traits over every questionnaire of length L."""
    return 3 * L + 9 * math.comb(L, 2) + 27 * math.comb(L, 3)


class TraitCodec:
    """Integer codes for the traits of length-L questionnaires.

    Position selections are ordered lexicographically by (p, q, r); the code of a
    trait is `selection_index * 27 + value_code`.
    """

    def __init__(self, L: int):
        if L < 1:
            raise ValidationError("questionnaire length must be >= 1")
        self.L = L
        selections = [(i, i, i) for i in range(L)]
        selections += [(i, j, j) for i, j in itertools.combinations(range(L), 2)]
        selections += list(itertools.combinations(range(L), 3))
        arr = np.array(selections, dtype=np.int64).reshape(-1, 3)
        order = np.lexsort((arr[:, 2], arr[:, 1], arr[:, 0]))
        arr = arr[order]
        self.P, self.Q, self.R = arr[:, 0], arr[:, 1], arr[:, 2]
        self.size = 1 + (self.Q != self.P).astype(np.int64) + (self.R != self.Q).astype(np.int64)
        self.offsets = np.arange(len(arr), dtype=np.int64) * 27

    def __len__(self) -> int:
        return len(self.P)

    @property
    def universe(self) -> int:
        return len(self) * 27

    def codes(self, answers: Sequence[int]) -> np.ndarray:
        a = np.asarray(answers, dtype=np.int64) + 1
        if a.shape != (self.L,):
            raise ValidationError(f"expected {self.L} answers, got {a.shape}")
        return self.offsets + a[self.P] * 9 + a[self.Q] * 3 + a[self.R]

    def decode(self, code: int) -> Trait:
        k, value_code = divmod(int(code), 27)
        digits = (value_code // 9 - 1, (value_code // 3) % 3 - 1, value_code % 3 - 1)
        p, q, r = int(self.P[k]) + 1, int(self.Q[k]) + 1, int(self.R[k]) + 1
        size = int(self.size[k])
        if size == 1:
            return Trait(p, p, p, (digits[0],))
        if size == 2:
            return Trait(p, r, r, (digits[0], digits[2]))
        return Trait(p, q, r, digits)

    def encode(self, trait: Trait) -> int:
        p, q, r = trait.p - 1, trait.q - 1, trait.r - 1
        hits = np.flatnonzero((self.P == p) & (self.Q == q) & (self.R == r))
        if hits.size != 1 or len(trait.values) != int(self.size[hits[0]]):
            raise ValidationError(f"not a trait of a length-{self.L} questionnaire: {trait}")
        v = list(trait.values)
        if len(v) == 1:
            full = [v[0]] * 3
        elif len(v) == 2:
            full = [v[0], v[1], v[1]]
        else:
            full = v
        return int(self.offsets[hits[0]] + (full[0] + 1) * 9 + (full[1] + 1) * 3 + (full[2] + 1))


def enumerate_traits(q: Questionnaire) -> List[Trait]:
    codec = TraitCodec(len(q))
    return [codec.decode(c) for c in codec.codes(q.answers)]


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------

@dataclass
class TraitBags:
    """Trait occurrence counts over the learning scan, near (I) and far (II) from rebounds."""

    codec: TraitCodec
    counts_I: np.ndarray
    counts_II: np.ndarray
    informative: Tuple[InformativeParam, ...] = ()
    cutoff: Optional[np.datetime64] = None
    near_days: float = NEAR_DAYS

    @classmethod
    def from_counters(cls, L: int, bag_I: Counter, bag_II: Counter, **kwargs) -> "TraitBags":
        codec = TraitCodec(L)
        counts_I = np.zeros(codec.universe, dtype=np.int64)
        counts_II = np.zeros(codec.universe, dtype=np.int64)
        for trait, count in bag_I.items():
            counts_I[codec.encode(trait)] += count
        for trait, count in bag_II.items():
            counts_II[codec.encode(trait)] += count
        return cls(codec, counts_I, counts_II, **kwargs)


@dataclass
class FeatureSet:
    codec: TraitCodec
    class_I_codes: np.ndarray
    class_II_codes: np.ndarray
    qualification: Tuple[int, int]
    counts_I: np.ndarray = field(repr=False, default=None)
    counts_II: np.ndarray = field(repr=False, default=None)
    informative: Tuple[InformativeParam, ...] = ()
    cutoff: Optional[np.datetime64] = None
    near_days: float = NEAR_DAYS

    @property
    def class_I(self) -> frozenset:
        return frozenset(self.codec.decode(c) for c in self.class_I_codes)

    @property
    def class_II(self) -> frozenset:
        return frozenset(self.codec.decode(c) for c in self.class_II_codes)

    def is_empty(self) -> bool:
        return self.class_I_codes.size == 0 and self.class_II_codes.size == 0

    def matches(self, codes: np.ndarray) -> Tuple[int, int]:
        """(nu_I, nu_II) for one questionnaire's trait codes."""
        nu_I = int(np.isin(codes, self.class_I_codes, assume_unique=True).sum())
        nu_II = int(np.isin(codes, self.class_II_codes, assume_unique=True).sum())
        return nu_I, nu_II


def build_trait_bags(learning_fits: Sequence[LpplFit], ips: Sequence[InformativeParam],
                     rebounds: ReboundSet, cutoff, D: float = NEAR_DAYS) -> TraitBags:
    """Scan each calendar day from the smallest learning t_c up to the cutoff."""
    if not ips:
        raise ValidationError("no informative parameters; cannot build trait bags")
    codec = TraitCodec(len(ips))
    counts_I = np.zeros(codec.universe, dtype=np.int64)
    counts_II = np.zeros(codec.universe, dtype=np.int64)
    cut = day_number(cutoff)
    bags = TraitBags(codec, counts_I, counts_II, tuple(ips), to_day(cutoff), D)
    if not learning_fits:
        return bags

    start = math.floor(min(f.tc for f in learning_fits))
    days = np.arange(start, cut, dtype=float)
    answers = QuestionnaireBuilder(learning_fits, ips, D).answers(days)
    rb = rebounds.between(end=cutoff).day_numbers
    near = (np.min(np.abs(days[:, None] - rb[None, :]), axis=1) <= D) if rb.size else np.zeros(len(days), bool)

    for mask, counts in ((near, counts_I), (~near, counts_II)):
        if not mask.any():
            continue
        unique, multiplicity = np.unique(answers[mask], axis=0, return_counts=True)
        for row, times in zip(unique, multiplicity):
            counts[codec.codes(row)] += times
    logger.info(f"Trait bags: {int(near.sum())} near-rebound days, {int((~near).sum())} other days")
    return bags


def extract_features(trait_bags: TraitBags, alpha: int, beta: int) -> FeatureSet:
    """Class I: count_I > alpha and count_II < beta; Class II: count_I <= alpha and count_II >= beta."""
    cI, cII = trait_bags.counts_I, trait_bags.counts_II
    observed = (cI + cII) > 0
    class_I = np.flatnonzero(observed & (cI > alpha) & (cII < beta))
    class_II = np.flatnonzero(observed & (cI <= alpha) & (cII >= beta))
    return FeatureSet(codec=trait_bags.codec, class_I_codes=class_I, class_II_codes=class_II,
                      qualification=(alpha, beta), counts_I=cI, counts_II=cII,
                      informative=trait_bags.informative, cutoff=trait_bags.cutoff,
                      near_days=trait_bags.near_days)


def learn_features(trait_bags: TraitBags, qualifications: Sequence[Tuple[int, int]]) -> Dict[Tuple[int, int], FeatureSet]:
    return {(a, b): extract_features(trait_bags, a, b) for a, b in qualifications}


# ---------------------------------------------------------------------------
# Rebound alarm index
# ---------------------------------------------------------------------------

def _ratio(nu_I: int, nu_II: int) -> float:
    total = nu_I + nu_II
    return nu_I / total if total > 0 else 0.0


def alarm_index(t, features: FeatureSet, q: Questionnaire) -> float:
    """RI = nu_I / (nu_I + nu_II), 0 when no trait of `q` is a feature."""
    if features.is_empty():
        return 0.0
    return _ratio(*features.matches(features.codec.codes(q.answers)))


@dataclass
class AlarmSeries:
    """Daily rebound alarm index with provenance.

    `max_fit_t2` records, per day, the latest window end of any fit that fed the
    value (NaN when none); it is the input to the leakage audit.
    """

    dates: np.ndarray
    values: np.ndarray
    mode: str
    qualification: Tuple[int, int]
    max_fit_t2: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def day_numbers(self) -> np.ndarray:
        return np.asarray(self.dates, dtype="datetime64[D]").astype("int64").astype(float)

    def value_at(self, day) -> float:
        idx = np.searchsorted(self.dates, to_day(day))
        if idx >= len(self.dates) or self.dates[idx] != to_day(day):
            raise ValidationError(f"no alarm value on {day}")
        return float(self.values[idx])

    def until(self, last_day) -> "AlarmSeries":
        keep = self.dates <= to_day(last_day)
        t2 = None if self.max_fit_t2 is None else self.max_fit_t2[keep]
        return AlarmSeries(self.dates[keep], self.values[keep], self.mode, self.qualification, t2)


def _index_rows(features: FeatureSet, answers: np.ndarray) -> np.ndarray:
    """RI for each answer row, computing each distinct questionnaire once."""
    if features.is_empty() or answers.shape[1] == 0:
        return np.zeros(len(answers))
    unique, inverse = np.unique(answers, axis=0, return_inverse=True)
    per_unique = np.array([_ratio(*features.matches(features.codec.codes(row))) for row in unique])
    return per_unique[np.asarray(inverse).reshape(-1)]


def learning_series(learning_fits: Sequence[LpplFit], features: FeatureSet,
                    start=None, end=None) -> AlarmSeries:
    """Back-test alarm index: every day of the learning scan, questionnaires over the learning fits."""
    end_day = day_number(end if end is not None else features.cutoff)
    if start is not None:
        start_day = day_number(start)
    else:
        start_day = math.floor(min(f.tc for f in learning_fits)) if learning_fits else end_day
    days = np.arange(start_day, end_day, dtype=float)
    if features.informative and learning_fits:
        answers = QuestionnaireBuilder(learning_fits, features.informative, features.near_days).answers(days)
        values = _index_rows(features, answers)
    else:
        values = np.zeros(len(days))
    dates = days.astype("int64").astype("datetime64[D]")
    return AlarmSeries(dates, values, "learning", features.qualification, None)


def predict_series(all_fits: Sequence[LpplFit], features: FeatureSet, t_start, t_end,
                   step: int = PREDICTION_STEP) -> AlarmSeries:
    """Prediction alarm index for every day of [t_start, t_end].

    Scan points are the distinct window ends t_2 of `all_fits` (the backward
    t_2 grid of the windows, `step` days apart). A day t takes the index
    computed at the latest scan point g < t from the fits with t_2 <= g, so it
    is constant on (g, next g]. Days with no earlier scan point get 0.
    """
    start, end = day_number(t_start), day_number(t_end)
    if features.cutoff is not None and day_number(features.cutoff) > start:
        raise ValidationError(f"features learned up to {features.cutoff} cannot predict from {t_start}")

    fits = sorted(all_fits, key=lambda f: day_number(f.window.t2))
    t2 = np.array([day_number(f.window.t2) for f in fits], dtype=float)
    scan_points = np.unique(t2)
    days = np.arange(start, end + 1, dtype=float)
    anchor = np.searchsorted(scan_points, days, side="left") - 1

    values = np.zeros(len(days))
    used_t2 = np.full(len(days), np.nan)
    usable = features.informative and not features.is_empty()
    for k in np.unique(anchor[anchor >= 0]):
        g = scan_points[k]
        on_days = anchor == k
        used_t2[on_days] = g
        if not usable:
            continue
        subset = fits[:int(np.searchsorted(t2, g, side="right"))]
        answers = QuestionnaireBuilder(subset, features.informative, features.near_days).answers(np.array([g]))
        values[on_days] = _index_rows(features, answers)[0]

    if scan_points.size > 1 and np.max(np.diff(scan_points)) > step:
        logger.warning(f"Scan points more than {step} days apart; alarm values are held across the gap")
    dates = days.astype("int64").astype("datetime64[D]")
    logger.info(f"Predicted {len(np.unique(anchor[anchor >= 0]))} scan points over {len(days)} days "
                f"for {features.qualification}")
    return AlarmSeries(dates, values, "prediction", features.qualification, used_t2)


def audit_no_leakage(series: AlarmSeries) -> bool:
    """True when every day's value used only fits whose windows ended before that day."""
    if series.max_fit_t2 is None:
        return series.mode != "prediction"
    used = ~np.isnan(series.max_fit_t2)
    return bool(np.all(series.max_fit_t2[used] < series.day_numbers[used]))
