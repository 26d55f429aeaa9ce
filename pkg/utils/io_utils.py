"""CSV/JSON persistence for pipeline artifacts and the fit cache."""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.data_ingest import WindowSpec, to_day
from core.errors import DataError, ParseError
from core.evaluation import BayesEstimate, ErrorDiagramPoint
from core.lppl_model import FIT_FIELDS, LpplFit, fit_from_record, fit_to_record
from core.optimizer import FitOutcome
from core.pattern import AlarmSeries, FeatureSet, InformativeParam, Trait, TraitCodec
from core.rebound import ReboundSet
from core.trading import Trade

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.17g"


def ensure_dir(path: PathLike) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path


def write_frame(frame: pd.DataFrame, path: PathLike, header_comment: Optional[str] = None) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    with open(path, "w", newline="") as handle:
        if header_comment:
            handle.write(f"# {header_comment}\n")
        frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def read_frame(path: PathLike, **kwargs) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing artifact: {path}")
    try:
        kwargs.setdefault("float_precision", "round_trip")
        return pd.read_csv(path, comment="#", **kwargs)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"unreadable {path}: {exc}") from exc


def _json_default(value: Any) -> Any:
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.datetime64):
        return str(value)
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def write_json(payload: Dict[str, Any], path: PathLike) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, default=_json_default)
        handle.write("\n")
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    with open(path) as handle:
        return json.load(handle)


# Windows and rebounds

def export_windows_csv(windows: Sequence[WindowSpec], path: PathLike) -> Path:
    frame = pd.DataFrame({"t1": [str(w.t1) for w in windows],
                          "t2": [str(w.t2) for w in windows],
                          "length": [w.length for w in windows]})
    return write_frame(frame, path)


def read_windows_csv(path: PathLike) -> List[WindowSpec]:
    frame = read_frame(path, dtype={"t1": str, "t2": str})
    return [WindowSpec(to_day(a), to_day(b)) for a, b in zip(frame["t1"], frame["t2"])]


def export_rebounds_csv(rebounds: ReboundSet, path: PathLike) -> Path:
    frame = pd.DataFrame({"date": [str(d) for d in rebounds.dates]})
    return write_frame(frame, path, header_comment=f"half_width={rebounds.half_width}")


def read_rebounds_csv(path: PathLike, half_width: int) -> ReboundSet:
    frame = read_frame(path, dtype={"date": str})
    return ReboundSet(np.array([to_day(d) for d in frame["date"]], dtype="datetime64[D]"), half_width)


# Fit cache

CACHE_FIELDS = FIT_FIELDS + ["config_hash", "status", "error"]


class FitCache:
    """Fits (and failures) keyed by (t1, t2, optimizer config hash).

    The file is rewritten sorted by key on every save, so its bytes depend only
    on its content.
    """

    def __init__(self, path: PathLike):
        self.path = Path(path)
        self.records: Dict[Tuple[str, str, str], Dict[str, Any]] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        frame = read_frame(self.path, dtype={"t1": str, "t2": str, "config_hash": str,
                                             "status": str, "error": str},
                           keep_default_na=False, na_values={c: [""] for c in FIT_FIELDS[2:]})
        missing = set(CACHE_FIELDS) - set(frame.columns)
        if missing:
            raise ParseError(f"fit cache {self.path} lacks columns {sorted(missing)}")
        for record in frame.to_dict(orient="records"):
            self.records[(record["t1"], record["t2"], record["config_hash"])] = record
        logger.info(f"Loaded {len(self.records)} cached fit records from {self.path}")

    def __contains__(self, key: Tuple[WindowSpec, str]) -> bool:
        window, digest = key
        return (str(window.t1), str(window.t2), digest) in self.records

    def missing(self, windows: Iterable[WindowSpec], digest: str) -> List[WindowSpec]:
        return [w for w in windows if (w, digest) not in self]

    def add(self, outcome: FitOutcome, digest: str) -> None:
        if outcome.fit is not None:
            record = fit_to_record(outcome.fit)
            record.update(config_hash=digest, status="ok", error="")
        else:
            record = {name: np.nan for name in FIT_FIELDS}
            record.update(t1=str(outcome.window.t1), t2=str(outcome.window.t2),
                          config_hash=digest, status="failed", error=outcome.error or "")
        self.records[(record["t1"], record["t2"], digest)] = record

    def fits(self, digest: str, windows: Optional[Sequence[WindowSpec]] = None) -> List[LpplFit]:
        """Successful fits for `digest`, in window order."""
        keys = (sorted(k for k in self.records if k[2] == digest) if windows is None
                else [(str(w.t1), str(w.t2), digest) for w in windows])
        return [fit_from_record(self.records[k]) for k in keys
                if k in self.records and self.records[k]["status"] == "ok"]

    def failures(self, digest: str) -> int:
        return sum(1 for k, r in self.records.items() if k[2] == digest and r["status"] != "ok")

    def save(self) -> Path:
        rows = [self.records[k] for k in sorted(self.records)]
        frame = pd.DataFrame(rows, columns=CACHE_FIELDS)
        return write_frame(frame, self.path)


# Pattern artifacts

def _format_region(region: Sequence[Tuple[float, float]]) -> str:
    return "|".join(f"{lo!r}:{hi!r}" for lo, hi in region)


def _parse_region(text: str) -> Tuple[Tuple[float, float], ...]:
    if not isinstance(text, str) or not text:
        return ()
    pairs = (chunk.split(":") for chunk in text.split("|"))
    return tuple((float(lo), float(hi)) for lo, hi in pairs)


def write_informative_params(ips: Sequence[InformativeParam], path: PathLike) -> Path:
    frame = pd.DataFrame({
        "id": [ip.id for ip in ips],
        "group": [ip.group for ip in ips],
        "param_index": [ip.param_index for ip in ips],
        "param": [ip.name for ip in ips],
        "ks_distance": [ip.ks_distance for ip in ips],
        "ks_pvalue": [ip.ks_pvalue for ip in ips],
        "good_region": [_format_region(ip.good_region) for ip in ips],
    }, columns=["id", "group", "param_index", "param", "ks_distance", "ks_pvalue", "good_region"])
    return write_frame(frame, path)


def read_informative_params(path: PathLike) -> List[InformativeParam]:
    frame = read_frame(path, dtype={"good_region": str}, keep_default_na=False)
    return [InformativeParam(id=int(r["id"]), group=int(r["group"]), param_index=int(r["param_index"]),
                             good_region=_parse_region(r["good_region"]),
                             ks_distance=float(r["ks_distance"]), ks_pvalue=float(r["ks_pvalue"]))
            for r in frame.to_dict(orient="records")]


def write_features(features: FeatureSet, path: PathLike) -> Path:
    rows = []
    for label, codes in (("I", features.class_I_codes), ("II", features.class_II_codes)):
        for code in codes:
            trait = features.codec.decode(code)
            rows.append({
                "feature_class": label,
                "p": trait.p, "q": trait.q, "r": trait.r,
                "values": ";".join(str(v) for v in trait.values),
                "count_I": int(features.counts_I[code]) if features.counts_I is not None else 0,
                "count_II": int(features.counts_II[code]) if features.counts_II is not None else 0,
            })
    frame = pd.DataFrame(rows, columns=["feature_class", "p", "q", "r", "values", "count_I", "count_II"])
    alpha, beta = features.qualification
    return write_frame(frame, path, header_comment=f"alpha={alpha} beta={beta} traits={len(features.codec)}")


def read_features(path: PathLike, ips: Sequence[InformativeParam], qualification: Tuple[int, int],
                  cutoff, near_days: float) -> FeatureSet:
    frame = read_frame(path, dtype={"feature_class": str, "values": str}, keep_default_na=False)
    codec = TraitCodec(len(ips))
    codes = {"I": [], "II": []}
    for r in frame.to_dict(orient="records"):
        trait = Trait(int(r["p"]), int(r["q"]), int(r["r"]),
                      tuple(int(v) for v in str(r["values"]).split(";")))
        codes[r["feature_class"]].append(codec.encode(trait))
    return FeatureSet(codec=codec,
                      class_I_codes=np.array(sorted(codes["I"]), dtype=np.int64),
                      class_II_codes=np.array(sorted(codes["II"]), dtype=np.int64),
                      qualification=tuple(qualification), informative=tuple(ips),
                      cutoff=to_day(cutoff), near_days=near_days)


def write_alarm_series(series: AlarmSeries, path: PathLike) -> Path:
    frame = pd.DataFrame({"date": series.dates.astype(str), "ri": series.values})
    if series.max_fit_t2 is not None:
        frame["max_fit_t2"] = series.max_fit_t2
    alpha, beta = series.qualification
    return write_frame(frame, path, header_comment=f"mode={series.mode} alpha={alpha} beta={beta}")


def read_alarm_series(path: PathLike, mode: str, qualification: Tuple[int, int]) -> AlarmSeries:
    frame = read_frame(path, dtype={"date": str})
    dates = np.array([to_day(d) for d in frame["date"]], dtype="datetime64[D]")
    t2 = frame["max_fit_t2"].to_numpy(dtype=float) if "max_fit_t2" in frame else None
    return AlarmSeries(dates, frame["ri"].to_numpy(dtype=float), mode, tuple(qualification), t2)


# Evaluation and trading artifacts

def write_error_diagram(points: Sequence[ErrorDiagramPoint], path: PathLike) -> Path:
    frame = pd.DataFrame([(p.threshold, p.alarm_fraction, p.miss_fraction) for p in points],
                         columns=["threshold", "alarm_fraction", "miss_fraction"])
    return write_frame(frame, path)


def write_bayes(estimates: Sequence[BayesEstimate], path: PathLike) -> Path:
    frame = pd.DataFrame([(str(e.date), e.Lv, e.p_rebound, e.p_ri_given_rebound, e.p_ri, e.posterior)
                          for e in estimates],
                         columns=["date", "Lv", "prior", "likelihood", "evidence", "posterior"])
    return write_frame(frame, path)


def write_trades(trades: Sequence[Trade], path: PathLike) -> Path:
    frame = pd.DataFrame([(str(t.entry_date), str(t.exit_date), t.log_return, t.excess_log_return,
                           t.duration_days) for t in trades],
                         columns=["entry", "exit", "log_return", "excess", "duration_days"])
    return write_frame(frame, path)
