"""Stage orchestrator: windows -> fit-all -> learn -> predict -> evaluate / backtest -> report."""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from config.pipeline import PipelineConfig
from core.data_ingest import PriceSeries, generate_windows, load_price_csv, load_rate_csv, log_prices
from core.errors import ConfigError, StageOrderError, ValidationError
from core.evaluation import average_posterior, bayes_series, error_diagram, mean_diagonal_offset
from core.lppl_model import BubbleClass, classify_fit, omega_filter_flag
from core.optimizer import config_hash, fit_windows
from core.pattern import (
    ClassLabel,
    assign_class,
    audit_no_leakage,
    build_trait_bags,
    find_informative_params,
    learn_features,
    learning_fit_set,
    learning_series,
    predict_series,
)
from core.rebound import ReboundSet, detect_rebounds
from core.trading import (
    DailyMarket,
    fixed_duration_benchmark,
    generate_trades,
    random_strategy_pvalue,
    score_trades,
    wealth_trajectory,
)
from utils import io_utils

logger = logging.getLogger(__name__)

STAGE_OF = {
    "windows": "windows",
    "fits": "fit-all",
    "informative": "learn",
    "features": "learn",
    "alarms": "predict",
}


class PipelineRunner:
    """Runs one stage at a time; every stage reads its inputs from the output directory."""

    def __init__(self, config: PipelineConfig, progress: bool = True):
        self.config = config
        self.progress = progress
        self.digest = config_hash(config.optimizer)
        io_utils.ensure_dir(config.out_dir)
        self._prices: Optional[PriceSeries] = None

    # helpers

    @property
    def prices(self) -> PriceSeries:
        if self._prices is None:
            self._prices = load_price_csv(self.config.data_path)
        return self._prices

    def _path(self, kind: str, **fields) -> Path:
        return self.config.output_path(kind, **fields)

    def _require(self, kind: str, **fields) -> Path:
        path = self._path(kind, **fields)
        if not path.exists():
            raise StageOrderError(f"{path} not found; run `{STAGE_OF[kind]}` first")
        return path

    def _rebounds(self) -> ReboundSet:
        return detect_rebounds(self.prices, self.config.half_width, open_end=self.config.rebound_open_end)

    def _fits(self):
        windows = io_utils.read_windows_csv(self._require("windows"))
        cache = io_utils.FitCache(self._require("fits"))
        return cache.fits(self.digest, windows)

    def _features(self, alpha: int, beta: int):
        ips = io_utils.read_informative_params(self._require("informative"))
        return io_utils.read_features(self._require("features", alpha=alpha, beta=beta), ips,
                                      (alpha, beta), self.config.learning_cutoff,
                                      self.config.near_days)

    # stages

    def windows(self) -> Dict[str, Any]:
        windows = generate_windows(self.prices, self.config.window_rules, self.config.window_anchor)
        io_utils.export_windows_csv(windows, self._path("windows"))
        rebounds = self._rebounds()
        io_utils.export_rebounds_csv(rebounds, self._path("rebounds"))
        logger.info(f"Wrote {len(windows)} windows and {len(rebounds)} rebounds")
        return {"windows": len(windows), "rebounds": len(rebounds)}

    def fit_all(self, jobs: Optional[int] = None) -> Dict[str, Any]:
        windows = io_utils.read_windows_csv(self._require("windows"))
        cache = io_utils.FitCache(self._path("fits"))
        todo = cache.missing(windows, self.digest)
        logger.info(f"{len(windows) - len(todo)} windows cached, {len(todo)} to fit")

        log_series = log_prices(self.prices)
        outcomes = fit_windows(log_series, todo, self.config.optimizer,
                               jobs=jobs or self.config.jobs, progress=self.progress)
        for outcome in outcomes:
            if outcome.error:
                logger.warning(f"Fit failed for {outcome.window.key()}: {outcome.error}")
            cache.add(outcome, self.digest)
        cache.save()

        fits = cache.fits(self.digest, windows)
        negative = sum(1 for f in fits if classify_fit(f) is BubbleClass.NEGATIVE)
        flagged = sum(1 for f in fits if omega_filter_flag(f))
        logger.info(f"{negative} negative-bubble fits; {flagged} fits have omega above the filter bound")
        return {"new_fits": len(todo), "fits": len(fits), "failures": cache.failures(self.digest),
                "negative_bubbles": negative}

    def learn(self) -> Dict[str, Any]:
        cfg = self.config
        fits = self._fits()
        rebounds = self._rebounds().between(end=cfg.learning_cutoff)
        learning = learning_fit_set(fits, cfg.learning_cutoff, negative_only=cfg.negative_only)
        class_1 = sum(1 for f in learning if assign_class(f, rebounds, cfg.near_days) is ClassLabel.CLASS_I)
        if class_1 == 0:
            raise ValidationError("no Class I fits: no rebounds in learning period")

        ips = find_informative_params(learning, rebounds, cfg.near_days, cfg.ks_threshold)
        io_utils.write_informative_params(ips, self._path("informative"))
        if not ips:
            raise ValidationError("no informative parameters in the learning set")

        bags = build_trait_bags(learning, ips, rebounds, cfg.learning_cutoff, cfg.near_days)
        summary: Dict[str, Any] = {"learning_fits": len(learning), "class_I_fits": class_1,
                                   "informative_params": len(ips), "features": {}}
        for (alpha, beta), features in learn_features(bags, cfg.qualifications).items():
            io_utils.write_features(features, self._path("features", alpha=alpha, beta=beta))
            series = learning_series(learning, features)
            io_utils.write_alarm_series(series, self._path("learning_alarms", alpha=alpha, beta=beta))
            summary["features"][f"{alpha}_{beta}"] = {"class_I": int(features.class_I_codes.size),
                                                      "class_II": int(features.class_II_codes.size)}
        return summary

    def predict(self) -> Dict[str, Any]:
        cfg = self.config
        fits = self._fits()
        summary = {}
        for alpha, beta in cfg.qualifications:
            features = self._features(alpha, beta)
            series = predict_series(fits, features, cfg.learning_cutoff, cfg.prediction_end,
                                    cfg.prediction_step)
            if not audit_no_leakage(series):
                raise ValidationError(f"leakage audit failed for qualification ({alpha}, {beta})")
            io_utils.write_alarm_series(series, self._path("alarms", alpha=alpha, beta=beta))
            summary[f"{alpha}_{beta}"] = {"days": len(series), "max_ri": float(np.max(series.values, initial=0.0))}
        return summary

    def evaluate(self) -> Dict[str, Any]:
        cfg = self.config
        rebounds = self._rebounds()
        summary: Dict[str, Any] = {}
        posteriors = {}
        for alpha, beta in cfg.qualifications:
            key = f"{alpha}_{beta}"
            alarms = io_utils.read_alarm_series(self._require("alarms", alpha=alpha, beta=beta),
                                                "prediction", (alpha, beta))
            points = error_diagram(alarms, rebounds, cfg.alarm_duration, cfg.alarm_offset)
            io_utils.write_error_diagram(points, self._path("error_diagram", mode="prediction",
                                                            alpha=alpha, beta=beta))
            entry = {"prediction_points": len(points), "prediction_offset": mean_diagonal_offset(points)}

            learning_path = self._path("learning_alarms", alpha=alpha, beta=beta)
            if learning_path.exists():
                learning = io_utils.read_alarm_series(learning_path, "learning", (alpha, beta))
                lpoints = error_diagram(learning, rebounds.between(end=cfg.learning_cutoff),
                                        cfg.alarm_duration, cfg.alarm_offset)
                io_utils.write_error_diagram(lpoints, self._path("error_diagram", mode="learning",
                                                                 alpha=alpha, beta=beta))
                entry.update(learning_points=len(lpoints), learning_offset=mean_diagonal_offset(lpoints))

            estimates = bayes_series(alarms, self.prices, cfg.half_width, start=cfg.bayes_start,
                                     D_rw=cfg.rebound_width, neighborhood=cfg.bayes_neighborhood,
                                     lookback=cfg.lv_lookback, history_start=cfg.learning_cutoff)
            io_utils.write_bayes(estimates, self._path("bayes", alpha=alpha, beta=beta))
            posteriors[(alpha, beta)] = estimates
            entry["bayes_days"] = len(estimates)
            summary[key] = entry

        averaged = average_posterior(posteriors)
        io_utils.write_frame(pd.DataFrame({"date": [str(d) for d, _ in averaged],
                                           "posterior": [p for _, p in averaged]}),
                             self._path("bayes_average"))
        return summary

    def backtest(self, seed: Optional[int] = None) -> Dict[str, Any]:
        cfg = self.config
        if cfg.rate_path is None:
            raise ConfigError("backtest needs a risk-free rate file (rate_path)")
        rates = load_rate_csv(cfg.rate_path)
        seed = cfg.seed if seed is None else seed
        summary: Dict[str, Any] = {}
        for alpha, beta in cfg.qualifications:
            alarms = io_utils.read_alarm_series(self._require("alarms", alpha=alpha, beta=beta),
                                                "prediction", (alpha, beta)).until(self.prices.end)
            market = DailyMarket.build(self.prices, rates, alarms.dates[0], alarms.dates[-1], cfg.cost_bps)
            for name, params in cfg.strategy_params().items():
                report = score_trades(generate_trades(alarms, params), market)
                if report.trades:
                    report.p_values = random_strategy_pvalue(report, market, cfg.random_runs, seed,
                                                             progress=self.progress)
                    report.benchmark = fixed_duration_benchmark(report, market)
                fields = dict(name=name, alpha=alpha, beta=beta)
                io_utils.write_trades(report.trades, self._path("trades", **fields))
                io_utils.write_frame(wealth_trajectory(report.trades, market), self._path("wealth", **fields))
                payload = report.to_dict()
                payload.update(strategy={"Th": params.Th, "Os": params.Os, "Hp": params.Hp},
                               qualification=[alpha, beta], seed=seed)
                io_utils.write_json(payload, self._path("report", **fields))
                summary[f"{name}_{alpha}_{beta}"] = {
                    "trades": report.number_of_trades,
                    "cumulative_excess_log_return": report.cumulative_excess_log_return,
                    "p_excess_return": report.p_values.get("excess_return"),
                }
        return summary

    def report(self) -> Dict[str, Any]:
        """Manifest of every artifact present in the output directory."""
        cfg = self.config
        manifest: Dict[str, Any] = {"config_hash": self.digest, "seed": cfg.seed, "stages": {}}
        stages = manifest["stages"]

        if self._path("windows").exists():
            stages["windows"] = {"windows": len(io_utils.read_windows_csv(self._path("windows")))}
        if self._path("rebounds").exists():
            stages["rebounds"] = {"rebounds": len(io_utils.read_rebounds_csv(self._path("rebounds"),
                                                                             cfg.half_width))}
        if self._path("fits").exists():
            cache = io_utils.FitCache(self._path("fits"))
            fits = cache.fits(self.digest)
            stages["fit-all"] = {
                "fits": len(fits),
                "failures": cache.failures(self.digest),
                "negative_bubbles": sum(1 for f in fits if classify_fit(f) is BubbleClass.NEGATIVE),
            }
        if self._path("informative").exists():
            learn: Dict[str, Any] = {
                "informative_params": len(io_utils.read_informative_params(self._path("informative")))}
            for alpha, beta in cfg.qualifications:
                path = self._path("features", alpha=alpha, beta=beta)
                if path.exists():
                    frame = io_utils.read_frame(path, dtype={"feature_class": str}, keep_default_na=False)
                    counts = frame["feature_class"].value_counts()
                    learn[f"features_{alpha}_{beta}"] = {"class_I": int(counts.get("I", 0)),
                                                         "class_II": int(counts.get("II", 0))}
            stages["learn"] = learn

        artifacts: List[str] = sorted(p.name for p in Path(cfg.out_dir).iterdir()
                                      if p.is_file() and p.name != self._path("manifest").name)
        manifest["artifacts"] = artifacts
        io_utils.write_json(manifest, self._path("manifest"))
        return manifest
