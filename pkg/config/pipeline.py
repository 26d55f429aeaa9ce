"""Pipeline configuration: dotenv-style KEY=value file, NBR_ environment overrides, pydantic validation."""

import logging
import os
from datetime import date
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, field_validator, model_validator

from config import defaults
from core.data_ingest import WindowRules
from core.errors import ConfigError
from core.optimizer import OptimizerConfig
from core.trading import StrategyParams

logger = logging.getLogger(__name__)

ENV_PREFIX = "NBR_"


class PipelineConfig(BaseModel):
    """Every tunable constant of the pipeline, with the published defaults."""

    model_config = ConfigDict(extra="forbid")

    # [data]
    data_path: Path
    rate_path: Optional[Path] = None
    out_dir: Path = Path("output")

    # [windows]
    dt1_step: int = defaults.WINDOW_RULES["dt1_step"]
    dt2_step: int = defaults.WINDOW_RULES["dt2_step"]
    dt_min: int = defaults.WINDOW_RULES["dt_min"]
    dt_max: int = defaults.WINDOW_RULES["dt_max"]
    window_anchor: Optional[date] = None

    # [optimizer]
    tabu_iterations: int = defaults.OPTIMIZER["tabu_iterations"]
    tabu_neighbors: int = defaults.OPTIMIZER["tabu_neighbors"]
    tabu_list_size: int = defaults.OPTIMIZER["tabu_list_size"]
    lm_max_iterations: int = defaults.OPTIMIZER["lm_max_iterations"]
    lm_tolerance: float = defaults.OPTIMIZER["lm_tolerance"]
    restarts: int = defaults.OPTIMIZER["restarts"]
    tc_factor: float = defaults.TC_FACTOR
    seed: int = defaults.OPTIMIZER["seed"]
    jobs: int = 1

    # [pattern]
    half_width: int = defaults.REBOUND_HALF_WIDTH
    rebound_open_end: bool = True
    near_days: int = defaults.NEAR_DAYS
    ks_threshold: float = defaults.KS_THRESHOLD
    qualifications: List[Tuple[int, int]] = Field(default_factory=lambda: list(defaults.QUALIFICATIONS))
    learning_cutoff: date = date.fromisoformat(defaults.LEARNING_CUTOFF)
    negative_only: bool = False
    prediction_end: date = date.fromisoformat(defaults.PREDICTION_END)
    prediction_step: int = defaults.PREDICTION_STEP

    # [evaluation]
    alarm_duration: int = defaults.ALARM_DURATION
    alarm_offset: int = defaults.ALARM_OFFSET
    bayes_start: date = date.fromisoformat(defaults.BAYES_START)
    rebound_width: int = defaults.REBOUND_WIDTH
    bayes_neighborhood: int = defaults.BAYES_NEIGHBORHOOD
    lv_lookback: int = defaults.LV_LOOKBACK

    # [trading]
    strategies: Dict[str, Tuple[float, int, int]] = Field(default_factory=lambda: dict(defaults.STRATEGIES))
    random_runs: int = defaults.RANDOM_RUNS
    cost_bps: float = defaults.COST_BPS

    @field_validator("qualifications", mode="before")
    @classmethod
    def _parse_qualifications(cls, value):
        # "10:200,15:200"
        if isinstance(value, str):
            return [tuple(int(x) for x in pair.split(":")) for pair in value.split(",") if pair.strip()]
        return value

    @field_validator("strategies", mode="before")
    @classmethod
    def _parse_strategies(cls, value):
        # "strategy_1=0.2:10:10;strategy_2=0.7:30:10"
        if isinstance(value, str):
            parsed = {}
            for item in value.split(";"):
                if not item.strip():
                    continue
                name, triple = item.split("=")
                th, os_, hp = triple.split(":")
                parsed[name.strip()] = (float(th), int(os_), int(hp))
            return parsed
        return value

    @model_validator(mode="after")
    def _check(self):
        WindowRules(self.dt1_step, self.dt2_step, self.dt_min, self.dt_max)
        for params in self.strategies.values():
            StrategyParams(*params)
        if self.half_width < 1 or self.near_days < 0 or self.prediction_step < 1:
            raise ValueError("half_width and prediction_step must be >= 1, near_days >= 0")
        if self.random_runs < 1 or self.jobs < 1:
            raise ValueError("random_runs and jobs must be >= 1")
        if self.prediction_end <= self.learning_cutoff:
            raise ValueError("prediction_end must follow learning_cutoff")
        return self

    @property
    def window_rules(self) -> WindowRules:
        return WindowRules(self.dt1_step, self.dt2_step, self.dt_min, self.dt_max)

    @property
    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(
            tabu_iterations=self.tabu_iterations,
            tabu_neighbors=self.tabu_neighbors,
            tabu_list_size=self.tabu_list_size,
            lm_max_iterations=self.lm_max_iterations,
            lm_tolerance=self.lm_tolerance,
            seed=self.seed,
            restarts=self.restarts,
            tc_factor=self.tc_factor,
        )

    def strategy_params(self) -> Dict[str, StrategyParams]:
        return {name: StrategyParams(*triple) for name, triple in self.strategies.items()}

    def output_path(self, kind: str, **fields) -> Path:
        return self.out_dir / defaults.OUTPUT_FILES[kind].format(**fields)


def load_pipeline_config(path: Optional[Union[str, Path]] = None,
                         overrides: Optional[Dict[str, object]] = None) -> PipelineConfig:
    """File values, then NBR_* environment variables, then explicit overrides (CLI flags)."""
    values: Dict[str, object] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        values.update({k.lower(): v for k, v in dotenv_values(path).items() if v is not None})

    for key, value in os.environ.items():
        if key.startswith(ENV_PREFIX):
            values[key[len(ENV_PREFIX):].lower()] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value

    # the GSPC test fixture variable is not a config key
    values.pop("gspc_csv", None)
    try:
        config = PipelineConfig(**values)
    except PydanticValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    except Exception as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc

    if not config.data_path.exists():
        raise ConfigError(f"data file not readable: {config.data_path}")
    if config.rate_path is not None and not config.rate_path.exists():
        raise ConfigError(f"risk-free file not readable: {config.rate_path}")
    logger.debug(f"Configuration: {config.model_dump()}")
    return config
