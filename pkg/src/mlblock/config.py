"""Run configuration (one JSON file, unknown keys rejected)."""
from __future__ import annotations

import json
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MethodConfig(_Strict):
    """One design to simulate or compare.

    ``kind``: complete | vs | fps | fallback | matching | rerandomization | grid.
    ``options`` are passed to the design (e.g. ``allocator``, ``mode``,
    ``strategy``, ``R``, ``features`` and ``edges`` for a manual grid).
    """

    name: str
    kind: Literal["complete", "vs", "fps", "fallback", "matching", "rerandomization", "grid"]
    options: dict = Field(default_factory=dict)


class SyntheticConfig(_Strict):
    n: int = 100
    K: int = 20
    kind: Literal["linear", "step", "nonlinear"] = "linear"
    active: int = 3
    coef: float = 1.0
    coefficients: list[float] | None = None
    persistence: float = 0.8
    noise_sd: float = 1.0
    n_periods: int = 3
    dynamic: bool = False


class RunConfig(_Strict):
    """Every field has a default except the data source (``input`` plus
    ``panel_schema``, or ``synthetic``)."""

    input: str | None = None
    panel_schema: dict | None = None
    synthetic: SyntheticConfig | None = None

    strategy: Literal["vs", "fps", "auto", "matching", "rerandomization", "fallback"] = "auto"
    c_B: int = Field(4, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    threads: int | None = Field(None, ge=1)

    # learned strategies
    allocator: Literal["sequential", "scaled", "optimized"] = "sequential"
    use_feature_selection: Literal["auto", "on", "off"] = "auto"
    include_yhat: bool = True
    lasso_rule: Literal["min", "1se"] = "min"
    n_trees: int = Field(500, ge=1)
    n_repeats: int = Field(10, ge=1)
    tradeoff_weight: float | None = Field(None, ge=0, le=1)
    tradeoff_draws: int = Field(1000, ge=1)

    # matching and rerandomization
    match_strategy: Literal["vs", "fps"] = "vs"
    odd_policy: Literal["random_holdout", "error"] = "random_holdout"
    rerandomization_mode: Literal["minmax", "bigstick"] = "minmax"
    R: int = Field(1000, ge=1)
    alpha: float = Field(0.05, gt=0, lt=1)
    max_draws: int = Field(1000, ge=1)

    # fallbacks
    fallback_mode: Literal["single_pre", "zero_pre", "auxiliary"] | None = None
    aux_partition: str | None = None
    weight_rule: Literal["sum", "mean"] = "sum"

    # simulate / compare
    methods: list[MethodConfig] | None = None
    n_reps: int = Field(10_000, ge=1)
    eval_period: str | None = None

    @field_validator("panel_schema")
    @classmethod
    def _schema_has_periods(cls, v):
        if v is not None and "periods" not in v:
            raise ValueError("panel_schema needs a 'periods' mapping")
        return v

    def resolved(self) -> dict:
        """Config as recorded in the manifest (``threads`` omitted: it never
        changes results)."""
        return self.model_dump(mode="json", exclude={"threads"})


def _describe(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        key = ".".join(str(p) for p in e["loc"]) or "<root>"
        if e["type"] == "extra_forbidden":
            parts.append(f"unknown config key {key!r}")
        else:
            parts.append(f"{key!r}: {e['msg']}")
    return "; ".join(parts)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_describe(err)) from None


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(data)
