"""Experiment configuration: TOML (or JSON) validated by pydantic."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

import tomli
import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .lattice import Potential
from .weights import WeightSequence


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class WeightsBlock(_Strict):
    kind: Literal["constant", "algebraic", "stretched", "bose", "custom"]
    value: float = 1.0
    exponent: float = 0.0
    linear: bool = True
    table: Optional[list[float]] = None

    @model_validator(mode="after")
    def _table(self):
        if (self.kind == "custom") != (self.table is not None):
            raise ValueError("a table is required for custom weights and only for them")
        return self

    def build(self) -> WeightSequence:
        if self.kind == "constant":
            return WeightSequence.constant(self.value)
        if self.kind == "algebraic":
            return WeightSequence.algebraic(self.exponent, self.value)
        if self.kind == "stretched":
            return WeightSequence.stretched(self.exponent, self.linear, self.value)
        if self.kind == "bose":
            return WeightSequence.bose()
        return WeightSequence.custom(self.table)


class PotentialBlock(_Strict):
    kind: Literal["power", "quadratic", "square"]
    d: int = Field(1, ge=1)
    delta: float = Field(1.0, gt=0)
    c: float = Field(1.0, gt=0)
    beta: float = Field(1.0, gt=0)

    def build(self) -> Potential:
        if self.kind == "power":
            return Potential.power(self.delta, self.d, self.c)
        if self.kind == "quadratic":
            return Potential.quadratic(self.beta, self.d)
        return Potential.square(self.d)


class ModelBlock(_Strict):
    weights: WeightsBlock
    potential: PotentialBlock
    L: Union[float, list[float]]
    rho: Optional[Union[float, list[float]]] = None
    n: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def _size(self):
        if (self.rho is None) == (self.n is None):
            raise ValueError("give exactly one of rho and n")
        Ls = self.L if isinstance(self.L, list) else [self.L]
        if not Ls or any(v <= 0 for v in Ls):
            raise ValueError("L must be positive")
        if self.potential.kind == "square" and any(float(v) != int(v) for v in Ls):
            raise ValueError("the square trap needs integer L")
        rhos = self.rho if isinstance(self.rho, list) else [self.rho]
        if self.rho is not None and (not rhos or any(r <= 0 for r in rhos)):
            raise ValueError("rho must be positive")
        return self

    @property
    def L_values(self) -> list[float]:
        return list(self.L) if isinstance(self.L, list) else [self.L]

    @property
    def rho_values(self) -> list[float | None]:
        if self.rho is None:
            return [None]
        return list(self.rho) if isinstance(self.rho, list) else [self.rho]


EXPERIMENT_KINDS = ("sample", "dynamics", "stationarity-check", "condensation-sweep", "fluctuation-test",
                    "cramer", "droplet-shift")


class ExperimentBlock(_Strict):
    kind: Literal["sample", "dynamics", "stationarity-check", "condensation-sweep", "fluctuation-test",
                  "cramer", "droplet-shift"]
    replicas: int = Field(1, ge=1)
    seed: int = Field(0, ge=0)
    threads: Optional[int] = Field(None, ge=1)  # default: available cores
    K: Optional[int] = Field(None, ge=1)
    j_max: int = Field(5, ge=1)
    k_max: int = Field(5, ge=1)
    regime: Optional[Literal["normal", "stable", "gamma-series", "cluster"]] = None
    observable: Literal["M", "T", "H0"] = "M"
    reference_size: int = Field(200_000, ge=50)
    order: Optional[int] = Field(None, ge=0)


class DynamicsBlock(_Strict):
    process: Literal["crp", "reshuffle", "coag-frag", "zrp"]
    coagulation: Literal["constant", "linear"] = "constant"
    coagulation_scale: float = Field(1.0, gt=0)
    horizon: float = Field(10.0, gt=0)
    max_events: int = Field(1_000_000, ge=1)
    epochs: int = Field(100, ge=1)
    initial: Literal["origin", "singletons", "canonical"] = "canonical"
    window: int = Field(5, ge=1)  # sites nearest the origin used by trap kernels


class TruncationBlock(_Strict):
    eps: float = Field(1e-12, gt=0, lt=1)
    radius: int = Field(256, ge=1)


class OutputBlock(_Strict):
    dir: Optional[str] = None
    prefix: str = "partitia"


class ExperimentConfig(_Strict):
    model: ModelBlock
    experiment: ExperimentBlock
    dynamics: Optional[DynamicsBlock] = None
    truncation: TruncationBlock = TruncationBlock()
    output: OutputBlock = OutputBlock()

    @model_validator(mode="after")
    def _consistency(self):
        kind = self.experiment.kind
        if kind in ("dynamics", "stationarity-check") and self.dynamics is None:
            raise ValueError(f"experiment {kind!r} needs a [dynamics] section")
        if kind == "fluctuation-test" and self.experiment.regime is None:
            raise ValueError("fluctuation-test needs experiment.regime")
        if kind in ("cramer", "droplet-shift") and self.model.weights.kind != "stretched" \
                and self.experiment.order is None:
            raise ValueError(f"{kind} needs stretched weights or an explicit order")
        return self

    def to_dict(self) -> dict:
        return self.model_dump(mode="json", exclude_none=True)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from exc


def _format_errors(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(raw)
        else:
            data = tomli.loads(raw.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a table")
    for dotted, value in (overrides or {}).items():
        node = data
        keys = dotted.split(".")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value
    return parse_config(data)
