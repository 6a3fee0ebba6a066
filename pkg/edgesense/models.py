"""Pydantic schema of the experiment config file."""
from __future__ import annotations

import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, List, Literal, Optional, Sequence

import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from edgesense.config import get_settings
from edgesense.ddpg import TrainConfig
from edgesense.errors import ConfigError
from edgesense.hotroll import HotRollParams


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PlantSection(_Section):
    kind: Literal["hotroll", "file"] = "hotroll"


class MatricesSection(_Section):
    """Paths to plain-text matrix files; relative paths resolve against the config file."""

    A: str
    G: str
    Q: Optional[str] = None
    Gamma0: Optional[str] = None
    x0_mean: Optional[str] = None
    u: Optional[str] = None
    U: Optional[str] = None


class HotRollSection(HotRollParams):
    q_scale: float = Field(0.1, gt=0)
    noise_variance: float = Field(0.01, gt=0)
    gamma0_scale: float = Field(1.0, ge=0)

    def params(self) -> HotRollParams:
        return HotRollParams(**self.model_dump(exclude={"q_scale", "noise_variance",
                                                        "gamma0_scale"}))


class TopologySection(_Section):
    kind: Literal["complete", "ring", "isolated", "custom"] = "complete"
    m: int = Field(2, gt=0)
    adjacency: Optional[List[List[int]]] = None

    @model_validator(mode="after")
    def _validate_custom(self) -> "TopologySection":
        if self.kind == "custom":
            if self.adjacency is None:
                raise ValueError("custom topology requires adjacency")
            if len(self.adjacency) != self.m:
                raise ValueError(f"adjacency must have {self.m} rows")
        return self


class KappaOverride(_Section):
    ecu: int = Field(ge=0)
    sensor: int = Field(ge=0)
    kappa: float = Field(gt=0, lt=1)


class ChannelSection(_Section):
    kappa_per_ecu: Optional[List[float]] = Field(default_factory=lambda: [0.3, 0.4])
    kappa: Optional[List[List[float]]] = None
    epsilon: Optional[float] = None
    noise_density: Optional[float] = None
    bandwidth: Optional[float] = None
    overrides: List[KappaOverride] = Field(default_factory=list)
    unlinked: List[List[int]] = Field(default_factory=list)

    @field_validator("kappa_per_ecu")
    @classmethod
    def _validate_kappa(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and any(not 0.0 < k < 1.0 for k in value):
            raise ValueError("kappa values must lie in (0, 1)")
        return value

    @model_validator(mode="after")
    def _validate_physical(self) -> "ChannelSection":
        triple = (self.epsilon, self.noise_density, self.bandwidth)
        if any(v is not None for v in triple) and not all(v is not None for v in triple):
            raise ValueError("epsilon, noise_density and bandwidth must be given together")
        if any(len(pair) != 2 for pair in self.unlinked):
            raise ValueError("unlinked entries must be [ecu, sensor] pairs")
        return self


class CostSection(_Section):
    alpha: float = Field(0.1, ge=0)
    beta: float = Field(0.1, ge=0)


class ObservabilitySection(_Section):
    p0: float = Field(0.95, gt=0, lt=1)
    L: int = Field(10, gt=0)
    mc_trials: int = Field(2000, ge=0)
    fixed_bounds: Optional[List[float]] = None

    @field_validator("fixed_bounds")
    @classmethod
    def _validate_fixed(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and (len(value) != 2 or not 0.0 <= value[0] <= value[1] <= 1.0):
            raise ValueError("fixed_bounds must be [lo, hi] with 0 <= lo <= hi <= 1")
        return value


class EvaluationSection(_Section):
    repetitions: int = Field(100, ge=1)
    horizon: int = Field(1000, ge=1)
    window: int = Field(10, ge=1)
    sliding_windows: bool = False
    psm_start_high: bool = True
    l_list: List[int] = Field(default_factory=lambda: [5, 10])
    beta_list: Optional[List[float]] = None
    p0_list: List[float] = Field(default_factory=lambda: [0.9, 0.95, 0.99, 0.999, 0.9999])


class OutputSection(_Section):
    dir: str = Field(default_factory=lambda: get_settings().out_dir)


class ExperimentConfig(_Section):
    seed: int = Field(0, ge=0, lt=2**64)
    plant: PlantSection = Field(default_factory=PlantSection)
    matrices: Optional[MatricesSection] = None
    hotroll: HotRollSection = Field(default_factory=HotRollSection)
    topology: TopologySection = Field(default_factory=TopologySection)
    channel: ChannelSection = Field(default_factory=ChannelSection)
    cost: CostSection = Field(default_factory=CostSection)
    observability: ObservabilitySection = Field(default_factory=ObservabilitySection)
    training: TrainConfig = Field(default_factory=TrainConfig)
    evaluation: EvaluationSection = Field(default_factory=EvaluationSection)
    output: OutputSection = Field(default_factory=OutputSection)


_TOML_LINE = re.compile(r"at line (\d+)")
_HEADER = re.compile(r"^\s*\[\[?\s*([A-Za-z0-9_.]+)\s*\]\]?")
_KEY = re.compile(r"^\s*([A-Za-z0-9_]+)\s*=")


def _locate(text: str, loc: Sequence[Any]) -> int | None:
    """1-based line of the key addressed by a validation error location."""

    keys = [part for part in loc if isinstance(part, str)]
    if not keys:
        return None
    section, key = (keys[0], keys[1] if len(keys) > 1 else None)
    current: str | None = None
    header_line = None
    for number, raw in enumerate(text.splitlines(), start=1):
        header = _HEADER.match(raw)
        if header:
            current = header.group(1)
            if current.split(".")[0] == section and header_line is None:
                header_line = number
            continue
        match = _KEY.match(raw)
        if not match:
            continue
        if current is None and match.group(1) == section:
            return number
        if current is not None and current.split(".")[0] == section:
            if key is None or match.group(1) == key:
                return number
    return header_line


def _resolve_paths(data: dict[str, Any], base: Path) -> None:
    matrices = data.get("matrices")
    if not isinstance(matrices, dict):
        return
    for key, value in matrices.items():
        if isinstance(value, str) and not Path(value).is_absolute():
            matrices[key] = str((base / value).resolve())


def parse_config(text: str, path: str = "<config>", base: Path | None = None) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        match = _TOML_LINE.search(str(exc))
        raise ConfigError(str(exc), path, int(match.group(1)) if match else None) from exc
    if base is not None:
        _resolve_paths(data, base)
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"{where}: {first['msg']}", path, _locate(text, first["loc"])) from exc
    if config.plant.kind == "file" and config.matrices is None:
        raise ConfigError("plant kind 'file' requires a [matrices] section", path,
                          _locate(text, ("plant", "kind")))
    return config


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse a TOML experiment config; an empty file yields the default setup."""

    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from exc
    return parse_config(text, str(path), path.parent)


def dump_config(config: ExperimentConfig) -> str:
    """Canonical TOML text of a config."""

    return tomli_w.dumps(config.model_dump(mode="json", exclude_none=True, by_alias=True))
