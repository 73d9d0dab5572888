"""Experiment configuration: strict JSON <-> dataclasses, plus bundled presets."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
import json
from pathlib import Path
import typing

from .dictionary import dictionary_from_spec
from .dynamics import BUILTINS
from .errors import ConfigError, KoopmanUQError
from .regions import Box, region_from_dict

PRESETS = ("example1", "example2a", "example2b", "example3")


@dataclass
class DataConfig:
    region: dict
    n_traj: int
    dt: float
    horizon: float
    substeps: int = 10
    seed: int = 0


@dataclass
class PropagationConfig:
    steps: int
    report_times: list = field(default_factory=list)


@dataclass
class MCConfig:
    n_samples: int = 1000
    seed: int = 1
    kde: str = "joint"  # joint | marginal | none
    kde_nodes: int = 200
    repeats: int = 5


@dataclass
class ReachConfig:
    threshold: float = 1e-3
    grid_nodes: int = 200


@dataclass
class QuadratureConfig:
    nodes_per_axis: int = 32
    mc_nodes: int = 200_000
    seed: int = 0


@dataclass
class AcceptanceConfig:
    max_error: float | None = None
    speedup: float = 10.0


@dataclass
class ExperimentConfig:
    name: str
    system: str
    domain: dict
    dictionary: dict
    data: DataConfig
    uncertainty_set: dict
    propagation: PropagationConfig
    mc: MCConfig = field(default_factory=MCConfig)
    reach: ReachConfig = field(default_factory=ReachConfig)
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    acceptance: AcceptanceConfig = field(default_factory=AcceptanceConfig)
    output_dir: str = "out"

    def __post_init__(self):
        self.validate()

    # derived objects
    @property
    def domain_box(self) -> Box:
        return Box(self.domain["lower"], self.domain["upper"])

    def dictionary_obj(self):
        return dictionary_from_spec(self.dictionary, self.domain_box)

    def region(self):
        return region_from_dict(self.uncertainty_set)

    def data_region(self):
        return region_from_dict(self.data.region)

    def validate(self) -> None:
        if self.system not in BUILTINS:
            raise ConfigError(f"system: unknown built-in {self.system!r}")
        if set(self.domain) != {"lower", "upper"}:
            raise ConfigError("domain: expected exactly 'lower' and 'upper'")
        if not self.data.dt > 0:
            raise ConfigError("data.dt: must be positive")
        if self.data.horizon < self.data.dt:
            raise ConfigError("data.horizon: must be >= dt")
        if self.data.n_traj < 1 or self.data.substeps < 1:
            raise ConfigError("data: n_traj and substeps must be >= 1")
        if self.propagation.steps < 0:
            raise ConfigError("propagation.steps: must be >= 0")
        for path, seed in (("data.seed", self.data.seed), ("mc.seed", self.mc.seed),
                           ("quadrature.seed", self.quadrature.seed)):
            if not 0 <= seed < 2 ** 64:
                raise ConfigError(f"{path}: must be an unsigned 64-bit integer, got {seed}")
        if self.mc.kde not in ("joint", "marginal", "none"):
            raise ConfigError(f"mc.kde: unknown mode {self.mc.kde!r}")
        try:
            box = self.domain_box
            self.dictionary_obj()
            for path, spec in (("uncertainty_set", self.uncertainty_set), ("data.region", self.data.region)):
                reg = region_from_dict(spec)
                if reg.dim != box.dim:
                    raise ConfigError(f"{path}: dimension {reg.dim} != domain dimension {box.dim}")
        except ConfigError:
            raise
        except KoopmanUQError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path + '.' if path else ''}{unknown[0]}: unknown field")
    kwargs = {}
    for f in dataclasses.fields(cls):
        sub = f"{path}.{f.name}" if path else f.name
        if f.name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError(f"{sub}: missing required field")
            continue
        value = data[f.name]
        hint = hints[f.name]
        if dataclasses.is_dataclass(hint):
            value = _build(hint, value, sub)
        elif hint is int and not (isinstance(value, int) and not isinstance(value, bool)):
            raise ConfigError(f"{sub}: expected an integer, got {value!r}")
        elif hint is float and not (isinstance(value, (int, float)) and not isinstance(value, bool)):
            raise ConfigError(f"{sub}: expected a number, got {value!r}")
        elif hint is str and not isinstance(value, str):
            raise ConfigError(f"{sub}: expected a string, got {value!r}")
        elif hint is dict and not isinstance(value, dict):
            raise ConfigError(f"{sub}: expected an object")
        elif hint is float:
            value = float(value)
        kwargs[f.name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "")


def load_config(path_or_preset) -> ExperimentConfig:
    """Load a config file, or a bundled preset by name (e.g. ``"example1"``)."""
    if str(path_or_preset) in PRESETS:
        text = resources.files("koopman_uq.presets").joinpath(f"{path_or_preset}.json").read_text()
    else:
        try:
            text = Path(path_or_preset).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path_or_preset}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path_or_preset}: {exc}") from None
    return config_from_dict(data)
