"""Experiment configuration: a versioned YAML tree validated into dataclasses.

Unknown keys are rejected.  Errors name the dotted field path and, when the
config came from a file, the line it sits on.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import yaml

from mlbcd.cost import Schedule
from mlbcd.driver import SelectionRule
from mlbcd.exceptions import ConfigError
from mlbcd.optimizer import AdamConfig

SCHEMA_VERSION = 1
MODES = ("faml", "hierarchical", "single_level", "theory")


@dataclass(frozen=True)
class ProblemConfig:
    name: str = "test3"
    params: dict = field(default_factory=dict)
    weights: list | None = None  # interior, gamma_e, gamma_i


@dataclass(frozen=True)
class ArchitectureConfig:
    name: str = "SL1"
    width: int | None = None
    coarse_width: int | None = None
    depth: int = 3
    subnets: list | None = None  # inline subnetwork dicts, overrides name


@dataclass(frozen=True)
class PoolConfig:
    n_interior: int = 5000
    n_boundary: int = 800
    n_test: int = 2000


@dataclass(frozen=True)
class BatchConfig:
    n_interior: int = 500
    n_boundary: int = 100


@dataclass(frozen=True)
class ScheduleConfig:
    initial_full_epochs: int = 0
    cycles: int = 0
    full_epochs_per_cycle: int = 0
    sub_epochs_per_cycle: int = 0
    cycle_order: str = "full_then_sub"

    def build(self) -> Schedule:
        return Schedule(**asdict(self))


@dataclass(frozen=True)
class SelectionConfig:
    kind: str = "max_ratio"
    tau: float | None = None
    order: list | None = None

    def build(self) -> SelectionRule:
        return SelectionRule(self.kind, self.tau, tuple(self.order or ()))


@dataclass(frozen=True)
class TheoryConfig:
    n2: int = 8
    cond: float = 50.0
    eps: float = 1e-2
    tau: float = 0.5
    alpha_factor: float = 0.9  # alpha = alpha_factor / L
    max_iters: int = 10**7


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    mode: str
    schema_version: int = SCHEMA_VERSION
    problem: ProblemConfig = ProblemConfig()
    architecture: ArchitectureConfig = ArchitectureConfig()
    optimizer: AdamConfig = AdamConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    selection: SelectionConfig = SelectionConfig()
    pool: PoolConfig = PoolConfig()
    batch: BatchConfig = BatchConfig()
    theory: TheoryConfig = TheoryConfig()
    seeds: list = field(default_factory=lambda: [0])
    budgets: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    @property
    def budget(self) -> float | None:
        return max(self.budgets) if self.budgets else None

    def replace(self, **changes) -> "ExperimentConfig":
        data = self.to_dict()
        data.update(changes)
        return from_dict(data)


_SECTIONS = {
    "problem": ProblemConfig,
    "architecture": ArchitectureConfig,
    "optimizer": AdamConfig,
    "schedule": ScheduleConfig,
    "selection": SelectionConfig,
    "pool": PoolConfig,
    "batch": BatchConfig,
    "theory": TheoryConfig,
}

_TYPES = {
    "int": (int,),
    "float": (int, float),
    "str": (str,),
    "dict": (dict,),
    "list": (list,),
}


def _where(path, lines):
    line = lines.get(path) if lines else None
    return f"{path} (line {line})" if line else path


def _check_type(value, annotation: str, path, lines):
    if value is None:
        if "None" in annotation:
            return value
        raise ConfigError(f"{_where(path, lines)}: value is required")
    kinds = [k.strip() for k in annotation.split("|") if k.strip() != "None"]
    for k in kinds:
        ok = _TYPES.get(k)
        if ok and isinstance(value, ok) and not isinstance(value, bool):
            return float(value) if k == "float" else value
    raise ConfigError(f"{_where(path, lines)}: expected {annotation}, got {type(value).__name__} {value!r}")


def _build(cls, data, path, lines):
    if not isinstance(data, dict):
        raise ConfigError(f"{_where(path, lines)}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{_where(f'{path}.{key}', lines)}: unknown key (allowed: {', '.join(known)})")
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = _check_type(value, str(known[key].type), f"{path}.{key}", lines)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as err:
        raise ConfigError(f"{_where(path, lines)}: {err}") from err


def from_dict(data: dict, lines: dict | None = None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    data = copy.deepcopy(data)
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{_where('schema_version', lines)}: unsupported version {version!r}")
    top = {f.name for f in fields(ExperimentConfig)}
    for key in data:
        if key not in top:
            raise ConfigError(f"{_where(key, lines)}: unknown key (allowed: {', '.join(sorted(top))})")
    for key in ("name", "mode"):
        if key not in data:
            raise ConfigError(f"{key}: value is required")
    if data["mode"] not in MODES:
        raise ConfigError(f"{_where('mode', lines)}: unknown mode {data['mode']!r}; expected one of {MODES}")
    kwargs = {"name": str(data["name"]), "mode": data["mode"], "schema_version": version}
    for key, cls in _SECTIONS.items():
        if key in data:
            kwargs[key] = _build(cls, data[key] or {}, key, lines)
    for key in ("seeds", "budgets"):
        if key in data:
            vals = data[key]
            if not isinstance(vals, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                                      for v in vals):
                raise ConfigError(f"{_where(key, lines)}: expected a list of numbers")
            kwargs[key] = [int(v) for v in vals] if key == "seeds" else [float(v) for v in vals]
    cfg = ExperimentConfig(**kwargs)
    _validate(cfg, lines)
    return cfg


def _validate(cfg: ExperimentConfig, lines):
    if any(s < 0 for s in cfg.seeds):
        raise ConfigError(f"{_where('seeds', lines)}: seeds must be >= 0")
    if any(b <= 0 for b in cfg.budgets):
        raise ConfigError(f"{_where('budgets', lines)}: budgets must be positive")
    try:
        cfg.schedule.build()
        cfg.selection.build()
    except ValueError as err:
        raise ConfigError(str(err)) from err
    sch = cfg.schedule
    if cfg.mode == "single_level" and sch.cycles and sch.sub_epochs_per_cycle:
        raise ConfigError(f"{_where('schedule', lines)}: single_level runs have no sub-network phases")
    if cfg.mode != "theory":
        if cfg.batch.n_interior > cfg.pool.n_interior or cfg.batch.n_boundary > cfg.pool.n_boundary:
            raise ConfigError(f"{_where('batch', lines)}: batch larger than the pool")
    w = cfg.problem.weights
    if w is not None and (len(w) != 3 or any(not isinstance(x, (int, float)) or x < 0 for x in w)):
        raise ConfigError(f"{_where('problem.weights', lines)}: expected three non-negative numbers")


def _line_map(node, prefix="", out=None) -> dict:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}.{key.value}" if prefix else str(key.value)
            out[path] = key.start_mark.line + 1
            _line_map(value, path, out)
    return out


def loads(text: str) -> ExperimentConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"invalid YAML: {err}") from err
    return from_dict(data if data is not None else {}, _line_map(node) if node is not None else {})


def load(path) -> ExperimentConfig:
    with open(path) as fh:
        text = fh.read()
    try:
        return loads(text)
    except ConfigError as err:
        raise ConfigError(f"{path}: {err}") from err


def dumps(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
