"""YAML run configuration mapped onto frozen dataclasses.

Every key is optional and falls back to the chosen system's default; unknown keys and
invalid values are reported with the line they occur on.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, fields, replace

import numpy as np
import yaml

from .benchmarks import QUADROTOR_OPTIONS, PendulumTask, QuadrotorTask
from .core import SolverOptions
from .models import ObstacleCourse, build_obstacle_course
from .montecarlo import Scenario


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class CourseSpec:
    """Obstacle course: explicit ``centers``/``radii`` or, when those are empty, a seeded random draw."""

    seed: int = 0
    count: int = 4
    radius_range: tuple[float, float] = (0.8, 1.4)
    lateral_spread: float = 1.5
    clearance: float = 1.0
    start: tuple[float, float, float] = (10.0, 0.0, -1.0)
    target: tuple[float, float, float] = (-5.0, -3.0, 2.0)
    centers: tuple[tuple[float, float, float], ...] = ()
    radii: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.centers) != len(self.radii):
            raise ValueError("centers and radii must have the same length")
        if self.count < 0:
            raise ValueError("count must be >= 0")
        lo, hi = self.radius_range
        if not 0 < lo <= hi:
            raise ValueError("radius_range must satisfy 0 < low <= high")

    def build(self) -> ObstacleCourse:
        if self.centers:
            return ObstacleCourse(self.centers, self.radii, self.start, self.target)
        return build_obstacle_course(
            self.seed, self.count, self.radius_range, self.lateral_spread, self.clearance, self.start, self.target
        )


@dataclass(frozen=True)
class ScenarioConfig:
    level: str = "moderate"
    trials: int = 1000
    reach_threshold: float | None = None
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    system: str = "pendulum"
    pendulum: PendulumTask = PendulumTask()
    quadrotor: QuadrotorTask = QuadrotorTask()
    obstacles: CourseSpec = CourseSpec()
    solver: SolverOptions = SolverOptions()
    scenario: ScenarioConfig = ScenarioConfig()
    output: str = "runs/out"

    def __post_init__(self):
        if self.system not in ("pendulum", "quadrotor"):
            raise ValueError(f"system must be 'pendulum' or 'quadrotor', got {self.system!r}")
        self.to_scenario()  # validates level and threshold against the system

    def to_scenario(self) -> Scenario:
        s = self.scenario
        return Scenario(self.system, s.level, s.trials, s.reach_threshold, s.seed)

    def quadrotor_task(self) -> QuadrotorTask:
        return replace(self.quadrotor, course=self.obstacles.build())


# the quadrotor section does not carry the course; it comes from ``obstacles``
_SKIP = {QuadrotorTask: {"course"}}


def defaults(system: str = "pendulum") -> RunConfig:
    if system == "quadrotor":
        return RunConfig(
            system="quadrotor",
            solver=QUADROTOR_OPTIONS,
            scenario=ScenarioConfig(level="moderate"),
            output="runs/quadrotor",
        )
    return RunConfig(system="pendulum", output="runs/pendulum")


# --- conversion ------------------------------------------------------------------------------


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        skip = _SKIP.get(type(obj), set())
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj) if f.name not in skip}
    if isinstance(obj, (tuple, list)):
        return [_plain(o) for o in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def to_dict(cfg: RunConfig, system_only: bool = True) -> dict:
    d = _plain(cfg)
    if system_only:
        other = "quadrotor" if cfg.system == "pendulum" else "pendulum"
        d.pop(other)
        if cfg.system == "pendulum":
            d.pop("obstacles")
    return d


def dump_yaml(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=False)


def config_hash(cfg: RunConfig, problem_only: bool = False) -> str:
    """Short SHA-256 of the canonical JSON form.

    The output directory and worker count never change results and are
    left out; ``problem_only`` also drops the scenario.
    """
    d = to_dict(cfg)
    d.pop("output")
    d["scenario"].pop("workers")
    if problem_only:
        d.pop("scenario")
    text = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _line(node) -> int:
    return node.start_mark.line + 1


def _scalar(node, tp, src):
    if not isinstance(node, yaml.ScalarNode):
        raise ConfigError(f"expected a single {tp.__name__} value", _line(node), src)
    value = yaml.safe_load(yaml.serialize(node))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {node.value!r}", _line(node), src)
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {node.value!r}", _line(node), src)
        return value
    if tp is float:
        if isinstance(value, str) and node.style is None:
            # YAML 1.1 reads exponent forms without a dot, such as 1e-3, as strings
            try:
                value = float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {node.value!r}", _line(node), src)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {node.value!r}", _line(node), src)
        return value
    raise ConfigError(f"unsupported field type {tp}", _line(node), src)


def _convert(node, tp, src, base=None):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if type(None) in args and isinstance(node, yaml.ScalarNode) and node.tag == "tag:yaml.org,2002:null":
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(node, inner[0], src)
    if origin is tuple:
        if not isinstance(node, yaml.SequenceNode):
            raise ConfigError("expected a list", _line(node), src)
        args = typing.get_args(tp)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(n, args[0], src) for n in node.value)
        if len(node.value) != len(args):
            raise ConfigError(f"expected a list of {len(args)} values, got {len(node.value)}", _line(node), src)
        return tuple(_convert(n, a, src) for n, a in zip(node.value, args))
    if dataclasses.is_dataclass(tp):
        return _build(node, tp, src, base)
    return _scalar(node, tp, src)


def _build(node, cls, src, base=None):
    """Dataclass from a mapping node; missing keys keep their value in ``base`` (or the class default)."""
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"expected a mapping for {cls.__name__}", _line(node), src)
    hints = typing.get_type_hints(cls)
    allowed = {f.name for f in fields(cls)} - _SKIP.get(cls, set())
    values = {}
    for key_node, value_node in node.value:
        key = key_node.value
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {cls.__name__} (allowed: {', '.join(sorted(allowed))})", _line(key_node), src)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", _line(key_node), src)
        values[key] = _convert(value_node, hints[key], src, getattr(base, key, None))
    try:
        return replace(base, **values) if base is not None else cls(**values)
    except (ValueError, TypeError) as err:
        raise ConfigError(f"invalid {cls.__name__}: {err}", _line(node), src) from None


def loads(text: str, source: str = "<config>") -> RunConfig:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(err, 'problem', err)}", mark.line + 1 if mark else None, source) from None
    if root is None:
        return defaults()
    return _build(root, RunConfig, source, defaults(_system_of(root)))


def _system_of(root) -> str:
    """The ``system`` value when it is a plain string, so defaults can follow it; validation comes later."""
    if isinstance(root, yaml.MappingNode):
        for k, v in root.value:
            if k.value == "system" and isinstance(v, yaml.ScalarNode) and v.value == "quadrotor":
                return "quadrotor"
    return "pendulum"


def load(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err.strerror}", None, str(path)) from None
    return loads(text, str(path))
