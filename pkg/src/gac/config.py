"""Experiment configuration: a versioned JSON document mapped onto the library dataclasses.

Schema (version 1); every key except ``version`` is optional::

    {
      "version": 1,
      "testbed": {"kind": "toy" | "quadratic", "params": {...}},
      "arms": [
        {"name": "gac", "controller": {...ControllerConfig fields...}},
        {"name": "qcm", "baseline": {...BaselineRule fields...}}
      ],
      "degradation": {...DegradationMode fields...},
      "steps": 800,
      "learning_rate": 1.0,
      "seeds": [0, 1, 2],
      "output_dir": "runs",
      "metrics": {"kl_target": 0.02, "shift_threshold": 0.02, "window": 10, "reference": null},
      "sweep": {"beta_ema": [0.95, 0.98, 0.99], "prior.mu_end": [0.1, 0.2]}
    }

Toy ``params`` are ``ToyPolicyProblem`` fields.  Quadratic ``params`` take
``dim`` and ``instance_seed`` plus ``QuadraticProblem`` noise fields; the
instance is drawn with ``QuadraticProblem.random``.  A top-level
``degradation`` applies to every controller arm that does not set its own.
Sweep keys are dotted ``ControllerConfig`` paths.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import BaselineRule
from .controller import ControllerConfig
from .proxies import DegradationMode
from .simulator import Arm, QuadraticProblem, ToyPolicyProblem

CONFIG_VERSION = 1
TESTBEDS = ("toy", "quadratic")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _check_scalar(value, tp, path: str):
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    raise ConfigError(path, f"unsupported field type {tp!r}")


def _coerce(value, tp, path: str):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, getattr(__import__("types"), "UnionType", None)):
        args = typing.get_args(tp)
        if value is None:
            if type(None) in args:
                return None
            raise ConfigError(path, "null is not allowed here")
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path)
    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        (elem, *_rest) = typing.get_args(tp)
        return tuple(_coerce(v, elem, f"{path}[{i}]") for i, v in enumerate(value))
    if dataclasses.is_dataclass(tp):
        return build(tp, value, path)
    return _check_scalar(value, tp, path)


def build(cls, data, path: str):
    """Instantiate dataclass ``cls`` from a JSON object, reporting errors by field path."""
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected an object, got {data!r}")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"{path}.{key}", f"unknown field; expected one of {sorted(fields)}")
        kwargs[key] = _coerce(value, hints[key], f"{path}.{key}")
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from exc


@dataclass(frozen=True)
class MetricsConfig:
    kl_target: float = 0.02
    shift_threshold: float = 0.02
    window: int = 10
    reference: str | None = None

    def __post_init__(self):
        if not self.kl_target > 0 or not self.shift_threshold > 0 or self.window < 1:
            raise ValueError("kl_target and shift_threshold must be > 0 and window >= 1")


@dataclass(frozen=True)
class TestbedConfig:
    kind: str = "toy"
    params: dict = field(default_factory=dict)

    def make(self, seed: int):
        params = dict(self.params)
        if self.kind == "toy":
            params.setdefault("instance_seed", seed)
            return ToyPolicyProblem(**params)
        dim = params.pop("dim", 10)
        instance_seed = params.pop("instance_seed", seed)
        return QuadraticProblem.random(dim, np.random.default_rng(instance_seed), **params)


@dataclass(frozen=True)
class ExperimentConfig:
    testbed: TestbedConfig = field(default_factory=TestbedConfig)
    arms: tuple[Arm, ...] = (Arm("gac", controller=ControllerConfig()),)
    steps: int = 800
    learning_rate: float = 1.0
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "runs"
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    sweep: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def digest(self) -> str:
        """Short hash of the settings that determine run outputs."""
        payload = {k: v for k, v in self.raw.items() if k not in ("output_dir", "seeds")}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _parse_testbed(data, path: str) -> TestbedConfig:
    if not isinstance(data, dict):
        raise ConfigError(path, "expected an object")
    extra = set(data) - {"kind", "params"}
    if extra:
        raise ConfigError(f"{path}.{sorted(extra)[0]}", "unknown field; expected 'kind' or 'params'")
    kind = data.get("kind", "toy")
    if kind not in TESTBEDS:
        raise ConfigError(f"{path}.kind", f"expected one of {TESTBEDS}, got {kind!r}")
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError(f"{path}.params", "expected an object")
    tb = TestbedConfig(kind, params)
    try:
        tb.make(0)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.params", str(exc)) from exc
    return tb


def _parse_arms(data, degradation, path: str) -> tuple[Arm, ...]:
    if not isinstance(data, list) or not data:
        raise ConfigError(path, "expected a non-empty list of arms")
    arms, names = [], set()
    for i, entry in enumerate(data):
        p = f"{path}[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(p, "expected an object")
        extra = set(entry) - {"name", "controller", "baseline"}
        if extra:
            raise ConfigError(f"{p}.{sorted(extra)[0]}", "unknown field")
        name = entry.get("name")
        if not isinstance(name, str) or not name or "/" in name:
            raise ConfigError(f"{p}.name", "expected a non-empty name without '/'")
        if name in names:
            raise ConfigError(f"{p}.name", f"duplicate arm name {name!r}")
        names.add(name)
        if ("controller" in entry) == ("baseline" in entry):
            raise ConfigError(p, "an arm needs exactly one of 'controller' or 'baseline'")
        if "controller" in entry:
            ctrl = dict(entry["controller"]) if isinstance(entry["controller"], dict) else entry["controller"]
            if degradation is not None and isinstance(ctrl, dict) and "degradation" not in ctrl:
                ctrl["degradation"] = degradation
            arms.append(Arm(name, controller=build(ControllerConfig, ctrl, f"{p}.controller")))
        else:
            arms.append(Arm(name, rule=build(BaselineRule, entry["baseline"], f"{p}.baseline")))
    return tuple(arms)


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("$", "config must be a JSON object")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"raw"} | {"version", "degradation"}
    for key in data:
        if key not in known:
            raise ConfigError(f"$.{key}", f"unknown field; expected one of {sorted(known)}")
    version = data.get("version")
    if version != CONFIG_VERSION:
        raise ConfigError("$.version", f"expected {CONFIG_VERSION}, got {version!r}")
    degradation = data.get("degradation")
    if degradation is not None:
        build(DegradationMode, degradation, "$.degradation")
    kw = {"raw": data}
    if "testbed" in data:
        kw["testbed"] = _parse_testbed(data["testbed"], "$.testbed")
    if "arms" in data:
        kw["arms"] = _parse_arms(data["arms"], degradation, "$.arms")
    elif degradation is not None:
        kw["arms"] = _parse_arms([{"name": "gac", "controller": {}}], degradation, "$.arms")
    if "steps" in data:
        kw["steps"] = _check_scalar(data["steps"], int, "$.steps")
        if kw["steps"] < 1:
            raise ConfigError("$.steps", "must be >= 1")
    if "learning_rate" in data:
        kw["learning_rate"] = _check_scalar(data["learning_rate"], float, "$.learning_rate")
        if not kw["learning_rate"] > 0:
            raise ConfigError("$.learning_rate", "must be > 0")
    if "seeds" in data:
        kw["seeds"] = _coerce(data["seeds"], tuple[int, ...], "$.seeds")
        if not kw["seeds"]:
            raise ConfigError("$.seeds", "need at least one seed")
    if "output_dir" in data:
        kw["output_dir"] = _check_scalar(data["output_dir"], str, "$.output_dir")
    if "metrics" in data:
        kw["metrics"] = build(MetricsConfig, data["metrics"], "$.metrics")
    if "sweep" in data:
        kw["sweep"] = _parse_sweep(data["sweep"], "$.sweep")
    return ExperimentConfig(**kw)


def _parse_sweep(data, path: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(path, "expected an object mapping field paths to value lists")
    for key, values in data.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"{path}.{key}", "expected a non-empty list of values")
        for v in values:
            override_controller(ControllerConfig(), key, v, f"{path}.{key}")
    return dict(data)


def override_controller(cfg: ControllerConfig, dotted: str, value, path: str = "$") -> ControllerConfig:
    """Return ``cfg`` with the field at ``dotted`` (e.g. ``prior.mu_end``) replaced."""
    head, _, rest = dotted.partition(".")
    hints = typing.get_type_hints(type(cfg))
    if head not in hints or not any(f.name == head for f in dataclasses.fields(cfg)):
        raise ConfigError(path, f"unknown controller field {head!r}")
    if rest:
        inner = getattr(cfg, head)
        if not dataclasses.is_dataclass(inner):
            raise ConfigError(path, f"{head!r} has no sub-fields")
        new = override_controller(inner, rest, value, path)
    else:
        new = _coerce(value, hints[head], path)
    try:
        return replace(cfg, **{head: new})
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("$", f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from exc
    return parse_config(data)


def default_config_dict() -> dict:
    """The mainline configuration as a JSON-ready document."""
    return {
        "version": CONFIG_VERSION,
        "testbed": {"kind": "toy", "params": {}},
        "arms": [{"name": "gac", "controller": dataclasses.asdict(ControllerConfig())}],
        "steps": 800,
        "learning_rate": 1.0,
        "seeds": [0],
        "output_dir": "runs",
        "metrics": dataclasses.asdict(MetricsConfig()),
    }
