"""
Run configuration files.

Two on-disk forms are accepted:

    # run.properties (flat dotted keys, '#' comments)
    problem.benchmark=merely_convex
    problem.n=100
    solver.alpha=constant:0.002
    solver.penalty=poly:1,0.3
    init.x=10*ones
    output.dir=out/mc100

    # metadata.json written by a previous run
    {"config": {"problem.benchmark": "merely_convex", ...}, ...}

Provided:
- load_flat(path) -> (flat map, line numbers)
- load_run_config(path) -> RunConfig
- RunConfig.build_instance(), .solver_config(instance), .make_init(instance), .to_flat()
- parse_vector(text, dim)
"""
from __future__ import annotations

import importlib
import json
import logging
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .bench import BENCHMARKS, BenchmarkInstance, build_benchmark
from .core import BilevelProblem, IterateState, Schedule, SolverConfig
from .errors import ConfigError

logger = logging.getLogger(__name__)

SECTIONS = ("problem", "solver", "init", "output", "checkgrad", "sweep")
SWEEP_AXES = ("p_exp", "n", "seed", "step_scale")

_STRICT = ConfigDict(extra="forbid", populate_by_name=True)


class ProblemSpec(BaseModel):
    model_config = _STRICT

    benchmark: Optional[Literal["merely_convex", "strongly_convex", "scalar"]] = None
    n: Optional[int] = Field(None, ge=1)
    seed: int = 0
    module: Optional[str] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.benchmark is None) == (self.module is None):
            raise ValueError("set exactly one of problem.benchmark or problem.module")
        if self.module is not None and ":" not in self.module:
            raise ValueError("problem.module must look like 'package.module:factory'")
        return self


class InitSpec(BaseModel):
    model_config = _STRICT

    x: Optional[str] = None
    y: Optional[str] = None
    z: Optional[str] = None
    theta: Optional[str] = None
    lam: Optional[str] = Field(None, alias="lambda")


class OutputSpec(BaseModel):
    model_config = _STRICT

    dir: str = "out"
    svg: bool = True
    timing: bool = False


class CheckgradSpec(BaseModel):
    model_config = _STRICT

    points: int = Field(20, ge=1)
    samples: int = Field(20, ge=1)
    seed: int = 0


class SweepSpec(BaseModel):
    model_config = _STRICT

    axis: Optional[Literal["p_exp", "n", "seed", "step_scale"]] = None
    values: List[float] = Field(default_factory=list)
    stop_at_target: bool = False

    @field_validator("values", mode="before")
    @classmethod
    def _split(cls, v):
        if isinstance(v, str):
            return [p.strip() for p in v.split(",") if p.strip()]
        return v


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: ProblemSpec
    solver: Dict[str, Any] = Field(default_factory=dict)
    init: InitSpec = Field(default_factory=InitSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)
    checkgrad: CheckgradSpec = Field(default_factory=CheckgradSpec)
    sweep: SweepSpec = Field(default_factory=SweepSpec)

    source: Optional[str] = Field(None, exclude=True)
    lines: Dict[str, int] = Field(default_factory=dict, exclude=True)

    # --- building blocks for a run ---

    def build_instance(self) -> BenchmarkInstance:
        spec = self.problem
        if spec.benchmark is not None:
            return build_benchmark(spec.benchmark, spec.n, spec.seed)
        return _load_external(spec.module, self._error)

    def solver_config(self, instance: BenchmarkInstance) -> SolverConfig:
        """Benchmark defaults overlaid with the solver.* keys."""
        merged = dict(instance.default_config.model_dump())
        merged.update(self.solver)
        try:
            return SolverConfig.model_validate(merged)
        except ValidationError as e:
            err = e.errors()[0]
            key = "solver." + ".".join(str(p) for p in err["loc"][:1])
            raise self._error(f"{key}: {err['msg']}", key) from e

    def make_init(self, instance: BenchmarkInstance) -> IterateState:
        p = instance.problem
        base = instance.make_init()
        spec = self.init
        return IterateState(
            x=self._vector("init.x", spec.x, p.dim_x, base.x),
            y=self._vector("init.y", spec.y, p.dim_y, base.y),
            z=self._vector("init.z", spec.z, p.dim_g, base.z),
            theta=self._vector("init.theta", spec.theta, p.dim_y, None),
            lam=self._vector("init.lambda", spec.lam, p.dim_g, None),
        )

    def _vector(self, key: str, text: Optional[str], dim: int, default):
        if text is None:
            return default
        try:
            return parse_vector(text, dim)
        except ValueError as e:
            raise self._error(f"{key}: {e}", key) from e

    def _error(self, message: str, key: Optional[str] = None) -> ConfigError:
        return ConfigError(message, path=self.source, line=self.lines.get(key) if key else None)

    # --- overrides and serialization ---

    def with_overrides(self, iters: Optional[int] = None, seed: Optional[int] = None,
                       out: Optional[str] = None, svg: Optional[bool] = None) -> "RunConfig":
        cfg = self.model_copy(deep=True)
        if iters is not None:
            cfg.solver["max_iters"] = iters
        if seed is not None:
            cfg.problem = cfg.problem.model_copy(update={"seed": seed})
        if out is not None:
            cfg.output = cfg.output.model_copy(update={"dir": out})
        if svg is not None:
            cfg.output = cfg.output.model_copy(update={"svg": svg})
        return cfg

    def to_flat(self, solver: Optional[SolverConfig] = None) -> Dict[str, str]:
        """Effective flat map; with `solver` every defaulted solver field is written out."""
        flat: Dict[str, str] = {}
        for section in ("problem", "init", "output", "checkgrad", "sweep"):
            for key, value in getattr(self, section).model_dump(by_alias=True).items():
                if value is None or (isinstance(value, list) and not value):
                    continue
                if isinstance(value, list):
                    value = ",".join(repr(float(v)) for v in value)
                flat[f"{section}.{key}"] = _text(value)
        if solver is not None:
            for key in SolverConfig.model_fields:
                value = getattr(solver, key)
                if value is not None:
                    flat[f"solver.{key}"] = _text(value)
        else:
            for key, value in self.solver.items():
                flat[f"solver.{key}"] = _text(value)
        return dict(sorted(flat.items()))


def _text(value) -> str:
    if isinstance(value, Schedule):
        return value.to_text()
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_vector(text: str, dim: int) -> np.ndarray:
    """'10*ones', 'ones', 'zeros', a scalar, or a comma list of length dim."""
    text = text.strip()
    head, star, tail = text.partition("*")
    if star:
        if tail.strip() != "ones":
            raise ValueError(f"expected '<scale>*ones', got '{text}'")
        return np.full(dim, float(head))
    if text == "ones":
        return np.ones(dim)
    if text == "zeros":
        return np.zeros(dim)
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) == 1 and "," not in text:
        return np.full(dim, float(parts[0]))
    if len(parts) != dim:
        raise ValueError(f"expected {dim} entries, got {len(parts)}")
    return np.array([float(p) for p in parts])


def _load_external(ref: str, error) -> BenchmarkInstance:
    module_name, _, attr = ref.partition(":")
    try:
        factory = getattr(importlib.import_module(module_name), attr)
    except (ImportError, AttributeError) as e:
        raise error(f"problem.module: cannot import '{ref}': {e}", "problem.module") from e
    try:
        built = factory()
    except Exception as e:
        raise error(f"problem.module: factory '{ref}' failed: {e}", "problem.module") from e
    if isinstance(built, BenchmarkInstance):
        return built
    if isinstance(built, BilevelProblem):
        return BenchmarkInstance(problem=built, name=built.name, default_config=SolverConfig(),
                                 moduli=built.moduli, init_scale=0.0)
    raise error(f"problem.module: factory returned {type(built).__name__}, "
                "expected BilevelProblem or BenchmarkInstance", "problem.module")


# --- files ---

def parse_properties(text: str, path: Optional[str] = None) -> Tuple[Dict[str, str], Dict[str, int]]:
    flat: Dict[str, str] = {}
    lines: Dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("!"):
            continue
        key, eq, value = line.partition("=")
        key = key.strip()
        if not eq or not key:
            raise ConfigError(f"expected 'key=value', got '{line}'", path, lineno)
        if key in flat:
            raise ConfigError(f"duplicate key '{key}' (first on line {lines[key]})", path, lineno)
        flat[key] = value.strip()
        lines[key] = lineno
    return flat, lines


def load_flat(path: str) -> Tuple[Dict[str, str], Dict[str, int]]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", path) from e
    if not path.endswith(".json"):
        return parse_properties(text, path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", path, e.lineno) from e
    if isinstance(data, dict) and isinstance(data.get("config"), dict):
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigError("JSON config must be an object of dotted keys", path)
    return {str(k): _text(v) for k, v in data.items() if v is not None}, {}


def nest(flat: Dict[str, str], path: Optional[str] = None,
         lines: Optional[Dict[str, int]] = None) -> Dict[str, Dict[str, str]]:
    lines = lines or {}
    nested: Dict[str, Dict[str, str]] = {}
    for key, value in flat.items():
        section, dot, name = key.partition(".")
        if not dot or not name:
            raise ConfigError(f"key '{key}' must be 'section.name'", path, lines.get(key))
        if section not in SECTIONS:
            raise ConfigError(f"unknown section '{section}' (expected one of {', '.join(SECTIONS)})",
                              path, lines.get(key))
        nested.setdefault(section, {})[name] = value
    return nested


def run_config_from_flat(flat: Dict[str, str], path: Optional[str] = None,
                         lines: Optional[Dict[str, int]] = None) -> RunConfig:
    lines = lines or {}
    nested = nest(flat, path, lines)
    if "problem" not in nested:
        raise ConfigError(f"missing problem.benchmark (one of {', '.join(BENCHMARKS)}) or problem.module", path)
    try:
        cfg = RunConfig.model_validate(nested)
    except ValidationError as e:
        err = e.errors()[0]
        loc = [str(p) for p in err["loc"] if not isinstance(p, int)]
        key = ".".join(loc[:2])
        raise ConfigError(f"{key}: {err['msg']}" if key else err["msg"], path, lines.get(key)) from e
    cfg.source = path
    cfg.lines = dict(lines)
    if cfg.solver:
        unknown = [k for k in cfg.solver if k not in SolverConfig.model_fields]
        if unknown:
            key = f"solver.{unknown[0]}"
            raise ConfigError(f"{key}: unknown solver option", path, lines.get(key))
    return cfg


def load_run_config(path: str) -> RunConfig:
    flat, lines = load_flat(path)
    cfg = run_config_from_flat(flat, path, lines)
    logger.debug("loaded %d keys from %s", len(flat), path)
    return cfg


def save_metadata(path: str, flat: Dict[str, str], **extra) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"config": flat, **extra}, f, indent=2, sort_keys=True, allow_nan=False)
