"""Run configuration: flat ``section.key = value`` text, parsed as TOML.

The canonical form written by :func:`save_config` lists every key in a fixed
order, so ``save_config(load_config(path))`` reproduces a canonical file byte
for byte.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import tomli

from .eos import ALPHA_MAPS, EosModel, alpha_map_from_dict
from .errors import ConfigError, HemError
from .presets import DEFAULT_BOUNDARY, PRESET_DEFAULTS, preset_initial_condition, preset_params
from .relax_solver import Grid1D, SolverConfig

OUT_ENV = "HEMRELAX_OUT"
FORMATS = ("fields", "series", "report")


@dataclass(frozen=True)
class SweepSpec:
    eps_list: tuple = (1e-2, 3.16e-3, 1e-3, 3.16e-4)
    slope_min: float = 0.45
    slope_max: float = 1.3
    precheck: bool = True
    workers: int = 1
    synthetic: bool = False
    synthetic_power: float = 0.5


@dataclass(frozen=True)
class ValidateSpec:
    n_samples: int = 1000
    u_max: float = 1.0
    alpha_width: float = 0.05


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "out"
    formats: tuple = FORMATS


@dataclass(frozen=True)
class RunConfig:
    preset: str = "gaussian"
    params: dict = field(default_factory=dict)
    seed: int = 0
    eos: EosModel = field(default_factory=EosModel)
    grid: Grid1D = field(default_factory=lambda: Grid1D(400))
    solver: SolverConfig = field(default_factory=SolverConfig)
    outputs: OutputSpec = field(default_factory=OutputSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    validate: ValidateSpec = field(default_factory=ValidateSpec)

    def with_overrides(self, eps: float | None = None, cells: int | None = None,
                       out: str | None = None, preset: str | None = None) -> "RunConfig":
        cfg = self
        try:
            if preset is not None and preset != cfg.preset:
                cfg = replace(cfg, preset=preset, params={},
                              grid=replace(cfg.grid, boundary=DEFAULT_BOUNDARY[preset]))
            if eps is not None:
                cfg = replace(cfg, solver=replace(cfg.solver, eps=float(eps)))
            if cells is not None:
                cfg = replace(cfg, grid=replace(cfg.grid, n_cells=int(cells)))
        except HemError as exc:
            raise ConfigError(str(exc)) from exc
        if out is not None:
            cfg = replace(cfg, outputs=replace(cfg.outputs, dir=str(out)))
        return cfg

    def resolved_params(self) -> dict:
        return preset_params(self.preset, self.params)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_SECTIONS = ("params", "eos", "grid", "solver", "outputs", "sweep", "validate")
_TOP = ("preset", "seed")


def _take(table: dict, allowed: set, where: str) -> dict:
    unknown = sorted(set(table) - allowed)
    if unknown:
        prefix = "" if where == "top level" else where + "."
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(prefix + k for k in unknown)}")
    return table


def _typed(value, kind, key):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string")
        return value
    return value


def _build(cls, table: dict, where: str, tuple_kinds: dict | None = None):
    tuple_kinds = tuple_kinds or {}
    kinds = {f.name: f.type for f in fields(cls)}
    _take(table, set(kinds), where)
    kw = {}
    for k, v in table.items():
        key = f"{where}.{k}"
        if k in tuple_kinds:
            if not isinstance(v, list):
                raise ConfigError(f"{key} must be a list")
            kw[k] = tuple(_typed(x, tuple_kinds[k], key) for x in v)
        else:
            kind = {"int": int, "float": float, "str": str, "bool": bool}.get(str(kinds[k]), None)
            kw[k] = _typed(v, kind, key)
    try:
        return cls(**kw)
    except HemError as exc:
        raise ConfigError(str(exc)) from exc


def config_from_dict(doc: dict) -> RunConfig:
    _take(doc, set(_TOP) | set(_SECTIONS), "top level")
    for s in _SECTIONS:
        if s in doc and not isinstance(doc[s], dict):
            raise ConfigError(f"{s} must be a section of dotted keys")
    preset = _typed(doc.get("preset", RunConfig.preset), str, "preset")
    if preset not in PRESET_DEFAULTS:
        raise ConfigError(f"preset {preset!r} does not exist; expected one of {sorted(PRESET_DEFAULTS)}")
    params = dict(doc.get("params", {}))
    _take(params, set(PRESET_DEFAULTS[preset]), "params")
    params = {k: _typed(v, float, f"params.{k}") for k, v in params.items()}

    eos_tab = dict(doc.get("eos", {}))
    amap_tab = eos_tab.pop("alpha_eq", None)
    eos_kinds = {f.name for f in fields(EosModel)} - {"alpha_eq"}
    _take(eos_tab, eos_kinds, "eos")
    eos_kw = {k: _typed(v, float, f"eos.{k}") for k, v in eos_tab.items()}
    try:
        if amap_tab is not None:
            if not isinstance(amap_tab, dict):
                raise ConfigError("eos.alpha_eq must be a section of dotted keys")
            kind = amap_tab.get("kind", "affine_clamp")
            if kind not in ALPHA_MAPS:
                raise ConfigError(f"eos.alpha_eq.kind must be one of {sorted(ALPHA_MAPS)}, got {kind!r}")
            allowed = {f.name for f in fields(ALPHA_MAPS[kind])} | {"kind"}
            _take(amap_tab, allowed, "eos.alpha_eq")
            for k, v in amap_tab.items():
                if k != "kind":
                    _typed(v, float, f"eos.alpha_eq.{k}")
            eos_kw["alpha_eq"] = alpha_map_from_dict(amap_tab)
        eos = EosModel(**eos_kw)
    except ConfigError:
        raise
    except HemError as exc:
        raise ConfigError(str(exc)) from exc

    grid_tab = dict(doc.get("grid", {}))
    grid_tab.setdefault("n_cells", 400)
    grid_tab.setdefault("boundary", DEFAULT_BOUNDARY[preset])
    grid = _build(Grid1D, grid_tab, "grid")
    solver = _build(SolverConfig, dict(doc.get("solver", {})), "solver")
    outputs = _build(OutputSpec, dict(doc.get("outputs", {})), "outputs", {"formats": str})
    bad = sorted(set(outputs.formats) - set(FORMATS))
    if bad:
        raise ConfigError(f"outputs.formats has unknown entries {bad}; expected a subset of {list(FORMATS)}")
    sweep = _build(SweepSpec, dict(doc.get("sweep", {})), "sweep", {"eps_list": float})
    validate = _build(ValidateSpec, dict(doc.get("validate", {})), "validate")
    if validate.n_samples < 1:
        raise ConfigError("validate.n_samples must be positive")
    if sweep.workers < 1:
        raise ConfigError("sweep.workers must be positive")
    seed = _typed(doc.get("seed", 0), int, "seed")

    cfg = RunConfig(preset, params, seed, eos, grid, solver, outputs, sweep, validate)
    try:
        # builds the profile once so parameters leaving the operating range fail at load time
        preset_initial_condition(preset, params, grid, eos)
    except HemError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def loads_config(text: str) -> RunConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"parse error at line {line}: {getattr(exc, 'msg', exc)}") from exc
    return config_from_dict(doc)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        return loads_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# canonical form
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    raise TypeError(f"cannot format {v!r}")


def config_to_lines(cfg: RunConfig) -> list[str]:
    lines = [f"preset = {_fmt(cfg.preset)}", f"seed = {_fmt(cfg.seed)}"]
    for k, v in cfg.resolved_params().items():
        lines.append(f"params.{k} = {_fmt(v)}")
    eos = cfg.eos.to_dict()
    amap = eos.pop("alpha_eq")
    lines += [f"eos.{k} = {_fmt(v)}" for k, v in eos.items()]
    lines += [f"eos.alpha_eq.{k} = {_fmt(v)}" for k, v in amap.items()]
    for name in ("grid", "solver", "outputs", "sweep", "validate"):
        obj = getattr(cfg, name)
        for f in fields(obj):
            lines.append(f"{name}.{f.name} = {_fmt(getattr(obj, f.name))}")
    return lines


def dumps_config(cfg: RunConfig) -> str:
    return "\n".join(config_to_lines(cfg)) + "\n"


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(dumps_config(cfg), encoding="utf-8")


def resolve_out_dir(cfg: RunConfig, flag: str | None = None) -> Path:
    """``--out`` wins, then the ``HEMRELAX_OUT`` variable, then ``outputs.dir``."""
    if flag:
        return Path(flag)
    env = os.environ.get(OUT_ENV)
    return Path(env) if env else Path(cfg.outputs.dir)
