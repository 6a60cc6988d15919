"""Structured run configuration: YAML documents in, frozen run configs out.

Every dimensionful key carries an explicit unit suffix resolved at parse
time: `_mhz` for angular frequencies quoted as frequency over 2 pi, `_per_us`
for bare rates, `_us` for times, `_um` for lengths.  Unknown keys are
rejected with their full path; defaulted keys are recorded so an emitted
config is fully explicit and parses back to an identical run.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import ConfigError
from .experiments import (BoundStateConfig, HrsConfig, PumpConfig,
                          TransferConfig)
from .lattice import mhz

TAU = 2.0 * math.pi

# field-name unit classes shared by all run blocks
_ANGULAR = {"omega", "delta", "omega_center", "dimer_delta", "high_delta"}
_RATE = {"gamma", "kappa", "law_gamma", "exact_gamma", "factor_gamma",
         "factor_kappa", "single_atom_gamma"}
_TIME = {"period", "dt_max", "dimer_t_final", "high_t_final", "law_t_final",
         "exact_t_final", "exact_dt", "factor_t_final", "fit_window_start"}
_LENGTH = {"spacing", "sigma"}
_LENGTH_TUPLE = {"sigma_scan"}


@dataclass(frozen=True)
class ChernConfig:
    """Band-topology summary: Chern numbers and gap minima."""

    omega: float = mhz(5.0)
    delta: float = mhz(20.0)
    v_over_delta: float = 3.0
    include_nnn: bool = False
    n_k: int = 64
    n_phi: int = 64


@dataclass(frozen=True)
class DeriveConfig:
    """Effective-model coefficient dump for a homogeneous chain."""

    n_sites: int = 7
    omega: float = mhz(5.0)
    delta: float = mhz(50.0)
    v_over_delta: float = 3.0
    spacing: float = 4.4
    cutoff: int | None = None
    periodic: bool = False


@dataclass(frozen=True)
class ValidateConfig:
    seed: int = 0


EXPERIMENTS = {
    "transfer": TransferConfig,
    "pump": PumpConfig,
    "bound": BoundStateConfig,
    "hrs": HrsConfig,
    "chern": ChernConfig,
    "derive": DeriveConfig,
    "validate": ValidateConfig,
}

_TOP_LEVEL = ("experiment", "out", "plot", "formats", "seed", "threads",
              "ensemble", "engine")


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run: the frozen driver config plus output plumbing.

    `document` is the explicit form (defaults filled in, unit suffixes on)
    that emit_config writes; parsing that document reproduces this config.
    `defaulted` lists the key paths that were not present in the source.
    """

    experiment: str
    driver: object
    document: dict
    defaulted: tuple[str, ...]
    out_dir: str = "runs"
    plot: bool = False
    formats: tuple[str, ...] = ("csv", "json")


def _suffix_of(field_name: str) -> str:
    if field_name in _ANGULAR:
        return "_mhz"
    if field_name in _RATE:
        return "_per_us"
    if field_name in _TIME:
        return "_us"
    if field_name in _LENGTH or field_name in _LENGTH_TUPLE:
        return "_um"
    return ""


def _to_internal(field_name: str, value):
    if field_name in _ANGULAR:
        return mhz(float(value))
    if field_name in _LENGTH_TUPLE:
        return tuple(float(v) for v in value)
    if field_name in _RATE | _TIME | _LENGTH:
        return float(value)
    return value


def _to_display(field_name: str, value):
    if field_name in _ANGULAR:
        return value / TAU
    if isinstance(value, tuple):
        return list(value)
    return value


def _resolve_block(experiment: str, block: dict) -> tuple[object, dict, list]:
    cls = EXPERIMENTS[experiment]
    fields = {f.name: f for f in dataclasses.fields(cls)}
    by_key = {f.name + _suffix_of(f.name): f.name for f in fields.values()}

    kwargs = {}
    for key, value in block.items():
        path = f"{experiment}.{key}"
        if key not in by_key:
            if key in fields and _suffix_of(key):
                raise ConfigError(
                    f"{path}: unit suffix required, use {key}{_suffix_of(key)}")
            raise ConfigError(f"{path}: unknown key")
        name = by_key[key]
        if _suffix_of(name):
            try:
                kwargs[name] = _to_internal(name, value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        else:
            kwargs[name] = tuple(value) if isinstance(value, list) else value

    defaulted = []
    for name, fld in fields.items():
        if name not in kwargs:
            defaulted.append(f"{experiment}.{name}{_suffix_of(name)}")

    try:
        driver = cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{experiment}: {exc}") from exc

    resolved = {}
    for name in fields:
        resolved[name + _suffix_of(name)] = _to_display(
            name, getattr(driver, name))
    return driver, resolved, defaulted


def _build(data: dict, source: str) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected a mapping at top level")
    data = dict(data)
    experiment = data.get("experiment")
    if experiment is None:
        raise ConfigError(f"{source}: missing required key 'experiment'")
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            f"{source}: unknown experiment {experiment!r}; choose from "
            f"{sorted(EXPERIMENTS)}")

    for key in data:
        if key not in _TOP_LEVEL and key != experiment:
            raise ConfigError(f"{source}: unknown key {key!r}")

    block = data.get(experiment, {})
    if not isinstance(block, dict):
        raise ConfigError(f"{source}: {experiment} block must be a mapping")
    block = dict(block)

    # top-level conveniences fold into the experiment block
    for name in ("seed", "threads"):
        if data.get(name) is not None:
            block = _inject(experiment, block, name, data[name])
    if data.get("ensemble") is not None:
        block = _inject_ensemble(experiment, block, int(data["ensemble"]))
    if data.get("engine") is not None:
        block = _inject_engine(experiment, block, str(data["engine"]))

    driver, resolved, defaulted = _resolve_block(experiment, block)

    out_dir = str(data.get("out", "runs"))
    plot = bool(data.get("plot", False))
    formats = data.get("formats", ["csv", "json"])
    if not isinstance(formats, (list, tuple)) or not all(
            f in ("csv", "json") for f in formats):
        raise ConfigError(f"{source}: formats must be a list drawn from "
                          f"['csv', 'json']")

    document = {
        "experiment": experiment,
        "out": out_dir,
        "plot": plot,
        "formats": list(formats),
        experiment: resolved,
    }
    return RunConfig(experiment=experiment, driver=driver, document=document,
                     defaulted=tuple(defaulted), out_dir=out_dir, plot=plot,
                     formats=tuple(formats))


def _inject(experiment: str, block: dict, name: str, value) -> dict:
    cls = EXPERIMENTS[experiment]
    if name not in {f.name for f in dataclasses.fields(cls)}:
        raise ConfigError(f"{experiment} does not take '{name}'")
    out = dict(block)
    out[name] = value
    return out


def _inject_ensemble(experiment: str, block: dict, count: int) -> dict:
    out = dict(block)
    if experiment == "transfer":
        out["effective_members"] = count
        out["exact_members"] = count
        out["scan_members"] = count
    elif experiment in ("bound", "hrs"):
        out["trajectories"] = count
    else:
        raise ConfigError(f"{experiment} does not take an ensemble size")
    return out


def _inject_engine(experiment: str, block: dict, engine: str) -> dict:
    if engine not in ("exact", "effective", "trajectory"):
        raise ConfigError(
            f"engine must be exact, effective or trajectory, got {engine!r}")
    out = dict(block)
    if experiment == "pump":
        if engine == "effective":
            out["engines"] = ["nn", "nnn"]
        elif engine == "exact":
            out["engines"] = ["nn", "nnn", "exact"]
        else:
            raise ConfigError("pump has no trajectory engine (gamma = 0)")
    elif experiment == "bound":
        if engine == "effective":
            out["fast"] = True
        elif engine == "trajectory":
            out["include_exact_dephased"] = True
        # exact: the default engine set
    elif experiment == "hrs":
        if engine == "trajectory":
            out["method"] = "trajectory"
        elif engine == "exact":
            out["method"] = "dense"
        else:
            raise ConfigError("hrs has no effective engine; use exact "
                              "(dense) or trajectory")
    else:
        raise ConfigError(f"{experiment} runs a fixed engine set")
    return out


def parse_config(path: str | Path) -> RunConfig:
    """Load and fully resolve a YAML run configuration."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return _build(data if data is not None else {}, str(path))


def config_from_dict(data: dict, source: str = "<dict>") -> RunConfig:
    return _build(data, source)


def default_config(experiment: str) -> RunConfig:
    return _build({"experiment": experiment}, "<defaults>")


def emit_config(cfg: RunConfig) -> str:
    """Serialize the fully resolved document; parsing it back is identity."""
    return yaml.safe_dump(cfg.document, sort_keys=True,
                          default_flow_style=False)


def apply_overrides(cfg: RunConfig, *, seed: int | None = None,
                    threads: int | None = None, ensemble: int | None = None,
                    engine: str | None = None, out: str | None = None,
                    plot: bool | None = None) -> RunConfig:
    """Re-resolve the run with command-line overrides folded in."""
    data = {k: v for k, v in cfg.document.items()}
    if seed is not None:
        data["seed"] = seed
    if threads is not None:
        data["threads"] = threads
    if ensemble is not None:
        data["ensemble"] = ensemble
    if engine is not None:
        data["engine"] = engine
    if out is not None:
        data["out"] = out
    if plot is not None:
        data["plot"] = plot
    return _build(data, "<overrides>")
