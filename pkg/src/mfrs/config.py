"""Scenario configuration: INI-style files, strict key checking, overrides.

A scenario file has the sections below; unknown sections or keys are
rejected so typos in sweep configs fail loudly instead of silently using
defaults.  ``--set section.key=value`` overrides apply on the raw text
values before typing.

Models are also constructible from plain JSON-style dicts whose field
names match the dataclass fields (see ``model_from_dict``).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import InputError
from .models import (GenericModel, InitialLaw, LQMatrixModel, LQScalarModel,
                     RiskParams, TimeGrid, risk_seeking_transform)

__all__ = [
    "ScenarioConfig",
    "load_config",
    "parse_raw_config",
    "apply_overrides",
    "build_scenario",
    "model_from_dict",
    "risk_from_dict",
    "grid_from_dict",
    "initial_law_from_dict",
    "GENERIC_CATALOG",
]


# ---------------------------------------------------------------------------
# generic-model catalog
# ---------------------------------------------------------------------------

def _build_lq_mirror(params: dict, risk: RiskParams) -> GenericModel:
    a = params.get("a", 0.0)
    b = params.get("b", 0.0)
    sigma = params.get("sigma", 1.0)
    r = params.get("r", 1.0)
    q = params.get("q", 0.0)
    qT = params.get("qT", 1.0)
    beta = risk.beta
    return GenericModel(
        f=lambda x, stat, v: 0.5 * (r * v * v + q * x * x),
        g=lambda x, stat, v: a * x + b * v,
        sigma=lambda x: sigma * np.ones_like(np.asarray(x, dtype=float)),
        h=lambda x, stat: 0.5 * qT * x * x + beta * stat,
    )


def _build_kinked_control(params: dict, risk: RiskParams) -> GenericModel:
    sigma = params.get("sigma", 1.0)
    return GenericModel(
        f=lambda x, stat, v: np.abs(v),
        g=lambda x, stat, v: x + v,
        sigma=lambda x: sigma * np.ones_like(np.asarray(x, dtype=float)),
        h=lambda x, stat: 0.5 * x * x,
    )


GENERIC_CATALOG: dict = {
    "lq_mirror": _build_lq_mirror,
    "kinked_control": _build_kinked_control,
}


# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------

_SCHEMA = {
    "model": {"type", "name", "a", "b", "sigma", "r", "qT", "q",
              "A", "B", "Q", "R", "QT", "Sigma"},
    "risk": {"alpha", "beta", "risk_seeking"},
    "grid": {"T", "n_steps"},
    "init": {"kind", "mean", "variance", "samples"},
    "policy": {"type", "gain"},
    "mc": {"n_particles", "seed", "save_every"},
    "fpk": {"n_x", "n_z", "x_bounds", "z_max_factor", "z_max"},
    "output": {"directory", "formats", "scenario_id"},
    "value": {"routes"},
    "sweep": {"key", "values"},
    "validate": {"alphas"},
}

_DEFAULTS = {
    "risk": {"beta": "0.0", "risk_seeking": "false"},
    "init": {"kind": "dirac", "mean": "0.0", "variance": "0.0"},
    "policy": {"type": "optimal"},
    "mc": {"n_particles": "10000", "seed": "0", "save_every": "1"},
    "fpk": {"n_x": "200", "n_z": "100", "x_bounds": "-8, 10",
            "z_max_factor": "1.5"},
    "output": {"directory": "out", "formats": "csv, json"},
    "value": {"routes": "closed_form, mc, pde"},
    "validate": {"alphas": "0.2, 0.1, 0.05"},
}


def _f(raw: dict, section: str, key: str) -> float:
    try:
        return float(raw[section][key])
    except KeyError:
        raise InputError(f"missing required key {section}.{key}") from None
    except ValueError:
        raise InputError(
            f"{section}.{key} must be a number, got {raw[section][key]!r}") from None


def _i(raw: dict, section: str, key: str) -> int:
    try:
        return int(raw[section][key])
    except KeyError:
        raise InputError(f"missing required key {section}.{key}") from None
    except ValueError:
        raise InputError(
            f"{section}.{key} must be an integer, got {raw[section][key]!r}") from None


def _b(raw: dict, section: str, key: str) -> bool:
    val = raw[section][key].strip().lower()
    if val in ("true", "1", "yes", "on"):
        return True
    if val in ("false", "0", "no", "off"):
        return False
    raise InputError(f"{section}.{key} must be a boolean, got {val!r}")


def _floats(text: str) -> list:
    parts = [p for p in text.replace(",", " ").split() if p]
    return [float(p) for p in parts]


def _strings(text: str) -> list:
    return [p.strip() for p in text.split(",") if p.strip()]


def _matrix(text: str) -> np.ndarray:
    rows = [r for r in text.split(";") if r.strip()]
    return np.array([_floats(r) for r in rows], dtype=float)


# ---------------------------------------------------------------------------
# raw parsing and overrides
# ---------------------------------------------------------------------------

def parse_raw_config(path) -> dict:
    """Read an INI scenario file into {section: {key: raw string}} with defaults."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (q vs Q, T, qT)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as err:
        raise InputError(f"config parse error: {err}") from None

    raw: dict = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise InputError(f"unknown config section [{section}]")
        raw[section] = {}
        for key, value in parser.items(section):
            raw[section][_match_key(section, key)] = value
    _fill_defaults(raw)
    return raw


def _match_key(section: str, key: str) -> str:
    if key in _SCHEMA[section]:
        return key
    raise InputError(f"unknown key {key!r} in section [{section}]")


def _fill_defaults(raw: dict) -> None:
    for section, defaults in _DEFAULTS.items():
        raw.setdefault(section, {})
        for key, value in defaults.items():
            raw[section].setdefault(key, value)


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply repeatable ``section.key=value`` strings onto the raw config."""
    out = {s: dict(kv) for s, kv in raw.items()}
    for item in overrides or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise InputError(f"override must look like section.key=value, got {item!r}")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        section = section.strip()
        if section not in _SCHEMA:
            raise InputError(f"unknown config section [{section}] in override {item!r}")
        canonical = _match_key(section, key.strip())
        out.setdefault(section, {})[canonical] = value.strip()
    return out


# ---------------------------------------------------------------------------
# scenario assembly
# ---------------------------------------------------------------------------

@dataclass
class ScenarioConfig:
    """Fully typed scenario: model, risk, grid, initial law and run settings."""

    model: object
    risk: RiskParams
    grid: TimeGrid
    init: InitialLaw
    policy_type: str
    policy_gain: float | None
    n_particles: int
    seed: int
    save_every: int
    n_x: int
    n_z: int
    x_bounds: tuple
    z_max_factor: float
    z_max: float | None
    out_dir: str
    formats: tuple
    scenario_id: str
    routes: tuple
    validate_alphas: tuple
    sweep_key: str | None
    sweep_values: tuple
    raw: dict = field(repr=False, default_factory=dict)


def _build_model(raw: dict, risk: RiskParams):
    section = raw.get("model", {})
    mtype = section.get("type")
    if mtype is None:
        raise InputError("missing required key model.type")
    if mtype == "scalar_lq":
        return LQScalarModel(
            a=_f(raw, "model", "a"), b=_f(raw, "model", "b"),
            sigma=_f(raw, "model", "sigma"),
            r=float(section.get("r", 1.0)), q=float(section.get("q", 0.0)),
            qT=float(section.get("qT", 1.0)),
        )
    if mtype == "matrix_lq":
        try:
            return LQMatrixModel(
                A=_matrix(section["A"]), B=_matrix(section["B"]),
                Q=_matrix(section["Q"]), R=_matrix(section["R"]),
                QT=_matrix(section["QT"]), Sigma=_matrix(section["Sigma"]),
            )
        except KeyError as err:
            raise InputError(f"missing matrix key model.{err.args[0]}") from None
    if mtype == "generic":
        name = section.get("name")
        if name not in GENERIC_CATALOG:
            raise InputError(
                f"unknown generic model {name!r}; catalog: {sorted(GENERIC_CATALOG)}")
        params = {k: float(v) for k, v in section.items()
                  if k not in ("type", "name")}
        return GENERIC_CATALOG[name](params, risk)
    raise InputError(f"unknown model.type {mtype!r}")


def build_scenario(raw: dict) -> ScenarioConfig:
    """Type-check the raw config and construct every domain object."""
    _fill_defaults(raw)
    for section, keys in raw.items():
        for key, value in keys.items():
            if not isinstance(value, str):
                raise InputError(f"{section}.{key} must be a string value")

    alpha = _f(raw, "risk", "alpha")
    beta = _f(raw, "risk", "beta")
    if not np.isfinite(alpha) or alpha <= 0:
        raise InputError(f"risk.alpha must be positive and finite, got {alpha}")
    risk = RiskParams(alpha=alpha, beta=beta)

    model = _build_model(raw, risk)
    if _b(raw, "risk", "risk_seeking"):
        if not isinstance(model, GenericModel):
            raise InputError("risk_seeking=true requires a generic model "
                             "(the cost negation is applied as preprocessing)")
        model = risk_seeking_transform(model)

    grid = TimeGrid(T=_f(raw, "grid", "T"), n_steps=_i(raw, "grid", "n_steps"))

    kind = raw["init"]["kind"].strip().lower()
    if kind == "dirac":
        init = InitialLaw.dirac(_f(raw, "init", "mean"))
    elif kind == "gaussian":
        init = InitialLaw.gaussian(_f(raw, "init", "mean"),
                                   _f(raw, "init", "variance"))
    elif kind == "samples":
        init = InitialLaw.from_samples(_floats(raw["init"].get("samples", "")))
    else:
        raise InputError(f"unknown init.kind {kind!r}")

    policy_type = raw["policy"]["type"].strip().lower()
    if policy_type not in ("optimal", "zero", "constant_gain"):
        raise InputError(f"unknown policy.type {policy_type!r}")
    policy_gain = float(raw["policy"]["gain"]) if "gain" in raw["policy"] else None
    if policy_type == "constant_gain" and policy_gain is None:
        raise InputError("policy.type=constant_gain requires policy.gain")

    bounds = _floats(raw["fpk"]["x_bounds"])
    if len(bounds) != 2 or bounds[0] >= bounds[1]:
        raise InputError(f"fpk.x_bounds must be 'lo, hi' with lo < hi, got {bounds}")

    routes = tuple(_strings(raw["value"]["routes"]))
    for route in routes:
        if route not in ("closed_form", "mc", "pde"):
            raise InputError(f"unknown value route {route!r}")

    sweep_key = raw.get("sweep", {}).get("key")
    sweep_values = tuple(_strings(raw.get("sweep", {}).get("values", "")))

    alphas = tuple(_floats(raw["validate"]["alphas"]))

    n_particles = _i(raw, "mc", "n_particles")
    if n_particles < 2:
        raise InputError(f"mc.n_particles must be >= 2, got {n_particles}")

    for section in raw:
        for key, value in raw[section].items():
            if key in ("type", "name", "kind", "directory", "formats",
                       "scenario_id", "routes", "key", "values", "samples",
                       "risk_seeking", "x_bounds", "alphas",
                       "A", "B", "Q", "R", "QT", "Sigma", "gain"):
                continue
            if not np.isfinite(float(value)):
                raise InputError(f"{section}.{key} must be finite, got {value}")

    return ScenarioConfig(
        model=model, risk=risk, grid=grid, init=init,
        policy_type=policy_type, policy_gain=policy_gain,
        n_particles=n_particles, seed=_i(raw, "mc", "seed"),
        save_every=_i(raw, "mc", "save_every"),
        n_x=_i(raw, "fpk", "n_x"), n_z=_i(raw, "fpk", "n_z"),
        x_bounds=(bounds[0], bounds[1]),
        z_max_factor=_f(raw, "fpk", "z_max_factor"),
        z_max=float(raw["fpk"]["z_max"]) if "z_max" in raw["fpk"] else None,
        out_dir=raw["output"]["directory"],
        formats=tuple(_strings(raw["output"]["formats"])),
        scenario_id=raw["output"].get("scenario_id", "scenario"),
        routes=routes, validate_alphas=alphas,
        sweep_key=sweep_key, sweep_values=sweep_values,
        raw=raw,
    )


def load_config(path, overrides=()) -> ScenarioConfig:
    return build_scenario(apply_overrides(parse_raw_config(path), overrides))


# ---------------------------------------------------------------------------
# JSON object loaders (field names match the dataclass fields)
# ---------------------------------------------------------------------------

def model_from_dict(d: dict):
    """Build a model from {'type': 'scalar_lq'|'matrix_lq', ...field values}."""
    d = dict(d)
    mtype = d.pop("type", None)
    if mtype == "scalar_lq":
        return LQScalarModel(**d)
    if mtype == "matrix_lq":
        return LQMatrixModel(**{k: np.asarray(v, dtype=float) for k, v in d.items()})
    raise InputError(f"unknown model type {mtype!r}")


def risk_from_dict(d: dict) -> RiskParams:
    return RiskParams(alpha=float(d["alpha"]), beta=float(d.get("beta", 0.0)))


def grid_from_dict(d: dict) -> TimeGrid:
    return TimeGrid(T=float(d["T"]), n_steps=int(d["n_steps"]))


def initial_law_from_dict(d: dict) -> InitialLaw:
    kind = d.get("kind")
    if kind == "dirac":
        return InitialLaw.dirac(float(d["mean"]))
    if kind == "gaussian":
        return InitialLaw.gaussian(float(d["mean"]), float(d["variance"]))
    if kind == "samples":
        return InitialLaw.from_samples(d["samples"])
    raise InputError(f"unknown initial law kind {kind!r}")
