"""Scenario configuration files (TOML) and scenario construction.

Precedence, lowest first: built-in defaults, the scenario file, ``--set``
overrides, then the dedicated CLI flags (``--step``, ``--horizon``,
``--delay-steps``, ``--controller``).
"""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .components import Generator, GenParams, RlcParams, RlcSource
from .controllers import (BraytonMoserController, BraytonMoserGains, DroopController, DroopGains,
                          EnergyController, FblcGains, ProportionalController, ProportionalGains,
                          SmcGains, ZeroGainController)
from .interconnect import DisturbanceChannel
from .loads import LoadProfileError, profile_from_config
from .sim import Scenario

PLANTS = ("rlc", "generator")
CONTROLLERS = ("fblc", "smc", "proportional", "brayton_moser", "droop", "constant")
RLC_ONLY = ("proportional", "brayton_moser")
GEN_ONLY = ("droop",)

SCENARIO_DIR = Path(__file__).with_name("scenarios")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


_PLANT_DEFAULTS = {
    "rlc": {"y_ref": 80.0, "x0": [12.8, 79.0], "h": 1e-4,
            "smc": {"M0": 5.4, "M1": 2.9, "eps_bl": 0.0}},
    "generator": {"y_ref": 377.0, "x0": [373.23, 1000.0], "h": 1e-3,
                  "smc": {"M0": 10.0, "M1": 1.0, "eps_bl": 0.0}},
}

_GAIN_TYPES = {
    "fblc": FblcGains, "smc": SmcGains, "proportional": ProportionalGains,
    "brayton_moser": BraytonMoserGains, "droop": DroopGains,
}

# allowed keys per table; a value of None means "free-form"
_SCHEMA: dict[str, Any] = {
    "name": str, "description": str,
    "plant": {"kind": str, "y_ref": float, "x0": list, "params": dict},
    "controller": {"kind": str, "u0": float, "pdot_estimate": bool, "filter_tau": float,
                   "a0": float, "u": float},
    "gains": {k: dict for k in _GAIN_TYPES},
    "load": None,
    "sim": {"T": float, "h": float, "delay_steps": int, "decimation": int},
    "disturbance": None,
    "metrics": {"window": float, "band_basis": str},
    "compare": {"controllers": list},
    "sweep": {"grid": dict, "seed": int},
    "certificate": {"Mbar": float},
}


def _check_schema(cfg: Mapping, schema: Mapping, prefix: str = "") -> None:
    for key, val in cfg.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(path, "unknown key")
        want = schema[key]
        if want is None:
            if not isinstance(val, dict):
                raise ConfigError(path, "expected a table")
            continue
        if isinstance(want, dict):
            if not isinstance(val, dict):
                raise ConfigError(path, "expected a table")
            _check_schema(val, want, path + ".")
            continue
        if want is float:
            ok = isinstance(val, (int, float)) and not isinstance(val, bool)
        elif want is int:
            ok = isinstance(val, int) and not isinstance(val, bool)
        else:
            ok = isinstance(val, want)
        if not ok:
            raise ConfigError(path, f"expected {want.__name__}, got {type(val).__name__}")


def parse_text(text: str, source: str = "<string>") -> dict:
    try:
        cfg = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"{source}: {exc}") from exc
    return cfg


def resolve_scenario_path(name_or_path: str | Path) -> Path:
    """A file path, or the name of a shipped scenario (with or without ``.toml``)."""
    p = Path(name_or_path)
    if p.is_file():
        return p
    stem = p.name[:-5] if p.name.endswith(".toml") else p.name
    shipped = SCENARIO_DIR / f"{stem}.toml"
    if shipped.is_file():
        return shipped
    raise ConfigError("--scenario", f"no such scenario file or shipped scenario: {name_or_path}")


def shipped_scenarios() -> list[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.toml"))


def load_config(path: str | Path) -> dict:
    path = resolve_scenario_path(path)
    cfg = parse_text(path.read_text(), str(path))
    cfg.setdefault("name", path.stem)
    return cfg


def parse_value(text: str) -> Any:
    """A TOML value (number, bool, array, inline table); bare words stay strings."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def set_path(cfg: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    if not all(parts):
        raise ConfigError(dotted, "malformed key path")
    node = cfg
    for part in parts[:-1]:
        nxt = node.setdefault(part, {})
        if not isinstance(nxt, dict):
            raise ConfigError(dotted, f"'{part}' is not a table")
        node = nxt
    node[parts[-1]] = value


def get_path(cfg: Mapping, dotted: str, default: Any = None) -> Any:
    node: Any = cfg
    for part in dotted.split("."):
        if not isinstance(node, Mapping) or part not in node:
            return default
        node = node[part]
    return node


def apply_overrides(cfg: dict, assignments: list[str] | None = None, *, step: float | None = None,
                    horizon: float | None = None, delay_steps: int | None = None,
                    controller: str | None = None) -> dict:
    """Return a copy of ``cfg`` with ``--set`` assignments, then flags, applied."""
    out = copy.deepcopy(cfg)
    for item in assignments or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(item, "override must look like key=value")
        set_path(out, key.strip(), parse_value(val.strip()))
    if step is not None:
        set_path(out, "sim.h", float(step))
    if horizon is not None:
        set_path(out, "sim.T", float(horizon))
    if delay_steps is not None:
        set_path(out, "sim.delay_steps", int(delay_steps))
    if controller is not None:
        set_path(out, "controller.kind", controller)
    return out


def validate(cfg: Mapping) -> None:
    """Structural checks; value checks happen while building the scenario."""
    _check_schema(cfg, _SCHEMA)
    for section in ("plant", "controller", "load"):
        if section not in cfg:
            raise ConfigError(section, "missing required section")
    kind = get_path(cfg, "plant.kind")
    if kind not in PLANTS:
        raise ConfigError("plant.kind", f"must be one of {PLANTS}, got {kind!r}")
    ctrl = get_path(cfg, "controller.kind")
    if ctrl is None:
        raise ConfigError("controller.kind", "missing")
    if ctrl not in CONTROLLERS:
        raise ConfigError("controller.kind", f"must be one of {CONTROLLERS}, got {ctrl!r}")
    for name in get_path(cfg, "compare.controllers", []) or []:
        if name not in CONTROLLERS:
            raise ConfigError("compare.controllers", f"unknown controller {name!r}")
    basis = get_path(cfg, "metrics.band_basis", "span")
    if basis not in ("reference", "span"):
        raise ConfigError("metrics.band_basis", "must be 'reference' or 'span'")


def config_hash(cfg: Mapping) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def gains_for(cfg: Mapping, kind: str):
    """Gain object for controller ``kind``, with plant-dependent defaults."""
    plant = get_path(cfg, "plant.kind")
    base: dict = {}
    if kind == "smc":
        base.update(_PLANT_DEFAULTS[plant]["smc"])
    base.update(get_path(cfg, f"gains.{kind}", {}) or {})
    cls = _GAIN_TYPES[kind]
    try:
        return cls(**base)
    except TypeError as exc:
        raise ConfigError(f"gains.{kind}", str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(f"gains.{kind}", str(exc)) from exc


def _plant(cfg: Mapping):
    kind = get_path(cfg, "plant.kind")
    params = get_path(cfg, "plant.params", {}) or {}
    try:
        if kind == "rlc":
            return RlcSource(RlcParams(**params))
        return Generator(GenParams(**params))
    except (TypeError, ValueError) as exc:
        raise ConfigError("plant.params", str(exc)) from exc


def build_controller(cfg: Mapping, plant, kind: str | None = None, h: float | None = None):
    kind = kind or get_path(cfg, "controller.kind")
    pk = get_path(cfg, "plant.kind")
    if kind in RLC_ONLY and pk != "rlc":
        raise ConfigError("controller.kind", f"{kind} is defined for the RLC source only")
    if kind in GEN_ONLY and pk != "generator":
        raise ConfigError("controller.kind", f"{kind} is defined for the generator only")
    y_ref = float(get_path(cfg, "plant.y_ref", _PLANT_DEFAULTS[pk]["y_ref"]))
    c = get_path(cfg, "controller", {}) or {}
    if kind in ("fblc", "smc"):
        x0 = get_path(cfg, "plant.x0", _PLANT_DEFAULTS[pk]["x0"])
        u0 = float(c.get("u0", x0[1] if pk == "rlc" else 0.0))
        # the practical estimator uses a filter of ten integration steps
        tau = float(c.get("filter_tau", 10.0 * (h or _PLANT_DEFAULTS[pk]["h"])))
        if tau <= 0:
            raise ConfigError("controller.filter_tau", "must be positive")
        return EnergyController(plant, y_ref, kind, gains_for(cfg, kind), u0=u0,
                                pdot_estimate=bool(c.get("pdot_estimate", False)), filter_tau=tau)
    if kind == "proportional":
        return ProportionalController(plant, y_ref, gains_for(cfg, kind))
    if kind == "brayton_moser":
        return BraytonMoserController(plant, y_ref, gains_for(cfg, kind))
    if kind == "droop":
        return DroopController(plant, y_ref, gains_for(cfg, kind), a0=c.get("a0"))
    if "u" not in c:
        raise ConfigError("controller.u", "constant controller needs a fixed input value")
    return ZeroGainController(plant, y_ref, float(c["u"]))


def build_scenario(cfg: Mapping, base_dir: Path | None = None, controller: str | None = None) -> Scenario:
    """Validate ``cfg`` and assemble a runnable :class:`Scenario`."""
    validate(cfg)
    pk = get_path(cfg, "plant.kind")
    plant = _plant(cfg)
    x0 = get_path(cfg, "plant.x0", _PLANT_DEFAULTS[pk]["x0"])
    if len(x0) != plant.state_dim or not all(isinstance(v, (int, float)) for v in x0):
        raise ConfigError("plant.x0", f"expected {plant.state_dim} numbers")
    h = float(get_path(cfg, "sim.h", _PLANT_DEFAULTS[pk]["h"]))
    if not h > 0:
        raise ConfigError("sim.h", "step h must be positive")
    T = get_path(cfg, "sim.T")
    if T is None:
        raise ConfigError("sim.T", "missing horizon")
    ctrl = build_controller(cfg, plant, controller, h)
    try:
        load = profile_from_config(dict(cfg["load"]), base_dir or SCENARIO_DIR)
    except (KeyError, TypeError, ValueError, LoadProfileError, OSError) as exc:
        raise ConfigError("load", str(exc)) from exc
    try:
        dist = DisturbanceChannel.from_config(get_path(cfg, "disturbance"))
    except (TypeError, ValueError) as exc:
        raise ConfigError("disturbance", str(exc)) from exc
    scn = Scenario(plant=plant, controller=ctrl, load=load, x0=tuple(float(v) for v in x0),
                   T=float(T), h=h, delay_steps=int(get_path(cfg, "sim.delay_steps", 0)),
                   disturbance=dist, decimation=int(get_path(cfg, "sim.decimation", 1)),
                   name=str(cfg.get("name", "scenario")))
    try:
        scn.validate()
    except LoadProfileError as exc:
        raise ConfigError("load", str(exc)) from exc
    except ValueError as exc:
        msg = str(exc)
        key = ("sim.h" if "step" in msg else "sim.T" if "horizon" in msg
               else "sim.delay_steps" if "delay" in msg else "sim.decimation" if "decimation" in msg
               else "plant.x0" if "x0" in msg else "disturbance")
        raise ConfigError(key, msg) from exc
    return scn
