"""Run configuration: defaults, YAML config files and ``--set`` overrides.

Precedence is flags > config file > defaults. A config document has up to
four sections::

    controller:  ControllerConfig fields (gains as {kp, ki, kd} mappings)
    vehicle:     VehicleParams fields
    perception:  preset name, or a mapping with an optional ``preset`` key
                 plus PerceptionModel fields
    episode:     dt, goal_radius, activation_distance
"""
from __future__ import annotations

import copy
import dataclasses
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

import yaml

from .controller import ControllerConfig, PIDGains
from .perception import PRESET_ALIASES, PRESETS, PerceptionModel, preset
from .simulation import DT, VehicleParams

SECTIONS = ("controller", "vehicle", "perception", "episode")


class ConfigError(ValueError):
    pass


def _asdict(obj) -> Dict[str, Any]:
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if dataclasses.is_dataclass(v):
            v = _asdict(v)
        elif isinstance(v, tuple):
            v = [list(x) if isinstance(x, tuple) else x for x in v]
        out[f.name] = v
    return out


def default_config() -> Dict[str, Any]:
    return {
        "controller": _asdict(ControllerConfig()),
        "vehicle": _asdict(VehicleParams()),
        "perception": "clean",
        "episode": {"dt": DT, "goal_radius": 2.0, "activation_distance": 30.0},
    }


def merge(base: Dict[str, Any], over: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; ``over`` wins, mappings merge key by key."""
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    doc = yaml.safe_load(path.read_text()) or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    unknown = set(doc) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {sorted(unknown)}")
    return doc


def apply_set(cfg: Dict[str, Any], assignment: str) -> Dict[str, Any]:
    """Apply one ``key=value`` override. Keys are dotted paths; a path whose
    first part is not a section name is taken relative to ``controller``."""
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"empty key in {assignment!r}")
    if parts[0] not in SECTIONS:
        parts = ["controller"] + parts
    value = yaml.safe_load(raw)
    if parts == ["perception"]:
        return merge(cfg, {"perception": value})
    if parts[0] == "perception" and not isinstance(cfg.get("perception"), dict):
        cfg = merge(cfg, {"perception": {"preset": cfg.get("perception", "clean")}})
    node: Dict[str, Any] = {}
    cur = node
    for p in parts[:-1]:
        cur[p] = {}
        cur = cur[p]
    cur[parts[-1]] = value
    return merge(cfg, node)


def resolve(config_file: Optional[Union[str, Path]] = None, sets: Iterable[str] = (),
            base: Optional[Dict[str, Any]] = None, **flags) -> Dict[str, Any]:
    """Merged config: defaults, then ``base`` (a scenario's own section), then
    the file, then ``--set`` values, then dedicated flags (``perception``,
    ``cruise_cap``) that are not None."""
    cfg = merge(default_config(), base or {})
    if config_file:
        cfg = merge(cfg, load_config(config_file))
    for s in sets:
        cfg = apply_set(cfg, s)
    if flags.get("perception") is not None:
        cfg["perception"] = flags["perception"]
    if flags.get("cruise_cap") is not None:
        cfg["controller"]["cruise_cap"] = float(flags["cruise_cap"])
    build(cfg)  # validate early
    return cfg


def _fields(cls, doc: Dict[str, Any], section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"{section}: unknown key(s) {sorted(unknown)}")
    return doc


def controller_config(doc: Dict[str, Any]) -> ControllerConfig:
    doc = dict(_fields(ControllerConfig, doc, "controller"))
    for g in ("cruise_gains", "follow_gains"):
        if g in doc and isinstance(doc[g], dict):
            doc[g] = PIDGains(**_fields(PIDGains, doc[g], f"controller.{g}"))
    try:
        return ControllerConfig(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"controller: {exc}") from exc


def vehicle_params(doc: Dict[str, Any]) -> VehicleParams:
    try:
        return VehicleParams(**_fields(VehicleParams, doc, "vehicle"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"vehicle: {exc}") from exc


def perception_model(ref) -> PerceptionModel:
    """A preset name, a YAML file path or an inline mapping."""
    if isinstance(ref, PerceptionModel):
        return ref
    if isinstance(ref, str):
        if ref in PRESETS or ref in PRESET_ALIASES:
            return preset(ref)
        path = Path(ref)
        if not path.exists():
            raise ConfigError(f"unknown perception preset or file {ref!r}")
        ref = yaml.safe_load(path.read_text()) or {}
    if not isinstance(ref, dict):
        raise ConfigError("perception must be a preset name or a mapping")
    doc = dict(ref)
    base = perception_model(doc.pop("preset", "clean"))
    _fields(PerceptionModel, doc, "perception")
    if "confidence" in doc:
        doc["confidence"] = tuple(float(c) for c in doc["confidence"])
    if "sign_confusion" in doc:
        doc["sign_confusion"] = tuple(tuple(float(c) for c in row) for row in doc["sign_confusion"])
    try:
        return dataclasses.replace(base, **doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"perception: {exc}") from exc


def build(cfg: Dict[str, Any]):
    """(ControllerConfig, VehicleParams, PerceptionModel, episode dict)."""
    ep = dict(cfg.get("episode") or {})
    unknown = set(ep) - {"dt", "goal_radius", "activation_distance"}
    if unknown:
        raise ConfigError(f"episode: unknown key(s) {sorted(unknown)}")
    return (controller_config(cfg.get("controller") or {}), vehicle_params(cfg.get("vehicle") or {}),
            perception_model(cfg.get("perception", "clean")), ep)


def dump(cfg: Optional[Dict[str, Any]] = None) -> str:
    return yaml.safe_dump(cfg if cfg is not None else default_config(), sort_keys=False)
