"""Scenario files: flat JSON objects with dotted keys, plus ``key=value`` overrides.

Example::

    {
      "geometry.num_aps": 24,
      "csi.sigma_e_sq": 0.001,
      "sweep.snr_grid_db": [0, 5, 10, 15, 20]
    }

Every key must be known; a typo is an error rather than a silently ignored
setting.  Keys that are absent keep their defaults.
"""

from __future__ import annotations

import dataclasses
import json
from importlib import resources
from pathlib import Path

from .channel import CsiModel, PropagationParams
from .harness import Scenario
from .precoding import PrecoderConfig

__all__ = ["ConfigError", "KEYS", "load_scenario", "scenario_from_mapping", "scenario_to_mapping",
           "parse_override", "builtin_scenario"]


class ConfigError(ValueError):
    """Malformed scenario file or override."""


# dotted key -> Scenario field
_SCENARIO_KEYS = {
    "geometry.num_aps": "num_aps",
    "geometry.num_users": "num_users",
    "geometry.num_clusters": "num_clusters",
    "geometry.area_side": "area_side",
    "geometry.wrap_around": "wrap_around",
    "geometry.redraw_per_trial": "redraw_geometry_per_trial",
    "selection.threshold_db": "selection_threshold",
    "sweep.snr_grid_db": "snr_grid_db",
    "sweep.num_trials": "num_trials",
    "sweep.master_seed": "master_seed",
    "sweep.normalization": "normalization",
    "sweep.max_failure_rate": "max_failure_rate",
    "metrics.csi_mode": "csi_mode",
    "precoder.poclis_mode": "poclis_mode",
}
_NESTED = {
    "propagation": ("propagation", PropagationParams),
    "csi": ("csi", CsiModel),
    "precoder": ("precoder", PrecoderConfig),
}


def _nested_keys():
    for prefix, (_, cls) in _NESTED.items():
        for f in dataclasses.fields(cls):
            yield f"{prefix}.{f.name}"


KEYS = tuple(sorted(set(_SCENARIO_KEYS) | set(_nested_keys())))


def scenario_from_mapping(mapping: dict) -> Scenario:
    """Build a :class:`Scenario`; unknown keys raise :class:`ConfigError`."""
    unknown = sorted(set(mapping) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    top = {}
    nested = {k: {} for k in _NESTED}
    for key, value in mapping.items():
        if key in _SCENARIO_KEYS:
            top[_SCENARIO_KEYS[key]] = value
        else:
            prefix, name = key.split(".", 1)
            nested[prefix][name] = value
    for prefix, kwargs in nested.items():
        field_name, cls = _NESTED[prefix]
        if prefix == "csi" and "sigma_e_sq" not in kwargs:
            kwargs["sigma_e_sq"] = Scenario().csi.sigma_e_sq
        try:
            top[field_name] = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid {prefix} settings: {exc}") from exc
    if "snr_grid_db" in top and not isinstance(top["snr_grid_db"], (list, tuple)):
        raise ConfigError("sweep.snr_grid_db must be a list")
    try:
        return Scenario(**top)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def scenario_to_mapping(scn: Scenario) -> dict:
    """Inverse of :func:`scenario_from_mapping` (all keys spelled out)."""
    out = {key: getattr(scn, name) for key, name in _SCENARIO_KEYS.items()}
    out["sweep.snr_grid_db"] = list(scn.snr_grid_db)
    for prefix, (field_name, cls) in _NESTED.items():
        obj = getattr(scn, field_name)
        for f in dataclasses.fields(cls):
            out[f"{prefix}.{f.name}"] = getattr(obj, f.name)
    if scn.csi.tau == scn.csi.consistent_tau:
        out["csi.tau"] = None
    return dict(sorted(out.items()))


def parse_override(text: str) -> tuple[str, object]:
    """Split ``key=value``; the value is JSON if it parses, else a plain string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if key not in KEYS:
        raise ConfigError(f"unknown config key: {key}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw.strip()
    return key, value


def load_scenario(path=None, overrides=()) -> Scenario:
    """Read a scenario file (or start from defaults) and apply overrides."""
    mapping: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
        try:
            mapping = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(mapping, dict):
            raise ConfigError(f"{path} must hold a JSON object")
    for item in overrides:
        key, value = parse_override(item)
        mapping[key] = value
    return scenario_from_mapping(mapping)


def builtin_scenario(name: str) -> Path:
    """Path of a scenario file shipped with the package."""
    ref = resources.files("cellfree_rmmse") / "scenarios" / f"{name}.json"
    return Path(str(ref))
