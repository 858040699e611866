"""Experiment configuration: versioned JSON schema, validation and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from ..initial_data import KINDS, RANDOM_KINDS

SCHEMA_VERSION = 1

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "scenario"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "scenario": {"type": "string", "minLength": 1},
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "side_lengths": {"type": "array", "items": _pos, "minItems": 1, "maxItems": 2},
                "hessian_constant_H": {"type": "number", "minimum": 1},
            },
        },
        "basis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "modes_per_dim": {"type": "integer", "minimum": 1},
                "oversample": {"type": "integer", "minimum": 2},
            },
        },
        "initial_data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": list(KINDS)},
                "seed": {"type": ["integer", "null"]},
                "amplitude": _num,
                "ncomp": {"type": "integer", "minimum": 1},
                "mode": {"type": "array", "items": {"type": "integer", "minimum": 1}},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "p": _num,
                "mu": _nonneg,
                "nu": _nonneg,
                "t_end": _pos,
                "dt_init": _pos,
                "dt_policy": {"enum": ["fixed", "adaptive"]},
                "target_step_error": _pos,
                "dt_max": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "picard_tol": _pos,
                "picard_max": {"type": "integer", "minimum": 1},
                "snapshot_times": {"type": "array", "items": _pos},
            },
        },
        "ladders": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mu": {"type": "array", "items": _nonneg},
                "nu": {"type": "array", "items": _nonneg},
            },
        },
        "audit": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "anchors": {"type": "array", "items": {"type": "string"}},
                "params": {"type": "object"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "prefix": {"type": "string"}},
        },
    },
}

DEFAULTS = {
    "domain": {"side_lengths": [1.0, 1.0], "hessian_constant_H": 1.0},
    "basis": {"modes_per_dim": 8, "oversample": 2},
    "initial_data": {"kind": "smooth", "seed": None, "amplitude": 1.0, "ncomp": 1},
    "solver": {
        "p": 1.5,
        "mu": 0.0,
        "nu": 0.0,
        "t_end": 1.0,
        "dt_init": 1e-4,
        "dt_policy": "fixed",
        "target_step_error": 1e-3,
        "dt_max": None,
        "picard_tol": 1e-10,
        "picard_max": 200,
        "snapshot_times": [],
    },
    "ladders": {"mu": [], "nu": []},
    "audit": {"anchors": [], "params": {}},
    "output": {"dir": "out", "prefix": ""},
}


class ConfigError(ValueError):
    """Validation failure; ``path`` is a JSON pointer into the config document."""

    def __init__(self, path: str, message: str):
        super().__init__(f"config error at {path or '/'}: {message}")
        self.path = path
        self.detail = message


def _pointer(parts) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in parts)


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "params":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict

    def __getitem__(self, key):
        return self.data[key]

    @property
    def scenario(self) -> str:
        return self.data["scenario"]

    @property
    def anchors(self) -> list[str]:
        return list(self.data["audit"]["anchors"])

    @property
    def params(self) -> dict:
        return self.data["audit"]["params"]

    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_overrides(self, updates: dict) -> "ExperimentConfig":
        """New validated config with ``{"section.key": value}`` updates applied."""
        data = copy.deepcopy(self.data)
        for dotted, value in updates.items():
            *head, last = dotted.split(".")
            node = data
            for h in head:
                node = node.setdefault(h, {})
            node[last] = value
        return validate_config(data)


def validate_config(raw: dict, known_anchors=None) -> ExperimentConfig:
    """Schema check, defaults, then cross-field semantics; errors carry JSON pointers."""
    if not isinstance(raw, dict):
        raise ConfigError("", "top level must be a JSON object")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        e = errors[0]
        raise ConfigError(_pointer(e.absolute_path), e.message)
    data = _merge(DEFAULTS, {k: v for k, v in raw.items()})

    p = data["solver"]["p"]
    if not 1.0 < p <= 2.0:
        raise ConfigError("/solver/p", f"p = {p} is outside the admissible range (1, 2]")
    dom = data["domain"]
    idata = data["initial_data"]
    if idata["kind"] in RANDOM_KINDS and idata["seed"] is None:
        raise ConfigError("/initial_data/seed", f"initial data kind {idata['kind']!r} is random and needs a seed")
    if idata.get("mode") is not None and len(idata["mode"]) != len(dom["side_lengths"]):
        raise ConfigError("/initial_data/mode", "mode multi-index length must match the domain dimension")
    for name in ("mu", "nu"):
        ladder = data["ladders"][name]
        if any(b > a for a, b in zip(ladder, ladder[1:])):
            raise ConfigError(f"/ladders/{name}", "ladder must be descending")
    snaps = data["solver"]["snapshot_times"]
    if any(t > data["solver"]["t_end"] for t in snaps):
        raise ConfigError("/solver/snapshot_times", "snapshot times must not exceed t_end")
    if known_anchors is not None:
        for i, a in enumerate(data["audit"]["anchors"]):
            if a not in known_anchors:
                raise ConfigError(f"/audit/anchors/{i}", f"unknown anchor {a!r}; known: {sorted(known_anchors)}")
    return ExperimentConfig(data)


def load_config(path, known_anchors=None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return validate_config(raw, known_anchors)
