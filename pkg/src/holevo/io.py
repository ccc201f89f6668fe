"""Experiment configuration, model construction from config, and result files."""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import replace
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
import yaml

from .linalg import DEFAULT_TOL, Tolerances
from .models import (
    make_affine_model,
    make_linear_thermal_model,
    make_nonparametric_model,
    make_spin_model,
    qubit_restricted_model,
)
from .scheme.config import SchemeConfig, _jsonable

SCHEMA_VERSION = 1
UNITS = "shot-noise units (vacuum quadrature variance 1/2), hbar = 1"
COMMANDS = ["bounds", "canonical", "simulate-exact", "simulate-linear", "protocol", "baseline", "validate"]

_number = {"type": "number"}
_real_matrix = {"type": "array", "items": {"type": "array", "items": _number}}
_matrix = {
    "oneOf": [
        _real_matrix,
        {
            "type": "object",
            "properties": {"re": _real_matrix, "im": _real_matrix},
            "required": ["re"],
            "additionalProperties": False,
        },
    ]
}
_vector = {"type": "array", "items": _number}

_scheme_props: dict[str, Any] = {}
for _name, _default in SchemeConfig().to_dict().items():
    if isinstance(_default, bool):
        _scheme_props[_name] = {"type": "boolean"}
    elif isinstance(_default, int):
        _scheme_props[_name] = {"type": "integer"}
    elif _default is None:
        _scheme_props[_name] = {"type": ["number", "null"]}
    else:
        _scheme_props[_name] = {"type": "number"}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "command": {"enum": COMMANDS},
        "model": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["spin", "nonparametric", "affine", "qubit-restricted", "thermal"]},
                "file": {"type": "string"},
                "dim": {"type": "integer", "minimum": 2},
                "coords": _vector,
                "rho": _matrix,
                "rho0": _matrix,
                "observables": {"type": "array", "items": _matrix},
                "directions": {"type": "array", "items": _matrix},
                "theta0": _vector,
                "z": _number,
                "base": _matrix,
                "components": {"type": "array", "items": _matrix},
                "targets": _real_matrix,
                "fock_cutoff": {"type": "integer", "minimum": 2},
            },
            "additionalProperties": False,
        },
        "theta": _vector,
        "theta_check": _vector,
        "W": _real_matrix,
        "influence": {"enum": ["hel", "hn"]},
        "scheme": {"type": "object", "properties": _scheme_props, "additionalProperties": False},
        "hn": {
            "type": "object",
            "properties": {
                "iterations": {"type": "integer", "minimum": 1},
                "step0": {"type": ["number", "null"]},
                "polish": {"type": "boolean"},
                "starts": {"type": "integer", "minimum": 1},
                "start_scale": _number,
                "seed": {"type": "integer"},
                "threads": {"type": "integer", "minimum": 1},
                "plateau_rtol": _number,
                "strict": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "protocol": {
            "type": "object",
            "properties": {
                "N": {"oneOf": [{"type": "integer", "minimum": 1}, {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}]},
                "fraction": {"type": "number", "minimum": 0, "maximum": 1},
                "oracle": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "baseline": {
            "type": "object",
            "properties": {"N": {"type": "integer", "minimum": 1}, "repetitions": {"type": "integer", "minimum": 0}},
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "properties": {"axis": {"type": "string"}, "values": {"type": "array", "items": _number}},
            "required": ["axis", "values"],
            "additionalProperties": False,
        },
        "tolerances": {
            "type": "object",
            "properties": {k: _number for k in Tolerances().__dict__},
            "additionalProperties": False,
        },
        "output": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
    "required": ["schema_version", "command"],
    "additionalProperties": False,
}


class ConfigValidationError(ValueError):
    pass


def validate_config(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigValidationError(f"{where}: {exc.message}") from None
    if cfg["command"] not in ("validate",) and "model" not in cfg:
        raise ConfigValidationError(f"command {cfg['command']!r} needs a model")
    return cfg


def load_config(path: str | os.PathLike) -> tuple[dict, str]:
    """Parsed config plus the sha256 of the file bytes."""
    raw = Path(path).read_bytes()
    data = yaml.safe_load(raw) or {}
    if not isinstance(data, dict):
        raise ConfigValidationError("config must be a mapping")
    model = data.get("model")
    if isinstance(model, dict) and "file" in model:
        ref = Path(path).parent / model["file"]
        if not ref.exists():
            raise FileNotFoundError(f"model file {ref} does not exist")
        inline = yaml.safe_load(ref.read_text()) or {}
        merged = dict(inline)
        merged.update({k: v for k, v in model.items() if k != "file"})
        data["model"] = merged
    return data, hashlib.sha256(raw).hexdigest()


def apply_override(cfg: dict, item: str) -> dict:
    """``a.b.c=value`` with the value parsed as YAML."""
    if "=" not in item:
        raise ConfigValidationError(f"override {item!r} is not key=value")
    key, val = item.split("=", 1)
    out = copy.deepcopy(cfg)
    node = out
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigValidationError(f"override path {key!r} crosses a non-mapping")
    node[parts[-1]] = yaml.safe_load(val)
    return out


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def parse_matrix(m) -> np.ndarray:
    if isinstance(m, dict):
        re = np.asarray(m["re"], dtype=float)
        im = np.asarray(m.get("im", np.zeros_like(re)), dtype=float)
        return re + 1j * im
    return np.asarray(m, dtype=float).astype(complex)


def build_model(spec: dict):
    kind = spec.get("kind")
    if kind == "spin":
        return make_spin_model(int(spec.get("dim", 2)), spec["coords"])
    if kind == "nonparametric":
        return make_nonparametric_model(int(spec["dim"]), parse_matrix(spec["rho"]), [parse_matrix(o) for o in spec["observables"]])
    if kind == "affine":
        return make_affine_model(
            parse_matrix(spec["rho0"]),
            [parse_matrix(g) for g in spec["directions"]],
            [parse_matrix(o) for o in spec["observables"]],
            spec.get("theta0"),
        )
    if kind == "qubit-restricted":
        return qubit_restricted_model(float(spec.get("z", 0.5)))
    if kind == "thermal":
        return make_linear_thermal_model(
            parse_matrix(spec["base"]),
            [parse_matrix(c) for c in spec["components"]],
            spec.get("theta0", [0.0] * len(spec["components"])),
            spec.get("targets"),
        )
    raise ConfigValidationError(f"unknown model kind {kind!r}")


def scheme_config(cfg: dict) -> SchemeConfig:
    fields = dict(cfg.get("scheme", {}))
    if "seed" in cfg:
        fields.setdefault("seed", cfg["seed"])
    return SchemeConfig(**fields)


def tolerances(cfg: dict) -> Tolerances:
    return replace(DEFAULT_TOL, **cfg.get("tolerances", {}))


# ---------------------------------------------------------------- writing


def _clean(obj):
    obj = _jsonable(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def dumps(payload: dict) -> str:
    return json.dumps(_clean(payload), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(f"# units: {UNITS}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()
