"""Experiment configuration files: schema validation and unit-carrying quantities.

Configs are YAML or JSON. Physical values are strings ``"<number> <unit>"``;
the number may be an arithmetic expression using ``pi`` and ``sqrt``
(``"pi/4 rad"``).
Everything is converted to internal units at load time: ps, rad/ps, 1/ps,
nm, meV, K.
"""

from __future__ import annotations

import ast
import hashlib
import json
import math
import operator
import re
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .units import HBAR_MEV_PS


class ConfigError(ValueError):
    """Malformed or schema-violating configuration."""


_TWO_PI = 2 * math.pi

# unit -> (dimension, factor to internal unit)
UNITS: dict[str, tuple[str, float]] = {
    "fs": ("time", 1e-3), "ps": ("time", 1.0), "ns": ("time", 1e3), "us": ("time", 1e6),
    "ms": ("time", 1e9), "s": ("time", 1e12),
    "rad/ps": ("angular_frequency", 1.0), "rad/ns": ("angular_frequency", 1e-3),
    "rad/s": ("angular_frequency", 1e-12),
    "GHz": ("angular_frequency", _TWO_PI * 1e-3), "THz": ("angular_frequency", _TWO_PI),
    "MHz": ("angular_frequency", _TWO_PI * 1e-6),
    "meV/hbar": ("angular_frequency", 1.0 / HBAR_MEV_PS),
    "1/ps": ("rate", 1.0), "1/ns": ("rate", 1e-3), "1/us": ("rate", 1e-6), "1/s": ("rate", 1e-12),
    "nm": ("length", 1.0), "um": ("length", 1e3), "m": ("length", 1e9),
    "meV": ("energy", 1.0), "eV": ("energy", 1e3), "ueV": ("energy", 1e-3),
    "K": ("temperature", 1.0), "mK": ("temperature", 1e-3),
    "rad": ("angle", 1.0), "deg": ("angle", math.pi / 180),
    "kg/m^3": ("density", 1.0), "g/cm^3": ("density", 1e3),
    "m/s": ("speed", 1.0), "km/s": ("speed", 1e3),
    "m0": ("mass", 1.0),
}
UNITS["μs"] = UNITS["us"]
UNITS["μm"] = UNITS["um"]
UNITS["μeV"] = UNITS["ueV"]

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
        ast.Pow: operator.pow, ast.USub: operator.neg, ast.UAdd: operator.pos}


def _eval_number(expr: str) -> float:
    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == "sqrt"
                and len(node.args) == 1 and not node.keywords):
            return math.sqrt(ev(node.args[0]))
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ConfigError(f"unsupported expression {expr!r}")

    try:
        return ev(ast.parse(expr.strip(), mode="eval"))
    except (SyntaxError, ZeroDivisionError, ValueError, OverflowError) as exc:
        raise ConfigError(f"cannot parse number {expr!r}") from exc


_QTY = re.compile(r"^\s*(?P<num>.*?)\s+(?P<unit>[^\s]+)\s*$")


def quantity(value: Any, dimension: str, where: str = "") -> float:
    """Convert ``"<number> <unit>"`` to the internal unit of ``dimension``."""
    if dimension == "dimensionless":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, str):
            return _eval_number(value)
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if not isinstance(value, str):
        raise ConfigError(f"{where}: physical value {value!r} needs an explicit unit (e.g. '1.7 ps')")
    m = _QTY.match(value)
    if not m or m.group("unit") not in UNITS:
        raise ConfigError(f"{where}: cannot parse quantity {value!r}")
    dim, factor = UNITS[m.group("unit")]
    if dim != dimension:
        raise ConfigError(f"{where}: unit {m.group('unit')!r} has dimension {dim}, expected {dimension}")
    return _eval_number(m.group("num")) * factor


_Q = {"type": "string"}
_NUM = {"oneOf": [{"type": "number"}, {"type": "string"}]}
_RANGE = {
    "type": "object",
    "properties": {"from": {}, "to": {}, "points": {"type": "integer", "minimum": 1}, "log": {"type": "boolean"}},
    "required": ["from", "to", "points"],
    "additionalProperties": False,
}
_LIST_OR_RANGE = {"oneOf": [{"type": "array", "items": _Q, "minItems": 1}, _RANGE]}

SCHEMA = {
    "type": "object",
    "required": ["experiment"],
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": ["gate-sim", "gate-synth", "fidelity-sweep", "cnot-sim", "rates-emission",
                                "rates-dephasing", "rates-phonon", "rates-fc"]},
        "description": {"type": "string"},
        "seed": {"type": "integer"},
        "gate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"name": {"type": "string"}, "axis": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                           "angle": _Q},
        },
        "pulse": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"sigma_p": _Q, "omega_rms_max": _Q, "pulse_area": _NUM, "detuning_floor": _NUM},
        },
        "initial_state": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"mu": _Q, "nu": _Q, "amplitudes": {"type": "array", "minItems": 4, "maxItems": 4}},
        },
        "decoherence": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"preset": {"enum": ["none", "realistic"]}, "gamma_sp_0": _Q, "gamma_sp_1": _Q, "gamma_dp": _Q},
        },
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"rtol": {"type": "number", "exclusiveMinimum": 0}, "atol": {"type": "number", "exclusiveMinimum": 0},
                           "max_step": _Q, "n_out": {"type": "integer", "minimum": 2}},
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n_mu": {"type": "integer", "minimum": 2}, "n_nu": {"type": "integer", "minimum": 2},
                           "l_zb1": _LIST_OR_RANGE, "l_wz": _LIST_OR_RANGE, "l_zb2": _Q,
                           "ratio": _RANGE, "separations": _LIST_OR_RANGE, "dot_lengths": _LIST_OR_RANGE},
        },
        "cnot": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"sigma_control": _Q, "sigma_target": _Q, "gap": _Q, "s0": _Q, "sX": _Q, "s1": _Q,
                           "residual": _Q, "symmetric": {"type": "boolean"}, "calibrate": {"type": "boolean"}},
        },
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "required": ["segments"],
            "properties": {
                "radius": _Q, "padding": _Q, "grid_step": _Q,
                "segments": {"type": "array", "minItems": 1, "items": {
                    "type": "object", "required": ["phase", "length"], "additionalProperties": False,
                    "properties": {"phase": {"enum": ["WZ", "ZB"]}, "length": _Q}}},
            },
        },
        "geometries": {"type": "array", "minItems": 1, "items": {"type": "array", "items": _Q, "minItems": 3, "maxItems": 3}},
        "material": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"m_e": _Q, "m_h": _Q, "E_g_ZB": _Q, "E_g_WZ": _Q, "dc": _Q, "dv": _Q, "M2": _NUM, "n_refr": _NUM},
        },
        "bath": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"De": _Q, "rho_mass": _Q, "cs": _Q, "T": _Q},
        },
        "temperatures": _LIST_OR_RANGE,
        "options": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"radial_mode": {"enum": ["linear", "quadratic"]}, "include_refractive_index": {"type": "boolean"},
                           "coupling": {"enum": ["displacement", "transition"]}, "radius": _Q},
        },
    },
}


def validate(raw: dict) -> dict:
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{loc}: {exc.message}") from None
    return raw


def load(path: str | Path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return loads(text)


def loads(text: str) -> dict:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML/JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    return validate(raw)


def config_hash(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def values(spec, dimension: str, where: str) -> list[float]:
    """Explicit list or ``{from, to, points[, log]}`` range, converted to internal units."""
    import numpy as np

    if isinstance(spec, list):
        return [quantity(v, dimension, where) for v in spec]
    a = quantity(spec["from"], dimension, where)
    b = quantity(spec["to"], dimension, where)
    n = spec["points"]
    if spec.get("log"):
        if a <= 0 or b <= 0:
            raise ConfigError(f"{where}: log range needs positive bounds")
        return [float(v) for v in np.geomspace(a, b, n)]
    return [float(v) for v in np.linspace(a, b, n)]
