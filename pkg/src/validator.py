"""Validation helpers for run specifications."""

from __future__ import annotations

import math
from typing import Any, Callable, Dict

from .families import FAMILIES, HOLOMORPHIC_KINDS

COMMANDS = ("check", "family", "solve", "convergence", "identities")
SOLVE_KINDS = ("semiflat_conformal", "base_ode")
MAX_LEVELS = 4

Validator = Callable[[Any], bool]


class Optional:
    """Schema marker for a key that may be absent."""

    def __init__(self, schema: Any) -> None:
        self.schema = schema

    def __repr__(self) -> str:
        return f"Optional({self.schema!r})"


#Helper validators
def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _is_positive(value: Any) -> bool:
    return _is_number(value) and value > 0


def _is_range(value: Any) -> bool:
    return (
        isinstance(value, list)
        and len(value) == 2
        and all(_is_number(v) for v in value)
        and value[0] < value[1]
    )


def _is_points(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value >= 5


def _is_fd_order(value: Any) -> bool:
    return value in (2, 4) and not isinstance(value, bool)


def _is_levels(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and 1 <= value <= MAX_LEVELS


def _is_family_name(value: Any) -> bool:
    return value in FAMILIES


def _is_solve_kind(value: Any) -> bool:
    return value in SOLVE_KINDS


def _is_shape(value: Any) -> bool:
    return isinstance(value, list) and all(isinstance(v, int) and v >= 0 for v in value)


ARRAY = {"shape": _is_shape, "data": [(int, float)]}

# Run spec schema -----------------------------------------------------------
SCHEMA: Dict[str, Any] = {
    "chart": {
        "ranges": [_is_range],
        "points": [_is_points],
    },
    "family": Optional(
        {
            "name": _is_family_name,
            "params": Optional(dict),
        }
    ),
    "fields": Optional(
        {
            "G": ARRAY,
            "A": Optional(ARRAY),
            "g": Optional(ARRAY),
        }
    ),
    "solve": Optional(
        {
            "kind": _is_solve_kind,
            "params": Optional(dict),
        }
    ),
    "fd_order": Optional(_is_fd_order),
    "lambda": Optional(_is_number),
    "levels": Optional(_is_levels),
    "einstein": Optional(bool),
    "tolerances": Optional(
        {
            "residual": Optional(_is_positive),
            "identity": Optional(_is_positive),
            "solver": Optional(_is_positive),
        }
    ),
}

TAU_SCHEMA: Dict[str, Any] = {
    "kind": lambda v: v in HOLOMORPHIC_KINDS,
    "value": Optional([_is_number]),
    "coefficients": Optional([[_is_number]]),
    "re": Optional(ARRAY),
    "im": Optional(ARRAY),
}

# Validation engine -------------------------------------------------------

def _validate(value: Any, schema: Any, path: str = "") -> None:
    """Recursively validate value against schema."""
    if isinstance(schema, Optional):
        _validate(value, schema.schema, path)
    elif isinstance(schema, dict):
        if not isinstance(value, dict):
            raise TypeError(f"{path.rstrip('.') or 'value'} must be an object")
        for key, subschema in schema.items():
            if key not in value:
                if isinstance(subschema, Optional):
                    continue
                raise ValueError(f"Missing key {path + key}")
            _validate(value[key], subschema, path + key + ".")
    elif isinstance(schema, list):
        if not isinstance(value, list):
            raise TypeError(f"{path.rstrip('.') or 'value'} must be a list")
        if len(schema) != 1:
            raise ValueError("schema list must contain a single element")
        subschema = schema[0]
        for idx, item in enumerate(value):
            _validate(item, subschema, f"{path.rstrip('.')}[{idx}].")
    elif isinstance(schema, type):
        if not isinstance(value, schema) or (schema is not bool and isinstance(value, bool)):
            raise TypeError(f"{path.rstrip('.')} must be of type {schema.__name__}")
    elif isinstance(schema, tuple):
        if isinstance(value, bool) or not any(isinstance(value, t) for t in schema):
            raise TypeError(f"{path.rstrip('.')} must be of type {schema}")
    elif callable(schema):
        if not schema(value):
            raise ValueError(f"{path.rstrip('.')} has invalid value")
    else:
        raise TypeError("Unsupported schema element")


def validate_run_spec(data: Dict[str, Any], command: str | None = None) -> None:
    """Validate a run spec; ``command`` selects which payload is required."""
    _validate(data, SCHEMA, path="")
    chart = data["chart"]
    if len(chart["ranges"]) != len(chart["points"]):
        raise ValueError("chart.ranges and chart.points must have the same length")
    payloads = [key for key in ("family", "fields", "solve") if key in data]
    if len(payloads) != 1:
        raise ValueError("run spec needs exactly one of family, fields or solve")
    if command is None:
        return
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    if command == "solve" and payloads[0] != "solve":
        raise ValueError("Missing key solve")
    if command != "solve" and payloads[0] == "solve":
        raise ValueError(f"command {command} needs family or fields, not solve")
    if command == "convergence" and payloads[0] == "fields":
        raise ValueError("convergence needs a family; tabulated fields cannot be refined")


def validate_tau(data: Dict[str, Any], path: str = "tau.") -> None:
    _validate(data, TAU_SCHEMA, path=path)
