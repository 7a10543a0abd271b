import os
import sys
from copy import deepcopy

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from src.validator import Optional, _validate, validate_run_spec, validate_tau

KASNER = {
    "chart": {"ranges": [[1.0, 2.0]], "points": [33]},
    "family": {"name": "kasner", "params": {"p": [1.0, 0.0, 0.0]}},
}
FIELDS = {
    "chart": {"ranges": [[0.0, 1.0]], "points": [5]},
    "fields": {"G": {"shape": [5, 1, 1], "data": [1.0] * 5}},
}
SOLVE = {
    "chart": {"ranges": [[0.0, 1.0]], "points": [5]},
    "solve": {"kind": "base_ode", "params": {"A": [[2.0]]}},
}


def test_validate_accepts_family_spec():
    validate_run_spec(KASNER)
    validate_run_spec(KASNER, "check")
    validate_run_spec(KASNER, "convergence")


def test_validate_accepts_fields_and_solve():
    validate_run_spec(FIELDS, "check")
    validate_run_spec(SOLVE, "solve")


def test_validate_optional_settings():
    data = deepcopy(KASNER)
    data.update({"fd_order": 2, "lambda": 0.0, "levels": 3, "einstein": True, "tolerances": {"residual": 1e-8}})
    validate_run_spec(data, "convergence")


def test_validate_missing_chart():
    data = deepcopy(KASNER)
    del data["chart"]
    with pytest.raises(ValueError, match="Missing key chart"):
        validate_run_spec(data)


def test_validate_missing_nested_key():
    data = deepcopy(KASNER)
    del data["chart"]["points"]
    with pytest.raises(ValueError, match="chart.points"):
        validate_run_spec(data)


@pytest.mark.parametrize(
    "key, value",
    [
        ("fd_order", 6),
        ("levels", 5),
        ("levels", 0),
        ("lambda", float("nan")),
    ],
)
def test_validate_rejects_bad_settings(key, value):
    data = deepcopy(KASNER)
    data[key] = value
    with pytest.raises(ValueError):
        validate_run_spec(data)


def test_validate_rejects_bad_chart():
    data = deepcopy(KASNER)
    data["chart"]["ranges"] = [[2.0, 1.0]]
    with pytest.raises(ValueError):
        validate_run_spec(data)
    data = deepcopy(KASNER)
    data["chart"]["points"] = [4]
    with pytest.raises(ValueError):
        validate_run_spec(data)
    data = deepcopy(KASNER)
    data["chart"]["points"] = [33, 33]
    with pytest.raises(ValueError, match="same length"):
        validate_run_spec(data)


def test_validate_wrong_types():
    data = deepcopy(KASNER)
    data["chart"] = [1, 2]
    with pytest.raises(TypeError):
        validate_run_spec(data)
    data = deepcopy(KASNER)
    data["einstein"] = 1
    with pytest.raises(TypeError):
        validate_run_spec(data)


def test_validate_unknown_family():
    data = deepcopy(KASNER)
    data["family"]["name"] = "sphere"
    with pytest.raises(ValueError):
        validate_run_spec(data)


def test_validate_needs_exactly_one_payload():
    data = deepcopy(KASNER)
    data["fields"] = FIELDS["fields"]
    with pytest.raises(ValueError, match="exactly one"):
        validate_run_spec(data)
    data = {"chart": KASNER["chart"]}
    with pytest.raises(ValueError, match="exactly one"):
        validate_run_spec(data)


def test_validate_command_payload_rules():
    with pytest.raises(ValueError, match="Missing key solve"):
        validate_run_spec(KASNER, "solve")
    with pytest.raises(ValueError):
        validate_run_spec(SOLVE, "check")
    with pytest.raises(ValueError, match="cannot be refined"):
        validate_run_spec(FIELDS, "convergence")
    with pytest.raises(ValueError, match="unknown command"):
        validate_run_spec(KASNER, "plot")


def test_validate_tau():
    validate_tau({"kind": "constant", "value": [0.0, 1.0]})
    validate_tau({"kind": "polynomial", "coefficients": [[0.0, 1.0], [1.0, 0.0]]})
    with pytest.raises(ValueError):
        validate_tau({"kind": "sqrt"})
    with pytest.raises(ValueError, match="Missing key tau.kind"):
        validate_tau({"value": [0.0, 1.0]})


def test_optional_marker_only_skips_absent_keys():
    schema = {"a": Optional(int)}
    _validate({}, schema)
    _validate({"a": 3}, schema)
    with pytest.raises(TypeError):
        _validate({"a": "3"}, schema)
