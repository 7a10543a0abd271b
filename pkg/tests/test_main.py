import json
import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

pd = pytest.importorskip("pandas")

from src.main import EXIT_FAILED, EXIT_INVALID, EXIT_OK, cli, main
from src.transformer import CONVERGENCE_COLUMNS

KASNER = {
    "chart": {"ranges": [[1.0, 2.0]], "points": [33]},
    "family": {"name": "kasner", "params": {"p": [2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0]}},
}


def _write(tmp_path: Path, spec: dict, name: str = "run.json") -> Path:
    path = tmp_path / name
    path.write_text(json.dumps(spec))
    return path


def test_flat_product_check_passes(tmp_path: Path) -> None:
    spec = {"chart": {"ranges": [[0.0, 1.0]] * 2, "points": [17, 17]}, "family": {"name": "flat_product", "params": {"N": 2}}}
    output = tmp_path / "result.json"
    assert main("check", _write(tmp_path, spec), output=output) == EXIT_OK
    written = json.loads(output.read_text())
    assert written["passed"] is True
    assert written["exit_code"] == EXIT_OK
    assert written["report"]["points"] == [33, 33]
    assert written["coarse_report"]["points"] == [17, 17]
    assert written["report"]["fiber_sup"] <= 1e-10
    assert written["tol"] == 1e-9


def test_random_metric_check_fails(tmp_path: Path) -> None:
    spec = {"chart": {"ranges": [[0.0, 1.0]] * 2, "points": [17, 17]}, "family": {"name": "random", "params": {"seed": 7}}}
    output = tmp_path / "result.json"
    assert main("check", _write(tmp_path, spec), output=output) == EXIT_FAILED
    assert json.loads(output.read_text())["passed"] is False


def test_invalid_kasner_exponents_are_invalid_input(tmp_path: Path) -> None:
    spec = {"chart": KASNER["chart"], "family": {"name": "kasner", "params": {"p": [1.0, 1.0, 0.0]}}}
    output = tmp_path / "result.json"
    assert main("check", _write(tmp_path, spec), output=output) == EXIT_INVALID
    assert not output.exists()


def test_missing_input_file(tmp_path: Path) -> None:
    assert main("check", tmp_path / "nowhere.json", output=tmp_path / "r.json") == EXIT_INVALID


def test_schema_errors_are_invalid_input(tmp_path: Path) -> None:
    spec = {"chart": {"ranges": [[1.0, 2.0]], "points": [3]}, "family": KASNER["family"]}
    assert main("check", _write(tmp_path, spec), output=tmp_path / "r.json") == EXIT_INVALID


def test_output_directory(tmp_path: Path) -> None:
    folder = tmp_path / "out"
    folder.mkdir()
    assert main("family", _write(tmp_path, KASNER), output=folder) == EXIT_OK
    written = json.loads((folder / "result.json").read_text())
    assert written["command"] == "family"
    assert written["chart"]["points"] == [33]
    assert written["fields"]["G"]["shape"] == [33, 3, 3]


def test_family_output_feeds_back_as_fields(tmp_path: Path) -> None:
    first = tmp_path / "family.json"
    assert main("family", _write(tmp_path, KASNER), output=first) == EXIT_OK
    data = json.loads(first.read_text())
    fields_spec = {"chart": data["chart"], "fields": data["fields"]}
    output = tmp_path / "check.json"
    assert main("check", _write(tmp_path, fields_spec, "fields.json"), output=output, tol=1e-4) == EXIT_OK


def test_kasner_convergence_table(tmp_path: Path) -> None:
    output = tmp_path / "convergence.csv"
    assert main("convergence", _write(tmp_path, KASNER), output=output, levels=3) == EXIT_OK
    df = pd.read_csv(output, keep_default_na=False)
    assert list(df.columns) == CONVERGENCE_COLUMNS
    assert list(df["level"]) == [0, 1, 2]
    assert df["order_estimate"].iloc[0] == ""
    assert float(df["order_estimate"].iloc[-1]) >= 3.5


def test_convergence_needs_two_levels(tmp_path: Path) -> None:
    assert main("convergence", _write(tmp_path, KASNER), output=tmp_path / "c.csv", levels=1) == EXIT_INVALID
    assert main("convergence", _write(tmp_path, KASNER), output=tmp_path / "c.csv", levels=5) == EXIT_INVALID


def test_boundary_model_identities(tmp_path: Path) -> None:
    spec = {"chart": {"ranges": [[-1.0, 1.0], [0.1, 1.0]], "points": [33, 33]}, "family": {"name": "boundary_model"}}
    output = tmp_path / "result.json"
    assert main("identities", _write(tmp_path, spec), output=output) == EXIT_OK
    written = json.loads(output.read_text())
    assert written["einstein"] is True
    assert {r["status"] for r in written["identities"]} <= {"pass", "not-applicable"}
    profile = written["det_G_profile"]
    assert len(profile["b2"]) == 65
    assert profile["max_deviation"] <= 1e-12


def test_solve_base_ode(tmp_path: Path) -> None:
    A = [[4.0 / 3.0, 0.0, 0.0], [0.0, 4.0 / 3.0, 0.0], [0.0, 0.0, -2.0 / 3.0]]
    spec = {"chart": {"ranges": [[1.0, 2.0]], "points": [5]}, "solve": {"kind": "base_ode", "params": {"A": A}}}
    output = tmp_path / "result.json"
    assert main("solve", _write(tmp_path, spec), output=output) == EXIT_OK
    written = json.loads(output.read_text())
    assert written["closed_form_error"] <= 1e-6
    assert written["conserved_drift"] <= 1e-8
    assert written["classification"]["branch"] == "kasner"


def test_solve_degenerate_ode_fails(tmp_path: Path) -> None:
    params = {"G0": [[1.0, 0.0], [0.0, 1.5e-10]], "Gs0": [[0.0, 0.0], [0.0, -1e-9]], "branch": "constant_det", "step": 1e-2}
    spec = {"chart": {"ranges": [[1.0, 2.0]], "points": [5]}, "solve": {"kind": "base_ode", "params": params}}
    output = tmp_path / "result.json"
    assert main("solve", _write(tmp_path, spec), output=output) == EXIT_FAILED
    assert not output.exists()


def test_solve_semiflat_conformal(tmp_path: Path) -> None:
    spec = {
        "chart": {"ranges": [[-1.0, 1.0], [1.0, 2.0]], "points": [65, 65]},
        "solve": {"kind": "semiflat_conformal", "params": {"tau": {"kind": "z"}, "bc": "half_log_im_tau"}},
    }
    output = tmp_path / "result.json"
    assert main("solve", _write(tmp_path, spec), output=output, tol=1e-4) == EXIT_OK
    written = json.loads(output.read_text())
    assert written["phi"]["shape"] == [65, 65]
    assert written["ricci_form"]["status"] == "pass"


SEMIFLAT = {
    "chart": {"ranges": [[-1.0, 1.0], [1.0, 2.0]], "points": [33, 33]},
    "family": {"name": "semiflat", "params": {"tau": {"kind": "z"}}},
}


def test_random_identities_pass_the_sqrt_det_checks(tmp_path: Path) -> None:
    spec = {"chart": {"ranges": [[0.0, 1.0]] * 2, "points": [33, 33]}, "family": {"name": "random", "params": {"seed": 7}}}
    output = tmp_path / "result.json"
    assert main("identities", _write(tmp_path, spec), output=output) == EXIT_OK
    written = json.loads(output.read_text())
    by_name = {r["name"]: r for r in written["identities"]}
    assert written["einstein"] is False
    for name in ("grad_sqrt_detG", "laplacian_sqrt_detG"):
        assert by_name[name]["status"] == "pass"
        assert by_name[name]["points"] == [65, 65]
        assert by_name[name]["sup"] <= by_name[name]["tol"]
    assert by_name["harmonic_map"]["status"] == "not-applicable"


def test_random_identities_fail_with_a_tight_fixed_tolerance(tmp_path: Path) -> None:
    spec = {"chart": {"ranges": [[0.0, 1.0]] * 2, "points": [33, 33]}, "family": {"name": "random", "params": {"seed": 7}}}
    output = tmp_path / "result.json"
    assert main("identities", _write(tmp_path, spec), output=output, tol=1e-9) == EXIT_FAILED
    written = json.loads(output.read_text())
    assert {r["tol"] for r in written["identities"] if r["status"] != "not-applicable"} == {1e-9}


def test_semiflat_identities_pass(tmp_path: Path) -> None:
    output = tmp_path / "result.json"
    assert main("identities", _write(tmp_path, SEMIFLAT), output=output) == EXIT_OK
    written = json.loads(output.read_text())
    statuses = {r["name"]: r["status"] for r in written["identities"]}
    assert written["einstein"] is True
    assert statuses["conformality"] == "pass"
    assert statuses["harmonic_map"] == "pass"
    assert statuses["codimension_one"] == "not-applicable"


def test_semiflat_check_and_convergence(tmp_path: Path) -> None:
    path = _write(tmp_path, SEMIFLAT)
    assert main("check", path, output=tmp_path / "check.json") == EXIT_OK
    output = tmp_path / "convergence.csv"
    assert main("convergence", path, output=output, levels=3) == EXIT_OK
    df = pd.read_csv(output, keep_default_na=False)
    assert list(df["level"]) == [0, 1, 2]


def test_flat_product_convergence_is_exact(tmp_path: Path) -> None:
    spec = {"chart": {"ranges": [[0.0, 1.0]] * 2, "points": [17, 17]}, "family": {"name": "flat_product", "params": {"N": 2}}}
    output = tmp_path / "convergence.csv"
    assert main("convergence", _write(tmp_path, spec), output=output, levels=2) == EXIT_OK
    df = pd.read_csv(output, keep_default_na=False)
    assert df["order_estimate"].iloc[1] == "exact"


def test_solve_semiflat_conformal_estimates_its_tolerance(tmp_path: Path) -> None:
    spec = {"chart": SEMIFLAT["chart"], "solve": {"kind": "semiflat_conformal", "params": {"tau": {"kind": "z"}}}}
    output = tmp_path / "result.json"
    assert main("solve", _write(tmp_path, spec), output=output) == EXIT_OK
    written = json.loads(output.read_text())
    assert written["phi"]["shape"] == [65, 65]
    assert written["ricci_form"]["status"] == "pass"
    assert "coarse_sup" in written["ricci_form"]["details"]


def test_cli_parses_flags(tmp_path: Path) -> None:
    output = tmp_path / "result.json"
    code = cli(["check", "--input", str(_write(tmp_path, KASNER)), "--out", str(output), "--fd-order", "2", "--tol", "5e-2"])
    assert code == EXIT_OK
    written = json.loads(output.read_text())
    assert written["fd_order"] == 2
    assert written["tol"] == 5e-2


def test_cli_rejects_unknown_command(tmp_path: Path) -> None:
    with pytest.raises(SystemExit):
        cli(["plot", "--input", str(_write(tmp_path, KASNER))])
