"""High level orchestrator for residual checks, identity suites and solves."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Sequence, Tuple

import numpy as np
import pandas as pd

from .bundle import einstein_residual
from .grid import FDConfig, make_chart
from .identities import (
    FAIL,
    IdentityReport,
    check_ricci_form,
    estimate_tolerance,
    refine_thresholds,
    run_identity_suite,
)
from .mapper import (
    build_bundle,
    bundle_to_fields,
    conformal_base,
    holomorphic_from_dict,
    is_refinable,
    ode_problem,
    with_defaults,
)
from .reader import decode_array, encode_array, load_run_spec, write_output
from .solver import (
    DEFAULT_BOUNDARY,
    ConvergenceError,
    DegenerateMetricError,
    classify_base_trajectory,
    integrate_base_ode,
    solve_semiflat_conformal,
)
from .transformer import convergence_table, finest_order, identity_frame, order_passes, write_convergence_csv
from .utils import DEFAULT_IDENTITY_TOL, DEFAULT_RESIDUAL_TOL, power_sym
from .validator import COMMANDS, validate_run_spec

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2

# default tolerance of the base ODE branch classification
BRANCH_TOL = 1e-8

# thresholds for inputs that cannot be refined
FIXED_TOLERANCES = {"residual": DEFAULT_RESIDUAL_TOL, "identity": DEFAULT_IDENTITY_TOL}


def _settings(
    spec: Dict[str, Any],
    *,
    fd_order: int | None,
    lam: float | None,
    levels: int | None,
    tol: float | None,
) -> Dict[str, Any]:
    """Run spec with defaults filled in and command-line overrides applied."""
    data = with_defaults(spec)
    if fd_order is not None:
        data["fd_order"] = fd_order
    if lam is not None:
        data["lambda"] = lam
    if levels is not None:
        if not 1 <= levels <= 4:
            raise ValueError("--levels must lie in [1, 4]")
        data["levels"] = levels
    if tol is not None:
        if not tol > 0:
            raise ValueError("--tol must be positive")
        data["tolerances"]["residual"] = tol
        data["tolerances"]["identity"] = tol
    return data


# Commands ------------------------------------------------------------------------

def _richardson(data: Dict[str, Any], key: str) -> bool:
    """Whether the ``key`` threshold is estimated from levels 0 and 1."""
    if data["tolerances"][key] is not None:
        return False
    if not is_refinable(data):
        logger.warning("input cannot be refined; using the fixed %s tolerance", key)
        return False
    return True


def _fixed_tol(data: Dict[str, Any], key: str) -> float:
    tol = data["tolerances"][key]
    return FIXED_TOLERANCES[key] if tol is None else tol


def cmd_check(data: Dict[str, Any]) -> Tuple[Dict[str, Any], int]:
    cfg = FDConfig(data["fd_order"])
    report = einstein_residual(build_bundle(data, cfg=cfg), data["lambda"], cfg)
    out: Dict[str, Any] = {}
    if _richardson(data, "residual"):
        fine = einstein_residual(build_bundle(data, level=1, cfg=cfg), data["lambda"], cfg)
        tol = estimate_tolerance(report.max_sup, fine.max_sup, report.h, cfg.fd_order)
        out["coarse_report"] = report.to_dict()
        report = fine
    else:
        tol = _fixed_tol(data, "residual")
    passed = report.passed(tol)
    out.update(report=report.to_dict(), tol=tol, passed=passed)
    return out, EXIT_OK if passed else EXIT_FAILED


def cmd_family(data: Dict[str, Any]) -> Tuple[Dict[str, Any], int]:
    bm = build_bundle(data, cfg=FDConfig(data["fd_order"]))
    return bundle_to_fields(bm), EXIT_OK


def cmd_convergence(data: Dict[str, Any]) -> Tuple[pd.DataFrame, int]:
    levels = data["levels"]
    if levels < 2:
        raise ValueError("convergence needs at least 2 levels")
    cfg = FDConfig(data["fd_order"])
    reports = [einstein_residual(build_bundle(data, level=level, cfg=cfg), data["lambda"], cfg) for level in range(levels)]
    df = convergence_table(reports, run=data["family"]["name"])
    logger.info("observed order at the finest pair: %s", finest_order(df))
    return df, EXIT_OK if order_passes(df, cfg.fd_order) else EXIT_FAILED


def _det_G_profile(bm) -> Dict[str, Any]:
    """``det G`` along ``b²`` at the middle ``b¹`` column."""
    b2 = bm.chart.axis(1)
    det = bm.det_G[bm.chart.points[0] // 2]
    return {
        "b2": b2.tolist(),
        "det_G": det.tolist(),
        "max_deviation": float(np.max(np.abs(det - b2**2))),
    }


def cmd_identities(data: Dict[str, Any]) -> Tuple[Dict[str, Any], int]:
    cfg = FDConfig(data["fd_order"])
    bm = build_bundle(data, cfg=cfg)
    if _richardson(data, "identity"):
        fine_bm = build_bundle(data, level=1, cfg=cfg)
        coarse = run_identity_suite(bm, data["lambda"], cfg, einstein=data["einstein"])
        fine = run_identity_suite(fine_bm, data["lambda"], cfg, einstein=data["einstein"])
        reports = refine_thresholds(coarse, fine, cfg.fd_order)
        bm = fine_bm
    else:
        tol = _fixed_tol(data, "identity")
        reports = run_identity_suite(bm, data["lambda"], cfg, einstein=data["einstein"], tol=tol)
    rows = [r.to_dict() for r in reports]
    logger.info("identities:\n%s", identity_frame(rows).to_string(index=False))
    out: Dict[str, Any] = {"einstein": data["einstein"], "identities": rows}
    if data.get("family", {}).get("name") == "boundary_model":
        out["det_G_profile"] = _det_G_profile(bm)
    failed = any(r.status == FAIL for r in reports)
    return out, EXIT_FAILED if failed else EXIT_OK


def _ricci_form(data: Dict[str, Any], level: int, cfg: FDConfig, tol: float) -> Tuple[np.ndarray, IdentityReport]:
    """Solve for ``φ`` on the chart refined ``level`` times and check its Ricci form."""
    params = data["solve"].get("params", {})
    chart = make_chart(data["chart"]["ranges"], data["chart"]["points"]).refine(level)
    tau = holomorphic_from_dict(params.get("tau", {"kind": "z"}), path="solve.params.tau").on_chart(chart)
    bc = params.get("bc", DEFAULT_BOUNDARY)
    if isinstance(bc, dict):
        bc = decode_array(bc, name="solve.params.bc")
    phi = solve_semiflat_conformal(tau, chart, bc, data["tolerances"]["solver"], fd_order=cfg.fd_order)
    return phi, check_ricci_form(tau, conformal_base(data, phi, level=level), cfg, tol=tol)


def cmd_solve(data: Dict[str, Any]) -> Tuple[Dict[str, Any], int]:
    cfg = FDConfig(data["fd_order"])
    solve = data["solve"]
    params = solve.get("params", {})
    if solve["kind"] == "semiflat_conformal":
        phi, report = _ricci_form(data, 0, cfg, _fixed_tol(data, "identity"))
        if _richardson(data, "identity"):
            phi, fine = _ricci_form(data, 1, cfg, _fixed_tol(data, "identity"))
            (report,) = refine_thresholds([report], [fine], cfg.fd_order)
        out = {"phi": encode_array(phi), "ricci_form": report.to_dict()}
        return out, EXIT_OK if report.passed else EXIT_FAILED

    prob = ode_problem(params)
    solution = integrate_base_ode(prob)
    branch = classify_base_trajectory(solution.to_field(), cfg, tol=float(params.get("tol", BRANCH_TOL)))
    out = {
        "s": [prob.s0, prob.s1],
        "G_final": solution.G[-1].tolist(),
        "conserved_drift": solution.drift,
        "recovered_matrix": solution.recovered_matrix.tolist(),
        "classification": branch.to_dict(),
    }
    # G(1) = Id, G_s(1) = A integrates to s^A
    normalized = prob.s0 == 1.0 and np.array_equal(prob.G0, np.eye(len(prob.G0)))
    if "A" in params and prob.branch == "kasner" and normalized:
        closed = power_sym(np.array(prob.s1), prob.Gs0)
        out["closed_form_error"] = float(np.max(np.abs(solution.G[-1] - closed)))
    return out, EXIT_OK if branch.passed else EXIT_FAILED


HANDLERS = {
    "check": cmd_check,
    "family": cmd_family,
    "solve": cmd_solve,
    "convergence": cmd_convergence,
    "identities": cmd_identities,
}


def main(
    command: str,
    input_path: str | Path,
    *,
    output: str | Path | None = None,
    fd_order: int | None = None,
    lam: float | None = None,
    levels: int | None = None,
    tol: float | None = None,
) -> int:
    """Run ``command`` on the run spec at ``input_path`` and return the exit code.

    Exit codes: 0 when every check passes, 1 on a residual, identity or
    solver failure, 2 on invalid input.  JSON results go to ``output``
    (``result.json`` by default, or inside a directory); the convergence
    table goes to ``convergence.csv``.
    """
    try:
        spec = load_run_spec(input_path)
        validate_run_spec(spec, command)
        data = _settings(spec, fd_order=fd_order, lam=lam, levels=levels, tol=tol)
        result, code = HANDLERS[command](data)
    except (ConvergenceError, DegenerateMetricError) as exc:
        logger.error("%s failed: %s", command, exc)
        return EXIT_FAILED
    except (ValueError, TypeError, KeyError, OSError) as exc:
        logger.error("invalid input: %s", exc)
        return EXIT_INVALID

    if isinstance(result, pd.DataFrame):
        path = write_convergence_csv(result, output or "convergence.csv")
    else:
        payload = {
            "command": command,
            "input": str(input_path),
            "fd_order": data["fd_order"],
            "lambda": data["lambda"],
            "exit_code": code,
            **result,
        }
        path = write_output(payload, output or "result.json")
    logger.info("%s wrote %s (exit %d)", command, path, code)
    return code


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def cli(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Curvature residuals of torus-bundle metrics")
    parser.add_argument("command", choices=COMMANDS, help="what to run")
    parser.add_argument("--input", required=True, help="path to the JSON/YAML run spec")
    parser.add_argument("--out", help="where to write the JSON report or CSV table")
    parser.add_argument("--fd-order", type=int, choices=(2, 4), help="finite-difference order")
    parser.add_argument("--lambda", dest="lam", type=float, help="Einstein constant (default 0)")
    parser.add_argument("--levels", type=int, help="refinement levels for convergence, 1 to 4")
    parser.add_argument("--tol", type=float, help="fixed residual and identity tolerance (default: estimated from two levels)")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    return main(
        args.command,
        args.input,
        output=args.out,
        fd_order=args.fd_order,
        lam=args.lam,
        levels=args.levels,
        tol=args.tol,
    )


if __name__ == "__main__":  # pragma: no cover - CLI helper
    sys.exit(cli())
