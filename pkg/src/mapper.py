"""
Mapper between run specs and bundle metrics, with an internal default template.
"""

from __future__ import annotations

import logging
from copy import deepcopy
from typing import Any, Dict

import numpy as np

from .bundle import BundleMetric
from .families import (
    FamilySpec,
    HolomorphicSpec,
    boundary_model,
    flat_product,
    half_log_im_tau,
    kasner,
    random_bundle,
    rotated_kasner_matrix,
    semiflat,
)
from .geometry import BaseMetric
from .grid import FDConfig, make_chart
from .reader import decode_array, encode_array
from .solver import DEFAULT_BOUNDARY, DEFAULT_SOLVER_TOL, KASNER, ODEProblem, solve_semiflat_conformal
from .utils import DEFAULT_FD_ORDER, DEFAULT_LAMBDA
from .validator import validate_tau

logger = logging.getLogger(__name__)

# families whose members solve the vacuum equations by construction
EINSTEIN_FAMILIES = ("flat_product", "kasner", "semiflat", "boundary_model")
PHI_MODES = ("solve", "half_log_im_tau", "zero")

# ─────────────────────────────────────────────────────────────────────────────
# Default template
# ─────────────────────────────────────────────────────────────────────────────

DEFAULT_TEMPLATE: Dict[str, Any] = {
    "fd_order": DEFAULT_FD_ORDER,
    "lambda": DEFAULT_LAMBDA,
    "levels": 1,
    "tolerances": {
        # None: estimated from two refinement levels
        "residual": None,
        "identity": None,
        "solver": DEFAULT_SOLVER_TOL,
    },
}


def _load_template() -> Dict[str, Any]:
    """Return a fresh deepcopy of the internal template."""
    return deepcopy(DEFAULT_TEMPLATE)


def with_defaults(spec: Dict[str, Any]) -> Dict[str, Any]:
    """Fill missing settings from the template; ``einstein`` follows the family."""
    data = _load_template()
    for key, value in spec.items():
        if key == "tolerances":
            data["tolerances"].update(value)
        else:
            data[key] = deepcopy(value)
    if "einstein" not in data:
        family = data.get("family")
        data["einstein"] = bool(
            family
            and family["name"] in EINSTEIN_FAMILIES
            and family.get("params", {}).get("validate", True)
        )
    return data


def _param(params: Dict[str, Any], key: str, prefix: str) -> Any:
    if key not in params:
        raise ValueError(f"Missing key {prefix}.params.{key}")
    return params[key]


# Families ------------------------------------------------------------------------

def family_spec(spec: Dict[str, Any]) -> FamilySpec:
    family = spec["family"]
    chart = spec["chart"]
    return FamilySpec(family["name"], chart["ranges"], chart["points"], dict(family.get("params", {})))


def holomorphic_from_dict(data: Dict[str, Any], *, path: str = "family.params.tau") -> HolomorphicSpec:
    validate_tau(data, path=path + ".")
    if data["kind"] == "tabulated":
        if "re" not in data or "im" not in data:
            raise ValueError(f"Missing key {path}.re/im")
        re = decode_array(data["re"], name=path + ".re")
        im = decode_array(data["im"], name=path + ".im")
        return HolomorphicSpec("tabulated", re=re, im=im)
    return HolomorphicSpec.from_dict(data)


def kasner_matrix(params: Dict[str, Any]) -> np.ndarray:
    """``A`` given directly, or ``2·diag(p)`` optionally rotated by ``angles``."""
    if "A" in params:
        return np.asarray(params["A"], dtype=float)
    p = np.asarray(_param(params, "p", "family"), dtype=float)
    if "angles" in params:
        return rotated_kasner_matrix(p, params["angles"])
    return 2.0 * np.diag(p)


def build_family(
    family: FamilySpec,
    *,
    level: int = 0,
    cfg: FDConfig = FDConfig(),
    solver_tol: float = DEFAULT_SOLVER_TOL,
) -> BundleMetric:
    """Sample ``family`` on its chart refined ``level`` times."""
    chart = family.chart(level)
    params = family.params
    name = family.name
    logger.debug("building %s on %s", name, chart.points)

    if name == "flat_product":
        return flat_product(chart.dim, int(params.get("N", 1)), chart)

    if name == "kasner":
        return kasner(kasner_matrix(params), chart, validate=bool(params.get("validate", True)))

    if name == "semiflat":
        tau = holomorphic_from_dict(_param(params, "tau", "family"))
        if tau.kind == "tabulated" and level:
            raise ValueError("tabulated tau cannot be refined")
        data = tau.on_chart(chart)
        mode = params.get("phi", "solve")
        if mode == "solve":
            bc = params.get("bc", DEFAULT_BOUNDARY)
            if isinstance(bc, dict):
                bc = decode_array(bc, name="family.params.bc")
            phi = solve_semiflat_conformal(data, chart, bc, solver_tol, fd_order=cfg.fd_order)
        elif mode == "half_log_im_tau":
            phi = half_log_im_tau(data.values)
        elif mode == "zero":
            phi = np.zeros(chart.shape)
        else:
            raise ValueError(f"family.params.phi has invalid value {mode!r}; expected one of {PHI_MODES}")
        return semiflat(data, phi, chart, check_holomorphy=bool(params.get("check_holomorphy", True)), cfg=cfg)

    if name == "boundary_model":
        return boundary_model(chart)

    # random
    return random_bundle(
        int(_param(params, "seed", "family")),
        chart.dim,
        int(params.get("N", 2)),
        chart,
        amplitude=float(params.get("amplitude", 0.3)),
        connection_amplitude=params.get("connection_amplitude"),
        base_amplitude=params.get("base_amplitude"),
        kmax=int(params.get("kmax", 2)),
    )


# Tabulated fields -------------------------------------------------------------------

def bundle_from_fields(spec: Dict[str, Any]) -> BundleMetric:
    chart = make_chart(spec["chart"]["ranges"], spec["chart"]["points"])
    fields = spec["fields"]
    G = decode_array(fields["G"], name="fields.G")
    A = decode_array(fields["A"], name="fields.A") if "A" in fields else None
    g = decode_array(fields["g"], name="fields.g") if "g" in fields else None
    if G.shape[: chart.dim] != chart.shape:
        raise ValueError(f"fields.G shape {list(G.shape)} does not match chart points {list(chart.points)}")
    return BundleMetric.from_arrays(chart, G, A, g)


def bundle_to_fields(bm: BundleMetric) -> Dict[str, Any]:
    """Row-major tabulated form, readable back by :func:`bundle_from_fields`."""
    return {
        "chart": bm.chart.to_dict(),
        "fields": {
            "G": encode_array(bm.G.values),
            "A": encode_array(bm.A.values),
            "g": encode_array(bm.g.values),
        },
    }


def build_bundle(spec: Dict[str, Any], *, level: int = 0, cfg: FDConfig | None = None) -> BundleMetric:
    """Bundle metric of a validated run spec at refinement ``level``."""
    data = with_defaults(spec)
    cfg = cfg or FDConfig(data["fd_order"])
    if "fields" in data:
        if level:
            raise ValueError("tabulated fields cannot be refined")
        return bundle_from_fields(data)
    return build_family(family_spec(data), level=level, cfg=cfg, solver_tol=data["tolerances"]["solver"])


# Solve payloads -----------------------------------------------------------------------

def ode_problem(params: Dict[str, Any]) -> ODEProblem:
    """``G0``/``Gs0`` given directly, or ``G0 = Id`` and ``Gs0 = A``."""
    if "A" in params:
        Gs0 = np.asarray(params["A"], dtype=float)
        G0 = np.asarray(params.get("G0", np.eye(len(Gs0))), dtype=float)
    else:
        G0 = np.asarray(_param(params, "G0", "solve"), dtype=float)
        Gs0 = np.asarray(_param(params, "Gs0", "solve"), dtype=float)
    return ODEProblem(
        float(params.get("s0", 1.0)),
        float(params.get("s1", 2.0)),
        G0,
        Gs0,
        step=float(params.get("step", 1e-3)),
        branch=params.get("branch", KASNER),
    )


def conformal_base(spec: Dict[str, Any], phi: np.ndarray, *, level: int = 0) -> BaseMetric:
    chart = make_chart(spec["chart"]["ranges"], spec["chart"]["points"]).refine(level)
    return BaseMetric.conformal(chart, phi)


def is_refinable(spec: Dict[str, Any]) -> bool:
    """Whether ``spec`` can be resampled on a refined chart."""
    if "fields" in spec:
        return False
    params = (spec.get("family") or spec.get("solve") or {}).get("params", {})
    if params.get("tau", {}).get("kind") == "tabulated":
        return False
    return not isinstance(params.get("bc"), dict)
