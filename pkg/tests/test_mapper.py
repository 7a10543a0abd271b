import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from src.families import HolomorphicSpec, half_log_im_tau
from src.grid import make_chart
from src.mapper import (
    DEFAULT_TEMPLATE,
    _load_template,
    build_bundle,
    bundle_from_fields,
    bundle_to_fields,
    holomorphic_from_dict,
    is_refinable,
    kasner_matrix,
    ode_problem,
    with_defaults,
)
from src.reader import encode_array

KASNER = {
    "chart": {"ranges": [[1.0, 2.0]], "points": [17]},
    "family": {"name": "kasner", "params": {"p": [2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0]}},
}
SEMIFLAT_CHART = {"ranges": [[-1.0, 1.0], [1.0, 2.0]], "points": [17, 17]}


def test_load_template_returns_a_copy():
    template = _load_template()
    template["tolerances"]["residual"] = 1.0
    assert DEFAULT_TEMPLATE["tolerances"]["residual"] != 1.0


def test_with_defaults_fills_settings():
    data = with_defaults(KASNER)
    assert data["fd_order"] == 4
    assert data["lambda"] == 0.0
    assert data["levels"] == 1
    assert set(data["tolerances"]) == {"residual", "identity", "solver"}
    assert data["einstein"] is True


def test_tolerances_default_to_two_level_estimates():
    data = with_defaults(KASNER)
    assert data["tolerances"]["residual"] is None
    assert data["tolerances"]["identity"] is None
    assert data["tolerances"]["solver"] > 0


def test_with_defaults_keeps_user_values():
    spec = dict(KASNER, fd_order=2, tolerances={"residual": 1e-3})
    data = with_defaults(spec)
    assert data["fd_order"] == 2
    assert data["tolerances"]["residual"] == 1e-3
    assert data["tolerances"]["identity"] == DEFAULT_TEMPLATE["tolerances"]["identity"]


def test_einstein_default_follows_family():
    random = {"chart": KASNER["chart"], "family": {"name": "random", "params": {"seed": 1}}}
    assert with_defaults(random)["einstein"] is False
    control = {"chart": KASNER["chart"], "family": {"name": "kasner", "params": {"p": [1, 1, 0], "validate": False}}}
    assert with_defaults(control)["einstein"] is False
    assert with_defaults(dict(random, einstein=True))["einstein"] is True


def test_kasner_matrix_forms():
    p = [2.0 / 3.0, 2.0 / 3.0, -1.0 / 3.0]
    assert np.array_equal(kasner_matrix({"p": p}), 2.0 * np.diag(p))
    A = [[2.0, 0.0], [0.0, 0.0]]
    assert np.array_equal(kasner_matrix({"A": A}), np.asarray(A))
    rotated = kasner_matrix({"p": p, "angles": [0.1, 0.2, 0.3]})
    assert np.trace(rotated) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValueError, match="family.params.p"):
        kasner_matrix({})


def test_build_kasner_bundle_and_refinement():
    bm = build_bundle(KASNER)
    assert bm.N == 3 and bm.n == 1
    assert build_bundle(KASNER, level=2).chart.points == (65,)


def test_build_rejects_invalid_kasner():
    spec = {"chart": KASNER["chart"], "family": {"name": "kasner", "params": {"p": [1.0, 1.0, 0.0]}}}
    with pytest.raises(ValueError):
        build_bundle(spec)


def test_build_semiflat_phi_modes():
    base = {"chart": SEMIFLAT_CHART, "family": {"name": "semiflat", "params": {"tau": {"kind": "z"}}}}
    exact = build_bundle({**base, "family": {"name": "semiflat", "params": {"tau": {"kind": "z"}, "phi": "half_log_im_tau"}}})
    tau = HolomorphicSpec("z").on_chart(make_chart(SEMIFLAT_CHART["ranges"], SEMIFLAT_CHART["points"]))
    assert np.allclose(exact.g.values[..., 0, 0], np.exp(2.0 * half_log_im_tau(tau.values)), rtol=1e-14)
    solved = build_bundle(base)
    assert np.allclose(solved.g.values[0, :, 0, 0], tau.im[0], rtol=1e-14)
    zero = build_bundle({**base, "family": {"name": "semiflat", "params": {"tau": {"kind": "z"}, "bc": "zero"}}})
    assert np.allclose(zero.g.values[0, :, 0, 0], 1.0)
    with pytest.raises(ValueError, match="phi"):
        build_bundle({**base, "family": {"name": "semiflat", "params": {"tau": {"kind": "z"}, "phi": "guess"}}})


def test_tabulated_tau_is_not_refined():
    chart = make_chart(SEMIFLAT_CHART["ranges"], SEMIFLAT_CHART["points"])
    tau = HolomorphicSpec("z").on_chart(chart)
    params = {"tau": {"kind": "tabulated", "re": encode_array(tau.re), "im": encode_array(tau.im)}, "phi": "zero"}
    spec = {"chart": SEMIFLAT_CHART, "family": {"name": "semiflat", "params": params}}
    assert build_bundle(spec).N == 2
    with pytest.raises(ValueError, match="cannot be refined"):
        build_bundle(spec, level=1)


def test_holomorphic_from_dict():
    assert holomorphic_from_dict({"kind": "exp"}) == HolomorphicSpec("exp")
    const = holomorphic_from_dict({"kind": "constant", "value": [0.5, 2.0]})
    assert const.value == 0.5 + 2.0j
    with pytest.raises(ValueError, match="re/im"):
        holomorphic_from_dict({"kind": "tabulated"})


def test_random_defaults_and_seed():
    spec = {"chart": {"ranges": [[0.0, 1.0]] * 2, "points": [9, 9]}, "family": {"name": "random", "params": {"seed": 3}}}
    bm = build_bundle(spec)
    assert bm.N == 2
    assert np.array_equal(build_bundle(spec).G.values, bm.G.values)
    with pytest.raises(ValueError, match="seed"):
        build_bundle({**spec, "family": {"name": "random"}})


def test_fields_round_trip():
    spec = {"chart": {"ranges": [[0.0, 1.0]] * 2, "points": [9, 9]}, "family": {"name": "random", "params": {"seed": 5}}}
    bm = build_bundle(spec)
    back = bundle_from_fields(bundle_to_fields(bm))
    assert np.array_equal(back.G.values, bm.G.values)
    assert np.array_equal(back.A.values, bm.A.values)
    assert np.array_equal(back.g.values, bm.g.values)


def test_fields_need_matching_chart():
    fields = {"G": encode_array(np.ones((9, 1, 1)))}
    spec = {"chart": {"ranges": [[0.0, 1.0]], "points": [9]}, "fields": fields}
    assert build_bundle(spec).N == 1
    with pytest.raises(ValueError, match="cannot be refined"):
        build_bundle(spec, level=1)
    bad = {"chart": {"ranges": [[0.0, 1.0]], "points": [17]}, "fields": fields}
    with pytest.raises(ValueError, match="does not match"):
        build_bundle(bad)


def test_ode_problem_from_params():
    prob = ode_problem({"A": [[2.0, 0.0], [0.0, 0.0]]})
    assert (prob.s0, prob.s1) == (1.0, 2.0)
    assert np.array_equal(prob.G0, np.eye(2))
    assert prob.branch == "kasner"
    explicit = ode_problem({"G0": [[2.0]], "Gs0": [[0.0]], "branch": "constant_det", "step": 0.01})
    assert explicit.branch == "constant_det"
    with pytest.raises(ValueError, match="solve.params.G0"):
        ode_problem({"Gs0": [[0.0]]})


def test_is_refinable():
    assert is_refinable(KASNER)
    assert not is_refinable({"chart": KASNER["chart"], "fields": {"G": encode_array(np.ones((17, 1, 1)))}})
    tabulated = {"kind": "tabulated", "re": encode_array(np.zeros((17, 17))), "im": encode_array(np.ones((17, 17)))}
    assert not is_refinable({"chart": SEMIFLAT_CHART, "family": {"name": "semiflat", "params": {"tau": tabulated}}})
    solve = {"kind": "semiflat_conformal", "params": {"bc": encode_array(np.zeros((17, 17)))}}
    assert not is_refinable({"chart": SEMIFLAT_CHART, "solve": solve})
    assert is_refinable({"chart": SEMIFLAT_CHART, "solve": {"kind": "semiflat_conformal"}})
