"Tests for the identity checks"

from __future__ import annotations

import os
import sys
from typing import Any, Callable

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from src.families import HolomorphicSpec, boundary_model, flat_product, half_log_im_tau, random_bundle, semiflat
from src.geometry import BaseMetric
from src.grid import FDConfig, field_norms, make_chart
from src.identities import (
    FAIL,
    NOT_APPLICABLE,
    PASS,
    ComplexChartData,
    IdentityReport,
    KahlerData,
    check_codimension_one,
    check_conformality,
    check_grad_sqrt_detG,
    check_harmonic_map,
    check_kahler_potential,
    check_laplacian_sqrt_detG,
    check_ricci_form,
    check_subharmonicity,
    det_G_is_constant,
    estimate_tolerance,
    fit_twist_relation,
    holomorphy_residual,
    refine_thresholds,
    run_identity_suite,
    twist_density,
)

CFG = FDConfig(4)


def _semiflat_exact(points: int):
    chart = make_chart([(-1.0, 1.0), (1.0, 2.0)], [points, points])
    tau = HolomorphicSpec("z").on_chart(chart)
    return semiflat(tau, half_log_im_tau(tau.values), chart), tau


def _judged(check: Callable[[int], IdentityReport], points=(33, 65)) -> IdentityReport:
    """Fine-level report against the threshold estimated from both levels."""
    coarse, fine = (check(p) for p in points)
    (report,) = refine_thresholds([coarse], [fine], CFG.fd_order)
    return report


def _suite(build: Callable[[int], Any], einstein: bool, points=(33, 65)):
    coarse, fine = (run_identity_suite(build(p), 0.0, CFG, einstein=einstein) for p in points)
    return refine_thresholds(coarse, fine, CFG.fd_order)


@pytest.mark.parametrize("seed", range(10))
def test_sqrt_det_identities_converge_on_random_fields(seed):
    sups = []
    for points in (33, 65):
        chart = make_chart([(0.0, 1.0)] * 2, [points, points])
        bm = random_bundle(seed, 2, 2, chart)
        sups.append(
            (check_grad_sqrt_detG(bm, CFG).sup, check_laplacian_sqrt_detG(bm, CFG).sup)
        )
    for coarse, fine in zip(*sups):
        assert fine <= 1e-10 or np.log2(coarse / fine) >= 4 - 0.5


def test_suite_skips_einstein_checks_for_random_metric():
    reports = _suite(lambda p: random_bundle(7, 2, 2, make_chart([(0.0, 1.0)] * 2, [p, p])), einstein=False)
    by_name = {r.name: r for r in reports}
    assert by_name["grad_sqrt_detG"].status == PASS
    assert by_name["laplacian_sqrt_detG"].status == PASS
    assert by_name["scalar_consistency"].status == PASS
    assert by_name["grad_sqrt_detG"].points == (65, 65)
    assert "coarse_sup" in by_name["grad_sqrt_detG"].details
    for name in ("trace_equation", "subharmonicity", "harmonic_map", "twist_density", "conformality"):
        assert by_name[name].status == NOT_APPLICABLE


def test_semiflat_passes_all_applicable_identities():
    bm, _ = _semiflat_exact(65)
    assert det_G_is_constant(bm)
    reports = _suite(lambda p: _semiflat_exact(p)[0], einstein=True)
    statuses = {r.name: r.status for r in reports}
    assert statuses["codimension_one"] == NOT_APPLICABLE
    assert all(s in (PASS, NOT_APPLICABLE) for s in statuses.values()), statuses
    conformality = next(r for r in reports if r.name == "conformality")
    assert conformality.details["h12_sup"] <= conformality.tol


def test_semiflat_twist_density_vanishes():
    bm, _ = _semiflat_exact(33)
    t, dt_sup = twist_density(bm, CFG)
    assert field_norms(t)[0] == 0.0
    assert dt_sup == 0.0


def test_boundary_model_identities_pass():
    reports = _suite(lambda p: boundary_model(make_chart([(-1.0, 1.0), (0.1, 1.0)], [p, p])), einstein=True)
    assert all(r.status in (PASS, NOT_APPLICABLE) for r in reports)
    chart = make_chart([(-1.0, 1.0), (0.1, 1.0)], [33, 33])
    _, b2 = chart.mesh()
    assert np.max(np.abs(boundary_model(chart).det_G - b2**2)) <= 1e-12


def test_subharmonicity_reports_the_sign_witness():
    chart = make_chart([(0.0, 1.0)] * 2, [33, 33])
    report = check_subharmonicity(random_bundle(2, 2, 2, chart), 0.0, CFG)
    assert "min_right_side" in report.details
    # with λ = 0 the right side is ¼|F|² √det G ≥ 0
    assert report.details["subharmonic"] is True


def test_codimension_one_check():
    chart = make_chart([(0.0, 1.0)] * 2, [17, 17])
    assert check_codimension_one(flat_product(2, 1, chart), CFG).status == PASS
    assert check_codimension_one(random_bundle(1, 2, 1, chart), CFG).status == FAIL


def test_twist_relation_fit_is_within_the_difference_error():
    chart = make_chart([(0.0, 1.0)] * 2, [33, 33])
    coarse = fit_twist_relation(random_bundle(4, 2, 2, chart), CFG, perturbations=20)
    fine = fit_twist_relation(random_bundle(4, 2, 2, chart.refine()), CFG, perturbations=20)
    assert coarse["invertible"] and fine["invertible"]
    for key in ("relative_residual", "analytic_deviation"):
        assert fine[key] <= estimate_tolerance(coarse[key], fine[key], chart.h, CFG.fd_order)


def test_twist_fit_needs_enough_perturbations():
    chart = make_chart([(0.0, 1.0)] * 2, [17, 17])
    with pytest.raises(ValueError):
        fit_twist_relation(random_bundle(4, 2, 2, chart), CFG, perturbations=3)


def test_holomorphy_residual():
    defects = []
    for points in (33, 65):
        good = HolomorphicSpec("exp").on_chart(make_chart([(-1.0, 1.0), (0.5, 2.5)], [points, points]))
        defects.append(field_norms(holomorphy_residual(good, CFG))[0])
    assert defects[1] <= estimate_tolerance(defects[0], defects[1], 2.0 / 32, CFG.fd_order)
    chart = make_chart([(-1.0, 1.0), (1.0, 2.0)], [33, 33])
    b1, b2 = chart.mesh()
    bad = ComplexChartData(chart, b1, b2 + b1**2)
    assert field_norms(holomorphy_residual(bad, CFG))[0] > 0.5


def test_complex_data_needs_upper_half_plane():
    chart = make_chart([(-1.0, 1.0), (-1.0, 1.0)], [9, 9])
    with pytest.raises(ValueError):
        HolomorphicSpec("z").on_chart(chart)


def test_ricci_form_for_exact_conformal_factor():
    def exact(points: int) -> IdentityReport:
        bm, tau = _semiflat_exact(points)
        return check_ricci_form(tau, bm.g, CFG)

    report = _judged(exact)
    assert report.status == PASS
    chart = make_chart([(-1.0, 1.0), (1.0, 2.0)], [65, 65])
    tau = HolomorphicSpec("z").on_chart(chart)
    assert check_ricci_form(tau, BaseMetric.euclidean(chart), CFG, tol=report.tol).status == FAIL


def _kahler(points: int = 33, tau=lambda z: z, perturbation=None) -> KahlerData:
    chart = make_chart([(-1.0, 1.0), (1.0, 2.0)], [points, points])
    return KahlerData(
        chart,
        tau=tau,
        phi_base=lambda b1, b2: (b1**2 + b2**2) / 4.0,
        area=lambda b1, b2: 0.5,
        perturbation=perturbation,
    )


def test_kahler_potential_reproduces_semiflat_form():
    report = _judged(lambda p: check_kahler_potential(_kahler(p), CFG), points=(17, 33))
    assert report.status == PASS
    closed = [check_kahler_potential(_kahler(p), CFG).details["closedness_sup"] for p in (17, 33)]
    assert closed[1] <= estimate_tolerance(closed[0], closed[1], 2.0 / 16, CFG.fd_order)


def test_kahler_potential_detects_wrong_potential():
    report = _judged(lambda p: check_kahler_potential(_kahler(p, perturbation=lambda b1, b2: b1**3), CFG), points=(17, 33))
    assert report.status == FAIL


def test_flat_kahler_potential_and_linear_sensitivity():
    flat = check_kahler_potential(_kahler(tau=lambda z: 1j), CFG)
    assert flat.sup <= 1e-9
    sups = [
        check_kahler_potential(_kahler(tau=lambda z: 1j, perturbation=lambda b1, b2, e=eps: e * b1**3), CFG).sup
        for eps in (1e-3, 2e-3)
    ]
    assert sups[0] > 1e-4
    assert sups[1] / sups[0] == pytest.approx(2.0, rel=1e-4)


def test_conformality_fails_for_non_holomorphic_tau():
    chart = make_chart([(-1.0, 1.0), (1.0, 2.0)], [33, 33])
    b1, b2 = chart.mesh()
    bent = semiflat(ComplexChartData(chart, b1, b2 + b1**2), np.zeros(chart.shape), chart, check_holomorphy=False)
    assert det_G_is_constant(bent)
    report = check_conformality(bent, CFG)
    assert report.status == FAIL
    assert report.details["h12_sup"] > 0.05


def test_estimate_tolerance():
    assert estimate_tolerance(16e-6, 1e-6, 0.1, 4) == pytest.approx(1e-5)
    assert estimate_tolerance(0.0, 0.0, 0.1, 4) == 1e-9
    # growth under refinement gives the floor
    assert estimate_tolerance(1e-6, 2e-6, 0.1, 4) == 1e-9


def test_refine_thresholds_judges_the_fine_level():
    def report(name: str, sup: float, h: float, status: str = PASS) -> IdentityReport:
        return IdentityReport(name, sup, sup, 1.0, status, (3,), h, 4)

    coarse = [report("converging", 16e-6, 0.1), report("stuck", 1e-3, 0.1), report("skipped", 0.0, 0.0, NOT_APPLICABLE)]
    fine = [report("converging", 1e-6, 0.05), report("stuck", 1e-3, 0.05), report("skipped", 0.0, 0.0, NOT_APPLICABLE)]
    judged = refine_thresholds(coarse, fine, 4)
    assert [r.status for r in judged] == [PASS, FAIL, NOT_APPLICABLE]
    assert judged[0].tol == pytest.approx(1e-5)
    assert judged[0].details["coarse_sup"] == 16e-6
    assert judged[1].tol == 1e-9
    with pytest.raises(ValueError):
        refine_thresholds(coarse, fine[::-1], 4)
    with pytest.raises(ValueError):
        refine_thresholds(coarse, fine[:2], 4)


def test_harmonic_map_separates_holomorphic_tau():
    report = _judged(lambda p: check_harmonic_map(_semiflat_exact(p)[0], CFG))
    assert report.status == PASS
    chart = make_chart([(-1.0, 1.0), (1.0, 2.0)], [33, 33])
    b1, b2 = chart.mesh()
    bent = semiflat(ComplexChartData(chart, b1, b2 + b1**2), np.zeros(chart.shape), chart, check_holomorphy=False)
    assert check_harmonic_map(bent, CFG).status == FAIL
