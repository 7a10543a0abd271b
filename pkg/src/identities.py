"""
Numerical checks of the identities satisfied by bundle metrics.

Universal identities (gradient and Laplacian of ``√det G``, scalar
consistency) hold for every smooth metric.  The others are consequences of
the Einstein condition and are only meaningful on solution families; the
suite marks them ``not-applicable`` otherwise.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bundle import (
    BundleMetric,
    F_squared,
    bundle_derivatives,
    field_strength,
    ricci_basebase,
    ricci_fiber,
    ricci_mixed,
    scalar_total,
    trace_equation_residual,
)
from .geometry import BaseMetric, laplacian, ricci_base, scalar_base, volume_density
from .grid import BASE, FIBER, TOTAL, Chart, FDConfig, TensorField, field_norms, gradient, mask_margin, partial
from .utils import DEFAULT_IDENTITY_TOL, TOLERANCE_FLOOR, FourierSeries, invert, symmetrize

logger = logging.getLogger(__name__)

PASS = "pass"
FAIL = "fail"
NOT_APPLICABLE = "not-applicable"

# relative spread of det G below which it counts as constant
CONSTANT_DET_RTOL = 1e-10


@dataclass(frozen=True)
class IdentityReport:
    name: str
    sup: float
    l2: float
    tol: float
    status: str
    points: Tuple[int, ...] = ()
    h: float = 0.0
    fd_order: int = 0
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> Dict[str, Any]:
        out = dataclasses.asdict(self)
        out["points"] = list(self.points)
        return out


def _report(
    name: str,
    diff: TensorField,
    tol: float,
    cfg: FDConfig,
    **details: Any,
) -> IdentityReport:
    sup, l2 = field_norms(diff)
    status = PASS if sup <= tol else FAIL
    logger.debug("%s: sup=%.3e tol=%.1e -> %s", name, sup, tol, status)
    return IdentityReport(
        name, sup, l2, tol, status,
        tuple(diff.chart.points), diff.chart.h, cfg.fd_order, details,
    )


def not_applicable(name: str, reason: str) -> IdentityReport:
    return IdentityReport(name, 0.0, 0.0, 0.0, NOT_APPLICABLE, details={"reason": reason})


def _scalar(chart: Chart, values: np.ndarray, margin: int) -> TensorField:
    return TensorField(chart, mask_margin(values, chart.dim, margin), (), margin)


def _sqrt_det_G(bm: BundleMetric) -> TensorField:
    return TensorField(bm.chart, np.sqrt(bm.det_G))


def det_G_is_constant(bm: BundleMetric) -> bool:
    det = bm.det_G
    return float(np.ptp(det)) <= CONSTANT_DET_RTOL * max(1.0, float(np.max(np.abs(det))))


def estimate_tolerance(coarse_error: float, fine_error: float, h_coarse: float, order: int) -> float:
    """Pass threshold ``max(1e-9, 10·C·h_fine^p)`` with ``C`` from two levels.

    Errors that grow under refinement give ``C = 0``.
    """
    const = max(coarse_error - fine_error, 0.0) / (h_coarse**order * (1.0 - 2.0**-order))
    return max(TOLERANCE_FLOOR, 10.0 * const * (0.5 * h_coarse) ** order)


def refine_thresholds(
    coarse: Sequence[IdentityReport], fine: Sequence[IdentityReport], order: int
) -> List[IdentityReport]:
    """Fine-level reports judged against tolerances estimated from both levels."""
    if len(coarse) != len(fine):
        raise ValueError("both levels must report the same identities")
    out = []
    for c, f in zip(coarse, fine):
        if c.name != f.name:
            raise ValueError(f"report order differs between levels: {c.name!r} vs {f.name!r}")
        if NOT_APPLICABLE in (c.status, f.status):
            out.append(f)
            continue
        tol = estimate_tolerance(c.sup, f.sup, c.h, order)
        status = PASS if f.sup <= tol else FAIL
        out.append(dataclasses.replace(f, tol=tol, status=status, details={**f.details, "coarse_sup": c.sup}))
    return out


# Universal identities -------------------------------------------------------

def check_grad_sqrt_detG(
    bm: BundleMetric, cfg: FDConfig = FDConfig(), *, tol: float = DEFAULT_IDENTITY_TOL
) -> IdentityReport:
    """``∇_α √det G = ½ √det G · G^{IJ} G_{IJ,α}``."""
    root = _sqrt_det_G(bm)
    left = gradient(root, cfg)
    dG = gradient(bm.G, cfg)
    right = 0.5 * root.values[..., None] * np.einsum("...ij,...ija->...a", bm.G_inv, dG.values)
    return _report("grad_sqrt_detG", left.with_values(left.values - right), tol, cfg)


def check_laplacian_sqrt_detG(
    bm: BundleMetric, cfg: FDConfig = FDConfig(), *, tol: float = DEFAULT_IDENTITY_TOL
) -> IdentityReport:
    root = _sqrt_det_G(bm)
    left = laplacian(root, bm.g, cfg)
    d = bundle_derivatives(bm, cfg)
    ginv, Ginv = bm.g.inverse, bm.G_inv
    right = root.values * (
        0.5 * np.einsum("...ij,...ab,...ijab->...", Ginv, ginv, d.hess_G)
        - 0.5 * np.einsum("...ab,...ij,...jka,...kl,...lib->...", ginv, Ginv, d.dG, Ginv, d.dG)
        + 0.25 * np.einsum("...ab,...a,...b->...", ginv, d.trlog, d.trlog)
    )
    margin = max(left.margin, d.margin)
    return _report("laplacian_sqrt_detG", _scalar(bm.chart, left.values - right, margin), tol, cfg)


def check_scalar_consistency(
    bm: BundleMetric, cfg: FDConfig = FDConfig(), *, tol: float = DEFAULT_IDENTITY_TOL
) -> IdentityReport:
    """Scalar curvature against ``G^{IJ} R̄_IJ + g^{αβ} R̄_αβ``."""
    d = bundle_derivatives(bm, cfg)
    fiber = ricci_fiber(bm, cfg, derivs=d)
    base = ricci_basebase(bm, 0.0, cfg, derivs=d)
    scalar = scalar_total(bm, cfg, derivs=d)
    traced = np.einsum("...ij,...ij->...", bm.G_inv, fiber.values) + np.einsum(
        "...ab,...ab->...", bm.g.inverse, base.values
    )
    margin = max(fiber.margin, base.margin, scalar.margin)
    return _report("scalar_consistency", _scalar(bm.chart, scalar.values - traced, margin), tol, cfg)


# Consequences of the Einstein condition ----------------------------------------

def check_trace_equation(
    bm: BundleMetric, lam: float = 0.0, cfg: FDConfig = FDConfig(), *, tol: float = DEFAULT_IDENTITY_TOL
) -> IdentityReport:
    return _report("trace_equation", trace_equation_residual(bm, lam, cfg), tol, cfg, lam=lam)


def check_subharmonicity(
    bm: BundleMetric, lam: float = 0.0, cfg: FDConfig = FDConfig(), *, tol: float = DEFAULT_IDENTITY_TOL
) -> IdentityReport:
    """``Δ√det G = (¼|F|² − λN) √det G``; the right side sign is the witness."""
    root = _sqrt_det_G(bm)
    left = laplacian(root, bm.g, cfg)
    f2 = F_squared(bm, cfg)
    right = (0.25 * f2.values - lam * bm.N) * root.values
    margin = max(left.margin, f2.margin)
    rhs = _scalar(bm.chart, right, margin)
    witness = float(np.min(rhs.interior()))
    return _report(
        "subharmonicity",
        _scalar(bm.chart, left.values - right, margin),
        tol,
        cfg,
        lam=lam,
        min_right_side=witness,
        subharmonic=bool(witness >= -tol),
    )


def check_harmonic_map(
    bm: BundleMetric, cfg: FDConfig = FDConfig(), *, tol: float = DEFAULT_IDENTITY_TOL
) -> IdentityReport:
    """``g^{αβ} G_{IJ;αβ} − g^{αβ} G^{KL} G_{IK,α} G_{LJ,β} = 0``."""
    d = bundle_derivatives(bm, cfg)
    ginv = bm.g.inverse
    values = np.einsum("...ab,...ijab->...ij", ginv, d.hess_G) - np.einsum(
        "...ab,...kl,...ika,...ljb->...ij", ginv, bm.G_inv, d.dG, d.dG
    )
    N = bm.N
    diff = TensorField(bm.chart, mask_margin(values, bm.n, d.margin), ((FIBER, N), (FIBER, N)), d.margin)
    return _report("harmonic_map", diff, tol, cfg)


def twist_density(bm: BundleMetric, cfg: FDConfig = FDConfig()) -> Tuple[TensorField, float]:
    """``t_I = √det G · G_IJ F^J_12 / √det g`` and ``sup |∂_α t_I|``."""
    if bm.n != 2:
        raise ValueError("twist density is defined for a 2-d base only")
    F = field_strength(bm.A, cfg).F
    density = volume_density(bm.g).values
    values = (
        np.sqrt(bm.det_G)[..., None]
        * np.einsum("...ij,...j->...i", bm.G.values, F.values[..., 0, 1])
        / density[..., None]
    )
    t = F.with_values(values, ((FIBER, bm.N),))
    dt = gradient(t, cfg)
    return t, field_norms(dt)[0]


def check_conformality(
    bm: BundleMetric, cfg: FDConfig = FDConfig(), *, tol: float = DEFAULT_IDENTITY_TOL
) -> IdentityReport:
    """``h_αβ = G^{IJ} G_{JK,α} G^{KL} G_{LI,β}`` against ``2 R g_αβ``.

    Passes when ``h`` is pointwise proportional to ``g`` and the full identity
    holds; ``h12`` and ``h11 - h22`` are reported separately.
    """
    if bm.n != 2:
        raise ValueError("conformality is checked on a 2-d base only")
    dG = gradient(bm.G, cfg)
    Ginv = bm.G_inv
    h = np.einsum("...ij,...jka,...kl,...lib->...ab", Ginv, dG.values, Ginv, dG.values)
    h = symmetrize(h)
    ginv, g = bm.g.inverse, bm.g.values
    trace = np.einsum("...ab,...ab->...", ginv, h)
    traceless = h - 0.5 * trace[..., None, None] * g
    scalar = scalar_base(bm.g, cfg)
    full = h - 2.0 * scalar.values[..., None, None] * g
    margin = max(dG.margin, scalar.margin)
    spec = ((BASE, 2), (BASE, 2))
    conformal = TensorField(bm.chart, mask_margin(traceless, 2, margin), spec, margin)
    identity = TensorField(bm.chart, mask_margin(full, 2, margin), spec, margin)
    off = _scalar(bm.chart, h[..., 0, 1], margin)
    split = _scalar(bm.chart, h[..., 0, 0] - h[..., 1, 1], margin)
    conf_sup, conf_l2 = field_norms(conformal)
    full_sup, full_l2 = field_norms(identity)
    sup = max(conf_sup, full_sup)
    status = PASS if sup <= tol else FAIL
    return IdentityReport(
        "conformality",
        sup,
        max(conf_l2, full_l2),
        tol,
        status,
        tuple(bm.chart.points),
        bm.chart.h,
        cfg.fd_order,
        {
            "h12_sup": field_norms(off)[0],
            "h11_minus_h22_sup": field_norms(split)[0],
            "conformal_sup": conf_sup,
            "identity_sup": full_sup,
        },
    )


def check_codimension_one(
    bm: BundleMetric, cfg: FDConfig = FDConfig(), *, tol: float = DEFAULT_IDENTITY_TOL
) -> IdentityReport:
    """For ``N = 1``: constant ``G``, ``F = 0`` and a Ricci-flat base."""
    if bm.N != 1:
        raise ValueError("codimension-one check needs N = 1")
    dG = gradient(bm.G, cfg)
    F = field_strength(bm.A, cfg).F
    ricci = ricci_base(bm.g, cfg)
    parts = {
        "dG_sup": field_norms(dG)[0],
        "F_sup": field_norms(F)[0],
        "base_ricci_sup": field_norms(ricci)[0],
    }
    sup = max(parts.values())
    return IdentityReport(
        "codimension_one", sup, sup, tol, PASS if sup <= tol else FAIL,
        tuple(bm.chart.points), bm.chart.h, cfg.fd_order, parts,
    )


# Twist / mixed-block relation -----------------------------------------------------

def analytic_twist_map(bm: BundleMetric) -> np.ndarray:
    """Per-node map ``∂t → R̄_mixed``: ``½ (det G)^{-½} ε_αγ g^{γδ}``.

    Layout ``[..., (J, δ), (I, α)]`` acting on row vectors.
    """
    N = bm.N
    eps = np.array([[0.0, 1.0], [-1.0, 0.0]])
    block = 0.5 * np.einsum("ac,...cd->...da", eps, bm.g.inverse) / np.sqrt(bm.det_G)[..., None, None]
    eye = np.eye(N)
    full = np.einsum("ij,...da->...jdia", eye, block)
    return full.reshape(bm.chart.shape + (2 * N, 2 * N))


def fit_twist_relation(
    bm: BundleMetric,
    cfg: FDConfig = FDConfig(),
    *,
    perturbations: int = 20,
    seed: int = 0,
    amplitude: float = 0.3,
    kmax: int = 2,
) -> Dict[str, float]:
    """Least-squares fit of the pointwise linear map ``∂_α t_I → R̄_Iα``.

    Both sides are linear in the connection when ``G`` and ``g`` are held
    fixed, so the map is fitted over random connections.  Returns the
    relative fit residual, the smallest singular value of the fitted map
    relative to its largest and the deviation from :func:`analytic_twist_map`.
    """
    if bm.n != 2:
        raise ValueError("twist relation is defined for a 2-d base only")
    if perturbations < 2 * bm.N:
        raise ValueError("need at least 2N perturbations to fit the map")
    rng = np.random.default_rng(seed)
    chart = bm.chart
    N = bm.N
    lhs: List[np.ndarray] = []
    rhs: List[np.ndarray] = []
    margin = 0
    for _ in range(perturbations):
        A = np.stack(
            [
                np.stack(
                    [FourierSeries.random(rng, chart.lo, chart.hi, kmax=kmax, amplitude=amplitude)(*chart.mesh()) for _ in range(2)],
                    axis=-1,
                )
                for _ in range(N)
            ],
            axis=-2,
        )
        trial = bm.with_connection(A)
        t, _ = twist_density(trial, cfg)
        dt = gradient(t, cfg)
        mixed = ricci_mixed(trial, cfg)
        margin = max(dt.margin, mixed.margin)
        lhs.append(dt.values.reshape(chart.shape + (2 * N,)))
        rhs.append(mixed.values.reshape(chart.shape + (2 * N,)))
    X = np.stack(lhs, axis=-2)  # [..., k, (J, δ)]
    Y = np.stack(rhs, axis=-2)  # [..., k, (I, α)]
    inner = tuple(slice(margin, -margin) for _ in range(chart.dim))
    X, Y = X[inner], Y[inner]
    normal = np.einsum("...kp,...kq->...pq", X, X)
    M = np.linalg.solve(normal, np.einsum("...kp,...kq->...pq", X, Y))
    fitted = np.einsum("...kp,...pq->...kq", X, M)
    residual = float(np.linalg.norm(Y - fitted) / np.linalg.norm(Y))
    singular = np.linalg.svd(M, compute_uv=False)
    conditioning = float(np.min(singular[..., -1] / singular[..., 0]))
    analytic = analytic_twist_map(bm)[inner]
    deviation = float(np.max(np.abs(M - analytic)) / np.max(np.abs(analytic)))
    logger.info("twist fit: residual %.3e, conditioning %.3e, deviation %.3e", residual, conditioning, deviation)
    return {
        "relative_residual": residual,
        "conditioning": conditioning,
        "analytic_deviation": deviation,
        "invertible": bool(conditioning > 1e-8),
    }


# Complex base data ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ComplexChartData:
    """``τ`` sampled on a 2-d chart with ``z = b¹ + i b²``.

    ``derivative`` is the analytic ``τ'`` when known; otherwise it is
    estimated by differences along ``b¹``.
    """

    chart: Chart
    re: np.ndarray
    im: np.ndarray
    derivative: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.chart.dim != 2:
            raise ValueError("complex data needs a 2-d chart")
        for name in ("re", "im"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != self.chart.shape or not np.all(np.isfinite(arr)):
                raise ValueError(f"tau.{name} must be finite on every node")
            object.__setattr__(self, name, arr)
        if np.any(self.im <= 0.0):
            raise ValueError("Im tau must be positive on the chart")

    @classmethod
    def from_function(
        cls,
        chart: Chart,
        func: Callable[[np.ndarray], np.ndarray],
        derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ) -> "ComplexChartData":
        b1, b2 = chart.mesh()
        z = b1 + 1j * b2
        values = np.asarray(func(z), dtype=complex) * np.ones_like(z)
        deriv = None if derivative is None else np.asarray(derivative(z), dtype=complex) * np.ones_like(z)
        return cls(chart, values.real, values.imag, deriv)

    @property
    def values(self) -> np.ndarray:
        return self.re + 1j * self.im

    def tau_prime(self, cfg: FDConfig = FDConfig()) -> Tuple[np.ndarray, int]:
        if self.derivative is not None:
            return self.derivative, 0
        d_re = partial(TensorField(self.chart, self.re), 0, cfg)
        d_im = partial(TensorField(self.chart, self.im), 0, cfg)
        return d_re.values + 1j * d_im.values, d_re.margin


def holomorphy_residual(tau: ComplexChartData, cfg: FDConfig = FDConfig()) -> TensorField:
    """Cauchy–Riemann defect ``|∂₁Re − ∂₂Im| + |∂₂Re + ∂₁Im|``."""
    re = TensorField(tau.chart, tau.re)
    im = TensorField(tau.chart, tau.im)
    d_re, d_im = gradient(re, cfg), gradient(im, cfg)
    values = np.abs(d_re.values[..., 0] - d_im.values[..., 1]) + np.abs(d_re.values[..., 1] + d_im.values[..., 0])
    return _scalar(tau.chart, values, d_re.margin)


def ricci_form_residual(tau: ComplexChartData, g: BaseMetric, cfg: FDConfig = FDConfig()) -> TensorField:
    """Coefficient of ``i dz∧dz̄``: ``¼ R √det g − |τ'|² / (4 Im²τ)``."""
    if g.dim != 2 or g.chart != tau.chart:
        raise ValueError("Ricci form needs tau and a 2-d metric on the same chart")
    scalar = scalar_base(g, cfg)
    left = 0.25 * scalar.values * volume_density(g).values
    tau_prime, tau_margin = tau.tau_prime(cfg)
    right = np.abs(tau_prime) ** 2 / (4.0 * tau.im**2)
    return _scalar(g.chart, left - right, max(scalar.margin, tau_margin))


def check_ricci_form(
    tau: ComplexChartData, g: BaseMetric, cfg: FDConfig = FDConfig(), *, tol: float = DEFAULT_IDENTITY_TOL
) -> IdentityReport:
    return _report("ricci_form", ricci_form_residual(tau, g, cfg), tol, cfg)


# Kähler potential ---------------------------------------------------------------

J0 = np.array(
    [
        [0.0, -1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 1.0, 0.0],
    ]
)


@dataclass(frozen=True, eq=False)
class KahlerData:
    """Inputs of the semiflat Kähler potential check.

    ``tau`` maps complex ``z`` to ``τ(z)``; ``phi_base`` is a Kähler potential
    of the base form ``area · db¹∧db²``.  The fiber coordinates ``(x¹, x²)``
    are sampled on an auxiliary grid of ``fiber_points`` per axis.
    """

    chart: Chart
    tau: Callable[[np.ndarray], np.ndarray]
    phi_base: Callable[[np.ndarray, np.ndarray], np.ndarray]
    area: Callable[[np.ndarray, np.ndarray], np.ndarray]
    fiber_range: Tuple[float, float] = (0.0, 1.0)
    fiber_points: int = 9
    perturbation: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self) -> None:
        if self.chart.dim != 2:
            raise ValueError("Kähler data needs a 2-d base chart")
        if self.fiber_points < 9:
            raise ValueError("fiber grid needs at least 9 points per axis")

    def total_chart(self) -> Chart:
        lo, hi = self.fiber_range
        return Chart(
            self.chart.lo + (lo, lo),
            self.chart.hi + (hi, hi),
            self.chart.points + (self.fiber_points, self.fiber_points),
        )


def _two_form(values: np.ndarray, chart: Chart, margin: int) -> TensorField:
    return TensorField(chart, mask_margin(values, chart.dim, margin), ((TOTAL, 4), (TOTAL, 4)), margin)


def check_kahler_potential(
    data: KahlerData, cfg: FDConfig = FDConfig(), *, tol: float = DEFAULT_IDENTITY_TOL
) -> IdentityReport:
    """``ω̄ = i∂∂̄φ̄`` on ``(b¹, b², x¹, x²)`` with ``w = x¹ + τ x²``.

    The complex structure is read off the sampled holomorphic coordinates
    ``(z, w)``; ``i∂∂̄φ̄ = ½ d(−dφ̄ ∘ J)``.  Closedness of ``ω̄`` is reported
    alongside.
    """
    chart = data.total_chart()
    b1, b2, x1, x2 = chart.mesh()
    z = b1 + 1j * b2
    tau = np.asarray(data.tau(z), dtype=complex) * np.ones_like(z)
    if np.any(tau.imag <= 0.0):
        raise ValueError("Im tau must be positive on the chart")
    w = x1 + tau * x2

    def grad(values: np.ndarray) -> TensorField:
        return gradient(TensorField(chart, values), cfg)

    d_w = grad(w.real).values + 1j * grad(w.imag).values
    d_tau = grad(tau.real).values + 1j * grad(tau.imag).values
    margin = cfg.half_width

    # holomorphic coframe rows (Re dz, Im dz, Re dw, Im dw)
    Q = np.zeros(chart.shape + (4, 4))
    Q[..., 0, 0] = 1.0
    Q[..., 1, 1] = 1.0
    Q[..., 2, :] = d_w.real
    Q[..., 3, :] = d_w.imag
    inner = tuple(slice(margin, -margin) for _ in range(4))
    Q_inv = np.zeros_like(Q)
    Q_inv[inner] = invert(Q[inner], what="holomorphic coframe")
    J = np.einsum("...ij,jk,...kl->...il", Q_inv, J0, Q)

    phi_bar = data.phi_base(b1, b2) - ((w - np.conj(w)) ** 2).real / (4.0 * tau.imag)
    if data.perturbation is not None:
        phi_bar = phi_bar + data.perturbation(b1, b2)
    d_phi = grad(phi_bar)
    beta = -np.einsum("...j,...jk->...k", d_phi.values, J)
    d_beta = gradient(TensorField(chart, mask_margin(beta, 4, margin), ((TOTAL, 4),), margin), cfg)
    right = 0.5 * (np.swapaxes(d_beta.values, -1, -2) - d_beta.values)  # Ω_kl = ½(∂_k β_l − ∂_l β_k)

    # ω̄ = area db¹∧db² + Re[(i / 2Imτ) θ∧θ̄],  θ = dw − ((w − w̄)/(τ − τ̄)) dτ
    theta = d_w - ((w - np.conj(w)) / (tau - np.conj(tau)))[..., None] * d_tau
    wedge = theta[..., :, None] * np.conj(theta)[..., None, :]
    left = ((1j / (2.0 * tau.imag))[..., None, None] * (wedge - np.swapaxes(wedge, -1, -2))).real
    area = data.area(b1, b2) * np.ones_like(b1)
    left[..., 0, 1] += area
    left[..., 1, 0] -= area

    out_margin = d_beta.margin
    omega = _two_form(left, chart, margin)
    closed = gradient(omega, cfg).values  # [..., k, l, m] = ∂_m ω_kl
    cyclic = (
        np.einsum("...lmk->...klm", closed)
        + np.einsum("...mkl->...klm", closed)
        + np.einsum("...klm->...klm", closed)
    )
    closedness = TensorField(chart, cyclic, ((TOTAL, 4),) * 3, margin + cfg.half_width)
    diff = _two_form(left - right, chart, out_margin)
    return _report(
        "kahler_potential",
        diff,
        tol,
        cfg,
        closedness_sup=field_norms(closedness)[0],
    )


# Suite --------------------------------------------------------------------------

def run_identity_suite(
    bm: BundleMetric,
    lam: float = 0.0,
    cfg: FDConfig = FDConfig(),
    *,
    einstein: bool = False,
    tol: float = DEFAULT_IDENTITY_TOL,
) -> List[IdentityReport]:
    """All identities that apply to ``bm``.

    Checks that follow from the Einstein condition are only run when
    ``einstein`` is set; the harmonic-map and conformality checks further
    need constant ``det G``.
    """
    reports = [
        check_grad_sqrt_detG(bm, cfg, tol=tol),
        check_laplacian_sqrt_detG(bm, cfg, tol=tol),
        check_scalar_consistency(bm, cfg, tol=tol),
    ]
    if not einstein:
        for name in ("trace_equation", "subharmonicity", "harmonic_map", "twist_density", "conformality", "codimension_one"):
            reports.append(not_applicable(name, "metric not declared Einstein"))
        return reports

    reports.append(check_trace_equation(bm, lam, cfg, tol=tol))
    reports.append(check_subharmonicity(bm, lam, cfg, tol=tol))
    constant_det = det_G_is_constant(bm)
    if constant_det:
        reports.append(check_harmonic_map(bm, cfg, tol=tol))
    else:
        reports.append(not_applicable("harmonic_map", "det G is not constant"))
    if bm.n == 2:
        t, dt_sup = twist_density(bm, cfg)
        reports.append(
            IdentityReport(
                "twist_density", dt_sup, dt_sup, tol, PASS if dt_sup <= tol else FAIL,
                tuple(bm.chart.points), bm.chart.h, cfg.fd_order,
                {"t_sup": field_norms(t)[0]},
            )
        )
        if constant_det:
            reports.append(check_conformality(bm, cfg, tol=tol))
        else:
            reports.append(not_applicable("conformality", "det G is not constant"))
    else:
        reports.append(not_applicable("twist_density", "base is not 2-d"))
        reports.append(not_applicable("conformality", "base is not 2-d"))
    if bm.N == 1:
        reports.append(check_codimension_one(bm, cfg, tol=tol))
    else:
        reports.append(not_applicable("codimension_one", "fiber is not 1-d"))
    return reports
