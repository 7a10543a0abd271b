"""
Bundle metrics ``G_IJ (dx^I + A^I)(dx^J + A^J) + g`` and their Ricci blocks.

Blocks are expressed in the horizontal frame ``{∂_I, e_α = ∂_α − A^I_α ∂_I}``
where the connection only enters through its field strength.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from .geometry import (
    BaseMetric,
    covariant_derivative_two_form,
    covariant_hessian,
    full_ricci_generic,
    ricci_base,
    scalar_base,
)
from .grid import BASE, FIBER, TOTAL, Chart, FDConfig, TensorField, field_norms, gradient, mask_margin
from .utils import MAX_TOTAL_DIM, check_positive_definite, invert, symmetrize

logger = logging.getLogger(__name__)

BLOCKS = ("fiber", "mixed", "base", "scalar")


@dataclass(frozen=True, eq=False)
class BundleMetric:
    G: TensorField
    A: TensorField
    g: BaseMetric
    G_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        chart = self.g.chart
        if self.G.chart != chart or self.A.chart != chart:
            raise ValueError("G, A and g must share one chart")
        n = chart.dim
        N = self.G.ranges[0] if self.G.rank else 0
        if N < 1 or self.G.index_spec != ((FIBER, N), (FIBER, N)):
            raise ValueError("G needs two fiber indices of equal range >= 1")
        if self.A.index_spec != ((FIBER, N), (BASE, n)):
            raise ValueError("A needs one fiber and one base index")
        if N + n > MAX_TOTAL_DIM:
            raise ValueError(f"total dimension {N + n} exceeds {MAX_TOTAL_DIM}")
        if self.G.margin or self.A.margin:
            raise ValueError("G and A must be valid on the whole chart")
        check_positive_definite(self.G.values, what="fiber metric G")
        object.__setattr__(self, "G_inv", invert(self.G.values, what="fiber metric G"))

    @classmethod
    def from_arrays(
        cls,
        chart: Chart,
        G: np.ndarray,
        A: np.ndarray | None = None,
        g: np.ndarray | BaseMetric | None = None,
    ) -> "BundleMetric":
        G = np.asarray(G, dtype=float)
        N, n = G.shape[-1], chart.dim
        if A is None:
            A = np.zeros(chart.shape + (N, n))
        if g is None:
            base = BaseMetric.euclidean(chart)
        elif isinstance(g, BaseMetric):
            base = g
        else:
            base = BaseMetric.from_values(chart, g)
        return cls(
            TensorField(chart, G, ((FIBER, N), (FIBER, N)), 0, ((0, 1),)),
            TensorField(chart, A, ((FIBER, N), (BASE, n))),
            base,
        )

    @property
    def chart(self) -> Chart:
        return self.g.chart

    @property
    def N(self) -> int:
        return self.G.ranges[0]

    @property
    def n(self) -> int:
        return self.g.dim

    @property
    def m(self) -> int:
        return self.N + self.n

    @property
    def det_G(self) -> np.ndarray:
        return np.linalg.det(self.G.values)

    def with_connection(self, A: np.ndarray) -> "BundleMetric":
        return dataclasses.replace(self, A=TensorField(self.chart, A, self.A.index_spec))


@dataclass(frozen=True, eq=False)
class FieldStrength:
    """``F^I_{αβ} = ∂_α A^I_β − ∂_β A^I_α``."""

    F: TensorField

    def __post_init__(self) -> None:
        values = self.F.values
        if not np.array_equal(values, -np.swapaxes(values, -1, -2)):
            raise ValueError("field strength must be antisymmetric in its base slots")

    def bianchi(self, cfg: FDConfig = FDConfig()) -> TensorField:
        """Cyclic sum ``∂_α F_βγ + ∂_β F_γα + ∂_γ F_αβ``; vanishes for exact F."""
        dF = gradient(self.F, cfg).values  # [..., k, b, c, a] = ∂_a F_bc
        cyclic = (
            np.einsum("...kbca->...kabc", dF)
            + np.einsum("...kcab->...kabc", dF)
            + np.einsum("...kabc->...kabc", dF)
        )
        n = self.F.chart.dim
        return TensorField(
            self.F.chart, cyclic, self.F.index_spec[:1] + ((BASE, n),) * 3, self.F.margin + cfg.half_width
        )


@dataclass(frozen=True)
class ResidualReport:
    """Block norms of ``Ric(ḡ) − λḡ`` on the valid interior."""

    fiber_sup: float
    fiber_l2: float
    mixed_sup: float
    mixed_l2: float
    base_sup: float
    base_l2: float
    scalar_sup: float
    scalar_l2: float
    lam: float
    points: tuple
    h: float
    fd_order: int
    margin: int

    @property
    def max_sup(self) -> float:
        return max(self.fiber_sup, self.mixed_sup, self.base_sup, self.scalar_sup)

    def passed(self, tol: float) -> bool:
        return self.max_sup <= tol

    def to_dict(self) -> Dict[str, Any]:
        out = dataclasses.asdict(self)
        out["points"] = list(self.points)
        return out


# Derivatives shared by the block formulas ---------------------------------

@dataclass(frozen=True, eq=False)
class BundleDerivatives:
    dG: np.ndarray  # [..., I, J, α] = G_IJ,α
    hess_G: np.ndarray  # [..., I, J, α, β] = G_IJ;αβ
    F: np.ndarray  # [..., K, α, β]
    dF: np.ndarray  # [..., K, α, γ, δ] = F^K_αγ;δ
    trlog: np.ndarray  # [..., α] = G^KL G_KL,α
    margin: int


def bundle_derivatives(bm: BundleMetric, cfg: FDConfig = FDConfig()) -> BundleDerivatives:
    dG = gradient(bm.G, cfg)
    hess = covariant_hessian(bm.G, bm.g, cfg)
    F = field_strength(bm.A, cfg).F
    dF = covariant_derivative_two_form(F, bm.g, cfg)
    trlog = np.einsum("...kl,...kla->...a", bm.G_inv, dG.values)
    margin = max(hess.margin, dF.margin)
    logger.debug("bundle derivatives: N=%d n=%d margin=%d", bm.N, bm.n, margin)
    return BundleDerivatives(dG.values, hess.values, F.values, dF.values, trlog, margin)


def _block(bm: BundleMetric, values: np.ndarray, spec, margin: int, symmetric=()) -> TensorField:
    return TensorField(bm.chart, mask_margin(values, bm.n, margin), tuple(spec), margin, tuple(symmetric))


# Block formulas -------------------------------------------------------------

def field_strength(A: TensorField, cfg: FDConfig = FDConfig()) -> FieldStrength:
    dA = gradient(A, cfg)  # [..., I, β, α] = ∂_α A^I_β
    values = np.swapaxes(dA.values, -1, -2) - dA.values
    n = A.chart.dim
    return FieldStrength(dA.with_values(values, A.index_spec[:1] + ((BASE, n), (BASE, n))))


def F_squared(bm: BundleMetric, cfg: FDConfig = FDConfig(), *, derivs: Optional[BundleDerivatives] = None) -> TensorField:
    """``|F|² = g^{αγ} g^{βδ} G_IJ F^I_αβ F^J_γδ``."""
    d = derivs or bundle_derivatives(bm, cfg)
    ginv = bm.g.inverse
    values = np.einsum("...ac,...bd,...ij,...iab,...jcd->...", ginv, ginv, bm.G.values, d.F, d.F)
    return _block(bm, values, (), d.margin)


def ricci_fiber(bm: BundleMetric, cfg: FDConfig = FDConfig(), *, derivs: Optional[BundleDerivatives] = None) -> TensorField:
    d = derivs or bundle_derivatives(bm, cfg)
    ginv, G, Ginv = bm.g.inverse, bm.G.values, bm.G_inv
    values = (
        -0.5 * np.einsum("...ab,...ijab->...ij", ginv, d.hess_G)
        - 0.25 * np.einsum("...ab,...a,...ijb->...ij", ginv, d.trlog, d.dG)
        + 0.5 * np.einsum("...ab,...kl,...ika,...ljb->...ij", ginv, Ginv, d.dG, d.dG)
        + 0.25 * np.einsum("...ac,...bd,...ik,...jl,...kab,...lcd->...ij", ginv, ginv, G, G, d.F, d.F)
    )
    N = bm.N
    return _block(bm, symmetrize(values), ((FIBER, N), (FIBER, N)), d.margin, ((0, 1),))


def ricci_mixed(bm: BundleMetric, cfg: FDConfig = FDConfig(), *, derivs: Optional[BundleDerivatives] = None) -> TensorField:
    d = derivs or bundle_derivatives(bm, cfg)
    ginv, G = bm.g.inverse, bm.G.values
    values = (
        0.5 * np.einsum("...cd,...ik,...kacd->...ia", ginv, G, d.dF)
        + 0.5 * np.einsum("...cd,...ikc,...kad->...ia", ginv, d.dG, d.F)
        + 0.25 * np.einsum("...cd,...ik,...c,...kad->...ia", ginv, G, d.trlog, d.F)
    )
    return _block(bm, values, ((FIBER, bm.N), (BASE, bm.n)), d.margin)


def ricci_basebase(
    bm: BundleMetric,
    lam: float = 0.0,
    cfg: FDConfig = FDConfig(),
    *,
    derivs: Optional[BundleDerivatives] = None,
) -> TensorField:
    """Base block of ``Ric(ḡ) − λḡ`` in the horizontal frame."""
    d = derivs or bundle_derivatives(bm, cfg)
    ginv, G, Ginv = bm.g.inverse, bm.G.values, bm.G_inv
    ricci = ricci_base(bm.g, cfg)
    values = (
        ricci.values
        - 0.5 * np.einsum("...ij,...ijab->...ab", Ginv, d.hess_G)
        + 0.25 * np.einsum("...ij,...jka,...kl,...lib->...ab", Ginv, d.dG, Ginv, d.dG)
        - 0.5 * np.einsum("...cd,...ij,...iac,...jbd->...ab", ginv, G, d.F, d.F)
        - lam * bm.g.values
    )
    n = bm.n
    return _block(bm, symmetrize(values), ((BASE, n), (BASE, n)), max(d.margin, ricci.margin), ((0, 1),))


def scalar_total(bm: BundleMetric, cfg: FDConfig = FDConfig(), *, derivs: Optional[BundleDerivatives] = None) -> TensorField:
    d = derivs or bundle_derivatives(bm, cfg)
    ginv, Ginv = bm.g.inverse, bm.G_inv
    scalar = scalar_base(bm.g, cfg)
    f2 = F_squared(bm, cfg, derivs=d)
    values = (
        scalar.values
        - np.einsum("...ij,...ab,...ijab->...", Ginv, ginv, d.hess_G)
        + 0.75 * np.einsum("...ab,...ij,...jka,...kl,...lib->...", ginv, Ginv, d.dG, Ginv, d.dG)
        - 0.25 * np.einsum("...ab,...a,...b->...", ginv, d.trlog, d.trlog)
        - 0.25 * f2.values
    )
    return _block(bm, values, (), max(d.margin, scalar.margin))


def trace_equation_residual(
    bm: BundleMetric,
    lam: float = 0.0,
    cfg: FDConfig = FDConfig(),
    *,
    derivs: Optional[BundleDerivatives] = None,
) -> TensorField:
    """``G^{IJ} R̄_IJ − Nλ``; zero on Einstein metrics."""
    fiber = ricci_fiber(bm, cfg, derivs=derivs)
    values = np.einsum("...ij,...ij->...", bm.G_inv, fiber.values) - bm.N * lam
    return fiber.with_values(values, ())


# Assembled metric and the generic oracle -------------------------------------

def assemble_full_metric(bm: BundleMetric) -> TensorField:
    """``ḡ`` in coordinates ``(x^1..x^N, b^1..b^n)``."""
    N, n = bm.N, bm.n
    G, A = bm.G.values, bm.A.values
    out = np.zeros(bm.chart.shape + (N + n, N + n))
    GA = np.einsum("...ij,...ja->...ia", G, A)
    out[..., :N, :N] = G
    out[..., :N, N:] = GA
    out[..., N:, :N] = np.swapaxes(GA, -1, -2)
    out[..., N:, N:] = bm.g.values + symmetrize(np.einsum("...ia,...ij,...jb->...ab", A, G, A))
    m = N + n
    return TensorField(bm.chart, out, ((TOTAL, m), (TOTAL, m)), 0, ((0, 1),))


@dataclass(frozen=True, eq=False)
class FrameBlocks:
    fiber: TensorField
    mixed: TensorField
    base: TensorField
    scalar: TensorField


def frame_components(ricci: TensorField, A: TensorField, full_inverse: np.ndarray) -> FrameBlocks:
    """Convert coordinate Ricci of ``ḡ`` to the horizontal frame blocks."""
    N, n = A.ranges
    R = ricci.values
    a = A.values
    R_ff, R_fb, R_bb = R[..., :N, :N], R[..., :N, N:], R[..., N:, N:]
    mixed = R_fb - np.einsum("...ja,...ij->...ia", a, R_ff)
    base = (
        R_bb
        - np.einsum("...ia,...ib->...ab", a, R_fb)
        - np.einsum("...ib,...ai->...ab", a, np.swapaxes(R_fb, -1, -2))
        + np.einsum("...ia,...jb,...ij->...ab", a, a, R_ff)
    )
    scalar = np.einsum("...ab,...ab->...", full_inverse, R)
    margin = ricci.margin
    chart = ricci.chart
    return FrameBlocks(
        TensorField(chart, R_ff, ((FIBER, N), (FIBER, N)), margin, ((0, 1),)),
        TensorField(chart, mixed, ((FIBER, N), (BASE, n))).with_values(mixed, margin=margin),
        TensorField(chart, symmetrize(base), ((BASE, n), (BASE, n))).with_values(
            symmetrize(base), margin=margin, symmetric=((0, 1),)
        ),
        TensorField(chart, scalar).with_values(scalar, margin=margin),
    )


def oracle_blocks(bm: BundleMetric, cfg: FDConfig = FDConfig()) -> FrameBlocks:
    """Frame blocks of the brute-force Ricci tensor of the assembled metric."""
    full = assemble_full_metric(bm)
    ricci = full_ricci_generic(full, cfg)
    return frame_components(ricci, bm.A, invert(full.values, what="assembled metric"))


def einstein_residual(bm: BundleMetric, lam: float = 0.0, cfg: FDConfig = FDConfig()) -> ResidualReport:
    d = bundle_derivatives(bm, cfg)
    fiber = ricci_fiber(bm, cfg, derivs=d)
    fiber = fiber.with_values(fiber.values - lam * bm.G.values, symmetric=((0, 1),))
    mixed = ricci_mixed(bm, cfg, derivs=d)
    base = ricci_basebase(bm, lam, cfg, derivs=d)
    scalar = scalar_total(bm, cfg, derivs=d)
    scalar = scalar.with_values(scalar.values - bm.m * lam)
    # common interior for every block
    margin = max(fiber.margin, mixed.margin, base.margin, scalar.margin)
    norms = [field_norms(b.with_values(b.values, margin=margin, symmetric=b.symmetric)) for b in (fiber, mixed, base, scalar)]
    report = ResidualReport(
        *norms[0], *norms[1], *norms[2], *norms[3],
        lam=float(lam),
        points=tuple(bm.chart.points),
        h=bm.chart.h,
        fd_order=cfg.fd_order,
        margin=margin,
    )
    logger.info("einstein residual at h=%.4g: max sup %.3e", report.h, report.max_sup)
    return report


def relabel_fibers(bm: BundleMetric, gamma: np.ndarray) -> BundleMetric:
    """Change fiber coordinates ``x' = γ^{-T} x``: ``G' = γGγᵀ``, ``A' = γ^{-T}A``."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (bm.N, bm.N):
        raise ValueError(f"relabeling matrix must be {bm.N}x{bm.N}")
    inv_t = invert(gamma, what="relabeling matrix").T
    G = symmetrize(np.einsum("ik,...kl,jl->...ij", gamma, bm.G.values, gamma))
    A = np.einsum("ik,...ka->...ia", inv_t, bm.A.values)
    return BundleMetric.from_arrays(bm.chart, G, A, bm.g)
