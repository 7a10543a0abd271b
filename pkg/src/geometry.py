"""
Tensor calculus on the base chart.

Christoffel symbols and Ricci curvature are computed by one generic routine
that works for any metric whose components depend on the base coordinates
only.  For a base metric every coordinate is a base coordinate; for an
assembled bundle metric the leading fiber coordinates are Killing directions
and their partial derivatives vanish identically.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .grid import (
    BASE,
    TOTAL,
    Chart,
    FDConfig,
    TensorField,
    gradient,
    mask_margin,
)
from .utils import MAX_TOTAL_DIM, check_positive_definite, invert, symmetrize

logger = logging.getLogger(__name__)

INVERSE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class BaseMetric:
    """Riemannian metric ``g_{αβ}`` sampled on the base chart."""

    g: TensorField
    inverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        n = self.g.chart.dim
        if self.g.index_spec != ((BASE, n), (BASE, n)):
            raise ValueError("base metric needs two base indices")
        if self.g.margin:
            raise ValueError("base metric must be valid on the whole chart")
        smallest = check_positive_definite(self.g.values, what="base metric")
        inverse = invert(self.g.values, what="base metric")
        largest = np.linalg.eigvalsh(self.g.values)[..., -1]
        defect = np.abs(self.g.values @ inverse - np.eye(n))
        if np.any(defect > INVERSE_TOL * largest[..., None, None] / smallest[..., None, None]):
            raise ValueError("base metric inverse is inaccurate (ill conditioned)")
        object.__setattr__(self, "inverse", inverse)

    @classmethod
    def from_values(cls, chart: Chart, values: np.ndarray) -> "BaseMetric":
        n = chart.dim
        return cls(TensorField(chart, values, ((BASE, n), (BASE, n)), 0, ((0, 1),)))

    @classmethod
    def euclidean(cls, chart: Chart) -> "BaseMetric":
        return cls.from_values(chart, np.zeros(chart.shape + (1, 1)) + np.eye(chart.dim))

    @classmethod
    def conformal(cls, chart: Chart, phi: np.ndarray) -> "BaseMetric":
        """``e^{2φ} δ``, the isothermal form."""
        scale = np.exp(2.0 * np.asarray(phi, dtype=float))
        return cls.from_values(chart, scale[..., None, None] * np.eye(chart.dim))

    @property
    def chart(self) -> Chart:
        return self.g.chart

    @property
    def dim(self) -> int:
        return self.g.chart.dim

    @property
    def values(self) -> np.ndarray:
        return self.g.values


# Generic machinery --------------------------------------------------------

def coordinate_gradient(field: TensorField, total: int, cfg: FDConfig) -> TensorField:
    """Gradient over ``total`` coordinates whose last ``n`` are the base axes.

    The leading ``total - n`` slots are Killing directions and are zero.
    """
    grad = gradient(field, cfg)
    n = field.chart.dim
    if total == n:
        return grad
    pad = np.zeros(grad.values.shape[:-1] + (total - n,))
    values = np.concatenate([pad, grad.values], axis=-1)
    return TensorField(field.chart, values, field.index_spec + ((TOTAL, total),), grad.margin)


def _christoffel_values(metric: TensorField, inverse: np.ndarray, cfg: FDConfig) -> Tuple[np.ndarray, int]:
    m = metric.ranges[0]
    dg = coordinate_gradient(metric, m, cfg)
    d = dg.values  # d[..., a, b, c] = ∂_c g_ab
    lower = 0.5 * (np.swapaxes(d, -1, -2) + d - np.moveaxis(d, -1, -3))
    gamma = np.einsum("...sm,...mab->...sab", inverse, lower)
    gamma = symmetrize(gamma)
    return mask_margin(gamma, metric.chart.dim, dg.margin), dg.margin


def _ricci_values(metric: TensorField, inverse: np.ndarray, cfg: FDConfig) -> Tuple[np.ndarray, int]:
    m = metric.ranges[0]
    chart = metric.chart
    gamma, margin = _christoffel_values(metric, inverse, cfg)
    spec = ((TOTAL, m),) * 3
    gamma_field = TensorField(chart, gamma, spec, margin)
    dgamma = coordinate_gradient(gamma_field, m, cfg).values  # [..., s, a, b, c] = ∂_c Γ^s_ab
    trace = np.einsum("...ssm->...m", gamma)
    ricci = (
        np.einsum("...sabs->...ab", dgamma)
        - np.einsum("...ssba->...ab", dgamma)
        + np.einsum("...m,...mab->...ab", trace, gamma)
        - np.einsum("...sam,...msb->...ab", gamma, gamma)
    )
    margin = margin + cfg.half_width
    return mask_margin(symmetrize(ricci), chart.dim, margin), margin


# Base operations ----------------------------------------------------------

def christoffel(g: BaseMetric, cfg: FDConfig = FDConfig()) -> TensorField:
    """``Γ^σ_{αβ}`` with slots ``(σ, α, β)``."""
    values, margin = _christoffel_values(g.g, g.inverse, cfg)
    n = g.dim
    return TensorField(g.chart, values, ((BASE, n),) * 3, margin, ((1, 2),))


def ricci_base(g: BaseMetric, cfg: FDConfig = FDConfig()) -> TensorField:
    values, margin = _ricci_values(g.g, g.inverse, cfg)
    n = g.dim
    return TensorField(g.chart, values, ((BASE, n),) * 2, margin, ((0, 1),))


def scalar_base(g: BaseMetric, cfg: FDConfig = FDConfig()) -> TensorField:
    ricci = ricci_base(g, cfg)
    return ricci.with_values(np.einsum("...ab,...ab->...", g.inverse, ricci.values), ())


def gauss_curvature(g: BaseMetric, cfg: FDConfig = FDConfig()) -> TensorField:
    """Half the scalar curvature of a 2-d base."""
    if g.dim != 2:
        raise ValueError("Gauss curvature needs a 2-d base")
    scalar = scalar_base(g, cfg)
    return scalar.with_values(0.5 * scalar.values)


def volume_density(g: BaseMetric) -> TensorField:
    """``√det g``."""
    return TensorField(g.chart, np.sqrt(np.linalg.det(g.values)))


def covariant_hessian(T: TensorField, g: BaseMetric, cfg: FDConfig = FDConfig()) -> TensorField:
    """``T_{;αβ} = ∂_α∂_β T − Γ^σ_{αβ} ∂_σ T`` for scalar or fiber-valued ``T``.

    Fiber indices are inert: the fiber directions carry no base connection.
    """
    if any(kind == BASE for kind, _ in T.index_spec):
        raise ValueError("covariant_hessian expects scalar or fiber-indexed fields")
    first = gradient(T, cfg)
    second = gradient(first, cfg)
    gamma = christoffel(g, cfg)
    flat_first = first.values.reshape(T.chart.shape + (-1, g.dim))
    flat_second = second.values.reshape(T.chart.shape + (-1, g.dim, g.dim))
    hess = flat_second - np.einsum("...sab,...ks->...kab", gamma.values, flat_first)
    hess = symmetrize(hess).reshape(T.chart.shape + T.ranges + (g.dim, g.dim))
    k = T.rank
    return second.with_values(
        hess,
        T.index_spec + ((BASE, g.dim), (BASE, g.dim)),
        symmetric=((k, k + 1),),
    )


def laplacian(f: TensorField, g: BaseMetric, cfg: FDConfig = FDConfig()) -> TensorField:
    """``g^{αβ} f_{;αβ}``, componentwise for fiber-valued fields."""
    hess = covariant_hessian(f, g, cfg)
    values = np.einsum("...ab,...ab->...", g.inverse[(...,) + (None,) * f.rank + (slice(None),) * 2], hess.values)
    return hess.with_values(values, f.index_spec)


def covariant_derivative_two_form(F: TensorField, g: BaseMetric, cfg: FDConfig = FDConfig()) -> TensorField:
    """``F^K_{αγ;δ}`` for a fiber-valued 2-form; the derivative slot is last."""
    n = g.dim
    if F.index_spec[-2:] != ((BASE, n), (BASE, n)):
        raise ValueError("expected a fiber-valued two-form")
    dF = gradient(F, cfg)
    gamma = christoffel(g, cfg).values
    values = (
        dF.values
        - np.einsum("...sda,...ksc->...kacd", gamma, F.values)
        - np.einsum("...sdc,...kas->...kacd", gamma, F.values)
    )
    return dF.with_values(values, margin=max(dF.margin, F.margin + cfg.half_width))


# Generic oracle -----------------------------------------------------------

def full_ricci_generic(gm: TensorField, cfg: FDConfig = FDConfig()) -> TensorField:
    """Ricci tensor of an ``m``-dimensional metric depending only on ``b``.

    Coordinates are ordered ``(x^1..x^N, b^1..b^n)``.
    """
    if gm.rank != 2 or gm.ranges[0] != gm.ranges[1]:
        raise ValueError("expected a square metric field")
    m = gm.ranges[0]
    if m > MAX_TOTAL_DIM:
        raise ValueError(f"total dimension {m} exceeds {MAX_TOTAL_DIM}")
    if m < gm.chart.dim:
        raise ValueError("total dimension is smaller than the base dimension")
    if gm.margin:
        raise ValueError("metric must be valid on the whole chart")
    check_positive_definite(gm.values, what="assembled metric")
    inverse = invert(gm.values, what="assembled metric")
    values, margin = _ricci_values(gm, inverse, cfg)
    logger.debug("generic Ricci: m=%d grid=%s margin=%d", m, gm.chart.shape, margin)
    return TensorField(gm.chart, values, ((TOTAL, m), (TOTAL, m)), margin, ((0, 1),))
