"""
Uniform charts, sampled tensor fields and central finite differences.

Every derived field carries a ``margin``: the number of boundary layers (on
every axis) where its values are not valid.  Those layers are filled with
zeros so arrays stay finite; norms are only ever taken on the interior.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np

from .utils import DEFAULT_FD_ORDER, MIN_POINTS

BASE = "base"
FIBER = "fiber"
TOTAL = "total"  # coordinate slots of an assembled (fiber + base) metric
INDEX_KINDS = (BASE, FIBER, TOTAL)

IndexSpec = Tuple[Tuple[str, int], ...]


@dataclass(frozen=True)
class Chart:
    """Uniform tensor-product grid over a box."""

    lo: Tuple[float, ...]
    hi: Tuple[float, ...]
    points: Tuple[int, ...]

    def __post_init__(self) -> None:
        if not (len(self.lo) == len(self.hi) == len(self.points)) or not self.points:
            raise ValueError("chart bounds and points must have one entry per axis")
        for axis, (lo, hi, pts) in enumerate(zip(self.lo, self.hi, self.points)):
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi:
                raise ValueError(f"degenerate range on axis {axis}: [{lo}, {hi}]")
            if int(pts) < MIN_POINTS:
                raise ValueError(
                    f"axis {axis} has {pts} points; at least {MIN_POINTS} are required"
                )

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(int(p) for p in self.points)

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple((hi - lo) / (p - 1) for lo, hi, p in zip(self.lo, self.hi, self.points))

    @property
    def h(self) -> float:
        """Largest spacing, used for convergence bookkeeping."""
        return max(self.spacing)

    def axis(self, index: int) -> np.ndarray:
        return np.linspace(self.lo[index], self.hi[index], self.points[index])

    def mesh(self) -> List[np.ndarray]:
        return np.meshgrid(*[self.axis(i) for i in range(self.dim)], indexing="ij")

    def refine(self, level: int = 1) -> "Chart":
        """Same box with the spacing divided by ``2**level``."""
        factor = 2 ** int(level)
        return Chart(self.lo, self.hi, tuple((p - 1) * factor + 1 for p in self.points))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ranges": [[lo, hi] for lo, hi in zip(self.lo, self.hi)],
            "points": list(self.points),
        }


@dataclass(frozen=True)
class FDConfig:
    fd_order: int = DEFAULT_FD_ORDER

    def __post_init__(self) -> None:
        if self.fd_order not in (2, 4):
            raise ValueError(f"fd_order must be 2 or 4, got {self.fd_order}")

    @property
    def half_width(self) -> int:
        return self.fd_order // 2


@dataclass(frozen=True, eq=False)
class TensorField:
    """Multi-index array sampled on a chart.

    ``values`` has shape ``chart.shape + ranges`` where ``ranges`` follows
    ``index_spec``.  ``symmetric`` lists slot pairs that must be exactly
    symmetric.
    """

    chart: Chart
    values: np.ndarray
    index_spec: IndexSpec = ()
    margin: int = 0
    symmetric: Tuple[Tuple[int, int], ...] = field(default=())

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        expected = self.chart.shape + self.ranges
        if values.shape != expected:
            raise ValueError(f"field shape {values.shape} does not match {expected}")
        for kind, size in self.index_spec:
            if kind not in INDEX_KINDS:
                raise ValueError(f"unknown index kind {kind!r}")
            if kind == BASE and size != self.chart.dim:
                raise ValueError("base index range must equal the chart dimension")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        offset = self.chart.dim
        for i, j in self.symmetric:
            if not np.array_equal(values, np.swapaxes(values, offset + i, offset + j)):
                raise ValueError(f"index slots {i} and {j} are declared symmetric but are not")

    @property
    def ranges(self) -> Tuple[int, ...]:
        return tuple(size for _, size in self.index_spec)

    @property
    def rank(self) -> int:
        return len(self.index_spec)

    def interior(self) -> np.ndarray:
        m = self.margin
        if m == 0:
            return self.values
        return self.values[tuple(slice(m, -m) for _ in range(self.chart.dim))]

    def with_values(
        self,
        values: np.ndarray,
        index_spec: IndexSpec | None = None,
        *,
        margin: int | None = None,
        symmetric: Tuple[Tuple[int, int], ...] = (),
    ) -> "TensorField":
        margin = self.margin if margin is None else margin
        return TensorField(
            self.chart,
            mask_margin(np.asarray(values, dtype=float), self.chart.dim, margin),
            self.index_spec if index_spec is None else index_spec,
            margin,
            symmetric,
        )


def mask_margin(values: np.ndarray, dim: int, margin: int) -> np.ndarray:
    """Zero the ``margin`` outer layers of every grid axis."""
    if margin == 0:
        return values
    out = np.array(values, copy=True)
    for axis in range(dim):
        lead = (slice(None),) * axis
        out[lead + (slice(0, margin),)] = 0.0
        out[lead + (slice(-margin, None),)] = 0.0
    return out


def max_margin(*fields: TensorField) -> int:
    return max(f.margin for f in fields)


# Construction -----------------------------------------------------------------

def make_chart(ranges: Sequence[Sequence[float]], points: Sequence[int]) -> Chart:
    """Build a chart from ``[(lo, hi), ...]`` and per-axis point counts."""
    if len(ranges) != len(points):
        raise ValueError("ranges and points must have the same length")
    lo = tuple(float(r[0]) for r in ranges)
    hi = tuple(float(r[1]) for r in ranges)
    return Chart(lo, hi, tuple(int(p) for p in points))


def sample(
    chart: Chart,
    f: Callable[..., Any],
    index_spec: IndexSpec = (),
    *,
    symmetric: Tuple[Tuple[int, int], ...] = (),
) -> TensorField:
    """Evaluate ``f(*coordinates)`` on every node.

    ``f`` returns either grid-shaped data or an array whose leading axes are
    the index ranges (``np.array([[g11, g12], [g21, g22]])`` style); constant
    components broadcast over the grid.
    """
    comp = tuple(size for _, size in index_spec)
    raw = np.asarray(f(*chart.mesh()), dtype=float)
    if raw.shape == comp:
        raw = raw.reshape(comp + (1,) * chart.dim)
    try:
        raw = np.broadcast_to(raw, comp + chart.shape)
    except ValueError as exc:
        raise ValueError(f"sampled array of shape {raw.shape} does not fit {comp} over the chart") from exc
    values = np.moveaxis(raw, tuple(range(len(comp))), tuple(range(chart.dim, chart.dim + len(comp))))
    values = np.ascontiguousarray(values)
    if not np.all(np.isfinite(values)):
        raise ValueError("sampled function is not finite at every node")
    return TensorField(chart, values, tuple(index_spec), 0, symmetric)


# Differentiation -------------------------------------------------------------

def _along(values: np.ndarray, axis: int, start: int, stop: int | None) -> np.ndarray:
    return values[(slice(None),) * axis + (slice(start, stop),)]


def central_difference(values: np.ndarray, axis: int, h: float, fd_order: int) -> np.ndarray:
    """Central first derivative along a grid axis; invalid layers are zero."""
    n = values.shape[axis]
    out = np.zeros_like(values)
    w = fd_order // 2
    target = (slice(None),) * axis + (slice(w, n - w),)
    if fd_order == 2:
        out[target] = (_along(values, axis, 2, None) - _along(values, axis, 0, n - 2)) / (2.0 * h)
    else:
        out[target] = (
            -_along(values, axis, 4, None)
            + 8.0 * _along(values, axis, 3, n - 1)
            - 8.0 * _along(values, axis, 1, n - 3)
            + _along(values, axis, 0, n - 4)
        ) / (12.0 * h)
    return out


def _check_room(chart: Chart, margin: int) -> None:
    if min(chart.points) - 2 * margin < 1:
        raise ValueError(
            f"grid too small for stencil: margin {margin} leaves no interior "
            f"on a chart with {min(chart.points)} points"
        )


def partial(field: TensorField, axis: int, cfg: FDConfig = FDConfig()) -> TensorField:
    """∂_axis of every component; the result gains ``fd_order/2`` margin."""
    if not 0 <= axis < field.chart.dim:
        raise ValueError(f"axis {axis} out of range for a {field.chart.dim}-d chart")
    margin = field.margin + cfg.half_width
    _check_room(field.chart, margin)
    d = central_difference(field.values, axis, field.chart.spacing[axis], cfg.fd_order)
    return TensorField(field.chart, mask_margin(d, field.chart.dim, margin), field.index_spec, margin)


def gradient(field: TensorField, cfg: FDConfig = FDConfig()) -> TensorField:
    """All base partials, appended as a trailing covariant base slot."""
    margin = field.margin + cfg.half_width
    _check_room(field.chart, margin)
    parts = [
        central_difference(field.values, axis, field.chart.spacing[axis], cfg.fd_order)
        for axis in range(field.chart.dim)
    ]
    values = mask_margin(np.stack(parts, axis=-1), field.chart.dim, margin)
    return TensorField(field.chart, values, field.index_spec + ((BASE, field.chart.dim),), margin)


def field_norms(field: TensorField) -> Tuple[float, float]:
    """``(sup, rms)`` of all components over the valid interior."""
    _check_room(field.chart, field.margin)
    inner = np.ascontiguousarray(field.interior())
    if inner.size == 0:
        raise ValueError("empty interior")
    sup = float(np.max(np.abs(inner)))
    l2 = float(np.sqrt(np.mean(np.square(inner))))
    return sup, l2
