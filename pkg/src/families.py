"""
Explicit families of bundle metrics.

Every constructor returns a validated :class:`~src.bundle.BundleMetric`; the
Einstein families are the flat product, Kasner metrics ``G(s) = s^A``, the
semiflat metrics built from a holomorphic ``τ`` and the flat boundary model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .bundle import BundleMetric
from .geometry import BaseMetric
from .grid import Chart, FDConfig, field_norms
from .identities import ComplexChartData, holomorphy_residual
from .utils import FourierSeries, expm_sym, power_sym, symmetrize, sym_from_components

logger = logging.getLogger(__name__)

FAMILIES = ("flat_product", "kasner", "semiflat", "boundary_model", "random")
HOLOMORPHIC_KINDS = ("constant", "z", "exp", "polynomial", "tabulated")

KASNER_TRACE_TOL = 1e-12
HOLOMORPHY_TOL = 1e-4


@dataclass(frozen=True)
class FamilySpec:
    """Serializable description of a family and the chart it is sampled on."""

    name: str
    ranges: List[List[float]]
    points: List[int]
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.name not in FAMILIES:
            raise ValueError(f"unknown family {self.name!r}; expected one of {FAMILIES}")

    def chart(self, level: int = 0) -> Chart:
        lo = tuple(float(r[0]) for r in self.ranges)
        hi = tuple(float(r[1]) for r in self.ranges)
        return Chart(lo, hi, tuple(int(p) for p in self.points)).refine(level)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "chart": {"ranges": [list(r) for r in self.ranges], "points": list(self.points)},
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FamilySpec":
        chart = data["chart"]
        return cls(data["name"], [list(r) for r in chart["ranges"]], list(chart["points"]), dict(data.get("params", {})))


@dataclass(frozen=True)
class HolomorphicSpec:
    """``τ(z)`` from a closed catalog.

    ``constant``: ``value``; ``z``: the identity; ``exp``: ``exp(z)``;
    ``polynomial``: ``Σ coefficients[k] z^k``; ``tabulated``: sampled
    ``re``/``im`` arrays on the chart (no analytic derivative).
    """

    kind: str
    value: complex = 1j
    coefficients: tuple = ()
    re: Optional[np.ndarray] = None
    im: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.kind not in HOLOMORPHIC_KINDS:
            raise ValueError(f"unknown tau kind {self.kind!r}; expected one of {HOLOMORPHIC_KINDS}")
        if self.kind == "polynomial" and not self.coefficients:
            raise ValueError("polynomial tau needs coefficients")
        if self.kind == "tabulated" and (self.re is None or self.im is None):
            raise ValueError("tabulated tau needs re and im arrays")

    def __call__(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.kind == "constant":
            return np.full(z.shape, complex(self.value))
        if self.kind == "z":
            return z.copy()
        if self.kind == "exp":
            return np.exp(z)
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(z, np.asarray(self.coefficients, dtype=complex))
        raise ValueError("tabulated tau can only be sampled on its own chart")

    def derivative(self, z: np.ndarray) -> Optional[np.ndarray]:
        z = np.asarray(z, dtype=complex)
        if self.kind == "constant":
            return np.zeros(z.shape, dtype=complex)
        if self.kind == "z":
            return np.ones(z.shape, dtype=complex)
        if self.kind == "exp":
            return np.exp(z)
        if self.kind == "polynomial":
            coeffs = np.polynomial.polynomial.polyder(np.asarray(self.coefficients, dtype=complex))
            return np.polynomial.polynomial.polyval(z, coeffs) * np.ones(z.shape)
        return None

    def on_chart(self, chart: Chart) -> ComplexChartData:
        if self.kind == "tabulated":
            return ComplexChartData(chart, np.asarray(self.re), np.asarray(self.im))
        return ComplexChartData.from_function(chart, self, self.derivative)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind}
        if self.kind == "constant":
            out["value"] = [complex(self.value).real, complex(self.value).imag]
        if self.kind == "polynomial":
            out["coefficients"] = [[complex(c).real, complex(c).imag] for c in self.coefficients]
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, Any], chart: Optional[Chart] = None) -> "HolomorphicSpec":
        kind = data["kind"]
        if kind == "constant":
            re, im = data.get("value", [0.0, 1.0])
            return cls(kind, value=complex(re, im))
        if kind == "polynomial":
            return cls(kind, coefficients=tuple(complex(re, im) for re, im in data["coefficients"]))
        if kind == "tabulated":
            return cls(kind, re=np.asarray(data["re"], dtype=float), im=np.asarray(data["im"], dtype=float))
        return cls(kind)


# Helpers ----------------------------------------------------------------------

def rotation_matrix(angles: Sequence[float], size: int) -> np.ndarray:
    """Orthogonal matrix ``exp(Ω)`` with ``Ω`` skew, upper entries from ``angles``."""
    rows, cols = np.triu_indices(size, k=1)
    if len(angles) != len(rows):
        raise ValueError(f"a {size}x{size} rotation needs {len(rows)} angles")
    skew = np.zeros((size, size))
    skew[rows, cols] = angles
    skew[cols, rows] = -np.asarray(angles, dtype=float)
    return expm(skew)


def semiflat_fiber_metric(tau: np.ndarray) -> np.ndarray:
    """``(1/Im τ) [[1, Re τ], [Re τ, |τ|²]]``; determinant one."""
    tau = np.asarray(tau, dtype=complex)
    if np.any(tau.imag <= 0.0):
        raise ValueError("Im tau must be positive")
    inv_im = 1.0 / tau.imag
    G = np.empty(tau.shape + (2, 2))
    G[..., 0, 0] = inv_im
    G[..., 0, 1] = G[..., 1, 0] = tau.real * inv_im
    G[..., 1, 1] = np.abs(tau) ** 2 * inv_im
    return G


def half_log_im_tau(tau: np.ndarray) -> np.ndarray:
    """Conformal exponent ``½ log Im τ``; solves the Ricci-form equation exactly."""
    return 0.5 * np.log(np.asarray(tau, dtype=complex).imag)


def _zero_connection(chart: Chart, N: int) -> np.ndarray:
    return np.zeros(chart.shape + (N, chart.dim))


# Constructors -------------------------------------------------------------------

def flat_product(n: int, N: int, chart: Chart) -> BundleMetric:
    if chart.dim != n:
        raise ValueError(f"chart dimension {chart.dim} does not match n={n}")
    G = np.zeros(chart.shape + (1, 1)) + np.eye(N)
    return BundleMetric.from_arrays(chart, G)


def _validate_kasner_matrix(A: np.ndarray) -> None:
    if not np.array_equal(A, A.T):
        raise ValueError("Kasner matrix must be symmetric")
    trace, trace_sq = float(np.trace(A)), float(np.trace(A @ A))
    if abs(trace - 2.0) > KASNER_TRACE_TOL or abs(trace_sq - 4.0) > KASNER_TRACE_TOL:
        raise ValueError(f"Kasner matrix needs Tr A = 2 and Tr A^2 = 4, got {trace:.15g} and {trace_sq:.15g}")


def kasner(A_matrix: np.ndarray, chart: Chart, *, validate: bool = True) -> BundleMetric:
    """``G(s) = s^A``, ``A = 0``, ``g = ds²`` on an interval of ``(0, ∞)``.

    ``validate=False`` skips the trace conditions so non-Einstein controls
    can be built.
    """
    A_matrix = np.asarray(A_matrix, dtype=float)
    if chart.dim != 1:
        raise ValueError("Kasner metrics live over a 1-d base")
    if chart.lo[0] <= 0.0:
        raise ValueError("s range must be bounded away from 0")
    if validate:
        _validate_kasner_matrix(A_matrix)
    (s,) = chart.mesh()
    return BundleMetric.from_arrays(chart, power_sym(s, A_matrix))


def kasner_from_exponents(p: Sequence[float], chart: Chart, *, validate: bool = True) -> BundleMetric:
    """``ds² + Σ s^{2p_i} (dx^i)²`` via ``A = 2·diag(p)``."""
    return kasner(2.0 * np.diag(np.asarray(p, dtype=float)), chart, validate=validate)


def rotated_kasner_matrix(p: Sequence[float], angles: Sequence[float]) -> np.ndarray:
    R = rotation_matrix(angles, len(p))
    return symmetrize(R @ (2.0 * np.diag(np.asarray(p, dtype=float))) @ R.T)


def semiflat(
    tau: HolomorphicSpec | ComplexChartData,
    phi: np.ndarray,
    chart: Chart,
    *,
    check_holomorphy: bool = True,
    tol: float = HOLOMORPHY_TOL,
    cfg: FDConfig = FDConfig(),
) -> BundleMetric:
    """Semiflat metric: ``G(τ)``, ``A = 0``, ``g = e^{2φ} |dz|²``."""
    if chart.dim != 2:
        raise ValueError("semiflat metrics live over a 2-d base")
    data = tau.on_chart(chart) if isinstance(tau, HolomorphicSpec) else tau
    if check_holomorphy:
        defect = field_norms(holomorphy_residual(data, cfg))[0]
        scale = float(np.max(np.abs(data.values)))
        if defect > tol * (1.0 + scale):
            raise ValueError(f"tau is not holomorphic on the chart (Cauchy-Riemann defect {defect:.3e})")
    G = semiflat_fiber_metric(data.values)
    return BundleMetric.from_arrays(chart, G, _zero_connection(chart, 2), BaseMetric.conformal(chart, phi))


def boundary_model(chart: Chart) -> BundleMetric:
    """Flat ``ℝ⁴`` near the fixed circle: ``G = diag(1, (b²)²)``."""
    if chart.dim != 2:
        raise ValueError("boundary model lives over a 2-d base")
    if chart.lo[1] <= 0.0:
        raise ValueError("b2 range must stay in (0, 1]")
    _, b2 = chart.mesh()
    G = np.zeros(chart.shape + (2, 2))
    G[..., 0, 0] = 1.0
    G[..., 1, 1] = b2**2
    return BundleMetric.from_arrays(chart, G)


def random_bundle(
    seed: int,
    n: int,
    N: int,
    chart: Chart,
    *,
    amplitude: float = 0.3,
    connection_amplitude: Optional[float] = None,
    base_amplitude: Optional[float] = None,
    kmax: int = 2,
) -> BundleMetric:
    """Seeded smooth ``(G, A, g)``; ``G = exp(S)`` and ``g = δ + small``.

    The fields are cosine series on the chart box, so refining the chart
    samples the same metric.  A non positive-definite base perturbation is an
    error, never silently rescaled.
    """
    if chart.dim != n:
        raise ValueError(f"chart dimension {chart.dim} does not match n={n}")
    rng = np.random.default_rng(seed)
    conn_amp = amplitude if connection_amplitude is None else connection_amplitude
    base_amp = 0.5 * amplitude if base_amplitude is None else base_amplitude
    mesh = chart.mesh()

    def series(amp: float) -> np.ndarray:
        return FourierSeries.random(rng, chart.lo, chart.hi, kmax=kmax, amplitude=amp)(*mesh)

    S = sym_from_components([series(amplitude) for _ in range(N * (N + 1) // 2)], N)
    A = np.stack([np.stack([series(conn_amp) for _ in range(n)], axis=-1) for _ in range(N)], axis=-2)
    g = np.eye(n) + sym_from_components([series(base_amp) for _ in range(n * (n + 1) // 2)], n)
    logger.debug("random bundle seed=%d n=%d N=%d on %s", seed, n, N, chart.shape)
    return BundleMetric.from_arrays(chart, expm_sym(S), A, g)
