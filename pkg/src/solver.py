"""
Solvers for the equations left implicit by the curvature formulas.

* the conformal factor of a semiflat base, ``−Δ₀φ = |τ'|² / (2 Im²τ)``,
  which makes the Ricci form of ``e^{2φ}|dz|²`` equal to
  ``i|τ'|²/(4 Im²τ) dz∧dz̄``;
* the matrix ODE for the fiber metric over a 1-d base, in its Kasner form
  ``G_ss + G_s/s − G_s G⁻¹ G_s = 0`` and its constant-determinant form
  ``G_ss − G_s G⁻¹ G_s = 0``.
"""

from __future__ import annotations

import inspect
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .families import HOLOMORPHY_TOL, HolomorphicSpec, half_log_im_tau
from .grid import Chart, FDConfig, TensorField, FIBER, field_norms, gradient
from .identities import ComplexChartData, holomorphy_residual
from .utils import PD_EIGEN_FLOOR, invert, symmetrize

logger = logging.getLogger(__name__)

DEFAULT_SOLVER_TOL = 1e-10
DEFAULT_MAX_ITER = 60
INNER_RTOL = 1e-13
KASNER = "kasner"
CONSTANT_DET = "constant_det"
BRANCHES = (KASNER, CONSTANT_DET)
BOUNDARY_MODES = ("zero", "half_log_im_tau")
# zero data is incompatible with the source at the corners
DEFAULT_BOUNDARY = "half_log_im_tau"

# scipy renamed ``tol`` to ``rtol``
_CG_RTOL = "rtol" if "rtol" in inspect.signature(cg).parameters else "tol"


class ConvergenceError(RuntimeError):
    """The iterative solve did not reach the requested residual."""


class DegenerateMetricError(RuntimeError):
    """A trajectory lost positive definiteness or the step underflowed."""


# Elliptic problem -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EllipticProblem:
    """``−Δ₀u = source`` on a 2-d chart with Dirichlet data ``boundary``."""

    chart: Chart
    source: np.ndarray
    boundary: Optional[np.ndarray] = None
    tol: float = DEFAULT_SOLVER_TOL
    max_iter: int = DEFAULT_MAX_ITER
    fd_order: int = 4

    def __post_init__(self) -> None:
        if self.chart.dim != 2:
            raise ValueError("elliptic problems are posed on 2-d charts")
        source = np.asarray(self.source, dtype=float)
        if source.shape != self.chart.shape or not np.all(np.isfinite(source)):
            raise ValueError("source must be finite on every node")
        object.__setattr__(self, "source", source)
        boundary = np.zeros(self.chart.shape) if self.boundary is None else np.asarray(self.boundary, dtype=float)
        if boundary.shape != self.chart.shape or not np.all(np.isfinite(boundary)):
            raise ValueError("boundary data must be finite on every node")
        object.__setattr__(self, "boundary", boundary)
        if not self.tol > 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        FDConfig(self.fd_order)


def _second_difference_1d(size: int, h: float) -> sp.csr_matrix:
    return sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(size, size), format="csr") / h**2


def _dirichlet_operator(chart: Chart) -> sp.csr_matrix:
    """SPD 5-point matrix of ``−Δ`` on the interior nodes."""
    (nx, ny), (hx, hy) = chart.shape, chart.spacing
    Dx = _second_difference_1d(nx - 2, hx)
    Dy = _second_difference_1d(ny - 2, hy)
    return (-(sp.kron(Dx, sp.eye(ny - 2)) + sp.kron(sp.eye(nx - 2), Dy))).tocsr()


def _minus_second_derivative(u: np.ndarray, axis: int, h: float, fd_order: int) -> np.ndarray:
    """``−∂²u`` along ``axis`` on interior nodes (boundary rows dropped)."""
    u = np.moveaxis(u, axis, 0)
    n = u.shape[0]
    out = -(u[:-2] - 2.0 * u[1:-1] + u[2:]) / h**2
    if fd_order == 4 and n >= 6:
        out[1:-1] = -(-u[:-4] + 16.0 * u[1:-3] - 30.0 * u[2:-2] + 16.0 * u[3:-1] - u[4:]) / (12.0 * h**2)
        # boundary-adjacent nodes: one-sided six-point stencil, exact through degree 5
        w = np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0]) / (12.0 * h**2)
        out[0] = -np.tensordot(w, u[:6], axes=1)
        out[-1] = -np.tensordot(w, u[::-1][:6], axes=1)
    return np.moveaxis(out, 0, axis)


def apply_operator(u: np.ndarray, chart: Chart, fd_order: int) -> np.ndarray:
    """Discrete ``−Δ₀u`` at the interior nodes."""
    hx, hy = chart.spacing
    return (
        _minus_second_derivative(u, 0, hx, fd_order)[:, 1:-1]
        + _minus_second_derivative(u, 1, hy, fd_order)[1:-1, :]
    )


def solve_poisson(problem: EllipticProblem) -> Tuple[np.ndarray, Dict[str, Any]]:
    """Defect correction around a conjugate-gradient 5-point solve.

    Each pass computes the residual of the target stencil and corrects with
    the second-order Dirichlet operator.  Raises :class:`ConvergenceError`
    when ``max |residual| > tol`` after ``max_iter`` passes.
    """
    chart = problem.chart
    matrix = _dirichlet_operator(chart)
    u = problem.boundary.copy()
    u[1:-1, 1:-1] = 0.0
    f = problem.source[1:-1, 1:-1]
    residual = np.inf
    for iteration in range(1, problem.max_iter + 1):
        defect = f - apply_operator(u, chart, problem.fd_order)
        residual = float(np.max(np.abs(defect)))
        logger.debug("defect correction pass %d: residual %.3e", iteration, residual)
        if residual <= problem.tol:
            logger.info("elliptic solve converged in %d passes (residual %.3e)", iteration - 1, residual)
            return u, {"iterations": iteration - 1, "residual": residual}
        rhs = defect.ravel()
        correction, info = cg(matrix, rhs, atol=0.0, maxiter=10 * rhs.size, **{_CG_RTOL: INNER_RTOL})
        if info < 0:
            raise ConvergenceError(f"conjugate gradient breakdown (info={info})")
        u[1:-1, 1:-1] += correction.reshape(f.shape)
    raise ConvergenceError(
        f"elliptic solve did not reach tol={problem.tol:.1e} in {problem.max_iter} passes "
        f"(residual {residual:.3e})"
    )


def semiflat_source(tau: ComplexChartData) -> np.ndarray:
    """``|τ'|² / (2 Im²τ)`` on every node."""
    if tau.derivative is not None:
        tau_prime = tau.derivative
    else:
        # tabulated data: second-order differences reach the boundary nodes
        h = tau.chart.spacing[0]
        tau_prime = np.gradient(tau.re, h, axis=0, edge_order=2) + 1j * np.gradient(tau.im, h, axis=0, edge_order=2)
    return np.abs(tau_prime) ** 2 / (2.0 * tau.im**2)


def solve_semiflat_conformal(
    tau: HolomorphicSpec | ComplexChartData,
    chart: Chart,
    bc: str | np.ndarray = DEFAULT_BOUNDARY,
    tol: float = DEFAULT_SOLVER_TOL,
    *,
    fd_order: int = 4,
    max_iter: int = DEFAULT_MAX_ITER,
) -> np.ndarray:
    """Conformal exponent ``φ`` with Ricci form ``i|τ'|²/(4 Im²τ) dz∧dz̄``.

    ``bc`` is ``"half_log_im_tau"`` (the exact smooth solution used as
    Dirichlet data), ``"zero"`` or an array of boundary values.  Zero data
    leaves a corner singularity: the residual only converges away from
    the corners.
    """
    data = tau.on_chart(chart) if isinstance(tau, HolomorphicSpec) else tau
    if data.chart != chart:
        raise ValueError("tau is sampled on a different chart")
    defect = field_norms(holomorphy_residual(data, FDConfig(fd_order)))[0]
    if defect > HOLOMORPHY_TOL * (1.0 + float(np.max(np.abs(data.values)))):
        raise ValueError(f"tau is not holomorphic on the chart (Cauchy-Riemann defect {defect:.3e})")
    if isinstance(bc, str):
        if bc not in BOUNDARY_MODES:
            raise ValueError(f"unknown boundary mode {bc!r}; expected one of {BOUNDARY_MODES}")
        boundary = np.zeros(chart.shape) if bc == "zero" else half_log_im_tau(data.values)
    else:
        boundary = np.asarray(bc, dtype=float)
    problem = EllipticProblem(chart, semiflat_source(data), boundary, tol, max_iter, fd_order)
    phi, _ = solve_poisson(problem)
    return phi


# Base ODE ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ODEProblem:
    """Initial value problem for ``(G, G_s)`` on ``[s0, s1] ⊂ (0, ∞)``."""

    s0: float
    s1: float
    G0: np.ndarray
    Gs0: np.ndarray
    step: float = 1e-3
    branch: str = KASNER

    def __post_init__(self) -> None:
        if not 0.0 < self.s0 < self.s1:
            raise ValueError("interval must satisfy 0 < s0 < s1")
        if self.branch not in BRANCHES:
            raise ValueError(f"unknown branch {self.branch!r}; expected one of {BRANCHES}")
        if not self.step > 0.0:
            raise ValueError("step must be positive")
        G0 = np.asarray(self.G0, dtype=float)
        Gs0 = np.asarray(self.Gs0, dtype=float)
        if G0.ndim != 2 or G0.shape != Gs0.shape or G0.shape[0] != G0.shape[1]:
            raise ValueError("G0 and Gs0 must be square matrices of the same size")
        if not np.array_equal(G0, G0.T) or not np.array_equal(Gs0, Gs0.T):
            raise ValueError("G0 and Gs0 must be symmetric")
        if np.linalg.eigvalsh(G0)[0] <= PD_EIGEN_FLOOR:
            raise ValueError("G0 must be positive definite")
        object.__setattr__(self, "G0", G0)
        object.__setattr__(self, "Gs0", Gs0)


@dataclass(frozen=True, eq=False)
class ODESolution:
    s: np.ndarray
    G: np.ndarray
    Gs: np.ndarray
    conserved: np.ndarray  # s G⁻¹G_s (Kasner) or G⁻¹G_s (constant det)
    branch: str

    @property
    def drift(self) -> float:
        return float(np.max(np.abs(self.conserved - self.conserved[0])))

    @property
    def recovered_matrix(self) -> np.ndarray:
        return symmetrize(self.conserved[-1])

    def chart(self) -> Chart:
        return Chart((float(self.s[0]),), (float(self.s[-1]),), (len(self.s),))

    def to_field(self) -> TensorField:
        N = self.G.shape[-1]
        return TensorField(self.chart(), self.G, ((FIBER, N), (FIBER, N)), 0, ((0, 1),))


def _rhs(s: float, G: np.ndarray, Gs: np.ndarray, branch: str) -> Tuple[np.ndarray, np.ndarray]:
    quad = Gs @ invert(G, what="fiber metric") @ Gs
    if branch == KASNER:
        return Gs, quad - Gs / s
    return Gs, quad


def _conserved(s: float, G: np.ndarray, Gs: np.ndarray, branch: str) -> np.ndarray:
    ratio = np.linalg.solve(G, Gs)
    return s * ratio if branch == KASNER else ratio


def integrate_base_ode(prob: ODEProblem) -> ODESolution:
    """Classical fourth-order Runge–Kutta on ``(G, G_s)``.

    Positive definiteness is monitored after every step; losing it raises
    :class:`DegenerateMetricError`.
    """
    steps = max(1, int(np.ceil((prob.s1 - prob.s0) / prob.step - 1e-9)))
    h = (prob.s1 - prob.s0) / steps
    if h <= 1e-12 * prob.s1:
        raise DegenerateMetricError(f"step {h:.3e} underflows on [{prob.s0}, {prob.s1}]")
    s_nodes = prob.s0 + h * np.arange(steps + 1)
    s_nodes[-1] = prob.s1
    G, Gs = prob.G0.copy(), prob.Gs0.copy()
    Gs_path, G_path, conserved = [Gs], [G], [_conserved(prob.s0, G, Gs, prob.branch)]
    branch = prob.branch
    for i in range(steps):
        s = s_nodes[i]
        k1 = _rhs(s, G, Gs, branch)
        k2 = _rhs(s + 0.5 * h, G + 0.5 * h * k1[0], Gs + 0.5 * h * k1[1], branch)
        k3 = _rhs(s + 0.5 * h, G + 0.5 * h * k2[0], Gs + 0.5 * h * k2[1], branch)
        k4 = _rhs(s + h, G + h * k3[0], Gs + h * k3[1], branch)
        G = symmetrize(G + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]))
        Gs = symmetrize(Gs + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]))
        smallest = np.linalg.eigvalsh(G)[0]
        if not np.isfinite(smallest) or smallest <= PD_EIGEN_FLOOR:
            raise DegenerateMetricError(
                f"G lost positive definiteness at s={s_nodes[i + 1]:.6g} (smallest eigenvalue {smallest:.3e})"
            )
        G_path.append(G)
        Gs_path.append(Gs)
        conserved.append(_conserved(s_nodes[i + 1], G, Gs, branch))
    solution = ODESolution(s_nodes, np.array(G_path), np.array(Gs_path), np.array(conserved), branch)
    logger.info("integrated %s branch over %d steps, conserved drift %.3e", branch, steps, solution.drift)
    return solution


# One-dimensional base classification ------------------------------------------------

@dataclass(frozen=True)
class BranchReport:
    branch: str  # "constant", "kasner" or "inconclusive"
    passed: bool
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"branch": self.branch, "passed": self.passed, "details": dict(self.details)}


def classify_base_trajectory(
    trajectory: TensorField,
    cfg: FDConfig = FDConfig(),
    *,
    tol: float = 1e-8,
    det_rtol: float = 1e-8,
) -> BranchReport:
    """Classify a 1-d trajectory ``G(s)`` and check the trace identities.

    Constant ``det G``: ``Tr(G⁻¹G_ss) − Tr(G⁻¹G_sG⁻¹G_s)`` and
    ``Tr(G⁻¹G_ss) − ½Tr(G⁻¹G_sG⁻¹G_s)`` vanish and ``G_s = 0``.
    ``det G ∝ s²``: the second identity, the traced Kasner equation and the
    trace conditions on ``A = s G⁻¹ G_s``.  Anything else is inconclusive.
    """
    chart = trajectory.chart
    if chart.dim != 1:
        raise ValueError("trajectory must live on a 1-d chart")
    G = trajectory.values
    (s,) = chart.mesh()
    det = np.linalg.det(G)
    first = gradient(trajectory, cfg)
    Gs_field = first.with_values(first.values[..., 0], trajectory.index_spec)
    second = gradient(Gs_field, cfg)
    margin = second.margin
    inner = slice(margin, -margin)
    G_in, Gs, Gss, s_in = G[inner], first.values[inner, ..., 0], second.values[inner, ..., 0], s[inner]
    G_inv = invert(G_in, what="fiber metric")
    ratio = G_inv @ Gs
    tr_ss = np.einsum("...ii->...", G_inv @ Gss)
    tr_quad = np.einsum("...ij,...ji->...", ratio, ratio)
    trace_full = float(np.max(np.abs(tr_ss - tr_quad)))
    trace_half = float(np.max(np.abs(tr_ss - 0.5 * tr_quad)))

    def spread(values: np.ndarray) -> float:
        return float(np.ptp(values)) / max(1.0, float(np.max(np.abs(values))))

    if spread(det) <= det_rtol:
        Gs_sup = float(np.max(np.abs(Gs)))
        details = {"trace_difference": trace_full, "half_trace_difference": trace_half, "Gs_sup": Gs_sup}
        passed = max(trace_full, trace_half, Gs_sup) <= tol
        return BranchReport("constant", passed, details)
    if spread(det / s**2) <= det_rtol:
        traced = tr_ss + np.einsum("...ii->...", ratio) / s_in - tr_quad
        A = np.mean(s_in[:, None, None] * ratio, axis=0)
        trace_A = float(np.trace(A))
        trace_A2 = float(np.trace(A @ A))
        details = {
            "half_trace_difference": trace_half,
            "traced_kasner": float(np.max(np.abs(traced))),
            "A": A.tolist(),
            "trace_A": trace_A,
            "trace_A2": trace_A2,
            "det_scale": float(np.mean(det / s**2)),
        }
        passed = max(trace_half, details["traced_kasner"], abs(trace_A - 2.0), abs(trace_A2 - 4.0)) <= tol
        return BranchReport("kasner", passed, details)
    logger.info("det G is neither constant nor proportional to s^2")
    return BranchReport("inconclusive", False, {"det_min": float(det.min()), "det_max": float(det.max())})


verify_prop_2_19 = classify_base_trajectory
