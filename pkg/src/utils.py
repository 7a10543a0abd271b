"""Shared constants and matrix-field helpers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

DEFAULT_FD_ORDER = 4
DEFAULT_LAMBDA = 0.0
DEFAULT_RESIDUAL_TOL = 1e-6
DEFAULT_IDENTITY_TOL = 1e-6
TOLERANCE_FLOOR = 1e-9
ROUNDING_FLOOR = 1e-10
PD_EIGEN_FLOOR = 1e-10
MAX_TOTAL_DIM = 6
MIN_POINTS = 5


# Matrix fields --------------------------------------------------------------

def symmetrize(values: np.ndarray, axes: Tuple[int, int] = (-2, -1)) -> np.ndarray:
    """Return ``(X + X^T) / 2`` over the two given axes."""
    return 0.5 * (values + np.swapaxes(values, *axes))


def check_positive_definite(values: np.ndarray, *, what: str = "matrix field") -> np.ndarray:
    """Raise :class:`ValueError` unless every stacked matrix is SPD.

    Returns the smallest eigenvalue per node.
    """
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite entries")
    if not np.array_equal(values, np.swapaxes(values, -1, -2)):
        raise ValueError(f"{what} is not symmetric")
    smallest = np.linalg.eigvalsh(values)[..., 0]
    if np.any(smallest <= PD_EIGEN_FLOOR):
        raise ValueError(
            f"{what} is not positive definite "
            f"(smallest eigenvalue {float(smallest.min()):.3e})"
        )
    return smallest


def invert(values: np.ndarray, *, what: str = "matrix field") -> np.ndarray:
    """Invert stacked matrices by LU with partial pivoting."""
    try:
        inverse = np.linalg.inv(values)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{what} is not invertible") from exc
    if not np.all(np.isfinite(inverse)):
        raise ValueError(f"{what} is not invertible")
    return inverse


def _spectral_function(values: np.ndarray, func) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eigh(values)
    mapped = eigvecs @ (func(eigvals)[..., :, None] * np.swapaxes(eigvecs, -1, -2))
    return symmetrize(mapped)


def expm_sym(values: np.ndarray) -> np.ndarray:
    """Exponential of stacked symmetric matrices via ``eigh``."""
    return _spectral_function(values, np.exp)


def power_sym(base: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Return ``s^A = exp(log(s) A)`` for positive scalars ``s``.

    ``base`` has shape ``(...)`` and ``matrix`` is one symmetric ``N x N``
    matrix shared by every node.
    """
    eigvals, eigvecs = np.linalg.eigh(np.asarray(matrix, dtype=float))
    powers = np.power(np.asarray(base, dtype=float)[..., None], eigvals)
    mapped = np.einsum("ik,...k,jk->...ij", eigvecs, powers, eigvecs)
    return symmetrize(mapped)


def sym_from_components(components: Sequence[np.ndarray], size: int) -> np.ndarray:
    """Assemble symmetric matrices from upper-triangular components."""
    rows, cols = np.triu_indices(size)
    shape = np.shape(components[0])
    out = np.zeros(shape + (size, size))
    for comp, i, j in zip(components, rows, cols):
        out[..., i, j] = comp
        out[..., j, i] = comp
    return out


# Seeded smooth fields ---------------------------------------------------------

@dataclass(frozen=True)
class FourierSeries:
    """Truncated cosine series on a fixed box.

    Coefficients decay like ``1/(1+|k|)^4``; the series only depends on the
    seed and the box, so refining a chart samples the same function.
    """

    lo: Tuple[float, ...]
    hi: Tuple[float, ...]
    wavenumbers: np.ndarray
    coefficients: np.ndarray
    phases: np.ndarray
    amplitude: float = 1.0

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        lo: Sequence[float],
        hi: Sequence[float],
        *,
        kmax: int = 2,
        amplitude: float = 1.0,
    ) -> "FourierSeries":
        dim = len(lo)
        grids = np.meshgrid(*[np.arange(kmax + 1)] * dim, indexing="ij")
        wavenumbers = np.stack([g.ravel() for g in grids], axis=-1)
        decay = 1.0 / (1.0 + np.linalg.norm(wavenumbers, axis=-1)) ** 4
        coefficients = rng.standard_normal(len(wavenumbers)) * decay
        coefficients /= np.sum(np.abs(coefficients))
        phases = rng.uniform(0.0, 2.0 * np.pi, len(wavenumbers))
        return cls(
            tuple(float(v) for v in lo),
            tuple(float(v) for v in hi),
            wavenumbers,
            coefficients,
            phases,
            float(amplitude),
        )

    def __call__(self, *coords: np.ndarray) -> np.ndarray:
        scaled = [
            (np.asarray(c, dtype=float) - lo) / (hi - lo)
            for c, lo, hi in zip(coords, self.lo, self.hi)
        ]
        total = np.zeros(np.broadcast(*scaled).shape)
        for k, c, p in zip(self.wavenumbers, self.coefficients, self.phases):
            arg = sum(np.pi * kk * u for kk, u in zip(k, scaled))
            total = total + c * np.cos(arg + p)
        return self.amplitude * total
