"""Matrix-free five-point Helmholtz operator on a periodic grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Medium

DENSE_LIMIT = 4096


@dataclass(frozen=True)
class HelmholtzParams:
    omega: float
    medium: Medium
    ppw: float = 16.0

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if not 10 <= self.ppw <= 40:
            raise ValueError(f"points per wavelength {self.ppw} outside [10, 40]")

    @property
    def grid(self):
        return self.medium.grid

    def zeroth_order(self) -> np.ndarray:
        """Diagonal term ``-omega^2/c^2 + i alpha omega / (L c)``."""
        m = self.medium
        w = self.omega
        return -(w ** 2) / m.c ** 2 + 1j * m.alpha * w / (m.L * m.c)

    def realized_ppw(self) -> float:
        return 2 * np.pi * self.medium.c_min / (self.omega * self.grid.h)


@dataclass(frozen=True)
class OperatorBounds:
    lower: float
    upper: float
    cond_bound: float


def _laplacian(u: np.ndarray, h: float) -> np.ndarray:
    return (4 * u - np.roll(u, 1, 0) - np.roll(u, -1, 0)
            - np.roll(u, 1, 1) - np.roll(u, -1, 1)) / h ** 2


def _check(params: HelmholtzParams, u: np.ndarray) -> None:
    if u.shape != params.grid.shape:
        raise ValueError(f"field shape {u.shape} does not match grid {params.grid.shape}")


def apply_A(params: HelmholtzParams, u: np.ndarray) -> np.ndarray:
    _check(params, u)
    return _laplacian(u, params.grid.h) + params.zeroth_order() * u


def apply_A_adjoint(params: HelmholtzParams, u: np.ndarray) -> np.ndarray:
    _check(params, u)
    return _laplacian(u, params.grid.h) + np.conj(params.zeroth_order()) * u


def _interp_periodic(field: np.ndarray, h: float, x: tuple[float, float]) -> float:
    ny, nx = field.shape
    fx, fy = x[0] / h, x[1] / h
    i0, j0 = math.floor(fx), math.floor(fy)
    tx, ty = fx - i0, fy - j0
    i0, j0 = i0 % nx, j0 % ny
    i1, j1 = (i0 + 1) % nx, (j0 + 1) % ny
    return float((1 - tx) * (1 - ty) * field[j0, i0] + tx * (1 - ty) * field[j0, i1]
                 + (1 - tx) * ty * field[j1, i0] + tx * ty * field[j1, i1])


def symbol_H(params: HelmholtzParams, x, xi) -> complex:
    """Continuous symbol ``|xi|^2 - omega^2/c^2 + i alpha omega/(L c)`` at ``(x, xi)``.

    ``c`` and ``alpha`` are bilinearly interpolated between grid points.
    """
    m = params.medium
    h = m.grid.h
    c = _interp_periodic(m.c, h, x)
    a = _interp_periodic(m.alpha, h, x)
    w = params.omega
    return complex(xi[0] ** 2 + xi[1] ** 2 - w ** 2 / c ** 2, a * w / (m.L * c))


def assemble_dense(params: HelmholtzParams) -> np.ndarray:
    g = params.grid
    n = g.size
    if n > DENSE_LIMIT:
        raise ValueError(f"grid with {n} points too large for dense assembly")
    ny, nx = g.shape
    idx = np.arange(n).reshape(ny, nx)
    A = np.zeros((n, n), dtype=complex)
    inv_h2 = 1.0 / g.h ** 2
    diag = params.zeroth_order().ravel()
    rows = idx.ravel()
    A[rows, rows] += 4 * inv_h2 + diag
    for shift, axis in ((1, 0), (-1, 0), (1, 1), (-1, 1)):
        nb = np.roll(idx, -shift, axis=axis).ravel()
        np.add.at(A, (rows, nb), -inv_h2)
    return A


def bounds(params: HelmholtzParams) -> OperatorBounds:
    """Analytic singular value and condition number bounds for the discrete operator.

    ``cond_bound`` is expressed through the points-per-wavelength value
    ``params.ppw``; it assumes the grid was chosen by that rule.
    """
    m = params.medium
    w = params.omega
    h = m.grid.h
    lower = m.alpha_min * w / (m.L * m.c_max)
    upper = abs(complex(8 / h ** 2 - w ** 2 / m.c_max ** 2, w / (m.alpha_max * m.L * m.c_min)))
    cond = 2 * m.L * params.ppw ** 2 * w * m.c_max / (np.pi ** 2 * m.alpha_min * m.c_min ** 2)
    return OperatorBounds(lower, upper, cond)
