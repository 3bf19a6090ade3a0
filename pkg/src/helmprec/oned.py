"""One-dimensional modulated Fourier frame preconditioner.

The 1-D analogue of the 2-D construction, with no WKB error: the field is
split into three Fourier components with ``sum chi_j^2 = 1``.  The low/high
component ``u1`` is expanded in plain Fourier modes, and the components near
the positive and negative characteristic points are demodulated by
``e^{-+i omega T(x)}`` before a DFT, with ``T`` the travel time.  Every
stage is unitary or a squared partition of unity, so ``F* F = I`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .filters import NyquistError, smooth_step
from .grid import MediumClassParams, _eval_coeffs, draw_coefficients
from .solver import LinearMap, lsqr, preconditioned_map


@dataclass(frozen=True)
class OneDFrame:
    omega: float
    c: np.ndarray
    T: np.ndarray          # corrected travel time at the grid nodes
    cycles: int            # omega (T(1) - T(0)) / (2 pi)
    chi1: np.ndarray       # cutoffs in DFT order
    chi2: np.ndarray
    chi3: np.ndarray
    xi: np.ndarray         # 2 pi j in DFT order

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def c_mean(self) -> float:
        return float(self.c.mean())

    @property
    def size(self) -> int:
        return 3 * self.n


def oned_grid_size(omega: float, ppw: float, c_min: float) -> int:
    """Even number of points giving ``ppw`` points per smallest wavelength on ``[0, 1)``."""
    n = math.ceil(ppw * omega / (2 * np.pi * c_min))
    return n + (n % 2)


def oned_medium(params: MediumClassParams, n: int, y: float = 0.0) -> np.ndarray:
    """The 2-D medium class restricted to the periodic line at height ``y``."""
    coeffs = draw_coefficients(params)
    x = np.arange(n) / n
    return _eval_coeffs(coeffs, x, np.full(n, y))


def travel_time(c: np.ndarray, omega: float) -> tuple[np.ndarray, int]:
    """Trapezoid travel time plus the linear term making ``e^{i omega T}`` periodic."""
    c = np.asarray(c, dtype=float)
    n = c.size
    s = 1.0 / c
    h = 1.0 / n
    T = np.concatenate(([0.0], np.cumsum(0.5 * h * (s + np.roll(s, -1)))[:-1]))
    total = float(np.sum(s) * h)   # periodic trapezoid over one period
    cycles = max(1, round(omega * total / (2 * np.pi)))
    x = np.arange(n) * h
    return T + x * (2 * np.pi * cycles / omega - total), cycles


def oned_cutoffs(xi: np.ndarray, omega: float, c_min: float, c_max: float,
                 steepness: float = 1.0):
    """``(chi1, chi2, chi3)`` with ``chi1 = 0`` on ``[-1.5a, 1.5a]``,
    ``chi2 = 0`` outside ``[-0.4b, 2a]`` and ``chi3`` its mirror image,
    where ``a = omega / c_min`` and ``b = omega / c_max``."""
    a, b = omega / c_min, omega / c_max
    t_out = (np.abs(xi) - 1.5 * a) / (0.5 * a)
    chi1 = smooth_step(t_out, steepness)
    mid = smooth_step(1.0 - t_out, steepness)
    s = (xi + 0.4 * b) / (0.8 * b)
    return chi1, mid * smooth_step(s, steepness), mid * smooth_step(1.0 - s, steepness)


def oned_build(c, omega: float, steepness: float = 1.0) -> OneDFrame:
    c = np.asarray(c, dtype=float)
    if c.ndim != 1 or c.size % 2 or np.any(c <= 0):
        raise ValueError("c must be a positive 1-D array of even length")
    n = c.size
    xi = 2 * np.pi * np.fft.fftfreq(n, d=1.0 / n)
    a = omega / c.min()
    if 2 * a >= np.pi * n:
        raise NyquistError(f"2 omega / c_min = {2 * a:.4g} exceeds the Nyquist wavenumber {np.pi * n:.4g}")
    T, cycles = travel_time(c, omega)
    chi1, chi2, chi3 = oned_cutoffs(xi, omega, c.min(), c.max(), steepness)
    c.setflags(write=False)
    return OneDFrame(omega, c, T, cycles, chi1, chi2, chi3, xi)


def _dft(u):
    return np.fft.fft(u, norm="ortho")


def _idft(v):
    return np.fft.ifft(v, norm="ortho")


def oned_forward(frame: OneDFrame, u: np.ndarray) -> np.ndarray:
    """Coefficients ``[u1 hat, DFT(e^{-i omega T} u2), DFT(e^{+i omega T} u3)]``."""
    if u.shape != (frame.n,):
        raise ValueError(f"expected shape ({frame.n},), got {u.shape}")
    uh = _dft(u)
    phase = np.exp(1j * frame.omega * frame.T)
    c1 = frame.chi1 * uh
    c2 = _dft(phase.conj() * _idft(frame.chi2 * uh))
    c3 = _dft(phase * _idft(frame.chi3 * uh))
    return np.concatenate([c1, c2, c3])


def oned_adjoint(frame: OneDFrame, coeffs: np.ndarray) -> np.ndarray:
    n = frame.n
    if coeffs.shape != (3 * n,):
        raise ValueError(f"expected shape ({3 * n},), got {coeffs.shape}")
    c1, c2, c3 = coeffs[:n], coeffs[n:2 * n], coeffs[2 * n:]
    phase = np.exp(1j * frame.omega * frame.T)
    uh = (frame.chi1 * c1
          + frame.chi2 * _dft(phase * _idft(c2))
          + frame.chi3 * _dft(phase.conj() * _idft(c3)))
    return _idft(uh)


def oned_weights(frame: OneDFrame) -> np.ndarray:
    """Fourier weights for ``u1`` and ``((k)^2 + (2 k xi_j)^2)^{-1/2}``, ``k = omega / c_mean``,
    for both modulated branches."""
    k = frame.omega / frame.c_mean
    w1 = ((frame.xi ** 2 - k ** 2) ** 2 + k ** 2) ** -0.5
    w2 = (k ** 2 + (2 * k * frame.xi) ** 2) ** -0.5
    w = np.concatenate([w1, w2, w2])
    if not (np.all(w > 0) and np.all(np.isfinite(w))):
        raise ValueError("weights must be finite and strictly positive")
    return w


def oned_operator(c: np.ndarray, omega: float, alpha: float = 2 * np.pi, L: float = 1.0) -> LinearMap:
    """Three-point periodic Helmholtz operator on ``[0, L)``."""
    c = np.asarray(c, dtype=float)
    h = L / c.size
    diag = -(omega ** 2) / c ** 2 + 1j * alpha * omega / (L * c)

    def lap(u):
        return (2 * u - np.roll(u, 1) - np.roll(u, -1)) / h ** 2

    return LinearMap(lambda u: lap(u) + diag * u, lambda u: lap(u) + np.conj(diag) * u,
                     c.shape, c.shape)


class _OneDFrameMap:
    def __init__(self, frame: OneDFrame):
        self.frame = frame

    def forward(self, u):
        return oned_forward(self.frame, u)

    def adjoint(self, v):
        return oned_adjoint(self.frame, v)


def oned_solve(c, omega: float, alpha: float, rhs: np.ndarray, tol: float = 1e-5,
               max_iter: int = 500, precondition: bool = True):
    """Right-preconditioned LSQR for the 1-D problem; returns ``(u, SolveReport)``."""
    A = oned_operator(c, omega, alpha)
    if not precondition:
        u, report = lsqr(A, rhs, tol, max_iter)
    else:
        frame = oned_build(c, omega)
        fmap = _OneDFrameMap(frame)
        w = oned_weights(frame)
        y, report = lsqr(preconditioned_map(A, fmap, w), rhs, tol, max_iter)
        u = fmap.adjoint(w * fmap.forward(y))
    report.final_residual = float(np.linalg.norm(A.apply(u) - rhs) / np.linalg.norm(rhs))
    return u, report


def oned_tile_adaptation(frame: OneDFrame, alpha: float = 1.0, samples: int = 8,
                         seed: int = 0) -> float:
    """Worst ``max(r, 1/r)``, ``r = w_j |xi^2 - omega^2/c(x)^2 + i alpha omega / c(x)|``,
    over points of the modulated tiles ``xi in omega/c(x) + xi_j +- pi`` where ``chi2 > 0.5``.

    The default ``alpha = 1`` is the damping level built into the weight floor
    ``(omega / c)^2``; larger damping shifts the ratio by the constant factor ``alpha``.
    """
    rng = np.random.default_rng(seed)
    w2 = oned_weights(frame)[frame.n:2 * frame.n]
    om = frame.omega
    worst = 1.0
    for j in range(frame.n):
        i = rng.integers(frame.n, size=samples)
        cx = frame.c[i]
        xi = om / cx + frame.xi[j] + rng.uniform(-np.pi, np.pi, samples)
        _, chi2, _ = oned_cutoffs(xi, om, frame.c.min(), frame.c.max())
        keep = chi2 > 0.5
        if not np.any(keep):
            continue
        sym = np.abs(xi[keep] ** 2 - om ** 2 / cx[keep] ** 2 + 1j * alpha * om / cx[keep])
        r = w2[j] * sym
        worst = max(worst, float(r.max()), float((1 / r).max()))
    return worst
