"""Periodic grids, unitary DFT helpers, the random medium class and field I/O.

Fields are stored as arrays of shape ``(ny, nx)``; ``field[j, i]`` is the
value at ``(x1, x2) = (i h, j h)``.  In C order x is the fastest index, which
is also the on-disk order of the HFLD1 format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = "HFLD1"

# (amplitude, k1, k2) for the six trigonometric terms of the medium class
DEFAULT_TERMS: tuple[tuple[float, int, int], ...] = (
    (0.12, 1, 0),
    (0.12, 0, 1),
    (0.084, 1, 1),
    (0.084, 1, -1),
    (0.06, 2, 0),
    (0.06, 0, 2),
)

MIN_VELOCITY_GUARD = 0.5
MAX_RESAMPLE_ATTEMPTS = 100
_GUARD_SAMPLES = 256


class FieldFormatError(ValueError):
    """Raised when an HFLD1 file has a bad header or payload size."""


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    Lx: float
    Ly: float

    @property
    def h(self) -> float:
        return self.Lx / self.nx

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid ``(x1, x2)`` of shape ``(ny, nx)``."""
        x1 = np.arange(self.nx) * self.h
        x2 = np.arange(self.ny) * self.h
        return np.meshgrid(x1, x2, indexing="xy")

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Angular wavenumbers ``(xi1, xi2)`` matching :func:`dft2` output."""
        k1 = 2 * np.pi * np.fft.fftfreq(self.nx, d=self.h)
        k2 = 2 * np.pi * np.fft.fftfreq(self.ny, d=self.h)
        return np.meshgrid(k1, k2, indexing="xy")

    def mode_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer Fourier indices ``(m, n)``: ``xi = 2 pi (m / Lx, n / Ly)``."""
        m = np.rint(np.fft.fftfreq(self.nx) * self.nx).astype(int)
        n = np.rint(np.fft.fftfreq(self.ny) * self.ny).astype(int)
        return np.meshgrid(m, n, indexing="xy")


def make_grid(nx: int, ny: int, Lx: float = 1.0, Ly: float = 1.0) -> GridSpec:
    if nx <= 0 or ny <= 0:
        raise ValueError(f"grid sizes must be positive, got {nx}x{ny}")
    if nx % 2 or ny % 2:
        raise ValueError(f"grid sizes must be even, got {nx}x{ny}")
    if Lx <= 0 or Ly <= 0:
        raise ValueError("domain lengths must be positive")
    if not math.isclose(Lx / nx, Ly / ny, rel_tol=1e-12):
        raise ValueError(f"cells are not square: {Lx / nx} vs {Ly / ny}")
    return GridSpec(int(nx), int(ny), float(Lx), float(Ly))


def grid_for_ppw(omega: float, ppw: float, c_min: float, L: float = 1.0) -> GridSpec:
    """Square grid on ``[0, L]^2`` with about ``ppw`` points per minimum wavelength.

    The point count is rounded up to the next even integer, so the spacing
    is never coarser than ``2 pi c_min / (ppw omega)``.
    """
    n = math.ceil(L * ppw * omega / (2 * np.pi * c_min) - 1e-9)
    n += n % 2
    return make_grid(n, n, L, L)


@dataclass(frozen=True)
class MediumClassParams:
    """Random smooth media ``c = base + Re(sum_j amp_j (a_j + i b_j) e^{2 pi i k_j . x})``.

    ``a_j, b_j`` are drawn uniformly from ``[-1, 1]`` with ``numpy``'s PCG64
    generator seeded by ``seed``, in the order ``a_1, b_1, a_2, b_2, ...``.
    """

    base: float = 1.0
    terms: tuple[tuple[float, int, int], ...] = DEFAULT_TERMS
    seed: int = 0

    def max_deviation(self) -> float:
        return math.sqrt(2.0) * sum(abs(a) for a, _, _ in self.terms)


@dataclass(frozen=True)
class Medium:
    grid: GridSpec
    c: np.ndarray
    alpha: np.ndarray
    L: float = 1.0
    coefficients: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.c.shape != self.grid.shape or self.alpha.shape != self.grid.shape:
            raise ValueError("medium fields do not match the grid")
        if np.any(self.c <= 0):
            raise ValueError("velocity must be positive")
        if np.any(self.alpha <= 0):
            raise ValueError("damping must be positive")
        self.c.setflags(write=False)
        self.alpha.setflags(write=False)

    @property
    def c_min(self) -> float:
        return float(self.c.min())

    @property
    def c_max(self) -> float:
        return float(self.c.max())

    @property
    def c_mean(self) -> float:
        return float(self.c.mean())

    @property
    def alpha_min(self) -> float:
        return float(self.alpha.min())

    @property
    def alpha_max(self) -> float:
        return float(self.alpha.max())

    def with_grid(self, grid: GridSpec) -> "Medium":
        """Re-evaluate an analytic medium on another grid."""
        if self.coefficients is None:
            raise ValueError("medium has no analytic representation")
        alpha = float(self.alpha.flat[0])
        return _evaluate(self.coefficients, grid, alpha, self.L)


def constant_medium(grid: GridSpec, c: float = 1.0, alpha: float = 2 * np.pi,
                    L: float = 1.0) -> Medium:
    coeffs = np.array([[c, 0.0, 0.0, 0.0]])
    return _evaluate(coeffs, grid, alpha, L)


def _draw(params: MediumClassParams, rng: np.random.Generator) -> np.ndarray:
    """Coefficient table with rows ``(offset_or_amp_re, amp_im, k1, k2)``."""
    ab = rng.uniform(-1.0, 1.0, size=2 * len(params.terms)).reshape(-1, 2)
    rows = [[params.base, 0.0, 0.0, 0.0]]
    for (amp, k1, k2), (a, b) in zip(params.terms, ab):
        rows.append([amp * a, amp * b, k1, k2])
    return np.array(rows, dtype=float)


def _eval_coeffs(coeffs: np.ndarray, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    base = coeffs[0, 0]
    c = np.full(np.broadcast(x1, x2).shape, base, dtype=float)
    for re, im, k1, k2 in coeffs[1:]:
        phase = 2 * np.pi * (k1 * x1 + k2 * x2)
        # Re((re + i im) e^{i phase})
        c += re * np.cos(phase) - im * np.sin(phase)
    return c


def _evaluate(coeffs: np.ndarray, grid: GridSpec, alpha: float, L: float) -> Medium:
    x1, x2 = grid.coords()
    c = _eval_coeffs(coeffs, x1 / grid.Lx, x2 / grid.Ly)
    return Medium(grid, c, np.full(grid.shape, float(alpha)), float(L), coeffs)


def draw_coefficients(params: MediumClassParams) -> np.ndarray:
    """Draw medium coefficients, redrawing while ``min c < 0.5``.

    The guard is evaluated on a fixed 256^2 sampling so the accept/reject
    decision does not depend on the grid the medium is later evaluated on.
    """
    rng = np.random.default_rng(params.seed)
    x = np.arange(_GUARD_SAMPLES) / _GUARD_SAMPLES
    x1, x2 = np.meshgrid(x, x, indexing="xy")
    for _ in range(MAX_RESAMPLE_ATTEMPTS):
        coeffs = _draw(params, rng)
        if _eval_coeffs(coeffs, x1, x2).min() >= MIN_VELOCITY_GUARD:
            return coeffs
    raise RuntimeError(
        f"no medium with min c >= {MIN_VELOCITY_GUARD} after "
        f"{MAX_RESAMPLE_ATTEMPTS} draws (seed {params.seed})"
    )


def sample_medium(params: MediumClassParams, grid: GridSpec,
                  alpha: float = 2 * np.pi, L: float = 1.0) -> Medium:
    return _evaluate(draw_coefficients(params), grid, alpha, L)


def medium_extremes(params: MediumClassParams, samples: int = 512) -> tuple[float, float]:
    """``(c_min, c_max)`` of a class medium on a dense reference sampling."""
    coeffs = draw_coefficients(params)
    x = np.arange(samples) / samples
    x1, x2 = np.meshgrid(x, x, indexing="xy")
    c = _eval_coeffs(coeffs, x1, x2)
    return float(c.min()), float(c.max())


def _check_shape(field: np.ndarray, grid: GridSpec | None) -> None:
    if field.ndim != 2:
        raise ValueError(f"expected a 2-D field, got shape {field.shape}")
    if grid is not None and field.shape != grid.shape:
        raise ValueError(f"field shape {field.shape} does not match grid {grid.shape}")


def dft2(field: np.ndarray, grid: GridSpec | None = None) -> np.ndarray:
    """Unitary 2-D DFT."""
    _check_shape(field, grid)
    return np.fft.fft2(field, norm="ortho")


def idft2(spectrum: np.ndarray, grid: GridSpec | None = None) -> np.ndarray:
    _check_shape(spectrum, grid)
    return np.fft.ifft2(spectrum, norm="ortho")


def write_field(path: str | Path, field: np.ndarray, grid: GridSpec) -> None:
    """Write a real field in HFLD1 format."""
    field = np.asarray(field)
    _check_shape(field, grid)
    if np.iscomplexobj(field):
        raise ValueError("HFLD1 stores real fields only")
    header = f"{MAGIC} {grid.nx} {grid.ny} {grid.Lx!r} {grid.Ly!r}\n".encode("ascii")
    payload = np.ascontiguousarray(field, dtype="<f8").tobytes()
    Path(path).write_bytes(header + payload)


def read_field(path: str | Path) -> tuple[np.ndarray, GridSpec]:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise FieldFormatError(f"{path}: missing header line")
    parts = data[:nl].decode("ascii", errors="replace").split()
    if len(parts) != 5 or parts[0] != MAGIC:
        raise FieldFormatError(f"{path}: bad magic or header")
    try:
        nx, ny = int(parts[1]), int(parts[2])
        Lx, Ly = float(parts[3]), float(parts[4])
    except ValueError as exc:
        raise FieldFormatError(f"{path}: unparsable header") from exc
    payload = data[nl + 1:]
    if len(payload) != 8 * nx * ny:
        raise FieldFormatError(
            f"{path}: payload has {len(payload)} bytes, header implies {8 * nx * ny}"
        )
    field = np.frombuffer(payload, dtype="<f8").reshape(ny, nx).astype(float)
    return field, GridSpec(nx, ny, Lx, Ly)


def write_csv(path: str | Path, field: np.ndarray, grid: GridSpec) -> None:
    x1, x2 = grid.coords()
    table = np.column_stack([x1.ravel(), x2.ravel(), np.asarray(field).ravel()])
    np.savetxt(path, table, delimiter=",", header="x,y,value", comments="")


def medium_from_field(c: np.ndarray, grid: GridSpec, alpha: float = 2 * np.pi,
                      L: float = 1.0) -> Medium:
    return Medium(grid, np.array(c, dtype=float), np.full(grid.shape, float(alpha)), L)


def resample_periodic(field: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Trigonometric interpolation of a real periodic field onto another grid."""
    ny, nx = field.shape
    my, mx = shape
    spectrum = np.fft.fftshift(np.fft.fft2(field))
    out = np.zeros((my, mx), dtype=complex)
    cy, cx = ny // 2, nx // 2
    oy, ox = my // 2, mx // 2
    hy, hx = min(ny, my) // 2, min(nx, mx) // 2
    out[oy - hy:oy + hy, ox - hx:ox + hx] = spectrum[cy - hy:cy + hy, cx - hx:cx + hx]
    return np.real(np.fft.ifft2(np.fft.ifftshift(out))) * (my * mx) / (ny * nx)
