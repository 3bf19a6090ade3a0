"""Lagrangian wave packet transform and its diagonal preconditioning weights.

The frame analysis operator ``F`` stacks three kinds of leaves:

* low and high wavenumbers: windowed Fourier coefficients ``chi_j(xi) u_hat(xi)``;
* mid wavenumbers, per direction and band: the FIO step
  ``F1 g(y, k) = sum_z conj(K[y, k, z]) g(y, z)`` with kernel
  ``K = sqrt(dz) A e^{i omega T}``, followed by a unitary DFT over ``y``.

``frame_adjoint`` is assembled stage by stage, so ``<F u, v> = <u, F* v>`` holds
to rounding error for every medium.  ``F* F = I`` is exact for constant media
and holds up to the WKB error otherwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .filters import FilterBank, Leaves, delocalize, localize
from .grid import Medium
from .rays import BandTable, RayTables, RotatedSampler, band_geometry, trace_bicharacteristics

logger = logging.getLogger(__name__)

LOW, MID, HIGH = "low", "mid", "high"


def fio_forward(table: BandTable, band: np.ndarray) -> np.ndarray:
    """``(n_y, n_z)`` band samples to ``(n_y, n_k)`` FIO values."""
    if band.shape != (table.kernel.shape[0], table.kernel.shape[2]):
        raise ValueError(f"band shape {band.shape} does not match table {table.kernel.shape}")
    return np.matmul(table.kernel.conj(), band[:, :, None])[:, :, 0]


def fio_adjoint(table: BandTable, values: np.ndarray) -> np.ndarray:
    return np.matmul(values[:, None, :], table.kernel)[:, 0, :]


def axial_fourier(values: np.ndarray) -> np.ndarray:
    return np.fft.fft(values, axis=0, norm="ortho")


def axial_fourier_inverse(coeffs: np.ndarray) -> np.ndarray:
    return np.fft.ifft(coeffs, axis=0, norm="ortho")


@dataclass(frozen=True)
class FrameIndex:
    component: str
    angle: int = -1
    band: int = -1
    j: int = 0
    k: int = 0


@dataclass(frozen=True)
class LeafSlot:
    component: str
    angle: int
    band: int
    offset: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


class WavePacketTransform:
    """Prepared frame ``F`` built from a filter bank and ray tables."""

    def __init__(self, bank: FilterBank, tables: RayTables):
        self.bank = bank
        self.tables = tables
        slots = [LeafSlot(LOW, -1, -1, 0, (bank.low_modes.size,))]
        off = bank.low_modes.size
        slots.append(LeafSlot(HIGH, -1, -1, off, (bank.high_modes.size,)))
        off += bank.high_modes.size
        for a, lay in enumerate(bank.angles):
            for b in range(lay.bands.n_bands):
                t = tables[(a, b)]
                shape = (t.y_rel.size, t.n_k)
                slots.append(LeafSlot(MID, a, b, off, shape))
                off += int(np.prod(shape))
        self.slots = tuple(slots)
        self.size = off

    @property
    def grid(self):
        return self.bank.grid

    def mid_slots(self):
        return [s for s in self.slots if s.component == MID]

    def forward(self, u: np.ndarray) -> np.ndarray:
        leaves = localize(self.bank, u)
        out = np.empty(self.size, dtype=complex)
        low, high = self.slots[0], self.slots[1]
        out[low.offset:low.offset + low.size] = leaves.low
        out[high.offset:high.offset + high.size] = leaves.high
        for s in self.mid_slots():
            vals = fio_forward(self.tables[(s.angle, s.band)], leaves.mid[s.angle][s.band])
            out[s.offset:s.offset + s.size] = axial_fourier(vals).ravel()
        return out

    def adjoint(self, coeffs: np.ndarray) -> np.ndarray:
        if coeffs.shape != (self.size,):
            raise ValueError(f"expected {self.size} coefficients, got {coeffs.shape}")
        low, high = self.slots[0], self.slots[1]
        mid = [[None] * lay.bands.n_bands for lay in self.bank.angles]
        for s in self.mid_slots():
            c = coeffs[s.offset:s.offset + s.size].reshape(s.shape)
            mid[s.angle][s.band] = fio_adjoint(self.tables[(s.angle, s.band)],
                                               axial_fourier_inverse(c))
        leaves = Leaves(coeffs[low.offset:low.offset + low.size],
                        coeffs[high.offset:high.offset + high.size], mid)
        return delocalize(self.bank, leaves)

    def index(self, offset: int) -> FrameIndex:
        """Frame index of a flat coefficient offset."""
        for s in self.slots:
            if s.offset <= offset < s.offset + s.size:
                local = offset - s.offset
                if s.component == MID:
                    j, k = divmod(local, s.shape[1])
                    return FrameIndex(MID, s.angle, s.band, j, k)
                modes = self.bank.low_modes if s.component == LOW else self.bank.high_modes
                ny, nx = self.grid.shape
                jj, ii = divmod(int(modes[local]), nx)
                return FrameIndex(s.component, -1, -1, jj, ii)
        raise IndexError(offset)

    def dump(self, path: str | Path, coeffs: np.ndarray) -> None:
        """Write ``<path>.manifest`` (one line per leaf) and ``<path>.bin`` (complex128)."""
        path = Path(path)
        lines = ["component angle band offset length shape"]
        for s in self.slots:
            lines.append(f"{s.component} {s.angle} {s.band} {s.offset} {s.size} "
                         f"{'x'.join(map(str, s.shape))}")
        path.with_suffix(".manifest").write_text("\n".join(lines) + "\n")
        np.asarray(coeffs, dtype="<c16").tofile(path.with_suffix(".bin"))


def frame_forward(frame: WavePacketTransform, u: np.ndarray) -> np.ndarray:
    return frame.forward(u)


def frame_adjoint(frame: WavePacketTransform, coeffs: np.ndarray) -> np.ndarray:
    return frame.adjoint(coeffs)


def fourier_weight(rho2, omega: float, c_mean: float):
    """Weight for plain Fourier leaves, the inverse of a regularized symbol size.

    ``rho2`` is the squared wavenumber seen by the operator; pass the discrete
    Laplacian symbol to stay adapted up to the Nyquist frequency.
    """
    k2 = (omega / c_mean) ** 2
    return ((np.asarray(rho2) - k2) ** 2 + k2) ** -0.5


def laplacian_symbol(grid) -> np.ndarray:
    """Eigenvalues ``(4/h^2)(sin^2(xi_1 h/2) + sin^2(xi_2 h/2))`` of the five-point Laplacian."""
    xi1, xi2 = grid.wavenumbers()
    h = grid.h
    return 4 / h ** 2 * (np.sin(0.5 * h * xi1) ** 2 + np.sin(0.5 * h * xi2) ** 2)


def mid_weight(eta, omega: float, c_mean: float, floor: float = 1.0):
    """``c_mean / (2 omega) (eta^2 + floor^2)^{-1/2}`` for axial wavenumber ``eta``."""
    return c_mean / (2 * omega) * (np.asarray(eta) ** 2 + floor ** 2) ** -0.5


def axial_wavenumbers(n_y: int, dy: float) -> np.ndarray:
    return 2 * np.pi * np.fft.fftfreq(n_y, d=dy)


def resolution_floor(medium: Medium, n_y: int, dy: float) -> float:
    """Damping scale combined with the half width ``pi / (n_y dy)`` of one axial tile."""
    return float(np.hypot(damping_floor(medium), np.pi / (n_y * dy)))


def build_weights(frame: WavePacketTransform, medium: Medium, omega: float,
                  floor: float | None = None) -> np.ndarray:
    """Strictly positive diagonal of ``W``, one entry per frame coefficient.

    ``floor=None`` selects :func:`resolution_floor` per band.
    """
    bank = frame.bank
    rho2 = laplacian_symbol(bank.grid).ravel()
    c_mean = medium.c_mean
    w = np.empty(frame.size)
    low, high = frame.slots[0], frame.slots[1]
    w[low.offset:low.offset + low.size] = fourier_weight(rho2[bank.low_modes], omega, c_mean)
    w[high.offset:high.offset + high.size] = fourier_weight(rho2[bank.high_modes], omega, c_mean)
    for s in frame.mid_slots():
        dy = bank.angles[s.angle].dy
        fl = resolution_floor(medium, s.shape[0], dy) if floor is None else floor
        eta = axial_wavenumbers(s.shape[0], dy)
        w[s.offset:s.offset + s.size] = np.repeat(mid_weight(eta, omega, c_mean, fl), s.shape[1])
    if not (np.all(w > 0) and np.all(np.isfinite(w))):
        raise ValueError("weights must be finite and strictly positive")
    return w


def damping_floor(medium: Medium) -> float:
    """``alpha / (2 L)``: the axial wavenumber scale set by the damping term."""
    return medium.alpha_min / (2 * medium.L)


@dataclass
class AdaptationReport:
    c_max: float
    mid_c_max: float
    fourier_c_max: float
    n_tiles: int
    n_samples: int


def verify_tile_adaptation(frame: WavePacketTransform, medium: Medium, omega: float,
                           weights: np.ndarray, sample_count: int = 4,
                           seed: int = 0, tiles_per_band: int = 24) -> AdaptationReport:
    """Worst ratio ``max(wr, 1/wr)``, ``wr = w |sigma|``, over sampled tile points.

    Mid tiles are sampled by flowing points of the rectangle
    ``z0 in cell, zeta0 in [zeta_k +- pi/L_z]`` along the bicharacteristics
    and adding ``eta = eta_j + delta + B`` with ``|delta| <= pi / band length``;
    the one-way factorized symbol ``(2 omega / c_mean)(eta - B) + i alpha omega / (L c)``
    is used there.  Fourier tiles use the Helmholtz symbol at tile centers.
    """
    rng = np.random.default_rng(seed)
    bank, tables = frame.bank, frame.tables
    symbol = tables.symbol
    sampler = RotatedSampler(medium)
    c_mean = medium.c_mean
    alpha = medium.alpha_min
    worst_mid, n_tiles, n_samples = 1.0, 0, 0
    for s in frame.mid_slots():
        lay = bank.angles[s.angle]
        t = tables[(s.angle, s.band)]
        geom = band_geometry(bank, sampler, s.angle, s.band)
        y_rel = t.y_rel
        n_y = y_rel.size
        eta = axial_wavenumbers(n_y, lay.dy)
        d_eta = np.pi / (n_y * lay.dy)
        w_mid = weights[s.offset:s.offset + s.size].reshape(s.shape)
        # only tiles inside the one-way cone carry propagating energy
        ks = [k for k in range(t.n_k)
              if abs(t.zeta[k]) * medium.c_max / omega < np.sin(symbol.alpha_reg)]
        ks = rng.permutation(ks)[:tiles_per_band]
        x_half = y_rel[-1]
        for k in ks:
            for _ in range(sample_count):
                z0 = rng.uniform(0, lay.L_z)
                zeta0 = t.zeta[k] + rng.uniform(-1, 1) * np.pi / lay.L_z
                y_end = rng.uniform(y_rel[0], x_half)
                nodes = np.array([0.0, y_end]) if y_end >= 0 else np.array([0.0, y_end])
                _, zp, zt = trace_bicharacteristics(symbol, geom.c, geom.dc_dz, z0, zeta0,
                                                    nodes, substeps=8, regularized=True)
                c = float(geom.c(y_end, zp[-1]))
                j = rng.integers(n_y)
                delta = rng.uniform(-1, 1) * d_eta
                sigma = 2 * omega / c_mean * (eta[j] + delta) + 1j * alpha * omega / (medium.L * c)
                r = w_mid[j, k] * abs(sigma)
                worst_mid = max(worst_mid, r, 1 / r)
                n_samples += 1
            n_tiles += 1
    # Fourier leaves: tile centers, symbol with the local velocity extremes
    rho2 = laplacian_symbol(bank.grid).ravel()
    worst_f = 1.0
    for slot, modes, chi in ((frame.slots[0], bank.low_modes, bank.chi1),
                             (frame.slots[1], bank.high_modes, bank.chi3)):
        live = chi.ravel()[modes] > 0.5
        wr = weights[slot.offset:slot.offset + slot.size][live]
        r2 = rho2[modes][live]
        for c in (medium.c_min, medium.c_max):
            sig = np.abs(r2 - omega ** 2 / c ** 2 + 1j * alpha * omega / (medium.L * c))
            ratio = wr * sig
            worst_f = max(worst_f, float(ratio.max()), float((1 / ratio).max()))
    return AdaptationReport(float(max(worst_mid, worst_f)), float(worst_mid), float(worst_f),
                            n_tiles, n_samples)
