"""Phase-space localization: radial scale split, angular wedges, Fourier
subsampling, lattice rotation and overlapping periodic bands.

Every stage is an isometry or a squared partition of unity, and each has an
exact adjoint, so the composed localization map ``F_loc`` satisfies
``F_loc* F_loc = I``.

Rotated coordinates for a direction ``a = (cos t, sin t)`` are ``y = x . a``
and ``z = x . a_perp`` with ``a_perp = (-sin t, cos t)``.  For the eight
directions at multiples of 45 degrees the unit torus is periodic in ``(y, z)``
with period 1 (axial directions) or sqrt(2) (diagonals).  A Fourier mode
``(m, n)`` of the unit torus becomes the mode ``(P, Q)`` of the rotated torus
with ``P = s (m cos t + n sin t)``, ``Q = s (n cos t - m sin t)`` and
``s = 1`` or ``sqrt(2)``; both are integers, so rotation is an exact index
remap of the spectrum.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, dft2, idft2

logger = logging.getLogger(__name__)

DEFAULT_ANGLES = (-225.0, -180.0, -135.0, -90.0, -45.0, 0.0, 45.0, 90.0)
LEAKAGE_TOL = 1e-10


class NyquistError(ValueError):
    """The grid cannot resolve the wavenumbers the filter bank needs."""


class SupportError(ValueError):
    """A component has spectral energy outside the rectangle it is restricted to."""


def smooth_step(x, steepness: float = 1.0):
    """Cutoff rising from 0 at ``x <= 0`` to 1 at ``x >= 1``.

    Satisfies ``h(x)^2 + h(1 - x)^2 = 1``.
    """
    x = np.asarray(x, dtype=float)
    inner = (x > 0) & (x < 1)
    xs = np.where(inner, x, 0.5)
    # e^{-c/x} / (e^{-c/x} + e^{-c/(1-x)}) written as a logistic for stability
    with np.errstate(over="ignore", divide="ignore"):
        arg = np.clip(steepness / xs - steepness / (1.0 - xs), -700.0, 700.0)
    r = 1.0 / (1.0 + np.exp(arg))
    out = np.where(inner, np.sin(0.5 * np.pi * r), np.where(x >= 1, 1.0, 0.0))
    return out if out.ndim else float(out)


def radial_cutoffs(rho, k1, k2, k3, k4, steepness=1.0):
    """``(chi1, chi2, chi3)`` as functions of ``|xi|`` with ``sum chi^2 = 1``."""
    if not k1 < k2 <= k3 < k4:
        raise ValueError(f"breakpoints must satisfy k1 < k2 <= k3 < k4, got {(k1, k2, k3, k4)}")
    rho = np.asarray(rho, dtype=float)
    tl = (rho - k1) / (k2 - k1)
    th = (rho - k3) / (k4 - k3)
    chi1 = smooth_step(1.0 - tl, steepness)
    chi3 = smooth_step(th, steepness)
    chi2 = smooth_step(tl, steepness) * smooth_step(1.0 - th, steepness)
    return chi1, chi2, chi3


@dataclass(frozen=True)
class WedgeSet:
    angles: tuple[float, ...] = DEFAULT_ANGLES
    steepness: float = 1.0

    @property
    def spacing(self) -> float:
        return 360.0 / len(self.angles)

    def window(self, a: int, phi_deg: np.ndarray) -> np.ndarray:
        """Angular window of direction ``a`` evaluated at polar angles ``phi_deg``."""
        d = (np.asarray(phi_deg) - self.angles[a] + 180.0) % 360.0 - 180.0
        return smooth_step(1.0 - np.abs(d) / self.spacing, self.steepness)

    def direction(self, a: int) -> np.ndarray:
        t = math.radians(self.angles[a])
        return np.array([math.cos(t), math.sin(t)])

    def normal(self, a: int) -> np.ndarray:
        t = math.radians(self.angles[a])
        return np.array([-math.sin(t), math.cos(t)])

    def slope(self, a: int) -> tuple[int, int]:
        """``(p, q)`` with ``tan(angle) = p / q`` in lowest terms."""
        cs = np.rint(self.direction(a) * self.lattice_scale(a)).astype(int)
        q, p = int(cs[0]), int(cs[1])
        g = math.gcd(p, q) or 1
        return p // g, q // g

    def lattice_scale(self, a: int) -> float:
        """1 for axial directions, sqrt(2) for diagonals."""
        t = self.angles[a] % 90.0
        if math.isclose(t, 0.0, abs_tol=1e-9) or math.isclose(t, 90.0, abs_tol=1e-9):
            return 1.0
        if math.isclose(t, 45.0, abs_tol=1e-9):
            return math.sqrt(2.0)
        raise ValueError(f"angle {self.angles[a]} has no periodic rotated lattice")


@dataclass(frozen=True)
class FourierRect:
    """Rectangle of integer Fourier indices ``[p0, p0 + n_p) x [q0, q0 + n_q)``.

    Axis 0 of the coarse field corresponds to ``p``, axis 1 to ``q``.
    """

    p0: int
    q0: int
    n_p: int
    n_q: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_p, self.n_q)

    def contains(self, p, q) -> np.ndarray:
        p, q = np.asarray(p), np.asarray(q)
        return (p >= self.p0) & (p < self.p0 + self.n_p) & (q >= self.q0) & (q < self.q0 + self.n_q)


def _bounding_rect(p: np.ndarray, q: np.ndarray, margin: float) -> FourierRect:
    def span(v):
        lo, hi = int(v.min()), int(v.max())
        pad = int(math.ceil(margin * (hi - lo + 1)))
        lo, hi = lo - pad, hi + pad
        n = hi - lo + 1
        if n % 2:
            n += 1
        return lo, n
    p0, n_p = span(p)
    q0, n_q = span(q)
    return FourierRect(p0, q0, n_p, n_q)


def _to_coarse(coeffs: np.ndarray, p: np.ndarray, q: np.ndarray, rect: FourierRect) -> np.ndarray:
    """Place mode coefficients in ``rect`` and synthesize coarse grid samples."""
    spectrum = np.zeros(rect.shape, dtype=complex)
    spectrum[(p - rect.p0) % rect.n_p, (q - rect.q0) % rect.n_q] = coeffs
    g = np.fft.ifft2(spectrum, norm="ortho")
    return g * _carrier(rect)


def _from_coarse(g: np.ndarray, p: np.ndarray, q: np.ndarray, rect: FourierRect) -> np.ndarray:
    spectrum = np.fft.fft2(g * np.conj(_carrier(rect)), norm="ortho")
    return spectrum[(p - rect.p0) % rect.n_p, (q - rect.q0) % rect.n_q]


def _carrier(rect: FourierRect) -> np.ndarray:
    i = np.arange(rect.n_p)[:, None]
    l = np.arange(rect.n_q)[None, :]
    return np.exp(2j * np.pi * (rect.p0 * i / rect.n_p + rect.q0 * l / rect.n_q))


@dataclass(frozen=True)
class BandLayout:
    """Overlapping periodic bands along ``y`` on one rotated coarse grid."""

    n_y: int
    dy: float
    windows: np.ndarray  # (n_bands, n_y); squares sum to one
    starts: tuple[int, ...]
    lengths: tuple[int, ...]
    centers: tuple[int, ...]  # index of y = 0 inside each band

    @property
    def n_bands(self) -> int:
        return len(self.starts)

    def rows(self, b: int) -> np.ndarray:
        return (self.starts[b] + np.arange(self.lengths[b])) % self.n_y

    def y_rel(self, b: int) -> np.ndarray:
        """Band-local axial coordinate, zero at the band center."""
        return (np.arange(self.lengths[b]) - self.centers[b]) * self.dy


def make_band_layout(n_y: int, L_y: float, n_bands: int, overlap: float = 0.25,
                     steepness: float = 1.0) -> BandLayout:
    dy = L_y / n_y
    if n_bands == 1:
        return BandLayout(n_y, dy, np.ones((1, n_y)), (0,), (n_y,), (n_y // 2,))
    y = np.arange(n_y) * dy
    ell = L_y / n_bands
    delta = overlap * ell
    windows = np.zeros((n_bands, n_y))
    starts, lengths, centers = [], [], []
    for b in range(n_bands):
        lo = b * ell  # boundary shared with band b - 1
        d_lo = (y - lo + 0.5 * L_y) % L_y - 0.5 * L_y  # signed periodic distance
        d_hi = (y - lo - ell + 0.5 * L_y) % L_y - 0.5 * L_y
        rise = smooth_step((d_lo + 0.5 * delta) / delta, steepness)
        fall = smooth_step((0.5 * delta - d_hi) / delta, steepness)
        inside = ((y - lo) % L_y) < ell
        w = np.where(np.abs(d_lo) < 0.5 * delta, rise,
                     np.where(np.abs(d_hi) < 0.5 * delta, fall, inside.astype(float)))
        windows[b] = w
        nz = np.flatnonzero(w > 0)
        # contiguous periodic run: find its start as the index whose predecessor is empty
        mask = w > 0
        start = int(next(i for i in nz if not mask[(i - 1) % n_y]))
        length = int(mask.sum())
        starts.append(start)
        lengths.append(length)
        center_y = (lo + 0.5 * ell) % L_y
        centers.append(int(round(((center_y - start * dy) % L_y) / dy)))
    return BandLayout(n_y, dy, windows, tuple(starts), tuple(lengths), tuple(centers))


@dataclass(frozen=True)
class AngleLayout:
    """Everything needed to localize the mid-scale component to one direction."""

    index: int
    angle: float
    direction: np.ndarray
    normal: np.ndarray
    slope: tuple[int, int]
    scale: float           # lattice scale s
    period: float          # rotated torus period, s * L
    modes: np.ndarray      # flat indices into the fine spectrum
    window: np.ndarray     # chi2 * wedge at those modes
    m: np.ndarray          # fine Fourier indices of the modes
    n: np.ndarray
    P: np.ndarray          # rotated lattice indices
    Q: np.ndarray
    rect: FourierRect      # axis-aligned subsampling rectangle in (n, m)
    rot_rect: FourierRect  # rectangle in (P, Q)
    bands: BandLayout

    @property
    def L_y(self) -> float:
        return self.period

    @property
    def L_z(self) -> float:
        return self.period

    @property
    def dy(self) -> float:
        return self.L_y / self.rot_rect.n_p

    @property
    def dz(self) -> float:
        return self.L_z / self.rot_rect.n_q

    def eta(self) -> np.ndarray:
        return 2 * np.pi * self.P / self.L_y

    def zeta_values(self) -> np.ndarray:
        """Transverse wavenumbers of the rotated coarse grid, in DFT order."""
        r = self.rot_rect
        q = r.q0 + (np.arange(r.n_q) - r.q0) % r.n_q
        return 2 * np.pi * q / self.L_z


@dataclass(frozen=True)
class FilterBank:
    grid: GridSpec
    omega: float
    k1: float
    k2: float
    k3: float
    k4: float
    steepness: float
    chi1: np.ndarray
    chi2: np.ndarray
    chi3: np.ndarray
    wedges: WedgeSet
    low_modes: np.ndarray
    high_modes: np.ndarray
    angles: tuple[AngleLayout, ...] = field(repr=False)

    @property
    def n_angles(self) -> int:
        return len(self.angles)

    @property
    def beta(self) -> float:
        """Effective per-direction subsampling ratio of the mid-scale grids."""
        fine = self.grid.size
        coarse = np.mean([a.rot_rect.n_p * a.rot_rect.n_q / a.scale ** 2 for a in self.angles])
        return float(math.sqrt(coarse / fine))


def build_filter_bank(omega: float, c_min: float, c_max: float, grid: GridSpec, *,
                      angles=DEFAULT_ANGLES, bands: int = 2, overlap: float = 0.25,
                      margin: float = 0.1, steepness: float = 1.0,
                      k_factors=(0.2, 1.0, 1.0, 1.4), scale_bands: bool = True) -> FilterBank:
    """Prepare all localization tables for frequency ``omega``.

    ``k1 = f1 omega / c_max``, ``k2 = f2 omega / c_max``, ``k3 = f3 omega / c_min``,
    ``k4 = f4 omega / c_min`` with ``(f1, f2, f3, f4) = k_factors``.  With
    ``scale_bands`` the diagonal directions, whose rotated torus is sqrt(2)
    longer, get ``round(bands * sqrt(2))`` bands so that band lengths match.
    """
    if grid.Lx != grid.Ly:
        raise ValueError("filter bank requires a square domain")
    f1, f2, f3, f4 = k_factors
    k1, k2 = f1 * omega / c_max, f2 * omega / c_max
    k3, k4 = f3 * omega / c_min, f4 * omega / c_min
    nyquist = np.pi / grid.h
    if k4 >= nyquist:
        raise NyquistError(f"k4 = {k4:.4g} exceeds the grid Nyquist wavenumber {nyquist:.4g}")
    xi1, xi2 = grid.wavenumbers()
    rho = np.hypot(xi1, xi2)
    chi1, chi2, chi3 = radial_cutoffs(rho, k1, k2, k3, k4, steepness)
    phi = np.degrees(np.arctan2(xi2, xi1))
    wedges = WedgeSet(tuple(angles), steepness)
    m_all, n_all = grid.mode_indices()
    # unit-torus mode indices; for L != 1 the same integer lattice applies
    layouts = []
    for a in range(len(angles)):
        win = (chi2 * wedges.window(a, phi)).ravel()
        modes = np.flatnonzero(win > 0)
        if modes.size == 0:
            raise ValueError(f"direction {angles[a]:g} contains no Fourier modes; the grid is too "
                             f"coarse for omega = {omega:.4g}")
        m = m_all.ravel()[modes]
        n = n_all.ravel()[modes]
        s = wedges.lattice_scale(a)
        d, nv = wedges.direction(a), wedges.normal(a)
        P = np.rint(s * (m * d[0] + n * d[1])).astype(int)
        Q = np.rint(s * (m * nv[0] + n * nv[1])).astype(int)
        rot_rect = _bounding_rect(P, Q, margin)
        n_b = max(1, round(bands * s)) if scale_bands else bands
        layouts.append(AngleLayout(
            index=a, angle=float(angles[a]), direction=d, normal=nv,
            slope=wedges.slope(a), scale=s, period=s * grid.Lx, modes=modes, window=win[modes],
            m=m, n=n, P=P, Q=Q,
            rect=_bounding_rect(n, m, margin), rot_rect=rot_rect,
            bands=make_band_layout(rot_rect.n_p, s * grid.Lx, n_b, overlap, steepness),
        ))
    bank = FilterBank(grid, omega, k1, k2, k3, k4, steepness, chi1, chi2, chi3, wedges,
                      np.flatnonzero(chi1.ravel() > 0), np.flatnonzero(chi3.ravel() > 0),
                      tuple(layouts))
    logger.debug("filter bank: k = %.3g %.3g %.3g %.3g, beta = %.3f", k1, k2, k3, k4, bank.beta)
    return bank


# -- single-stage operations -------------------------------------------------

def scale_split(bank: FilterBank, u: np.ndarray):
    uh = dft2(u, bank.grid)
    return tuple(idft2(chi * uh) for chi in (bank.chi1, bank.chi2, bank.chi3))


def scale_merge(bank: FilterBank, u1, u2, u3) -> np.ndarray:
    acc = sum(chi * dft2(v, bank.grid) for chi, v in zip((bank.chi1, bank.chi2, bank.chi3),
                                                          (u1, u2, u3)))
    return idft2(acc)


def _wedge_windows(bank: FilterBank) -> list[np.ndarray]:
    xi1, xi2 = bank.grid.wavenumbers()
    phi = np.degrees(np.arctan2(xi2, xi1))
    return [np.where(bank.chi2 > 0, bank.wedges.window(a, phi), 0.0)
            for a in range(bank.n_angles)]


def wedge_split(bank: FilterBank, u2: np.ndarray) -> list[np.ndarray]:
    uh = dft2(u2, bank.grid)
    return [idft2(w * uh) for w in _wedge_windows(bank)]


def wedge_merge(bank: FilterBank, parts) -> np.ndarray:
    acc = sum(w * dft2(p, bank.grid) for w, p in zip(_wedge_windows(bank), parts))
    return idft2(acc)


def subsample(component: np.ndarray, rect: FourierRect) -> np.ndarray:
    """Restrict the spectrum to ``rect`` (indices ``(n, m)``) on a coarse grid.

    The coarse samples are the values of the band-limited field on a grid of
    ``rect.shape`` points, scaled so that the map is an isometry.
    """
    ny, nx = component.shape
    spectrum = dft2(component)
    n_all = np.rint(np.fft.fftfreq(ny) * ny).astype(int)[:, None]
    m_all = np.rint(np.fft.fftfreq(nx) * nx).astype(int)[None, :]
    n_b, m_b = np.broadcast_arrays(n_all, m_all)
    inside = rect.contains(n_b, m_b)
    total = float(np.vdot(spectrum, spectrum).real)
    leak = float(np.vdot(spectrum[~inside], spectrum[~inside]).real)
    if total > 0 and leak > LEAKAGE_TOL * total:
        raise SupportError(f"{leak / total:.3e} of the energy lies outside the rectangle")
    return _to_coarse(spectrum[inside], n_b[inside], m_b[inside], rect)


def upsample(coarse: np.ndarray, rect: FourierRect, grid: GridSpec) -> np.ndarray:
    ny, nx = grid.shape
    n_all = np.rint(np.fft.fftfreq(ny) * ny).astype(int)[:, None]
    m_all = np.rint(np.fft.fftfreq(nx) * nx).astype(int)[None, :]
    n_b, m_b = np.broadcast_arrays(n_all, m_all)
    inside = rect.contains(n_b, m_b)
    spectrum = np.zeros(grid.shape, dtype=complex)
    spectrum[inside] = _from_coarse(coarse, n_b[inside], m_b[inside], rect)
    return idft2(spectrum)


def _rect_modes(rect: FourierRect):
    p = rect.p0 + np.arange(rect.n_p)[:, None]
    q = rect.q0 + np.arange(rect.n_q)[None, :]
    return np.broadcast_arrays(p, q)


def shear_rotate(coarse: np.ndarray, layout: AngleLayout) -> np.ndarray:
    """Map a coarse axis-aligned component onto the rotated ``(y, z)`` grid.

    In the Fourier domain this is the integer lattice map ``(m, n) -> (P, Q)``,
    a composition of index shears (with an index doubling for diagonals), so
    it is exactly invertible and norm preserving.
    """
    rect, rot = layout.rect, layout.rot_rect
    n_g, m_g = _rect_modes(rect)
    coeffs = _from_coarse(coarse, n_g.ravel(), m_g.ravel(), rect)
    m, n = m_g.ravel(), n_g.ravel()
    d, nv, s = layout.direction, layout.normal, layout.scale
    P = np.rint(s * (m * d[0] + n * d[1])).astype(int)
    Q = np.rint(s * (m * nv[0] + n * nv[1])).astype(int)
    inside = rot.contains(P, Q)
    leak = float(np.sum(np.abs(coeffs[~inside]) ** 2))
    total = float(np.sum(np.abs(coeffs) ** 2))
    if total > 0 and leak > LEAKAGE_TOL * total:
        raise SupportError(f"{leak / total:.3e} of the energy rotates outside the rectangle")
    return _to_coarse(coeffs[inside], P[inside], Q[inside], rot)


def shear_unrotate(rotated: np.ndarray, layout: AngleLayout) -> np.ndarray:
    rect, rot = layout.rect, layout.rot_rect
    n_g, m_g = _rect_modes(rect)
    m, n = m_g.ravel(), n_g.ravel()
    d, nv, s = layout.direction, layout.normal, layout.scale
    P = np.rint(s * (m * d[0] + n * d[1])).astype(int)
    Q = np.rint(s * (m * nv[0] + n * nv[1])).astype(int)
    inside = rot.contains(P, Q)
    coeffs = np.zeros(m.size, dtype=complex)
    coeffs[inside] = _from_coarse(rotated, P[inside], Q[inside], rot)
    return _to_coarse(coeffs, n, m, rect)


def band_split(layout: BandLayout, rotated: np.ndarray) -> list[np.ndarray]:
    out = []
    for b in range(layout.n_bands):
        rows = layout.rows(b)
        out.append(layout.windows[b, rows][:, None] * rotated[rows])
    return out


def band_merge(layout: BandLayout, bands, n_z: int | None = None) -> np.ndarray:
    n_z = bands[0].shape[1] if n_z is None else n_z
    acc = np.zeros((layout.n_y, n_z), dtype=complex)
    for b, data in enumerate(bands):
        rows = layout.rows(b)
        np.add.at(acc, rows, layout.windows[b, rows][:, None] * data)
    return acc


# -- composed localization ---------------------------------------------------

def localize_angle(bank: FilterBank, spectrum: np.ndarray, a: int) -> list[np.ndarray]:
    """Mid-scale localization for direction ``a`` starting from ``dft2(u)``."""
    lay = bank.angles[a]
    coeffs = spectrum.ravel()[lay.modes] * lay.window
    rotated = _to_coarse(coeffs, lay.P, lay.Q, lay.rot_rect)
    return band_split(lay.bands, rotated)


def delocalize_angle(bank: FilterBank, bands, a: int, out: np.ndarray) -> None:
    """Accumulate the adjoint of :func:`localize_angle` into the spectrum ``out``."""
    lay = bank.angles[a]
    rotated = band_merge(lay.bands, bands, lay.rot_rect.n_q)
    coeffs = _from_coarse(rotated, lay.P, lay.Q, lay.rot_rect) * lay.window
    out.ravel()[lay.modes] += coeffs


@dataclass
class Leaves:
    """Output of the localization map: low/high Fourier leaves and mid bands."""

    low: np.ndarray
    high: np.ndarray
    mid: list[list[np.ndarray]]  # [angle][band] -> (n_yb, n_z)

    def energy(self) -> float:
        e = float(np.vdot(self.low, self.low).real + np.vdot(self.high, self.high).real)
        for bands in self.mid:
            for arr in bands:
                e += float(np.vdot(arr, arr).real)
        return e


def localize(bank: FilterBank, u: np.ndarray) -> Leaves:
    spectrum = dft2(u, bank.grid).ravel()
    low = spectrum[bank.low_modes] * bank.chi1.ravel()[bank.low_modes]
    high = spectrum[bank.high_modes] * bank.chi3.ravel()[bank.high_modes]
    mid = [localize_angle(bank, spectrum, a) for a in range(bank.n_angles)]
    return Leaves(low, high, mid)


def delocalize(bank: FilterBank, leaves: Leaves) -> np.ndarray:
    spectrum = np.zeros(bank.grid.shape, dtype=complex)
    flat = spectrum.ravel()
    flat[bank.low_modes] += leaves.low * bank.chi1.ravel()[bank.low_modes]
    flat[bank.high_modes] += leaves.high * bank.chi3.ravel()[bank.high_modes]
    for a, bands in enumerate(leaves.mid):
        delocalize_angle(bank, bands, a, spectrum)
    return idft2(spectrum, bank.grid)
