"""WKB preparation for the wave packet transform.

For each direction, band and transverse wavenumber ``zeta_k`` a travel time
table ``T(y, z)`` solves the regularized one-way eikonal equation

    dT/dy = S(c dT/dz) / c,     T(0, z) = p z,   p = zeta_k / omega,

by first-order Godunov upwinding, marching from the band center in both
directions.  The inverse flow map ``Z0`` is advected with the same
characteristic velocity and the amplitude follows from energy conservation
along the flow, ``A = A0 sqrt(dZ0/dz)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .filters import FilterBank
from .grid import Medium

logger = logging.getLogger(__name__)


class CFLError(ValueError):
    pass


class CausticError(RuntimeError):
    pass


class RayExitError(RuntimeError):
    """A traced ray left the cone where the one-way symbol is exact."""

    def __init__(self, y: float, message: str = ""):
        super().__init__(message or f"ray left the one-way cone at y = {y:.6g}")
        self.y = y


@dataclass(frozen=True)
class OneWaySymbol:
    """Regularized one-way dispersion ``B = (omega / c) S(c zeta / omega)``."""

    omega: float
    alpha_reg: float = math.pi / 4

    def S(self, s):
        return eval_S(self, s)

    def dS(self, s):
        s = np.asarray(s, dtype=float)
        sa, ta = math.sin(self.alpha_reg), math.tan(self.alpha_reg)
        inner = np.abs(s) <= sa
        root = np.sqrt(np.clip(1.0 - s ** 2, 1e-300, None))
        return np.where(inner, -s / root, -np.sign(s) * ta)

    def B(self, c, zeta):
        return self.omega / c * self.S(c * zeta / self.omega)

    def dB_dzeta(self, c, zeta):
        return self.dS(c * zeta / self.omega)

    def dB_dc(self, c, zeta):
        s = c * zeta / self.omega
        return -self.omega / c ** 2 * self.S(s) + zeta / c * self.dS(s)


def eval_S(symbol: OneWaySymbol, s):
    """``sqrt(1 - s^2)`` inside the cone ``|s| <= sin(alpha_reg)``, tangent line outside."""
    s = np.asarray(s, dtype=float)
    sa, ca, ta = math.sin(symbol.alpha_reg), math.cos(symbol.alpha_reg), math.tan(symbol.alpha_reg)
    a = np.abs(s)
    out = np.where(a <= sa, np.sqrt(np.clip(1.0 - s ** 2, 0.0, None)), ca - (a - sa) * ta)
    return out if out.ndim else float(out)


# -- eikonal marching --------------------------------------------------------

def _godunov(H, a, b, forward: bool):
    """Numerical Hamiltonian for ``T_y = H(T_z)`` with ``H`` concave, maximal at 0."""
    if forward:
        # T_y + G(T_z) = 0 with G = -H convex
        return np.where(a <= b, H(np.clip(0.0, a, b)), np.minimum(H(a), H(b)))
    # marching towards -y: T_y' + H(T_z) = 0 with H concave
    return np.where(a <= b, np.minimum(H(a), H(b)), H(np.clip(0.0, b, a)))


def _march(symbol, c_at, y_nodes, dz, p, tau, rho, forward, substeps):
    """March ``(tau, rho)`` from ``y_nodes[0]`` through ``y_nodes``; returns stacked states."""
    ta = math.tan(symbol.alpha_reg)
    taus, rhos = [tau.copy()], [rho.copy()]
    pc = p[:, None]
    for y0, y1 in zip(y_nodes[:-1], y_nodes[1:]):
        step = y1 - y0
        n_sub = substeps
        if n_sub is None:
            n_sub = max(1, math.ceil(abs(step) * ta / (0.9 * dz)))
        elif abs(step) / n_sub * ta > dz:
            raise CFLError(f"step {abs(step) / n_sub:.3g} violates CFL bound {dz / ta:.3g}")
        h = step / n_sub
        for i in range(n_sub):
            c = c_at(y0 + i * h)[None, :]
            H = lambda q: symbol.S(c * q) / c  # noqa: E731
            a = pc + (tau - np.roll(tau, 1, axis=1)) / dz
            b = pc + (np.roll(tau, -1, axis=1) - tau) / dz
            q_mid = pc + (np.roll(tau, -1, axis=1) - np.roll(tau, 1, axis=1)) / (2 * dz)
            v = -symbol.dS(c * q_mid)  # dz/dy along characteristics
            ve = v if forward else -v
            # upwind advection of rho with rho_y + v (1 + rho_z) = 0
            d_back = (rho - np.roll(rho, 1, axis=1)) / dz
            d_fwd = (np.roll(rho, -1, axis=1) - rho) / dz
            grad = np.where(ve > 0, d_back, d_fwd)
            tau = tau + abs(h) * (_godunov(H, a, b, forward) if forward
                                  else -_godunov(H, a, b, forward))
            rho = rho - abs(h) * ve * (1.0 + grad)
        if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(rho))):
            raise FloatingPointError(f"non-finite travel time at y = {y1:.4g}")
        taus.append(tau.copy())
        rhos.append(rho.copy())
    return np.stack(taus, axis=1), np.stack(rhos, axis=1)


def solve_eikonal(symbol: OneWaySymbol, c_at, y_rel: np.ndarray, dz: float, n_z: int,
                  p_z, tau0: np.ndarray | None = None, substeps: int | None = None):
    """Travel times and inverse flow for initial slopes ``p_z`` on a periodic z grid.

    Parameters
    ----------
    c_at : callable
        ``c_at(y)`` returns the velocity on the ``n_z`` transverse nodes at
        band coordinate ``y``.
    y_rel : array
        Increasing y nodes containing exactly one zero (the band center).
    p_z : float or array of shape (n_k,)
        Initial transverse slowness; ``T(0, z) = p_z z (+ tau0)``.
    tau0 : array, optional
        Periodic perturbation of the initial travel time, shape ``(n_z,)``.
    substeps : int, optional
        Fixed number of sub-steps per y interval; chosen from the CFL bound
        when omitted.

    Returns
    -------
    T, Z0 : arrays of shape ``(n_k, len(y_rel), n_z)`` (leading axis dropped
        for scalar ``p_z``).
    """
    scalar = np.ndim(p_z) == 0
    p = np.atleast_1d(np.asarray(p_z, dtype=float))
    y_rel = np.asarray(y_rel, dtype=float)
    zeros = np.flatnonzero(np.isclose(y_rel, 0.0, atol=1e-12))
    if zeros.size != 1:
        raise ValueError("y nodes must contain the band center y = 0 exactly once")
    ic = int(zeros[0])
    z = np.arange(n_z) * dz
    tau_init = np.zeros((p.size, n_z)) if tau0 is None else np.tile(tau0, (p.size, 1)).astype(float)
    rho_init = np.zeros((p.size, n_z))
    tau_f, rho_f = _march(symbol, c_at, y_rel[ic:], dz, p, tau_init, rho_init, True, substeps)
    tau_b, rho_b = _march(symbol, c_at, y_rel[ic::-1], dz, p, tau_init, rho_init, False, substeps)
    tau = np.concatenate([tau_b[:, :0:-1], tau_f], axis=1)
    rho = np.concatenate([rho_b[:, :0:-1], rho_f], axis=1)
    T = tau + p[:, None, None] * z[None, None, :]
    Z0 = rho + z[None, None, :]
    if scalar:
        return T[0], Z0[0]
    return T, Z0


def flow_jacobian(Z0: np.ndarray, dz: float) -> np.ndarray:
    """``dZ0/dz`` by periodic central differences of ``Z0 - z``."""
    n_z = Z0.shape[-1]
    rho = Z0 - np.arange(n_z) * dz
    return 1.0 + (np.roll(rho, -1, axis=-1) - np.roll(rho, 1, axis=-1)) / (2 * dz)


def amplitude_from_flow(Z0: np.ndarray, dz: float, L_z: float, where: str = "") -> np.ndarray:
    """Amplitude ``A = A0 sqrt(dZ0/dz)`` with ``A0 = L_z^{-1/2}``."""
    J = flow_jacobian(Z0, dz)
    if np.any(J <= 0):
        idx = np.unravel_index(int(np.argmin(J)), J.shape)
        raise CausticError(f"caustic {where} at table index {idx}: dZ0/dz = {J[idx]:.3g}")
    return np.sqrt(J / L_z)


# -- bicharacteristics -------------------------------------------------------

def trace_bicharacteristics(symbol: OneWaySymbol, c_fn, dc_dz_fn, z0: float, zeta0: float,
                            y_nodes, substeps: int = 8, regularized: bool = False):
    """Integrate the ray equations with fixed-step RK4.

    ``dz/dy = -dB/dzeta``, ``dzeta/dy = dB/dz`` for ``B = (omega/c) S(c zeta/omega)``;
    inside the cone this is the unregularized system.  Unless ``regularized``
    is set, leaving the cone raises :class:`RayExitError`.

    Returns ``(y, z, zeta)`` sampled at ``y_nodes`` (which must start at 0).
    """
    y_nodes = np.asarray(y_nodes, dtype=float)
    sa = math.sin(symbol.alpha_reg)
    w = symbol.omega

    def rhs(y, state):
        z, zeta = state
        c = c_fn(y, z)
        return np.array([-symbol.dB_dzeta(c, zeta), symbol.dB_dc(c, zeta) * dc_dz_fn(y, z)])

    def inside(y, state):
        return abs(c_fn(y, state[0]) * state[1] / w) < sa

    state = np.array([z0, zeta0], dtype=float)
    if not regularized and not inside(y_nodes[0], state):
        raise RayExitError(y_nodes[0], "initial point is outside the one-way cone")
    zs, zetas = [state[0]], [state[1]]
    for y0, y1 in zip(y_nodes[:-1], y_nodes[1:]):
        h = (y1 - y0) / substeps
        for i in range(substeps):
            y = y0 + i * h
            k1 = rhs(y, state)
            k2 = rhs(y + h / 2, state + h / 2 * k1)
            k3 = rhs(y + h / 2, state + h / 2 * k2)
            k4 = rhs(y + h, state + h * k3)
            state = state + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not regularized and not inside(y + h, state):
                raise RayExitError(y + h)
        zs.append(state[0])
        zetas.append(state[1])
    return y_nodes, np.array(zs), np.array(zetas)


# -- medium sampling on rotated bands ----------------------------------------

class RotatedSampler:
    """Periodic cubic-spline evaluation of ``c`` and ``grad c`` at arbitrary points."""

    def __init__(self, medium: Medium):
        self.h = medium.grid.h
        g = medium.grid
        self._coef = ndimage.spline_filter(medium.c, order=3, mode="grid-wrap")
        xi1, xi2 = g.wavenumbers()
        ch = np.fft.fft2(medium.c)
        self._gx = ndimage.spline_filter(np.real(np.fft.ifft2(1j * xi1 * ch)), order=3, mode="grid-wrap")
        self._gy = ndimage.spline_filter(np.real(np.fft.ifft2(1j * xi2 * ch)), order=3, mode="grid-wrap")

    def _eval(self, coef, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        coords = np.stack([x2.ravel() / self.h, x1.ravel() / self.h])
        out = ndimage.map_coordinates(coef, coords, order=3, mode="grid-wrap", prefilter=False)
        return out.reshape(x1.shape)

    def c(self, x1, x2):
        return self._eval(self._coef, x1, x2)

    def grad(self, x1, x2):
        return self._eval(self._gx, x1, x2), self._eval(self._gy, x1, x2)


@dataclass
class BandGeometry:
    """Maps band coordinates ``(y_rel, z)`` to physical points."""

    direction: np.ndarray
    normal: np.ndarray
    y_center: float
    sampler: RotatedSampler

    def point(self, y, z):
        y = np.asarray(y, float)
        z = np.asarray(z, float)
        yy = self.y_center + y
        return yy * self.direction[0] + z * self.normal[0], yy * self.direction[1] + z * self.normal[1]

    def c(self, y, z):
        return self.sampler.c(*self.point(y, z))

    def dc_dz(self, y, z):
        gx, gy = self.sampler.grad(*self.point(y, z))
        return gx * self.normal[0] + gy * self.normal[1]


# -- tables ------------------------------------------------------------------

@dataclass
class BandTable:
    angle: int
    band: int
    y_rel: np.ndarray
    dz: float
    L_z: float
    zeta: np.ndarray      # (n_k,)
    T: np.ndarray         # (n_k, n_y, n_z)
    A: np.ndarray
    Z0: np.ndarray
    kernel: np.ndarray = field(repr=False)  # (n_y, n_k, n_z): sqrt(dz) A e^{i omega T}

    @property
    def n_k(self) -> int:
        return self.zeta.size


@dataclass
class RayTables:
    omega: float
    symbol: OneWaySymbol
    tables: dict[tuple[int, int], BandTable]

    def __getitem__(self, key):
        try:
            return self.tables[key]
        except KeyError:
            raise KeyError(f"no ray table for (angle, band) = {key}") from None

    def __len__(self):
        return sum(t.n_k for t in self.tables.values())

    def storage(self) -> int:
        """Number of complex kernel entries held."""
        return sum(t.kernel.size for t in self.tables.values())


def band_geometry(bank: FilterBank, sampler: RotatedSampler, a: int, b: int) -> BandGeometry:
    lay = bank.angles[a]
    bl = lay.bands
    y_center = (bl.starts[b] + bl.centers[b]) * bl.dy
    return BandGeometry(lay.direction, lay.normal, y_center, sampler)


def build_band_table(bank: FilterBank, geom: BandGeometry, symbol: OneWaySymbol,
                     a: int, b: int, refine: int = 1) -> BandTable:
    lay = bank.angles[a]
    bl = lay.bands
    y_rel = bl.y_rel(b)
    n_z = lay.rot_rect.n_q
    dz = lay.dz
    zeta = lay.zeta_values()
    p = zeta / symbol.omega
    # optional transverse refinement for the marching only
    n_zr = n_z * refine
    dzr = dz / refine
    zr = np.arange(n_zr) * dzr
    c_at = lambda y: geom.c(y, zr)  # noqa: E731
    T, Z0 = solve_eikonal(symbol, c_at, y_rel, dzr, n_zr, p)
    T = T[..., ::refine]
    Z0 = Z0[..., ::refine]
    A = amplitude_from_flow(Z0, dz, lay.L_z, where=f"(angle {lay.angle:g}, band {b})")
    K = np.sqrt(dz) * A * np.exp(1j * symbol.omega * T)
    return BandTable(a, b, y_rel, dz, lay.L_z, zeta, T, A, Z0,
                     np.ascontiguousarray(K.transpose(1, 0, 2)))


def build_ray_tables(medium: Medium, bank: FilterBank, omega: float,
                     alpha_reg: float = math.pi / 4, refine: int = 1) -> RayTables:
    symbol = OneWaySymbol(omega, alpha_reg)
    sampler = RotatedSampler(medium)
    tables = {}
    for a, lay in enumerate(bank.angles):
        for b in range(lay.bands.n_bands):
            geom = band_geometry(bank, sampler, a, b)
            tables[(a, b)] = build_band_table(bank, geom, symbol, a, b, refine)
    rt = RayTables(omega, symbol, tables)
    logger.debug("ray tables: %d keys, %d kernel entries", len(tables), rt.storage())
    return rt
