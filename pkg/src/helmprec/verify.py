"""Desk-scale self checks run by ``helmprec verify``.

Each suite returns a list of ``(name, passed, detail)`` rows.  Suites are
small enough to finish in seconds on a 64^2 grid.
"""

from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np

from .filters import build_filter_bank, delocalize, localize, radial_cutoffs, smooth_step
from .grid import MediumClassParams, constant_medium, grid_for_ppw, make_grid, sample_medium
from .lwpt import WavePacketTransform, verify_tile_adaptation
from .oned import oned_adjoint, oned_build, oned_forward, oned_grid_size, oned_medium
from .operator import HelmholtzParams, apply_A, assemble_dense, bounds
from .rays import OneWaySymbol, build_ray_tables, solve_eikonal, trace_bicharacteristics
from .solver import execute, prepare, random_rhs

logger = logging.getLogger(__name__)

Row = tuple[str, bool, str]


def _rel(a, b) -> float:
    return float(np.linalg.norm(np.ravel(a - b)) / np.linalg.norm(np.ravel(b)))


def _random_field(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _ppw_omega(grid, c_min, ppw=16.0):
    return 2 * np.pi * c_min / (ppw * grid.h)


def suite_operator(fault=None) -> list[Row]:
    rng = np.random.default_rng(0)
    g = make_grid(16, 16)
    worst = 0.0
    for seed in range(1, 6):
        m = sample_medium(MediumClassParams(seed=seed), g)
        p = HelmholtzParams(_ppw_omega(g, m.c_min), m)
        u = _random_field(rng, g.shape)
        worst = max(worst, _rel(apply_A(p, u), (assemble_dense(p) @ u.ravel()).reshape(g.shape)))
    return [("apply_A matches dense assembly", worst <= 1e-12, f"{worst:.2e}")]


def suite_bounds(fault=None) -> list[Row]:
    g = make_grid(16, 16)
    ok, detail = True, []
    for seed in (1, 2):
        m = sample_medium(MediumClassParams(seed=seed), g)
        p = HelmholtzParams(_ppw_omega(g, m.c_min), m)
        s = np.linalg.svd(assemble_dense(p), compute_uv=False)
        b = bounds(p)
        ok &= s[-1] >= b.lower and s[0] <= b.upper and s[0] / s[-1] <= b.cond_bound
        detail.append(f"cond {s[0] / s[-1]:.1f}<={b.cond_bound:.1f}")
    return [("singular value bounds hold", bool(ok), "; ".join(detail))]


def suite_cutoffs(fault=None) -> list[Row]:
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.5, 1.5, 10_000)
    e1 = float(np.abs(smooth_step(x) ** 2 + smooth_step(1 - x) ** 2 - 1).max())
    rho = rng.uniform(0, 300, 10_000)
    chis = radial_cutoffs(rho, 20.0, 100.0, 130.0, 180.0)
    e2 = float(np.abs(sum(c ** 2 for c in chis) - 1).max())
    return [("smooth step squares sum to one", e1 <= 1e-12, f"{e1:.1e}"),
            ("radial cutoffs partition", e2 <= 1e-12, f"{e2:.1e}")]


def _constant_setup(n=64):
    g = make_grid(n, n)
    m = constant_medium(g)
    omega = _ppw_omega(g, 1.0)
    return g, m, omega


def suite_localization(fault=None) -> list[Row]:
    g, m, omega = _constant_setup()
    bank = build_filter_bank(omega, 1.0, 1.0, g)
    u = _random_field(np.random.default_rng(2), g.shape)
    err = _rel(delocalize(bank, localize(bank, u)), u)
    return [("localization stage is tight", err <= 1e-9, f"{err:.1e}")]


def _variable_frame(n=64):
    g = make_grid(n, n)
    m = sample_medium(MediumClassParams(seed=3), g)
    omega = _ppw_omega(g, m.c_min)
    bank = build_filter_bank(omega, m.c_min, m.c_max, g)
    return m, omega, WavePacketTransform(bank, build_ray_tables(m, bank, omega))


def suite_adjoint(fault=None) -> list[Row]:
    m, _, frame = _variable_frame()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(5):
        u = _random_field(rng, m.grid.shape)
        v = _random_field(rng, frame.size)
        gap = abs(np.vdot(frame.forward(u), v) - np.vdot(u, frame.adjoint(v)))
        worst = max(worst, gap / (np.linalg.norm(u) * np.linalg.norm(v)))
    return [("frame adjoint is exact", bool(worst <= 1e-11), f"{worst:.1e}")]


def suite_tightness(fault=None) -> list[Row]:
    g, m, omega = _constant_setup()
    bank = build_filter_bank(omega, 1.0, 1.0, g)
    frame = WavePacketTransform(bank, build_ray_tables(m, bank, omega))
    u = _random_field(np.random.default_rng(4), g.shape)
    e_const = _rel(frame.adjoint(frame.forward(u)), u)
    mv, _, fv = _variable_frame()
    e_var = _rel(fv.adjoint(fv.forward(u)), u)
    return [("constant medium frame is tight", e_const <= 1e-6, f"{e_const:.1e}"),
            ("variable medium frame is nearly tight", e_var <= 0.15, f"{e_var:.1e}")]


def suite_eikonal(fault=None) -> list[Row]:
    sym = OneWaySymbol(40 * np.pi)
    n = 64
    dz = 1.0 / n
    z = np.arange(n) * dz
    y = np.linspace(-0.3, 0.3, 61)
    T, _ = solve_eikonal(sym, lambda _y: np.ones(n), y, dz, n, 0.3)
    err = float(np.abs(T - (0.3 * z[None] + y[:, None] * math.sqrt(1 - 0.09))).max())
    rows = [("planar front exact", bool(err <= 5 * (y[1] - y[0])), f"{err:.1e}")]
    errs = [curved_front_error(n) for n in (64, 128, 256)]
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    rows.append(("first-order convergence", all(1.7 <= r <= 2.3 for r in ratios),
                 ", ".join(f"{r:.2f}" for r in ratios)))
    cells, slope_cells = ray_eikonal_mismatch()
    rows.append(("rays agree with eikonal", bool(cells <= 3 and slope_cells <= 3),
                 f"{cells:.2f} cells, slope {slope_cells:.2f} cells"))
    return rows


def ray_eikonal_mismatch(n: int = 64, p: float = 0.2, gradient: float = 0.3,
                         z_starts=(0.0, 0.02, 0.5, 0.97)) -> tuple[float, float]:
    """Compare traced rays with the eikonal tables on ``c = 1 + g sin(2 pi z) / (2 pi)``.

    The medium has the locally linear profile ``c = 1 + g z`` near ``z = 0``.
    The eikonal prediction of the ray through ``z0`` is the point where the
    advected label ``Z0(y, z)`` equals ``z0``; there ``dT/dz`` should equal
    ``zeta / omega``.  Returns the worst position mismatch in cells and the
    worst slope mismatch expressed in cells, i.e. divided by
    ``dz * max |d2T/dz2|``.
    """
    omega = 40 * np.pi
    sym = OneWaySymbol(omega)
    dz = 1.0 / n
    zg = np.arange(n) * dz
    y = np.arange(41) * 0.01

    def c(_y, z):
        return 1 + gradient * np.sin(2 * np.pi * z) / (2 * np.pi)

    def dc(_y, z):
        return gradient * np.cos(2 * np.pi * z)

    T, Z0 = solve_eikonal(sym, lambda yy: c(yy, zg), y, dz, n, p)
    tau = T - p * zg  # periodic part
    Tz = p + (np.roll(tau, -1, axis=1) - np.roll(tau, 1, axis=1)) / (2 * dz)
    Tzz = (np.roll(tau, -1, axis=1) - 2 * tau + np.roll(tau, 1, axis=1)) / dz ** 2
    curv = max(float(np.abs(Tzz).max()), 1e-12)
    worst_pos = worst_slope = 0.0
    for z0 in z_starts:
        _, zr, zeta = trace_bicharacteristics(sym, c, dc, z0, omega * p, y)
        for i in range(y.size):
            f = (Z0[i] - z0 + 0.5) % 1.0 - 0.5
            up = np.flatnonzero((f <= 0) & (np.roll(f, -1) > 0))
            if up.size == 0:
                continue
            cand = zg[up] - f[up] * dz / (np.roll(f, -1)[up] - f[up])
            dist = np.abs((cand - zr[i] + 0.5) % 1.0 - 0.5)
            worst_pos = max(worst_pos, float(dist.min()) / dz)
            zi = zr[i] % 1.0
            slope = np.interp(zi, np.r_[zg, 1.0], np.r_[Tz[i], Tz[i, 0]])
            worst_slope = max(worst_slope, float(abs(slope - zeta[i] / omega)) / (dz * curv))
    return worst_pos, worst_slope


def curved_front_error(n: int, p: float = 0.2, eps: float = 0.01, y_end: float = 0.25) -> float:
    """Max error at ``y_end`` for the front ``T0 = p z + eps cos(2 pi z)`` with ``c = 1``.

    The reference comes from the characteristics ``z = z0 - y H'(q0)``,
    ``T = T0(z0) + y (H(q0) - q0 H'(q0))`` with ``H(q) = sqrt(1 - q^2)``.
    """
    sym = OneWaySymbol(40 * np.pi)
    dz = 1.0 / n
    z = np.arange(n) * dz
    y = np.linspace(0.0, y_end, int(round(y_end / (0.5 * dz))) + 1)
    T, _ = solve_eikonal(sym, lambda _y: np.ones(n), y, dz, n, p,
                         tau0=eps * np.cos(2 * np.pi * z), substeps=1)
    k = 2 * np.pi
    z0 = z.copy()
    for _ in range(50):
        q = p - eps * k * np.sin(k * z0)
        dq = -eps * k ** 2 * np.cos(k * z0)
        dH = -q / np.sqrt(1 - q ** 2)
        d2H = -(1 - q ** 2) ** -1.5
        z0 -= (z0 - y_end * dH - z) / (1 - y_end * d2H * dq)
    q = p - eps * k * np.sin(k * z0)
    H, dH = np.sqrt(1 - q ** 2), -q / np.sqrt(1 - q ** 2)
    exact = p * z0 + eps * np.cos(k * z0) + y_end * (H - q * dH)
    return float(np.abs(T[-1] - exact).max())


def suite_oned(fault=None) -> list[Row]:
    rng = np.random.default_rng(5)
    omega = 20 * np.pi
    worst = 0.0
    for seed in range(1, 4):
        c = oned_medium(MediumClassParams(seed=seed), oned_grid_size(omega, 16, 0.5))
        f = oned_build(c, omega)
        u = _random_field(rng, c.shape)
        worst = max(worst, _rel(oned_adjoint(f, oned_forward(f, u)), u))
    return [("1-D frame is tight", worst <= 1e-10, f"{worst:.1e}")]


def suite_weights(fault=None) -> list[Row]:
    omega = 10 * np.pi
    g = grid_for_ppw(omega, 16, 1.0)
    m = constant_medium(g)
    prep = prepare(m, omega)
    if fault == "weight":
        s = prep.frame.mid_slots()[0]
        prep.weights[s.offset:s.offset + s.size] *= 100.0
    positive = bool(np.all(prep.weights > 0) and np.all(np.isfinite(prep.weights)))
    rep = verify_tile_adaptation(prep.frame, m, omega, prep.weights, tiles_per_band=6)
    _, report = execute(prep, random_rhs(g, 0))
    return [("weights positive", positive, ""),
            ("constant medium tiles adapted", rep.c_max <= 4, f"C_max {rep.c_max:.2f}"),
            ("constant medium solve", report.converged and report.iterations <= 30,
             f"{report.iterations} iterations")]


SUITES: dict[str, Callable[..., list[Row]]] = {
    "operator": suite_operator,
    "bounds": suite_bounds,
    "cutoffs": suite_cutoffs,
    "localization": suite_localization,
    "adjoint": suite_adjoint,
    "tightness": suite_tightness,
    "eikonal": suite_eikonal,
    "oned": suite_oned,
    "weights": suite_weights,
}


def run_suites(names=None, fault: str | None = None) -> dict[str, list[Row]]:
    names = list(SUITES) if not names else list(names)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}")
    results = {}
    for name in names:
        try:
            results[name] = SUITES[name](fault=fault)
        except Exception as exc:  # a crashing suite counts as a failure
            logger.exception("suite %s raised", name)
            results[name] = [(f"{name} raised {type(exc).__name__}", False, str(exc))]
    return results


def failed_suites(results: dict[str, list[Row]]) -> list[str]:
    return [name for name, rows in results.items() if not all(ok for _, ok, _ in rows)]
