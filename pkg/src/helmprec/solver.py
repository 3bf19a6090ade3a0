"""LSQR on the right-preconditioned system ``A F* W F y = f``."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .filters import DEFAULT_ANGLES, build_filter_bank
from .grid import Medium
from .lwpt import WavePacketTransform, build_weights
from .operator import HelmholtzParams, apply_A, apply_A_adjoint
from .rays import build_ray_tables

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LinearMap:
    apply: Callable[[np.ndarray], np.ndarray]
    apply_adjoint: Callable[[np.ndarray], np.ndarray]
    shape_in: tuple[int, ...]
    shape_out: tuple[int, ...]

    @classmethod
    def identity(cls, shape) -> "LinearMap":
        return cls(lambda x: x.copy(), lambda x: x.copy(), tuple(shape), tuple(shape))

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "LinearMap":
        M = np.asarray(M)
        return cls(lambda x: M @ x, lambda y: M.conj().T @ y, (M.shape[1],), (M.shape[0],))


@dataclass
class SolveReport:
    iterations: int
    residual_history: list[float]
    converged: bool
    prepare_s: float = 0.0
    execute_s: float = 0.0
    final_residual: float = math.nan

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual_history[-1] if self.residual_history else math.nan,
            "prepare_s": round(self.prepare_s, 4),
            "execute_s": round(self.execute_s, 4),
        }


def _norm(x: np.ndarray) -> float:
    return float(np.linalg.norm(x.ravel()))


def lsqr(op: LinearMap, rhs: np.ndarray, tol: float = 1e-5, max_iter: int = 500):
    """Golub-Kahan bidiagonalization LSQR (Paige & Saunders) for complex maps.

    Stops when the residual estimate ``phibar_k / ||rhs||`` drops to ``tol``.
    Returns ``(x, SolveReport)``; non-convergence is reported, not raised.
    """
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    b = np.asarray(rhs, dtype=complex)
    beta1 = _norm(b)
    if beta1 == 0:
        raise ValueError("right-hand side is zero")
    u = b / beta1
    v = op.apply_adjoint(u)
    alpha = _norm(v)
    x = np.zeros(op.shape_in, dtype=complex)
    history = [1.0]
    if alpha == 0:
        return x, SolveReport(0, history, False)
    v = v / alpha
    w = v.copy()
    phibar, rhobar = beta1, alpha
    converged = False
    itn = 0
    while itn < max_iter:
        itn += 1
        u = op.apply(v) - alpha * u
        beta = _norm(u)
        if beta > 0:
            u = u / beta
        v = op.apply_adjoint(u) - beta * v
        alpha = _norm(v)
        if alpha > 0:
            v = v / alpha
        rho = math.hypot(rhobar, beta)
        c, s = rhobar / rho, beta / rho
        theta = s * alpha
        rhobar = -c * alpha
        phi = c * phibar
        phibar = s * phibar
        x = x + (phi / rho) * w
        w = v - (theta / rho) * w
        history.append(phibar / beta1)
        if history[-1] <= tol:
            converged = True
            break
        if alpha == 0:
            break
    return x, SolveReport(itn, history, converged)


def preconditioned_map(A: LinearMap, F, weights: np.ndarray) -> LinearMap:
    """``M = A F* W F`` and ``M* = F* W F A*``; ``F`` needs ``forward``/``adjoint``."""
    def P(u):
        return F.adjoint(weights * F.forward(u))
    return LinearMap(lambda u: A.apply(P(u)), lambda v: P(A.apply_adjoint(v)),
                     A.shape_in, A.shape_out)


def helmholtz_map(params: HelmholtzParams) -> LinearMap:
    shape = params.grid.shape
    return LinearMap(lambda u: apply_A(params, u), lambda u: apply_A_adjoint(params, u),
                     shape, shape)


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-5
    max_iter: int = 500
    ppw: float = 16.0
    angles: tuple[float, ...] = DEFAULT_ANGLES
    bands: int = 2
    overlap: float = 0.33               # band overlap as a fraction of band length
    alpha_reg: float = math.pi / 4
    weight_floor: float | None = None   # None: per-band resolution floor
    refine: int = 1
    steepness: float = 0.5              # gentler windows keep iteration counts flat in omega


@dataclass
class PreparedPreconditioner:
    params: HelmholtzParams
    frame: WavePacketTransform
    weights: np.ndarray
    config: SolverConfig
    prepare_s: float

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.frame.adjoint(self.weights * self.frame.forward(u))


class PrepareCounter:
    calls = 0


def prepare(medium: Medium, omega: float, config: SolverConfig | None = None) -> PreparedPreconditioner:
    """Build filter bank, ray tables and weights; reusable for any right-hand side."""
    config = config or SolverConfig()
    t0 = time.perf_counter()
    PrepareCounter.calls += 1
    params = HelmholtzParams(omega, medium, config.ppw)
    bank = build_filter_bank(omega, medium.c_min, medium.c_max, medium.grid,
                             angles=config.angles, bands=config.bands,
                             overlap=config.overlap, steepness=config.steepness)
    tables = build_ray_tables(medium, bank, omega, config.alpha_reg, config.refine)
    frame = WavePacketTransform(bank, tables)
    weights = build_weights(frame, medium, omega, config.weight_floor)
    dt = time.perf_counter() - t0
    logger.info("prepared preconditioner in %.2fs (%d coefficients)", dt, frame.size)
    return PreparedPreconditioner(params, frame, weights, config, dt)


def execute(prep: PreparedPreconditioner, rhs: np.ndarray, tol: float | None = None,
            max_iter: int | None = None):
    cfg = prep.config
    tol = cfg.tol if tol is None else tol
    max_iter = cfg.max_iter if max_iter is None else max_iter
    t0 = time.perf_counter()
    A = helmholtz_map(prep.params)
    M = preconditioned_map(A, prep.frame, prep.weights)
    y, report = lsqr(M, rhs, tol, max_iter)
    u = prep.apply(y)
    report.execute_s = time.perf_counter() - t0
    report.prepare_s = prep.prepare_s
    report.final_residual = _norm(apply_A(prep.params, u) - rhs) / _norm(rhs)
    return u, report


def solve_helmholtz(medium: Medium, omega: float, rhs: np.ndarray,
                    config: SolverConfig | None = None,
                    prepared: PreparedPreconditioner | None = None):
    prep = prepared if prepared is not None else prepare(medium, omega, config)
    return execute(prep, rhs)


def solve_unpreconditioned(medium: Medium, omega: float, rhs: np.ndarray,
                           tol: float = 1e-5, max_iter: int = 500, ppw: float = 16.0):
    params = HelmholtzParams(omega, medium, ppw)
    t0 = time.perf_counter()
    u, report = lsqr(helmholtz_map(params), rhs, tol, max_iter)
    report.execute_s = time.perf_counter() - t0
    report.final_residual = _norm(apply_A(params, u) - rhs) / _norm(rhs)
    return u, report


def random_rhs(grid, seed: int = 0) -> np.ndarray:
    """Complex standard normal right-hand side."""
    rng = np.random.default_rng(seed)
    return (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) / math.sqrt(2)
