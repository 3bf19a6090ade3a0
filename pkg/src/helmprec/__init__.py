"""Frame-based diagonal preconditioning for the 2-D Helmholtz equation.

The preconditioner is a tight frame whose functions near the characteristic
set are built from WKB ray theory (a Lagrangian wave packet transform).
The linear system ``A F* W F y = f`` is solved with LSQR and the solution is
recovered as ``u = F* W F y``.
"""

from .grid import (
    GridSpec,
    Medium,
    MediumClassParams,
    constant_medium,
    dft2,
    grid_for_ppw,
    idft2,
    make_grid,
    read_field,
    sample_medium,
    write_field,
)
from .operator import HelmholtzParams, apply_A, apply_A_adjoint, bounds
from .solver import SolveReport, lsqr, prepare, solve_helmholtz

__all__ = [
    "GridSpec",
    "Medium",
    "MediumClassParams",
    "HelmholtzParams",
    "SolveReport",
    "apply_A",
    "apply_A_adjoint",
    "bounds",
    "constant_medium",
    "dft2",
    "grid_for_ppw",
    "idft2",
    "lsqr",
    "make_grid",
    "prepare",
    "read_field",
    "sample_medium",
    "solve_helmholtz",
    "write_field",
]
