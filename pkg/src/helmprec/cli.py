"""``helmprec`` command-line driver.

Subcommands: ``gen-medium``, ``solve``, ``sweep-freq``, ``histogram`` and
``verify``.  Every option can also be given in a ``--config`` file of
``key = value`` lines; command-line flags take precedence.

Exit codes: 0 success, 1 usage or I/O error, 2 non-convergence.  ``verify``
exits with the number of failed suites.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import re
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

from scipy.stats import spearmanr

from .filters import DEFAULT_ANGLES, NyquistError
from .grid import (
    FieldFormatError,
    GridSpec,
    MediumClassParams,
    grid_for_ppw,
    make_grid,
    medium_extremes,
    medium_from_field,
    read_field,
    resample_periodic,
    sample_medium,
    write_field,
)
from .solver import SolverConfig, execute, prepare, random_rhs

logger = logging.getLogger("helmprec")

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2

SWEEP_COLUMNS = ("omega", "iterations", "prepare_s", "execute_s", "converged", "n")
HISTOGRAM_COLUMNS = ("seed", "c_min", "c_max", "iterations", "converged")
RESIDUAL_COLUMNS = ("iteration", "residual")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    omega: float | None = None
    alpha: float = 2 * math.pi
    nw: float = 16.0
    tol: float = 1e-5
    max_iter: int = 500
    seed: int = 0
    angles: int = 8
    bands: int = 2
    out: str = "."
    medium: str | None = None
    n: int | None = None
    contrast: float = 1.0
    omegas: str = "10pi,20pi,40pi"
    n_media: int = 20
    workers: int = 1

    def solver_config(self) -> SolverConfig:
        return SolverConfig(tol=self.tol, max_iter=self.max_iter, ppw=self.nw,
                            angles=angle_list(self.angles), bands=self.bands)


def angle_list(n_angles: int) -> tuple[float, ...]:
    if n_angles == 8:
        return DEFAULT_ANGLES
    if n_angles == 4:
        return (-180.0, -90.0, 0.0, 90.0)
    raise UsageError("--angles must be 4 or 8 (directions on the grid lattice)")


def parse_number(text: str) -> float:
    """Parse ``"40pi"``, ``"40*pi"``, ``"pi"`` or a plain number."""
    t = text.strip().lower().replace(" ", "")
    m = re.fullmatch(r"([0-9.eE+-]*)\*?pi", t)
    try:
        if m:
            return (float(m.group(1)) if m.group(1) else 1.0) * math.pi
        return float(t)
    except ValueError:
        raise UsageError(f"cannot parse number {text!r}") from None


def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment, dashes and underscores are equivalent."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{num}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(name: str, value):
    if value is None:
        return None
    if name in ("omega", "alpha"):
        return parse_number(str(value))
    if name in ("nw", "tol", "contrast"):
        return float(value)
    if name in ("max_iter", "seed", "angles", "bands", "n", "n_media", "workers"):
        return int(value)
    return str(value)


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    values: dict = {}
    if args.config:
        for key, value in read_config(args.config).items():
            if key == "ppw":
                key = "nw"
            if key not in known:
                raise UsageError(f"unknown config key {key!r}")
            values[key] = value
    for key in known:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    try:
        cfg = ExperimentConfig(**{k: _coerce(k, v) for k, v in values.items()})
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not 10 <= cfg.nw <= 40:
        raise UsageError("points per wavelength must lie in [10, 40]")
    if not 0 < cfg.tol < 1:
        raise UsageError("--tol must lie in (0, 1)")
    angle_list(cfg.angles)
    return cfg


def summary_line(**items) -> str:
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return f"{v:.6g}"
        if isinstance(v, str):
            return f'"{v}"'
        return str(v)
    return "{" + ", ".join(f'"{k}": {fmt(v)}' for k, v in items.items()) + "}"


def _class_params(cfg: ExperimentConfig, seed: int) -> MediumClassParams:
    base = MediumClassParams(seed=seed)
    terms = tuple((a * cfg.contrast, k1, k2) for a, k1, k2 in base.terms)
    return replace(base, terms=terms)


def _class_grid(cfg: ExperimentConfig, params: MediumClassParams, omega: float | None) -> GridSpec:
    if cfg.n is not None:
        return make_grid(cfg.n, cfg.n)
    if omega is None:
        raise UsageError("give --omega or --n to size the grid")
    c_min, _ = medium_extremes(params)
    return grid_for_ppw(omega, cfg.nw, c_min)


def _load_medium(cfg: ExperimentConfig, omega: float | None):
    """Medium from ``--medium`` (resampled to the ppw grid when ``omega`` is set)."""
    try:
        c, grid = read_field(cfg.medium)
    except (OSError, FieldFormatError) as exc:
        raise UsageError(f"cannot read medium {cfg.medium}: {exc}") from None
    if omega is not None:
        target = grid_for_ppw(omega, cfg.nw, float(c.min()), grid.Lx)
        if target.shape != grid.shape:
            c = resample_periodic(c, target.shape)
            grid = target
    return medium_from_field(c, grid, cfg.alpha, grid.Lx)


def _default_omega(cfg: ExperimentConfig, medium) -> float:
    if cfg.omega is not None:
        return cfg.omega
    return 2 * math.pi * medium.c_min / (cfg.nw * medium.grid.h)


def cmd_gen_medium(cfg: ExperimentConfig) -> int:
    params = _class_params(cfg, cfg.seed)
    grid = _class_grid(cfg, params, cfg.omega)
    m = sample_medium(params, grid, cfg.alpha)
    out = Path(cfg.out)
    if out.suffix == "" or out.is_dir():
        out = out / f"medium_{cfg.seed}.hfld"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_field(out, m.c, grid)
    print(summary_line(file=str(out), n=grid.nx, c_min=m.c_min, c_max=m.c_max, c_mean=m.c_mean))
    return EXIT_OK


def cmd_solve(cfg: ExperimentConfig) -> int:
    if cfg.medium is None:
        raise UsageError("solve needs --medium")
    m = _load_medium(cfg, cfg.omega)
    omega = _default_omega(cfg, m)
    prep = prepare(m, omega, cfg.solver_config())
    u, report = execute(prep, random_rhs(m.grid, cfg.seed))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_field(out / "solution_re.hfld", u.real, m.grid)
    write_field(out / "solution_im.hfld", u.imag, m.grid)
    with open(out / "residuals.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESIDUAL_COLUMNS)
        for i, r in enumerate(report.residual_history):
            w.writerow((i, f"{r:.10e}"))
    line = summary_line(omega=omega, n=m.grid.nx, **report.summary(),
                        true_residual=report.final_residual)
    (out / "summary.txt").write_text(line + "\n")
    print(line)
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def sweep_rows(cfg: ExperimentConfig, omegas) -> list[dict]:
    rows = []
    for omega in omegas:
        if cfg.medium is not None:
            m = _load_medium(cfg, omega)
        else:
            params = _class_params(cfg, cfg.seed)
            m = sample_medium(params, _class_grid(replace(cfg, n=None), params, omega), cfg.alpha)
        prep = prepare(m, omega, cfg.solver_config())
        _, report = execute(prep, random_rhs(m.grid, cfg.seed))
        rows.append(dict(omega=omega, iterations=report.iterations, prepare_s=report.prepare_s,
                         execute_s=report.execute_s, converged=report.converged, n=m.grid.nx))
        logger.info("omega %.4g: %d iterations", omega, report.iterations)
    return rows


def _write_csv(path: Path, columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})


def cmd_sweep_freq(cfg: ExperimentConfig) -> int:
    omegas = [parse_number(t) for t in cfg.omegas.split(",") if t.strip()]
    if not omegas:
        raise UsageError("--omegas is empty")
    if any(b <= a for a, b in zip(omegas, omegas[1:])):
        raise UsageError("--omegas must be strictly ascending")
    rows = sweep_rows(cfg, omegas)
    _write_csv(Path(cfg.out) / "sweep.csv", SWEEP_COLUMNS, rows)
    print(summary_line(runs=len(rows), iterations=",".join(str(r["iterations"]) for r in rows),
                       all_converged=all(r["converged"] for r in rows)))
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NOT_CONVERGED


def histogram_row(cfg: ExperimentConfig, omega: float, seed: int) -> dict:
    try:
        params = _class_params(cfg, seed)
        m = sample_medium(params, _class_grid(replace(cfg, n=None), params, omega), cfg.alpha)
        _, report = execute(prepare(m, omega, cfg.solver_config()), random_rhs(m.grid, seed))
        return dict(seed=seed, c_min=m.c_min, c_max=m.c_max, iterations=report.iterations,
                    converged=report.converged)
    except Exception as exc:  # recorded, the run continues
        logger.error("medium %d failed: %s", seed, exc)
        return dict(seed=seed, c_min=math.nan, c_max=math.nan, iterations=-1, converged=False)


def histogram_rows(cfg: ExperimentConfig, omega: float) -> list[dict]:
    seeds = [cfg.seed + i for i in range(cfg.n_media)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            return list(pool.map(histogram_row, [cfg] * len(seeds), [omega] * len(seeds), seeds))
    return [histogram_row(cfg, omega, s) for s in seeds]


def spearman(x, y) -> float:
    """Rank correlation, ``nan`` when either sample is constant."""
    if len(set(x)) < 2 or len(set(y)) < 2:
        return math.nan
    return float(spearmanr(x, y).statistic)


def cmd_histogram(cfg: ExperimentConfig) -> int:
    if cfg.n_media < 1:
        raise UsageError("--n-media must be at least 1")
    omega = cfg.omega if cfg.omega is not None else 40 * math.pi
    rows = histogram_rows(cfg, omega)
    _write_csv(Path(cfg.out) / "histogram.csv", HISTOGRAM_COLUMNS, rows)
    its = [r["iterations"] for r in rows if r["converged"]]
    contrast = [r["c_max"] / r["c_min"] for r in rows if r["converged"]]
    rho = spearman(contrast, its) if len(its) > 1 else math.nan
    logger.info("Spearman correlation of contrast and iterations: %.3f", rho)
    print(summary_line(media=len(rows), converged=len(its),
                       min=min(its) if its else -1,
                       median=float(statistics.median(its)) if its else math.nan,
                       max=max(its) if its else -1, spearman=rho))
    return EXIT_OK if len(its) == len(rows) else EXIT_NOT_CONVERGED


def cmd_verify(cfg: ExperimentConfig, suites=None, fault=None) -> int:
    from .verify import failed_suites, run_suites

    try:
        results = run_suites(suites, fault=fault)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    width = max(len(name) for rows in results.values() for name, _, _ in rows)
    for suite, rows in results.items():
        for name, ok, detail in rows:
            print(f"{'PASS' if ok else 'FAIL'}  {suite:<12} {name:<{width}}  {detail}")
    failed = failed_suites(results)
    print(summary_line(suites=len(results), failed=len(failed)))
    return min(len(failed), 125)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file with defaults for any flag")
    common.add_argument("--omega", help="angular frequency, e.g. 40pi")
    common.add_argument("--alpha", help="damping parameter (default 2pi)")
    common.add_argument("--ppw", "--nw", dest="nw", type=float, help="points per wavelength (default 16)")
    common.add_argument("--tol", type=float, help="LSQR relative residual tolerance (default 1e-5)")
    common.add_argument("--max-iter", dest="max_iter", type=int, help="iteration cap (default 500)")
    common.add_argument("--seed", type=int, help="medium seed, right-hand side seed (default 0)")
    common.add_argument("--angles", type=int, help="number of directions, 4 or 8 (default 8)")
    common.add_argument("--bands", type=int, help="bands per axial direction (default 2)")
    common.add_argument("--medium", help="HFLD1 velocity file")
    common.add_argument("--out", help="output file or directory (default .)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    p = argparse.ArgumentParser(prog="helmprec", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    g = sub.add_parser("gen-medium", parents=[common], help="write a random class medium")
    g.add_argument("--n", type=int, help="grid points per side (else from --omega and --nw)")
    g.add_argument("--contrast", type=float, help="scale of the medium perturbation (0 gives c = 1)")
    sub.add_parser("solve", parents=[common], help="solve with a random right-hand side")
    w = sub.add_parser("sweep-freq", parents=[common], help="iterations against frequency")
    w.add_argument("--omegas", help="comma separated ascending frequencies (default 10pi,20pi,40pi)")
    w.add_argument("--contrast", type=float, help="scale of the medium perturbation")
    h = sub.add_parser("histogram", parents=[common], help="iterations over many media")
    h.add_argument("--n-media", dest="n_media", type=int, help="number of media (default 20)")
    h.add_argument("--workers", type=int, help="parallel worker processes (default 1)")
    h.add_argument("--contrast", type=float, help="scale of the medium perturbation")
    v = sub.add_parser("verify", parents=[common], help="run the self-check suites")
    v.add_argument("--suite", action="append", help="run only this suite (repeatable)")
    v.add_argument("--inject-fault", dest="inject_fault", help=argparse.SUPPRESS)
    return p


COMMANDS = {
    "gen-medium": cmd_gen_medium,
    "solve": cmd_solve,
    "sweep-freq": cmd_sweep_freq,
    "histogram": cmd_histogram,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        if args.command == "verify":
            return cmd_verify(cfg, args.suite, args.inject_fault)
        return COMMANDS[args.command](cfg)
    except (UsageError, NyquistError, OSError) as exc:
        print(f"helmprec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
