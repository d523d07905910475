"""Command-line front end: ``perikdv <command> --config run.cfg``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import checks
from .config import RunConfig, build_grid, build_model, load_config, solver_config
from .constitutive import build_moment_table, build_xi_quadrature
from .dynamics import PhysGrid, default_phys_grid, simulate
from .errors import AssumptionViolated, ConfigError, PerikdvError
from .grid import json_safe
from .operators import OperatorContext, build_symbols
from .solver import epsilon_sweep, fixed_point_solve

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4, 5


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _setup(cfg: RunConfig):
    model = build_model(cfg)
    moments = build_moment_table(model)
    return model, moments, build_grid(cfg, moments.d1)


def _json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(json_safe(payload), indent=2, allow_nan=False) + "\n")


def cmd_moments(cfg: RunConfig) -> int:
    model = build_model(cfg)
    moments = build_moment_table(model)
    path = _outdir(cfg) / "moments.json"
    _json(path, {"config_hash": cfg.hash, "family": model.family, "params": model.params,
                 **moments.to_dict()})
    print(f"d1 = {moments.d1!r}, d2 = {moments.d2!r}, c0_sq = {moments.c0_sq!r} -> {path}")
    return EXIT_OK


def cmd_symbol(cfg: RunConfig, epsilon: float) -> int:
    model, moments, grid = _setup(cfg)
    quad = build_xi_quadrature(model, max_frequency=epsilon * grid.k_max)
    sym = build_symbols(grid, model, moments, quad, epsilon)
    path = _outdir(cfg) / f"symbol_eps{epsilon:g}.csv"
    sym.to_csv(path, cfg.header_lines() + (f"epsilon: {epsilon!r}",
                                           f"b_eps_infty: {sym.b_eps_infty!r}", f"C1: {sym.C1!r}"))
    print(f"b_eps plateau {sym.b_eps_infty:.6g}, cut-off |k| <= {sym.C1 / epsilon:.6g} -> {path}")
    return EXIT_OK


def _solve(cfg: RunConfig, epsilon: float):
    model, moments, grid = _setup(cfg)
    ctx = OperatorContext.build(model, grid, epsilon, moments=moments)
    return model, fixed_point_solve(ctx, solver_config(cfg, epsilon))


def cmd_solve(cfg: RunConfig, epsilon: float) -> int:
    _, sol = _solve(cfg, epsilon)
    out = _outdir(cfg)
    stem = f"solution_eps{epsilon:g}"
    sol.write(out / f"{stem}.json", out / f"{stem}.csv", cfg.header_lines(),
              extra={"config_hash": cfg.hash})
    print(f"eps={epsilon:g}: {sol.outer_iterations} iterations, residual {sol.final_residual:.2e}, "
          f"|V_eps| = {sol.norms()['V_eps_l2']:.6g}, c_eps = {sol.c_eps:.10g} -> {out / stem}.json/.csv")
    return EXIT_OK


def default_workers() -> int:
    workers = os.cpu_count() or 1
    cap = os.environ.get("PERIKDV_THREADS")
    if cap:
        try:
            workers = min(workers, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"PERIKDV_THREADS must be an integer, got {cap!r}") from None
    return workers


def cmd_sweep(cfg: RunConfig, workers: int | None = None) -> int:
    model, moments, grid = _setup(cfg)
    table = epsilon_sweep(model, grid, cfg.sweep.epsilons, solver_config(cfg),
                          workers=workers or default_workers())
    path = _outdir(cfg) / "sweep.csv"
    table.to_csv(path, cfg.header_lines())
    for row in table.rows:
        print(f"eps={row['epsilon']:g}: {row['status']}, |W_eps - W0| = {row['W_minus_W0_l2']:.6g}, "
              f"residual {row['final_residual']:.2e}")
    print(f"slope {table.slope:.4f} -> {path}")
    return EXIT_OK if len(table.ok_rows()) == len(table.rows) else EXIT_SOLVER


def cmd_simulate(cfg: RunConfig) -> int:
    dyn = cfg.dynamics
    model, sol = _solve(cfg, cfg.solver.epsilon)
    try:
        pg = PhysGrid(dyn.Ly, dyn.Ny) if dyn.Ly is not None else default_phys_grid(sol, model.horizon)
        result = simulate(sol, model, pg, dt=dyn.dt, t_end=dyn.t_end, stride=dyn.stride)
    except ValueError as exc:
        raise ConfigError(str(exc), field="dynamics") from None
    out = _outdir(cfg) / "simulate"
    out.mkdir(exist_ok=True)
    for i, snap in enumerate(result.snapshots):
        _write_snapshot(out / f"snapshot_{i:04d}.csv", pg, snap, cfg.header_lines())
    summary = {"config_hash": cfg.hash, "epsilon": sol.epsilon, "grid": pg.to_dict(), **result.summary()}
    _json(out / "summary.json", summary)
    print(f"speed {result.speed:.8g} vs c_eps {result.c_eps:.8g} "
          f"({summary['relative_speed_error']:.2e} relative), shape drift {result.shape_drift:.2e} -> {out}")
    return EXIT_OK


def _write_snapshot(path: Path, pg: PhysGrid, snap, header_lines) -> None:
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(f"# t: {snap.t!r}\n# strain_offset: {snap.strain_offset!r}\ny,u,du\n")
        for y, u, du in zip(pg.y, snap.u, snap.du):
            fh.write(f"{float(y)!r},{float(u)!r},{float(du)!r}\n")


def cmd_check(cfg: RunConfig) -> int:
    model, moments, grid = _setup(cfg)
    results = checks.run_suite(model, grid, moments, seed=cfg.seed)
    lines = [r.line() for r in results]
    (_outdir(cfg) / "check_report.txt").write_text(
        "".join(f"# {h}\n" for h in cfg.header_lines()) + "\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


COMMANDS = ("moments", "symbol", "solve", "sweep", "simulate", "check")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="perikdv", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--epsilon", type=float, help="override solver.epsilon")
    p.add_argument("--out", help="override output.dir")
    p.add_argument("--workers", type=int, help="sweep worker processes (default: CPUs, capped by PERIKDV_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.epsilon is not None:
            if not 0 < args.epsilon <= 1:
                raise ConfigError("must lie in (0, 1]", field="--epsilon")
            cfg = cfg.with_epsilon(args.epsilon)
        if args.out:
            cfg = cfg.with_output(args.out)
        eps = cfg.solver.epsilon
        if args.command == "moments":
            return cmd_moments(cfg)
        if args.command == "symbol":
            return cmd_symbol(cfg, eps)
        if args.command == "solve":
            return cmd_solve(cfg, eps)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.workers)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        return cmd_check(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionViolated as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except PerikdvError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
