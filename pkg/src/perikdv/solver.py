"""Corrector fixed-point iteration around the KdV predictor.

With W = W0 + eps^2 V the profile equation B W = Q[W] + eps^2 P[W] becomes

    L V = K + E + eps^2 Q[V] + eps^2 N[V],   L = B - M,

and V is found by iterating V <- L^{-1}(right-hand side) from V = 0.  Each
inverse is a preconditioned MINRES solve restricted to even profiles.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .constitutive import ConstitutiveModel, build_moment_table
from .errors import (FormMismatch, InnerSolveStalled, LeftTrustRegion, NotContracting,
                     NotConverged, PerikdvError)
from .grid import Grid, json_safe, write_profile_csv
from .kdv import consistency_residual
from .krylov import minres
from .operators import OperatorContext

log = logging.getLogger(__name__)

CONTRACTION_LIMIT = 0.95
CONTRACTION_STRIKES = 3


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 0.2
    outer_tol: float = 1e-10
    max_outer: int = 60
    inner_tol: float = 1e-12
    max_inner: int = 2000
    trust_radius: float | None = None
    continuation: bool = True

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.outer_tol <= 0 or self.inner_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_outer <= 0 or self.max_inner <= 0:
            raise ValueError("iteration limits must be positive")
        if self.trust_radius is not None and self.trust_radius <= 0:
            raise ValueError("trust_radius must be positive")


@dataclass
class LinearSolve:
    v: np.ndarray
    iterations: int
    relative_residual: float
    residual_history: list


def solve_linear_L(ctx: OperatorContext, g: np.ndarray, tol: float = 1e-12,
                   max_inner: int = 2000) -> LinearSolve:
    """Even solution of L_eps v = g to relative residual ``tol`` in L2.

    MINRES is preconditioned by B_eps^{-1} and restarted on the true
    residual until the unpreconditioned tolerance holds.
    """
    grid = ctx.grid
    even = grid.project_even
    g = even(g)
    gnorm = grid.l2_norm(g)
    if gnorm == 0.0:
        return LinearSolve(np.zeros_like(g), 0, 0.0, [0.0])

    def op(v):
        return even(ctx.apply_L(v))

    v = np.zeros_like(g)
    r = g
    used = 0
    history: list = []
    last = None
    while True:
        rnorm = grid.l2_norm(r)
        if rnorm <= tol * gnorm:
            return LinearSolve(v, used, rnorm / gnorm, history)
        budget = max_inner - used
        if budget <= 0:
            break
        target = min(0.5, 0.1 * tol * gnorm / rnorm)
        res = minres(op, r, precond=lambda u: even(ctx.apply_B_inv(u)),
                     rtol=max(target, 1e-15), maxiter=budget)
        last = res
        used += res.iterations
        history.extend(res.residual_history if not history else res.residual_history[1:])
        if res.iterations == 0:
            break
        v_new = v + res.x
        r_new = g - op(v_new)
        if grid.l2_norm(r_new) >= rnorm and not res.converged:
            break
        v, r = v_new, r_new
    ritz = last.ritz_values() if last is not None else np.array([])
    min_ritz = float(np.min(np.abs(ritz))) if ritz.size else None
    raise InnerSolveStalled(
        f"L_eps solve at eps={ctx.epsilon:g} stopped at relative residual "
        f"{grid.l2_norm(r) / gnorm:.2e} after {used} iterations", min_ritz=min_ritz, iterations=used)


@dataclass
class WaveSolution:
    epsilon: float
    grid: Grid
    W0: np.ndarray
    V_eps: np.ndarray
    c0_sq: float
    outer_history: list = field(default_factory=list)
    final_residual: float = math.nan
    inner_iteration_counts: list = field(default_factory=list)
    config: SolverConfig | None = None

    @property
    def W_eps(self) -> np.ndarray:
        return self.W0 + self.epsilon**2 * self.V_eps

    @property
    def c_eps(self) -> float:
        return math.sqrt(self.c0_sq + self.epsilon**2)

    @property
    def outer_iterations(self) -> int:
        return len(self.outer_history)

    def norms(self) -> dict:
        g = self.grid
        return {"V_eps_l2": g.l2_norm(self.V_eps),
                "W_minus_W0_l2": g.l2_norm(self.W_eps - self.W0),
                "W0_l2": g.l2_norm(self.W0),
                "W_eps_l2": g.l2_norm(self.W_eps)}

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "c_eps": self.c_eps,
            "c0_sq": self.c0_sq,
            "grid": self.grid.to_dict(),
            "config": asdict(self.config) if self.config else None,
            "outer_history": [{"iteration": i, "step_norm": s, "contraction_ratio": r}
                              for i, s, r in self.outer_history],
            "inner_iteration_counts": list(self.inner_iteration_counts),
            "final_residual": self.final_residual,
            "norms": self.norms(),
        }

    def write(self, json_path: str | Path, csv_path: str | Path,
              header_lines: tuple[str, ...] = (), extra: dict | None = None) -> None:
        payload = self.to_json()
        payload.update(extra or {})
        Path(json_path).write_text(json.dumps(json_safe(payload), indent=2, allow_nan=False) + "\n")
        write_profile_csv(csv_path, self.grid,
                          {"W0": self.W0, "W_eps": self.W_eps, "V_eps": self.V_eps}, header_lines)


def verify_solution(ctx: OperatorContext, sol: WaveSolution) -> float:
    """Residual of the profile equation in operator form and in the unscaled form.

    The unscaled residual is divided by eps^4, the algebraic factor between
    the two forms; FormMismatch is raised if the two disagree.
    """
    W = sol.W_eps
    eps4 = ctx.epsilon**4
    r_op = ctx.grid.l2_norm(ctx.residual(W))
    r_eig = ctx.grid.l2_norm(ctx.eigen_residual(W, sol.c_eps**2)) / eps4
    if abs(r_op - r_eig) > 1e-9 + 1e-6 * max(r_op, r_eig):
        raise FormMismatch(f"operator-form residual {r_op:.3e} vs scaled unscaled-form "
                           f"residual {r_eig:.3e}")
    return max(r_op, r_eig)


def _corrector_map(ctx: OperatorContext, cfg: SolverConfig, base: np.ndarray, E: np.ndarray):
    eps2 = ctx.epsilon**2
    even = ctx.grid.project_even

    def F(V):
        rhs = base + eps2 * ctx.apply_Q(V)
        if ctx.model.has_remainder:
            rhs = rhs + (ctx.apply_P(ctx.W0 + eps2 * V) - E)
        return solve_linear_L(ctx, even(rhs), cfg.inner_tol, cfg.max_inner)

    return F


def fixed_point_solve(ctx: OperatorContext, cfg: SolverConfig,
                      V_start: np.ndarray | None = None) -> WaveSolution:
    """Contraction iteration for the corrector V_eps.

    Raises NotContracting after three consecutive step ratios above 0.95
    (after one retry from a continuation start at 1.5 eps when enabled),
    LeftTrustRegion if an iterate leaves the ball of radius
    ``cfg.trust_radius`` (default: twice the norm of F[0]).
    """
    if abs(cfg.epsilon - ctx.epsilon) > 1e-15:
        cfg = replace(cfg, epsilon=ctx.epsilon)
    try:
        return _iterate(ctx, cfg, V_start)
    except NotContracting:
        if not cfg.continuation or 1.5 * ctx.epsilon > 1.0:
            raise
        log.info("eps=%g not contracting; retrying from the eps=%g corrector",
                 ctx.epsilon, 1.5 * ctx.epsilon)
        wide = OperatorContext.build(ctx.model, ctx.grid, 1.5 * ctx.epsilon, moments=ctx.moments)
        try:
            start = _iterate(wide, replace(cfg, epsilon=wide.epsilon, continuation=False), None)
        except PerikdvError:
            raise NotContracting(
                f"contraction ratio stayed above {CONTRACTION_LIMIT} at eps={ctx.epsilon:g} "
                "and the continuation start failed") from None
        return _iterate(ctx, replace(cfg, continuation=False), start.V_eps)


def _iterate(ctx: OperatorContext, cfg: SolverConfig, V_start) -> WaveSolution:
    grid = ctx.grid
    even = grid.project_even
    K, E = ctx.consistency_terms()
    F = _corrector_map(ctx, cfg, even(K + E), E)

    inner_counts = []
    first = None
    V = np.zeros(grid.N) if V_start is None else even(np.asarray(V_start, dtype=float))
    D = cfg.trust_radius
    if D is None:
        first = F(np.zeros(grid.N))
        inner_counts.append(first.iterations)
        D = 2.0 * grid.l2_norm(first.v) or math.inf
    sol = WaveSolution(epsilon=ctx.epsilon, grid=grid, W0=ctx.W0, V_eps=V,
                       c0_sq=ctx.moments.c0_sq, config=cfg)

    prev_step = None
    strikes = 0
    for n in range(1, cfg.max_outer + 1):
        if n == 1 and first is not None and V_start is None:
            step_res = first
        else:
            step_res = F(V)
            inner_counts.append(step_res.iterations)
        V_new = step_res.v
        step = grid.l2_norm(V_new - V)
        ratio = step / prev_step if prev_step else math.nan
        sol.outer_history.append((n, step, ratio))
        V = V_new
        log.debug("eps=%g iter %d step %.3e ratio %.3f", ctx.epsilon, n, step, ratio)
        if grid.l2_norm(V) > D:
            raise LeftTrustRegion(f"|V|_2 = {grid.l2_norm(V):.3e} left the ball of radius {D:.3e} "
                                  f"at eps={ctx.epsilon:g}, iteration {n}")
        strikes = strikes + 1 if ratio > CONTRACTION_LIMIT else 0
        if strikes >= CONTRACTION_STRIKES:
            raise NotContracting(f"contraction ratio {ratio:.3f} > {CONTRACTION_LIMIT} for "
                                 f"{CONTRACTION_STRIKES} consecutive iterations at eps={ctx.epsilon:g}")
        if step < cfg.outer_tol:
            sol.V_eps = V
            sol.inner_iteration_counts = inner_counts
            sol.final_residual = verify_solution(ctx, sol)
            if sol.final_residual <= 10 * cfg.outer_tol:
                return sol
        prev_step = step
    sol.V_eps = V
    sol.inner_iteration_counts = inner_counts
    raise NotConverged(f"no convergence in {cfg.max_outer} outer iterations at eps={ctx.epsilon:g} "
                       f"(last step {sol.outer_history[-1][1]:.3e})")


# ---------------------------------------------------------------------------
# epsilon sweeps

SWEEP_COLUMNS = ("epsilon", "W_minus_W0_l2", "V_eps_l2", "final_residual", "outer_iterations",
                 "max_contraction_ratio", "norm_K", "norm_E", "status")


@dataclass
class ConvergenceTable:
    rows: list
    slope: float

    def ok_rows(self) -> list:
        return [r for r in self.rows if r["status"] == "ok"]

    def to_csv(self, path: str | Path, header_lines: tuple[str, ...] = ()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write(f"# slope: {self.slope!r}\n")
            fh.write(",".join(SWEEP_COLUMNS) + "\n")
            for r in self.rows:
                fh.write(",".join(_fmt(r[c]) for c in SWEEP_COLUMNS) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def fit_slope(eps, values) -> float:
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    if eps.size < 3:
        return math.nan
    A = np.vstack([np.log(eps), np.ones_like(eps)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(values), rcond=None)
    return float(coef[0])


def _sweep_one(args) -> dict:
    model, grid, cfg = args
    row = {"epsilon": cfg.epsilon, "W_minus_W0_l2": math.nan, "V_eps_l2": math.nan,
           "final_residual": math.nan, "outer_iterations": 0, "max_contraction_ratio": math.nan,
           "norm_K": math.nan, "norm_E": math.nan}
    try:
        ctx = OperatorContext.build(model, grid, cfg.epsilon)
        report = consistency_residual(ctx)
        row.update(norm_K=report.norm_K, norm_E=report.norm_E)
        sol = fixed_point_solve(ctx, cfg)
    except PerikdvError as exc:
        row["status"] = type(exc).__name__
        return row
    norms = sol.norms()
    ratios = [r for _, _, r in sol.outer_history if math.isfinite(r)]
    row.update(W_minus_W0_l2=norms["W_minus_W0_l2"], V_eps_l2=norms["V_eps_l2"],
               final_residual=sol.final_residual, outer_iterations=sol.outer_iterations,
               max_contraction_ratio=max(ratios[1:], default=math.nan), status="ok")
    return row


def epsilon_sweep(model: ConstitutiveModel, grid: Grid | None, eps_list,
                  cfg: SolverConfig | None = None, workers: int = 1) -> ConvergenceTable:
    """Independent solves for each epsilon, assembled in descending epsilon order.

    Results do not depend on ``workers``: each solve is self-contained and
    rows are collected by a single caller.
    """
    eps_sorted = sorted((float(e) for e in eps_list), reverse=True)
    if any(not 0 < e <= 1 for e in eps_sorted):
        raise ValueError("sweep epsilons must lie in (0, 1]")
    cfg = cfg or SolverConfig()
    if grid is None:
        grid = Grid.for_kdv(build_moment_table(model).d1)
    jobs = [(model, grid, replace(cfg, epsilon=e)) for e in eps_sorted]
    if workers <= 1 or len(jobs) == 1:
        rows = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    ok = [r for r in rows if r["status"] == "ok"]
    slope = fit_slope([r["epsilon"] for r in ok], [r["W_minus_W0_l2"] for r in ok])
    return ConvergenceTable(rows=rows, slope=slope)
