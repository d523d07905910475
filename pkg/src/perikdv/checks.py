"""Property suite behind ``perikdv check``.

Each check returns a CheckResult; none of them raises on a failed property,
so a report always lists every check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constitutive import ConstitutiveModel, MomentTable
from .grid import Grid
from .operators import OperatorContext, apply_A, lower_bound_constant
from .solver import fit_slope

SWEEP = (0.4, 0.2, 0.1, 0.05)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _random_profiles(grid: Grid, rng, count: int) -> list[np.ndarray]:
    # smooth-ish random profiles: white noise filtered to the lower half of the spectrum
    out = []
    for _ in range(count):
        s = np.fft.rfft(rng.standard_normal(grid.N))
        s[grid.N // 4:] = 0.0
        out.append(np.fft.irfft(s, n=grid.N))
    return out


def check_averaging_bounds(grid: Grid, rng) -> CheckResult:
    worst_l2 = worst_inf = 0.0
    for p in _random_profiles(grid, rng, 10):
        n2 = grid.l2_norm(p)
        for eta in (0.4, 0.1, 0.02):
            q = apply_A(grid, eta, p)
            worst_l2 = max(worst_l2, grid.l2_norm(q) / n2)
            worst_inf = max(worst_inf, np.max(np.abs(q)) * math.sqrt(eta) / n2)
    ok = worst_l2 <= 1 + 1e-12 and worst_inf <= 1 + 1e-12
    return CheckResult("averaging norm bounds", ok,
                       f"max |A p|/|p| = {worst_l2:.6f}, max sqrt(eta)|A p|_inf/|p| = {worst_inf:.6f}")


def check_cone_invariance(grid: Grid, W0: np.ndarray) -> CheckResult:
    ok = True
    for eta in (0.4, 0.2, 0.1):
        q = apply_A(grid, eta, W0)
        even = np.max(np.abs(q - grid.reflect(q))) <= 1e-12 * np.max(q)
        nonneg = np.min(q) >= -1e-12
        i0 = int(np.argmax(q))
        left, right = np.diff(q[: i0 + 1]), np.diff(q[i0:])
        unimodal = np.all(left[:-1] >= -1e-12) and np.all(right[1:] <= 1e-12)
        unimodal = unimodal and abs(grid.x[i0]) <= grid.h
        ok = ok and even and nonneg and unimodal
    return CheckResult("averaging cone invariance", bool(ok), "even, nonnegative, unimodal")


def averaging_slopes(grid: Grid, W: np.ndarray, etas=SWEEP) -> tuple[float, float]:
    W2 = grid.derivative(W, 2)
    e1, e2 = [], []
    for eta in etas:
        d = apply_A(grid, eta, W) - W
        e1.append(grid.l2_norm(d))
        e2.append(grid.l2_norm(d - eta**2 / 24.0 * W2))
    return fit_slope(etas, e1), fit_slope(etas, e2)


def check_averaging_expansion(grid: Grid, W0: np.ndarray) -> CheckResult:
    s1, s2 = averaging_slopes(grid, W0)
    ok = abs(s1 - 2) <= 0.1 and abs(s2 - 4) <= 0.1
    return CheckResult("averaging expansion orders", ok, f"slopes {s1:.3f} (2), {s2:.3f} (4)")


def check_symbol_identities(ctx: OperatorContext, rng) -> CheckResult:
    sym = ctx.symbols
    worst = 0.0
    for p in _random_profiles(ctx.grid, rng, 5):
        Bp = ctx.apply_B(p)
        worst = max(worst, np.max(np.abs(Bp - ctx.apply_B_direct(p))) / np.max(np.abs(Bp)))
    quad_c0 = float(np.sum(ctx.quad.weights * ctx.model.alpha(ctx.quad.nodes) * ctx.quad.nodes**2))
    plateau = abs(1 + quad_c0 / ctx.epsilon**2 - sym.b_eps_infty) / sym.b_eps_infty
    bounded = bool(np.all(sym.b_eps >= 1.0) and np.all(sym.b_eps <= sym.b_eps_infty))
    ok = worst <= 1e-9 and sym.b_eps[0] == 1.0 and plateau <= 1e-10 and bounded
    return CheckResult(f"symbol identities (eps={ctx.epsilon:g})", ok,
                       f"symbol vs direct {worst:.1e}, b(0)={float(sym.b_eps[0])!r}, plateau {plateau:.1e}")


def check_lower_bound(ctx: OperatorContext) -> CheckResult:
    rep = ctx.lower_bound_report()
    return CheckResult(f"symbol lower bound (eps={ctx.epsilon:g})", rep["holds"],
                       f"C0 = {rep['C0']:.3e}, empirical min ratio {rep['empirical_min_ratio']:.3e}")


def cutoff_estimate(ctx: OperatorContext, G: np.ndarray) -> float:
    """(|Pi B^-1 G|_{2,2} + eps^-2 |(1 - Pi) B^-1 G|_2) / |G|_2."""
    U = ctx.apply_B_inv(G)
    low = ctx.apply_cutoff(U)
    return (ctx.grid.w22_norm(low) + ctx.grid.l2_norm(U - low) / ctx.epsilon**2) / ctx.grid.l2_norm(G)


def check_cutoff_estimate(ctx: OperatorContext, rng) -> CheckResult:
    D = 2.0 / lower_bound_constant(ctx.model)
    worst = max(cutoff_estimate(ctx, G) for G in _random_profiles(ctx.grid, rng, 5))
    return CheckResult(f"cut-off estimate (eps={ctx.epsilon:g})", worst <= D,
                       f"max ratio {worst:.3e} <= D = {D:.3e}")


def limit_slopes(model: ConstitutiveModel, grid: Grid, moments: MomentTable, eps=SWEEP) -> dict:
    dB, dQ, cons = [], [], []
    for e in eps:
        ctx = OperatorContext.build(model, grid, e, moments=moments)
        W0 = ctx.W0
        dB.append(grid.l2_norm(ctx.apply_B(W0) - ctx.apply_B0(W0)))
        dQ.append(grid.l2_norm(ctx.apply_Q(W0) - ctx.apply_Q0(W0)))
        K, E = ctx.consistency_terms()
        cons.append(grid.l2_norm(K) + grid.l2_norm(E))
    return {"slope_B": fit_slope(eps, dB), "slope_Q": fit_slope(eps, dQ),
            "consistency_band": max(cons) / min(cons), "consistency": cons}


def check_limit_slopes(model, grid, moments) -> CheckResult:
    r = limit_slopes(model, grid, moments)
    ok = abs(r["slope_B"] - 2) <= 0.2 and abs(r["slope_Q"] - 2) <= 0.2 and r["consistency_band"] <= 10
    return CheckResult("limit consistency", ok,
                       f"slopes B {r['slope_B']:.3f}, Q {r['slope_Q']:.3f}; "
                       f"|K|+|E| band {r['consistency_band']:.2f}")


def check_linearization(ctx: OperatorContext, rng) -> CheckResult:
    g = ctx.grid
    u, v = _random_profiles(g, rng, 2)
    lhs, rhs = g.inner(ctx.apply_L(u), v), g.inner(u, ctx.apply_L(v))
    sym = abs(lhs - rhs) / max(abs(lhs), 1.0)
    ue = g.project_even(u)
    parity = max(g.l2_norm(f - g.project_even(f)) for f in (ctx.apply_L(ue), ctx.apply_B(ue), ctx.apply_Q(ue)))
    kernel = g.l2_norm(ctx.apply_L0(g.derivative(ctx.W0, 1)))
    limit = g.l2_norm(ctx.apply_B0(ctx.W0) - ctx.apply_Q0(ctx.W0))
    ok = sym <= 1e-10 and parity <= 1e-12 and kernel <= 1e-7 and limit <= 1e-7
    return CheckResult(f"linearization (eps={ctx.epsilon:g})", ok,
                       f"self-adjoint {sym:.1e}, parity {parity:.1e}, L0 W0' {kernel:.1e}, "
                       f"B0 W0 - Q0 W0 {limit:.1e}")


def run_suite(model: ConstitutiveModel, grid: Grid, moments: MomentTable, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    ctxs = [OperatorContext.build(model, grid, e, moments=moments) for e in (0.4, 0.1)]
    W0 = ctxs[0].W0
    results = [check_averaging_bounds(grid, rng), check_cone_invariance(grid, W0),
               check_averaging_expansion(grid, W0)]
    for ctx in ctxs:
        results += [check_symbol_identities(ctx, rng), check_lower_bound(ctx),
                    check_cutoff_estimate(ctx, rng), check_linearization(ctx, rng)]
    results.append(check_limit_slopes(model, grid, moments))
    return results
