"""Constitutive laws of the peridynamical medium and their bond moments.

A medium is described by the force expansion

    dPhi/dr (r, xi) = alpha(xi) r + beta(xi) r**2 + dpsi(r, xi)

on bonds 0 < xi <= H.  Everything downstream (sound speed, KdV
coefficients, the xi-sums inside every Bochner-type operator) is built from
weighted integrals of alpha, beta and gamma against powers of xi, so this
module also owns the xi-quadrature used by the operators.

The coefficient callables must accept numpy arrays.  Built-in families use
module-level functions bound with ``functools.partial`` so models pickle
cleanly into worker processes.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import AssumptionViolated, NegativeMoment, NonIntegrable

GL_ORDER = 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)

MOMENT_POWERS = (2.0, 2.5, 3.0, 4.0, 5.0, 6.0)
_MOMENT_RTOL = 1e-10
_MAX_REFINE = 6


# ---------------------------------------------------------------------------
# coefficient families

def _power_coeff(scale, exponent, horizon, xi):
    xi = np.asarray(xi, dtype=float)
    inside = (xi > 0) & (xi <= horizon)
    safe = np.where(inside, xi, 1.0)
    return np.where(inside, scale * safe**exponent, 0.0)


def _gauss_coeff(scale, length, horizon, xi):
    xi = np.asarray(xi, dtype=float)
    return np.where((xi > 0) & (xi <= horizon), scale * np.exp(-(xi / length) ** 2), 0.0)


def _cubic_remainder(g, horizon, r, xi):
    return g * np.asarray(r, dtype=float) ** 3 * (np.asarray(xi) <= horizon)


def _scaled_remainder(g, shape, r, xi):
    return g * np.asarray(r, dtype=float) ** 3 * shape(xi)


def zero_remainder(r, xi):
    return np.zeros(np.broadcast(np.asarray(r), np.asarray(xi)).shape)


def zero_coefficient(xi):
    return np.zeros(np.shape(xi))


class TabulatedCoefficient:
    """Piecewise-linear interpolant of a (xi, value) table, zero outside it."""

    def __init__(self, xi: Sequence[float], values: Sequence[float]):
        self.xi = np.asarray(xi, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.xi.ndim != 1 or self.xi.shape != self.values.shape or self.xi.size < 2:
            raise ValueError("table needs at least two (xi, value) rows")
        if np.any(np.diff(self.xi) <= 0):
            raise ValueError("table xi column must be strictly increasing")
        if self.xi[0] < 0:
            raise ValueError("table xi column must be nonnegative")

    @classmethod
    def from_csv(cls, path: str | Path) -> "TabulatedCoefficient":
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append((float(rec[0]), float(rec[1])))
                except (ValueError, IndexError):
                    # header row
                    if rows:
                        raise ValueError(f"{path}: malformed row {rec!r}")
        arr = np.array(rows, dtype=float)
        return cls(arr[:, 0], arr[:, 1])

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        out = np.interp(xi, self.xi, self.values)
        return np.where((xi >= self.xi[0]) & (xi <= self.xi[-1]), out, 0.0)


@dataclass(frozen=True)
class ConstitutiveModel:
    """Force law of the medium.

    ``singularity_exponent`` is a hint s >= 0 with alpha*xi**s and beta*xi**s
    bounded near zero; it deepens the geometric grading of the moment
    quadrature.  ``breakpoints`` lists interior xi where the coefficients
    may jump; quadrature cells never straddle them.
    """

    alpha: Callable
    beta: Callable
    gamma: Callable
    dpsi: Callable
    horizon: float
    singularity_exponent: float = 0.0
    breakpoints: tuple = ()
    positivity_onset: float | None = None
    family: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise AssumptionViolated(
                f"horizon must be finite and positive, got {self.horizon!r}; "
                "truncate decaying coefficients at a finite H")
        if self.singularity_exponent < 0:
            raise ValueError("singularity_exponent must be >= 0")
        bps = tuple(sorted(float(b) for b in self.breakpoints if 0 < b < self.horizon))
        object.__setattr__(self, "breakpoints", bps)

    @property
    def h_pos(self) -> float:
        """Lower end of the window [h, H] on which alpha > 0."""
        if self.positivity_onset is not None:
            return float(self.positivity_onset)
        return self.horizon / 100.0

    @property
    def has_remainder(self) -> bool:
        return self.dpsi is not zero_remainder

    def force(self, r, xi):
        """Full bond force dPhi/dr(r, xi)."""
        r = np.asarray(r, dtype=float)
        return self.alpha(xi) * r + self.beta(xi) * r**2 + self.dpsi(r, xi)

    def segments(self) -> list[tuple[float, float]]:
        edges = (0.0,) + self.breakpoints + (self.horizon,)
        return list(zip(edges[:-1], edges[1:]))

    def coefficient(self, name: str) -> Callable:
        try:
            return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}[name]
        except KeyError:
            raise ValueError(f"unknown coefficient {name!r}") from None


def power_law(C2: float = 1.0, C3: float = 1.0, H: float = 1.0, g: float = 0.0) -> ConstitutiveModel:
    """alpha = C2/xi, beta = C3/xi**2 on (0, H], remainder g*r**3 (gamma = 3g)."""
    if C2 <= 0 or C3 <= 0:
        raise AssumptionViolated("power_law needs C2 > 0 and C3 > 0")
    if g < 0:
        raise AssumptionViolated("cubic coefficient g must be >= 0")
    dpsi = partial(_cubic_remainder, g, H) if g != 0 else zero_remainder
    gamma = partial(_power_coeff, 3.0 * g, 0.0, H) if g != 0 else zero_coefficient
    return ConstitutiveModel(
        alpha=partial(_power_coeff, C2, -1.0, H),
        beta=partial(_power_coeff, C3, -2.0, H),
        gamma=gamma,
        dpsi=dpsi,
        horizon=H,
        singularity_exponent=2.0,
        positivity_onset=H / 100.0,
        family="power_law",
        params={"C2": C2, "C3": C3, "H": H, "g": g},
    )


def gaussian_decay(C2: float = 1.0, C3: float = 1.0, H: float = 4.0, g: float = 0.0,
                   length: float = 1.0) -> ConstitutiveModel:
    """Gaussian-decaying coefficients truncated at H.

    The caller is responsible for choosing H large enough that the discarded
    tail exp(-(H/length)**2) is negligible.
    """
    if C2 <= 0 or C3 <= 0 or length <= 0:
        raise AssumptionViolated("gaussian_decay needs C2, C3, length > 0")
    if g < 0:
        raise AssumptionViolated("cubic coefficient g must be >= 0")
    shape = partial(_gauss_coeff, 1.0, length, H)
    return ConstitutiveModel(
        alpha=partial(_gauss_coeff, C2, length, H),
        beta=partial(_gauss_coeff, C3, length, H),
        gamma=partial(_gauss_coeff, 3.0 * g, length, H) if g != 0 else zero_coefficient,
        dpsi=partial(_scaled_remainder, g, shape) if g != 0 else zero_remainder,
        horizon=H,
        positivity_onset=H / 100.0,
        family="gaussian_decay",
        params={"C2": C2, "C3": C3, "H": H, "g": g, "length": length},
    )


def tabulated(alpha: TabulatedCoefficient, beta: TabulatedCoefficient, g: float = 0.0,
              H: float | None = None, params: dict | None = None) -> ConstitutiveModel:
    """Model from two (xi, value) tables; the table nodes become breakpoints."""
    horizon = float(H) if H is not None else float(min(alpha.xi[-1], beta.xi[-1]))
    xs = np.union1d(alpha.xi, beta.xi)
    xs = xs[(xs > 0) & (xs <= horizon)]
    pos = np.flatnonzero((alpha(xs) > 0) & (beta(xs) > 0))
    if pos.size == 0:
        raise AssumptionViolated("tabulated alpha and beta are never simultaneously positive")
    onset = max(float(xs[pos[0]]), horizon / 100.0)
    step = partial(_power_coeff, 1.0, 0.0, horizon)
    return ConstitutiveModel(
        alpha=alpha,
        beta=beta,
        gamma=partial(_power_coeff, 3.0 * g, 0.0, horizon) if g != 0 else zero_coefficient,
        dpsi=partial(_scaled_remainder, g, step) if g != 0 else zero_remainder,
        horizon=horizon,
        breakpoints=tuple(np.concatenate([alpha.xi, beta.xi])),
        positivity_onset=onset,
        family="tabulated",
        params=dict(params or {}, g=g, H=horizon),
    )


# ---------------------------------------------------------------------------
# quadrature

def _cells(a: float, b: float, graded_levels: int, split: int) -> np.ndarray:
    """Cells covering [a, b]; when graded_levels > 0 they shrink geometrically toward a."""
    if graded_levels > 0:
        width = b - a
        edges = [a] + [a + width * 0.5**j for j in range(graded_levels, -1, -1)]
    else:
        edges = [a, b]
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sub = np.linspace(lo, hi, split + 1)
        out.extend(zip(sub[:-1], sub[1:]))
    return np.array(out, dtype=float)


def _gauss_nodes(cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = cells[:, 0:1], cells[:, 1:2]
    half = 0.5 * (hi - lo)
    nodes = (lo + half * (_GL_X + 1.0)).ravel()
    weights = (half * _GL_W).ravel()
    return nodes, weights


def _graded_integral(f: Callable, segments, base_levels: int, refine: int) -> float:
    total = 0.0
    for i, (a, b) in enumerate(segments):
        levels = base_levels + 6 * refine if i == 0 else 0
        cells = _cells(a, b, levels, 2**refine)
        x, w = _gauss_nodes(cells)
        total += float(np.sum(w * f(x)))
    return total


def integrate_graded(f: Callable, segments, singularity_exponent: float = 0.0) -> float:
    """Adaptive composite Gauss-Legendre integral of f over consecutive segments.

    The first segment is graded toward its left end (ratio 1/2), which
    absorbs integrable endpoint singularities at xi = 0.  Refinement deepens
    the grading and halves every cell until the relative change drops below
    1e-10.
    """
    base = 10 + 4 * int(math.ceil(singularity_exponent))
    prev = _graded_integral(f, segments, base, 0)
    change = math.inf
    for r in range(1, _MAX_REFINE + 1):
        cur = _graded_integral(f, segments, base, r)
        if not math.isfinite(cur):
            break
        change = abs(cur - prev)
        if change <= _MOMENT_RTOL * abs(cur) or change < 1e-300:
            return cur
        prev = cur
    raise NonIntegrable(
        f"graded quadrature did not settle (last change {change:.3e} on value {prev:.6e})")


def moment(model: ConstitutiveModel, coeff: str, power: float) -> float:
    """Integral of coeff(xi) * xi**power over (0, H]."""
    if not any(abs(power - p) < 1e-14 for p in MOMENT_POWERS):
        raise ValueError(f"power must be one of {MOMENT_POWERS}, got {power}")
    c = model.coefficient(coeff)
    value = integrate_graded(lambda x: c(x) * x**power, model.segments(),
                             model.singularity_exponent)
    if coeff in ("alpha", "beta") and value <= 0:
        raise NegativeMoment(f"integral of {coeff} * xi^{power} is {value:.3e}, must be positive")
    if coeff == "gamma" and value < 0:
        raise NegativeMoment(f"integral of gamma * xi^{power} is {value:.3e}, must be nonnegative")
    return value


@dataclass(frozen=True)
class MomentTable:
    I_a2: float
    I_a4: float
    I_a6: float
    I_b3: float
    I_b52: float
    I_b5: float
    I_g3: float
    I_g4: float
    c0_sq: float
    d1: float
    d2: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def build_moment_table(model: ConstitutiveModel) -> MomentTable:
    try:
        a2, a4, a6 = (moment(model, "alpha", p) for p in (2, 4, 6))
        b3, b52, b5 = (moment(model, "beta", p) for p in (3, 2.5, 5))
        g3, g4 = (moment(model, "gamma", p) for p in (3, 4))
    except NegativeMoment as exc:
        raise AssumptionViolated(str(exc)) from exc
    return MomentTable(I_a2=a2, I_a4=a4, I_a6=a6, I_b3=b3, I_b52=b52, I_b5=b5,
                       I_g3=g3, I_g4=g4, c0_sq=a2, d1=12.0 / a4, d2=12.0 * b3 / a4)


@dataclass(frozen=True)
class XiQuadrature:
    """Composite Gauss-Legendre rule on (0, H] shared by all xi-sums."""

    cells: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def count(self) -> int:
        return self.nodes.size

    def refined(self) -> "XiQuadrature":
        mid = 0.5 * (self.cells[:, 0] + self.cells[:, 1])
        cells = np.empty((2 * len(self.cells), 2))
        cells[0::2, 0], cells[0::2, 1] = self.cells[:, 0], mid
        cells[1::2, 0], cells[1::2, 1] = mid, self.cells[:, 1]
        return XiQuadrature(cells, *_gauss_nodes(cells))

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * values))

    def self_test(self) -> float:
        """Worst relative error on the monomials xi**p, p in MOMENT_POWERS."""
        H = self.cells[-1, 1]
        errs = [abs(self.integrate(self.nodes**p) - H ** (p + 1) / (p + 1)) / (H ** (p + 1) / (p + 1))
                for p in MOMENT_POWERS]
        return max(errs)


def build_xi_quadrature(model: ConstitutiveModel, max_frequency: float = 0.0,
                        graded_levels: int = 6, phase_budget: float = 10.0) -> XiQuadrature:
    """Quadrature whose cells each see at most ``phase_budget`` radians of oscillation.

    ``max_frequency`` bounds d/dxi of the phases epsilon*xi*k that appear in
    the sinc factors, i.e. epsilon*k_max for a grid with Nyquist k_max.
    """
    cells = []
    for i, (a, b) in enumerate(model.segments()):
        base = _cells(a, b, graded_levels if i == 0 else 0, 1)
        for lo, hi in base:
            n = max(1, int(math.ceil(max_frequency * (hi - lo) / phase_budget)))
            sub = np.linspace(lo, hi, n + 1)
            cells.extend(zip(sub[:-1], sub[1:]))
    cells = np.array(cells, dtype=float)
    return XiQuadrature(cells, *_gauss_nodes(cells))


# ---------------------------------------------------------------------------
# validation

@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    checked: int = 0

    @property
    def passed(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.passed:
            return f"assumption check passed ({self.checked} probes)"
        lines = [f"assumption check FAILED ({len(self.violations)} violations)"]
        lines += [f"  {v}" for v in self.violations[:20]]
        return "\n".join(lines)


def validate_assumption1(model: ConstitutiveModel, r_samples: Sequence[float],
                         quad: XiQuadrature | None = None, rtol: float = 1e-12) -> ValidationReport:
    """Probe the remainder and positivity requirements at finitely many points."""
    r = np.asarray(r_samples, dtype=float)
    if np.any(np.abs(r) > 1):
        raise ValueError("r_samples must lie in [-1, 1]")
    xi = (quad or build_xi_quadrature(model)).nodes
    rep = ValidationReport()

    at_zero = model.dpsi(np.zeros_like(xi), xi)
    for x, v in zip(xi, at_zero):
        rep.checked += 1
        if v != 0:
            rep.violations.append(f"dpsi(0, xi={x:.6g}) = {v:.3e} != 0")

    R, X = np.meshgrid(r, xi, indexing="ij")
    val = np.abs(model.dpsi(R, X))
    bound = model.gamma(X) * np.abs(R) ** 3 / 3.0
    bad = val > bound * (1 + rtol) + 1e-300
    rep.checked += val.size
    for i, j in zip(*np.nonzero(bad)):
        rep.violations.append(
            f"|dpsi(r={R[i, j]:.4g}, xi={X[i, j]:.4g})| = {val[i, j]:.3e} > gamma*|r|^3/3 = {bound[i, j]:.3e}")

    probe = np.linspace(model.h_pos, model.horizon, 64)
    probe[-1] = model.horizon * (1 - 1e-12)
    for name, c in (("alpha", model.alpha), ("beta", model.beta)):
        v = c(probe)
        rep.checked += probe.size
        for x in probe[v <= 0]:
            rep.violations.append(f"{name}({x:.6g}) <= 0 inside positivity window")
    return rep
