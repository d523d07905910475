"""Direct time integration of the unscaled equation of motion.

    u_tt(y) = sum_j Wt_j [F(u(y + xi_j) - u(y), xi_j) - F(u(y) - u(y - xi_j), xi_j)]

on a periodic lattice with bond lengths xi_j = j*dy.  A solitary wave has a
strain of nonzero mean, so the displacement is stored as a periodic part
plus a uniform strain ``strain_offset * y``; the offset enters every bond
difference as ``strain_offset * xi_j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar

from .constitutive import ConstitutiveModel, zero_coefficient, zero_remainder
from .errors import BlowUp, DomainMismatch, InsufficientTranslation, ResolutionTooCoarse

BLOWUP_LIMIT = 1e6
CFL = 0.5
MIN_TRANSLATION_CELLS = 10.0


@dataclass(frozen=True)
class PhysGrid:
    Ly: float
    Ny: int

    def __post_init__(self):
        if self.Ny <= 0 or self.Ny % 2:
            raise ValueError(f"Ny must be a positive even integer, got {self.Ny}")
        if not self.Ly > 0:
            raise ValueError(f"Ly must be positive, got {self.Ly}")

    @classmethod
    def covering(cls, Ly_min: float, dy: float) -> "PhysGrid":
        """Smallest grid with spacing dy and half-length at least Ly_min."""
        half = math.ceil(Ly_min / dy - 1e-9)
        return cls(Ly=half * dy, Ny=2 * half)

    @property
    def dy(self) -> float:
        return 2.0 * self.Ly / self.Ny

    @cached_property
    def y(self) -> np.ndarray:
        return -self.Ly + self.dy * np.arange(self.Ny)

    @cached_property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.Ny, d=self.dy)

    def bond_count(self, horizon: float) -> int:
        J = round(horizon / self.dy)
        if J < 1 or abs(J * self.dy - horizon) > 1e-9 * horizon:
            raise ValueError(f"grid spacing {self.dy!r} does not divide the horizon {horizon!r}")
        if 2 * J >= self.Ny:
            raise ValueError("the horizon must be shorter than half the periodic domain")
        return J

    def to_dict(self) -> dict:
        return {"Ly": self.Ly, "Ny": self.Ny, "dy": self.dy}


@dataclass
class SimState:
    t: float
    u: np.ndarray
    du: np.ndarray
    strain_offset: float = 0.0
    acc: np.ndarray | None = field(default=None, repr=False)

    def momentum(self, pg: PhysGrid) -> float:
        return float(np.sum(self.du)) * pg.dy

    def snapshot(self) -> "SimState":
        return SimState(self.t, self.u.copy(), self.du.copy(), self.strain_offset)


@dataclass(frozen=True)
class BondTable:
    """Bond nodes xi_j = j*dy with trapezoid weights (the xi = 0 node carries no force)."""

    shifts: np.ndarray
    xi: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(cls, model: ConstitutiveModel, pg: PhysGrid) -> "BondTable":
        J = pg.bond_count(model.horizon)
        shifts = np.arange(1, J + 1)
        weights = np.full(J, pg.dy)
        weights[-1] *= 0.5
        # j*dy can round past H, where the coefficients switch off
        xi = shifts * (model.horizon / J)
        xi[-1] = model.horizon
        return cls(shifts, xi, weights)


def linear_medium(model: ConstitutiveModel) -> ConstitutiveModel:
    """The same medium with beta and the remainder switched off."""
    return replace(model, beta=zero_coefficient, gamma=zero_coefficient, dpsi=zero_remainder,
                   family=f"{model.family}-linear")


def force(model: ConstitutiveModel, pg: PhysGrid, u: np.ndarray, strain_offset: float = 0.0,
          bonds: BondTable | None = None) -> np.ndarray:
    bonds = bonds or BondTable.build(model, pg)
    p = u - strain_offset * pg.y
    a = np.zeros_like(p)
    for j, xi, wt in zip(bonds.shifts, bonds.xi, bonds.weights):
        fwd = np.roll(p, -j) - p + strain_offset * xi
        f = model.force(fwd, xi)
        # the backward bond of node i is the forward bond of node i - j
        a += wt * (f - np.roll(f, j))
    return a


def linear_dispersion(model: ConstitutiveModel, pg: PhysGrid, k) -> np.ndarray:
    """omega**2(k) of the lattice linearized about zero strain."""
    bonds = BondTable.build(model, pg)
    k = np.asarray(k, dtype=float)
    alpha = np.asarray(model.alpha(bonds.xi), dtype=float)
    return np.sum((bonds.weights * alpha)[:, None]
                  * 2.0 * (1.0 - np.cos(np.outer(bonds.xi, k.ravel()))), axis=0).reshape(k.shape)


def linear_energy(model: ConstitutiveModel, pg: PhysGrid, state: SimState) -> float:
    bonds = BondTable.build(model, pg)
    p = state.u - state.strain_offset * pg.y
    pot = 0.0
    for j, xi, wt in zip(bonds.shifts, bonds.xi, bonds.weights):
        d = np.roll(p, -j) - p + state.strain_offset * xi
        pot += wt * float(model.alpha(xi)) * float(np.sum(d * d))
    return 0.5 * pg.dy * (float(np.sum(state.du**2)) + pot)


def step(state: SimState, model: ConstitutiveModel, pg: PhysGrid, dt: float,
         bonds: BondTable | None = None) -> SimState:
    """One velocity-Verlet step."""
    bonds = bonds or BondTable.build(model, pg)
    acc = state.acc if state.acc is not None else force(model, pg, state.u, state.strain_offset, bonds)
    du_half = state.du + 0.5 * dt * acc
    u = state.u + dt * du_half
    if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > BLOWUP_LIMIT:
        raise BlowUp(f"displacement left [-{BLOWUP_LIMIT:g}, {BLOWUP_LIMIT:g}] at t={state.t + dt:.4g}")
    acc_new = force(model, pg, u, state.strain_offset, bonds)
    return SimState(state.t + dt, u, du_half + 0.5 * dt * acc_new, state.strain_offset, acc_new)


def init_from_wave(sol, pg: PhysGrid) -> SimState:
    """Lattice state of the traveling wave at t = 0, centred at y = 0."""
    eps = sol.epsilon
    grid = sol.grid
    W = sol.W_eps
    d1 = _decay_rate_sq(sol)
    if pg.dy * eps * math.sqrt(d1) > 0.2:
        raise ResolutionTooCoarse(f"dy={pg.dy:.4g} exceeds 0.2/(eps*sqrt(d1)) = "
                                  f"{0.2 / (eps * math.sqrt(d1)):.4g}")
    if eps * pg.Ly < grid.L_dom * (1 - 1e-12):
        raise DomainMismatch(f"eps*Ly = {eps * pg.Ly:.4g} is shorter than L_dom = {grid.L_dom:.4g}")
    x = eps * pg.y
    inside = np.abs(x) < grid.L_dom
    Wy = np.zeros(pg.Ny)
    Wy[inside] = grid.evaluate(W, x[inside])
    strain = eps**2 * Wy
    periodic, rho = _antiderivative(pg, strain)
    return SimState(0.0, periodic + rho * pg.y, -eps**2 * sol.c_eps * Wy, rho)


def _decay_rate_sq(sol) -> float:
    # W0 = a sech^2(sqrt(d1) x / 2) gives W0''(0)/W0(0) = -d1/2
    g = sol.grid
    i0 = int(np.argmin(np.abs(g.x)))
    if sol.W0[i0] == 0:
        return 0.0  # trivial wave, no length scale
    return -2.0 * g.derivative(sol.W0, 2)[i0] / sol.W0[i0]


def _antiderivative(pg: PhysGrid, s: np.ndarray) -> tuple[np.ndarray, float]:
    sh = np.fft.rfft(s)
    rk = 2.0 * np.pi * np.fft.rfftfreq(pg.Ny, d=pg.dy)
    mult = np.zeros_like(sh)
    mult[1:] = 1.0 / (1j * rk[1:])
    mult[-1] = 0.0
    return np.fft.irfft(mult * sh, n=pg.Ny), sh[0].real / pg.Ny


def _shift(pg: PhysGrid, f: np.ndarray, cells: float) -> np.ndarray:
    """f(y - cells*dy) by Fourier interpolation."""
    return np.fft.ifft(np.fft.fft(f) * np.exp(-1j * pg.k * cells * pg.dy)).real


def _peak_offset(f: np.ndarray, g: np.ndarray) -> float:
    """Subcell shift m maximizing sum_i f[i] g[i - m]."""
    c = np.fft.ifft(np.fft.fft(f) * np.conj(np.fft.fft(g))).real
    n = c.size
    m = int(np.argmax(c))
    l, r = c[(m - 1) % n], c[(m + 1) % n]
    denom = l - 2.0 * c[m] + r
    frac = 0.5 * (l - r) / denom if denom < 0 else 0.0
    s = m + frac
    return s - n if s > n / 2 else s


def measure_wave_speed(history: list[SimState], pg: PhysGrid) -> tuple[float, float]:
    """Speed from correlation tracking of du and the shape drift of the last snapshot."""
    if len(history) < 5:
        raise InsufficientTranslation(f"need at least 5 snapshots, got {len(history)}")
    ref = history[0].du - np.mean(history[0].du)
    offsets = np.array([_peak_offset(s.du - np.mean(s.du), ref) for s in history])
    offsets = np.unwrap(offsets, period=pg.Ny)
    t = np.array([s.t for s in history])
    travel = abs(offsets[-1] - offsets[0])
    if travel < 1e-6:
        speed = 0.0
    elif travel < MIN_TRANSLATION_CELLS:
        raise InsufficientTranslation(f"wave moved {travel:.3g} cells; at least "
                                      f"{MIN_TRANSLATION_CELLS:g} are needed")
    else:
        speed = float(np.polyfit(t, offsets * pg.dy, 1)[0])

    first = history[0].du
    last = history[-1].du
    norm0 = math.sqrt(float(np.sum(first * first)))
    if norm0 == 0.0:
        return speed, 0.0

    def mismatch(cells):
        d = _shift(pg, first, cells) - last
        return math.sqrt(float(np.sum(d * d))) / norm0

    guess = offsets[-1]
    best = minimize_scalar(mismatch, bounds=(guess - 1.0, guess + 1.0), method="bounded",
                           options={"xatol": 1e-8})
    return speed, float(min(best.fun, mismatch(guess)))


@dataclass
class SimulationResult:
    snapshots: list
    speed: float
    shape_drift: float
    c_eps: float
    momentum_drift_rate: float
    steps: int

    def summary(self) -> dict:
        return {"measured_speed": self.speed, "c_eps": self.c_eps,
                "relative_speed_error": abs(self.speed - self.c_eps) / self.c_eps,
                "shape_drift": self.shape_drift, "momentum_drift_rate": self.momentum_drift_rate,
                "steps": self.steps, "snapshots": len(self.snapshots)}


def evolve(state: SimState, model: ConstitutiveModel, pg: PhysGrid, dt: float, t_end: float,
           stride: int = 1) -> list[SimState]:
    """Integrate to t_end and return snapshots every ``stride`` steps (first and last included)."""
    if dt <= 0 or t_end <= state.t:
        raise ValueError("need dt > 0 and t_end beyond the initial time")
    bonds = BondTable.build(model, pg)
    nsteps = math.ceil((t_end - state.t) / dt - 1e-9)
    snaps = [state.snapshot()]
    for n in range(1, nsteps + 1):
        state = step(state, model, pg, dt, bonds)
        if n % stride == 0 or n == nsteps:
            snaps.append(state.snapshot())
    return snaps


def default_phys_grid(sol, horizon: float) -> PhysGrid:
    """Spacing horizon/m fine enough for the wave, half-length L_dom/eps."""
    eps = sol.epsilon
    d1 = _decay_rate_sq(sol)
    m = max(10, math.ceil(horizon * eps * math.sqrt(d1) / 0.2))
    return PhysGrid.covering(sol.grid.L_dom / eps, horizon / m)


def simulate(sol, model: ConstitutiveModel, pg: PhysGrid | None = None, dt: float | None = None,
             t_end: float | None = None, stride: int = 10) -> SimulationResult:
    """Evolve a solved wave; by default over the time it takes to cross a quarter of the domain."""
    pg = pg or default_phys_grid(sol, model.horizon)
    c = sol.c_eps
    dt_max = CFL * pg.dy / c
    dt = dt or 0.5 * dt_max
    if dt > dt_max:
        raise ValueError(f"dt={dt:g} exceeds the stability limit {dt_max:g}")
    t_end = t_end or 0.5 * pg.Ly / c
    state = init_from_wave(sol, pg)
    snaps = evolve(state, model, pg, dt, t_end, stride)
    speed, drift = measure_wave_speed(snaps, pg)
    p0, p1 = snaps[0].momentum(pg), snaps[-1].momentum(pg)
    rate = abs(p1 - p0) / (snaps[-1].t - snaps[0].t)
    return SimulationResult(snaps, speed, drift, c, rate, math.ceil(t_end / dt - 1e-9))
