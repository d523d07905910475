"""Averaging, linear and nonlinear Bochner-type operators on a periodic grid.

Every xi-integral is a weighted sum over the nodes of one shared
:class:`~perikdv.constitutive.XiQuadrature`, so the discrete operators keep
the exact algebraic relations of the continuous ones: L = B - M, and
Q[W0 + e V] = Q[W0] + e M V + e**2 Q[V].

Pointwise products (inside Q, M and P) use the 2/3 rule: the averaged
profiles are truncated to |j| <= (N-1)//3 before the product and the result
is truncated again afterwards.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constitutive import (ConstitutiveModel, MomentTable, XiQuadrature, build_moment_table,
                           build_xi_quadrature, integrate_graded)
from .errors import QuadratureInsufficient, RemainderBoundExceeded
from .grid import Grid
from .kdv import KdvProfileSpec, kdv_profile

SYMBOL_RTOL = 1e-9
_SINC_SERIES = 1e-4
_OMSS_SERIES = 0.05


def sinc(z):
    """sin(z)/z with a short series near zero."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < _SINC_SERIES
    safe = np.where(small, 1.0, z)
    z2 = z * z
    return np.where(small, 1.0 - z2 / 6.0 + z2 * z2 / 120.0, np.sin(safe) / safe)


def one_minus_sinc_sq(z):
    """1 - sinc(z)**2 without cancellation for small z."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < _OMSS_SERIES
    z2 = z * z
    series = z2 * (1.0 / 3.0 - z2 * (2.0 / 45.0 - z2 * (1.0 / 315.0 - z2 * 2.0 / 14175.0)))
    return np.where(small, series, 1.0 - sinc(z) ** 2)


def apply_A(grid: Grid, eta: float, p: np.ndarray) -> np.ndarray:
    """Moving average of p over [x - eta/2, x + eta/2]."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    return np.fft.irfft(sinc(0.5 * eta * grid.rk) * np.fft.rfft(p), n=grid.N)


def dealias_mask(N: int) -> np.ndarray:
    mask = np.zeros(N // 2 + 1)
    mask[: (N - 1) // 3 + 1] = 1.0
    return mask


def _b_eps_half(rk, epsilon, quad: XiQuadrature, model: ConstitutiveModel) -> np.ndarray:
    wb = quad.weights * model.alpha(quad.nodes) * quad.nodes**2
    z = 0.5 * epsilon * np.outer(quad.nodes, rk)
    return 1.0 + np.sum(wb[:, None] * one_minus_sinc_sq(z), axis=0) / epsilon**2


@dataclass(frozen=True)
class SymbolTable:
    epsilon: float
    k: np.ndarray
    b_eps: np.ndarray
    b0: np.ndarray
    b_eps_inv: np.ndarray
    pi_eps: np.ndarray
    b_eps_infty: float
    C1: float

    def to_csv(self, path: str | Path, header_lines: tuple[str, ...] = ()) -> None:
        order = np.argsort(self.k, kind="stable")
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "b_eps", "b0", "pi_eps"])
            for i in order:
                w.writerow([repr(float(self.k[i])), repr(float(self.b_eps[i])),
                            repr(float(self.b0[i])), int(self.pi_eps[i])])


def build_symbols(grid: Grid, model: ConstitutiveModel, moments: MomentTable,
                  quad: XiQuadrature, epsilon: float, check: bool = True) -> SymbolTable:
    """Fourier symbols of B_eps, B_0, B_eps^{-1} and the cut-off on the grid modes.

    With ``check`` the symbol is recomputed on the refined quadrature (every
    cell halved) and QuadratureInsufficient is raised when any mode moves
    by more than 1e-9 relative.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    kabs = np.abs(grid.k)
    half = _b_eps_half(grid.rk, epsilon, quad, model)
    if check:
        finer = _b_eps_half(grid.rk, epsilon, quad.refined(), model)
        drift = float(np.max(np.abs(finer - half) / np.abs(finer)))
        if drift > SYMBOL_RTOL:
            raise QuadratureInsufficient(
                f"b_eps moves by {drift:.2e} (> {SYMBOL_RTOL:g}) when the xi-quadrature is "
                f"doubled from {quad.count} nodes")
    # full FFT order: mode j and -j share |k|
    idx = np.rint(kabs / (2 * np.pi / (2 * grid.L_dom))).astype(int)
    b_eps = half[idx]
    C1 = 4.0 / model.h_pos
    return SymbolTable(
        epsilon=epsilon,
        k=grid.k.copy(),
        b_eps=b_eps,
        b0=1.0 + moments.I_a4 / 12.0 * grid.k**2,
        b_eps_inv=1.0 / b_eps,
        pi_eps=(kabs <= C1 / epsilon).astype(np.int8),
        b_eps_infty=1.0 + moments.c0_sq / epsilon**2,
        C1=C1,
    )


def lower_bound_constant(model: ConstitutiveModel) -> float:
    """C0 from the positivity window [h, H] of alpha.

    With J = int_h^H alpha xi^2 and 1 - sinc^2(xi y) >= min(h^2 y^2/6, 2/3)
    one gets b_eps >= C0 * min(1 + k^2, 1 + 1/eps^2) for C0 = min(1, J h^2/24, 2J/3).
    """
    h, H = model.h_pos, model.horizon
    segs = [(max(a, h), min(b, H)) for a, b in model.segments() if b > h]
    J = integrate_graded(lambda x: model.alpha(x) * x**2, segs)
    return min(1.0, J * h * h / 24.0, 2.0 * J / 3.0)


@dataclass(frozen=True, eq=False)
class OperatorContext:
    """Everything needed to apply the operators at one epsilon.

    Immutable: a new epsilon, grid or model means a new context.  Use
    :meth:`build` rather than the constructor.
    """

    grid: Grid
    model: ConstitutiveModel
    moments: MomentTable
    quad: XiQuadrature
    epsilon: float
    symbols: SymbolTable
    W0: np.ndarray
    _S: np.ndarray = field(repr=False)
    _mask: np.ndarray = field(repr=False)
    _wb: np.ndarray = field(repr=False)
    _wq: np.ndarray = field(repr=False)
    _wp: np.ndarray = field(repr=False)
    _AW0: np.ndarray = field(repr=False)
    _b_half: np.ndarray = field(repr=False)
    _b0_half: np.ndarray = field(repr=False)
    _pi_half: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, model: ConstitutiveModel, grid: Grid, epsilon: float,
              moments: MomentTable | None = None, quad: XiQuadrature | None = None,
              check_quadrature: bool = True, max_refinements: int = 3) -> "OperatorContext":
        moments = moments or build_moment_table(model)
        W0 = kdv_profile(KdvProfileSpec.from_moments(moments), grid)
        if quad is None:
            quad = build_xi_quadrature(model, max_frequency=epsilon * grid.k_max)
            for _ in range(max_refinements):
                try:
                    symbols = build_symbols(grid, model, moments, quad, epsilon, check_quadrature)
                    break
                except QuadratureInsufficient:
                    quad = quad.refined()
            else:
                symbols = build_symbols(grid, model, moments, quad, epsilon, check_quadrature)
        else:
            symbols = build_symbols(grid, model, moments, quad, epsilon, check_quadrature)

        xi = quad.nodes
        S = sinc(0.5 * epsilon * np.outer(xi, grid.rk))
        mask = dealias_mask(grid.N)
        AW0 = np.fft.irfft(S * (mask * np.fft.rfft(W0)), n=grid.N, axis=1)
        n_half = grid.N // 2 + 1
        return cls(
            grid=grid, model=model, moments=moments, quad=quad, epsilon=float(epsilon),
            symbols=symbols, W0=W0,
            _S=S, _mask=mask,
            _wb=quad.weights * model.alpha(xi) * xi**2,
            _wq=quad.weights * model.beta(xi) * xi**3,
            _wp=quad.weights * xi,
            _AW0=AW0,
            _b_half=symbols.b_eps[:n_half].copy(),
            _b0_half=1.0 + moments.I_a4 / 12.0 * grid.rk**2,
            _pi_half=(grid.rk <= symbols.C1 / epsilon).astype(float),
        )

    # -- helpers ----------------------------------------------------------

    @property
    def N(self) -> int:
        return self.grid.N

    def _multiply(self, symbol_half: np.ndarray, p: np.ndarray) -> np.ndarray:
        return np.fft.irfft(symbol_half * np.fft.rfft(p), n=self.N)

    def _averaged(self, p: np.ndarray) -> np.ndarray:
        """Dealiased A_{eps xi_m} p for every node, shape (m, N)."""
        return np.fft.irfft(self._S * (self._mask * np.fft.rfft(p)), n=self.N, axis=1)

    def _average_back(self, weights: np.ndarray, fields: np.ndarray) -> np.ndarray:
        """sum_m weights_m * D A_{eps xi_m} fields_m."""
        fh = np.fft.rfft(fields, axis=1)
        acc = np.sum((weights[:, None] * self._S) * fh, axis=0)
        return np.fft.irfft(self._mask * acc, n=self.N)

    # -- linear operators -------------------------------------------------

    def apply_B(self, p: np.ndarray) -> np.ndarray:
        return self._multiply(self._b_half, p)

    def apply_B_inv(self, p: np.ndarray) -> np.ndarray:
        return self._multiply(1.0 / self._b_half, p)

    def apply_B0(self, p: np.ndarray) -> np.ndarray:
        return self._multiply(self._b0_half, p)

    def apply_cutoff(self, p: np.ndarray) -> np.ndarray:
        return self._multiply(self._pi_half, p)

    def apply_B_direct(self, p: np.ndarray) -> np.ndarray:
        """B_eps as the literal xi-sum p + sum w alpha xi^2 (p - A^2 p)/eps^2.

        Independent of the symbol path; used as an oracle.
        """
        ph = np.fft.rfft(p)
        A2p = np.fft.irfft(self._S**2 * ph, n=self.N, axis=1)
        acc = np.zeros(self.N)
        for wm, row in zip(self._wb, A2p):
            acc += wm * (p - row)
        return p + acc / self.epsilon**2

    # -- nonlinear operators ----------------------------------------------

    def apply_Q(self, w: np.ndarray) -> np.ndarray:
        Aw = self._averaged(w)
        return self._average_back(self._wq, Aw * Aw)

    def apply_Q0(self, w: np.ndarray) -> np.ndarray:
        return self.moments.I_b3 * w * w

    def apply_M(self, v: np.ndarray) -> np.ndarray:
        return self._average_back(2.0 * self._wq, self._AW0 * self._averaged(v))

    def apply_P(self, w: np.ndarray) -> np.ndarray:
        if not self.model.has_remainder:
            return np.zeros(self.N)
        eps2 = self.epsilon**2
        xi = self.quad.nodes[:, None]
        r = eps2 * xi * self._averaged(w)
        rmax = float(np.max(np.abs(r)))
        if rmax > 1.0:
            raise RemainderBoundExceeded(
                f"remainder force evaluated at |r| = {rmax:.3g} > 1; reduce epsilon or amplitude")
        f = self.model.dpsi(r, xi)
        return self._average_back(self._wp, f) / eps2**3

    def apply_L(self, v: np.ndarray) -> np.ndarray:
        return self.apply_B(v) - self.apply_M(v)

    def apply_L0(self, v: np.ndarray) -> np.ndarray:
        return self.apply_B0(v) - 2.0 * self.moments.I_b3 * self.W0 * v

    # -- composite quantities ---------------------------------------------

    def consistency_terms(self) -> tuple[np.ndarray, np.ndarray]:
        K = (self.apply_Q(self.W0) - self.apply_B(self.W0)) / self.epsilon**2
        E = self.apply_P(self.W0)
        return K, E

    def residual(self, W: np.ndarray) -> np.ndarray:
        """B W - Q[W] - eps^2 P[W]."""
        return self.apply_B(W) - self.apply_Q(W) - self.epsilon**2 * self.apply_P(W)

    def eigen_residual(self, W: np.ndarray, c_sq: float) -> np.ndarray:
        """eps^2 c^2 W - sum_m w xi A dPhi(eps^2 xi A W, xi), the unscaled profile equation."""
        eps2 = self.epsilon**2
        xi = self.quad.nodes[:, None]
        A = np.fft.irfft(self._S * np.fft.rfft(W), n=self.N, axis=1)
        Ad = np.fft.irfft(self._S * (self._mask * np.fft.rfft(W)), n=self.N, axis=1)
        r = eps2 * xi * A
        rd = eps2 * xi * Ad
        # linear bond force on the full spectrum, quadratic and remainder parts dealiased
        lin = np.fft.irfft(np.sum((self._wp * self.model.alpha(self.quad.nodes))[:, None]
                                  * self._S * np.fft.rfft(r, axis=1), axis=0), n=self.N)
        nonlin_fields = self.model.beta(xi) * rd * rd
        if self.model.has_remainder:
            nonlin_fields = nonlin_fields + self.model.dpsi(rd, xi)
        nonlin = self._average_back(self._wp, nonlin_fields)
        return eps2 * c_sq * W - lin - nonlin

    def lower_bound_report(self) -> dict:
        C0 = lower_bound_constant(self.model)
        k = self.symbols.k
        floor = np.minimum(1.0 + k**2, 1.0 + 1.0 / self.epsilon**2)
        ratio = self.symbols.b_eps / floor
        return {"C0": C0, "empirical_min_ratio": float(np.min(ratio)),
                "holds": bool(np.all(self.symbols.b_eps >= C0 * floor))}
