"""Preconditioned MINRES for symmetric, possibly indefinite, matrix-free operators.

Follows the Paige-Saunders recurrences.  The preconditioner must be
symmetric positive definite; the monotone residual estimate is then the
preconditioned norm sqrt(r . M r).  The Lanczos coefficients are kept so
callers can inspect Ritz values when a solve stalls.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    # np.sum keeps a fixed reduction order independent of BLAS threading
    return float(np.sum(a * b))


@dataclass
class MinresResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residual_history: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)

    def ritz_values(self) -> np.ndarray:
        n = len(self.alphas)
        if n == 0:
            return np.array([])
        T = np.diag(self.alphas)
        off = np.asarray(self.betas[: n - 1])
        T += np.diag(off, 1) + np.diag(off, -1)
        return np.linalg.eigvalsh(T)


def minres(op: Callable[[np.ndarray], np.ndarray], b: np.ndarray,
           precond: Callable[[np.ndarray], np.ndarray] | None = None,
           x0: np.ndarray | None = None, rtol: float = 1e-12, maxiter: int = 2000,
           stagnation_window: int = 40) -> MinresResult:
    """Solve op(x) = b.

    Stops when the preconditioned residual estimate falls below
    ``rtol`` times its initial value, after ``maxiter`` iterations, or when
    the estimate has not halved over ``stagnation_window`` iterations.
    """
    M = precond or (lambda v: v)
    n = b.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r1 = b - op(x) if x0 is not None else b.copy()
    y = M(r1)
    beta1 = _dot(r1, y)
    if beta1 < 0:
        raise ValueError("preconditioner is not positive definite")
    beta1 = math.sqrt(beta1)
    res = MinresResult(x=x, iterations=0, converged=beta1 == 0.0, residual_history=[beta1])
    if beta1 == 0.0:
        return res

    oldb, beta = 0.0, beta1
    dbar = epsln = 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1
    tiny = np.finfo(float).eps

    for itn in range(1, maxiter + 1):
        v = y / beta
        y = op(v)
        if itn >= 2:
            y = y - (beta / oldb) * r1
        alfa = _dot(v, y)
        y = y - (alfa / beta) * r2
        r1, r2 = r2, y
        y = M(r2)
        oldb = beta
        beta2 = _dot(r2, y)
        if beta2 < 0:
            raise ValueError("preconditioner is not positive definite")
        beta = math.sqrt(beta2)
        res.alphas.append(alfa)
        res.betas.append(beta)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(math.hypot(gbar, beta), tiny)
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w

        res.residual_history.append(phibar)
        res.iterations = itn
        if phibar <= rtol * beta1 or beta == 0.0:
            res.converged = True
            break
        if itn > stagnation_window and phibar > 0.5 * res.residual_history[-1 - stagnation_window]:
            break
    res.x = x
    return res
