"""Periodic spectral grid standing in for the real line.

Profiles are plain float arrays of length N sampled at the grid nodes;
spectra are the complex arrays returned by ``numpy.fft.fft`` (standard FFT
ordering, unnormalized forward transform).  The grid owns every operation
that needs the node spacing or the wavenumbers.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Grid:
    L_dom: float
    N: int = 1024

    def __post_init__(self):
        if self.N <= 0 or self.N % 2:
            raise ValueError(f"N must be a positive even integer, got {self.N}")
        if not self.L_dom > 0:
            raise ValueError(f"L_dom must be positive, got {self.L_dom}")

    @classmethod
    def for_kdv(cls, d1: float, N: int = 1024, factor: float = 30.0) -> "Grid":
        """Grid wide enough that the KdV soliton has decayed below 1e-12 of its peak."""
        return cls(L_dom=factor / math.sqrt(d1), N=N)

    @property
    def h(self) -> float:
        return 2.0 * self.L_dom / self.N

    @cached_property
    def x(self) -> np.ndarray:
        # integer offsets from the centre keep mirror nodes exact negatives
        return self.h * (np.arange(self.N) - self.N // 2)

    @cached_property
    def k(self) -> np.ndarray:
        """Wavenumbers in FFT order; covers pi*j/L_dom for j = -N/2 .. N/2-1."""
        return 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.h)

    @cached_property
    def rk(self) -> np.ndarray:
        """Nonnegative wavenumbers matching ``numpy.fft.rfft`` output."""
        return 2.0 * np.pi * np.fft.rfftfreq(self.N, d=self.h)

    @property
    def k_max(self) -> float:
        return math.pi / self.h

    @cached_property
    def _reflect(self) -> np.ndarray:
        # node i sits at -L + i h, its mirror -x_i at index (N - i) mod N
        return (-np.arange(self.N)) % self.N

    # -- transforms -------------------------------------------------------

    def transform(self, p: np.ndarray) -> np.ndarray:
        return np.fft.fft(p)

    def inverse_transform(self, s: np.ndarray) -> np.ndarray:
        return np.fft.ifft(s).real

    def derivative(self, p: np.ndarray, order: int = 1) -> np.ndarray:
        if order not in (1, 2, 3, 4):
            raise ValueError(f"unsupported derivative order {order}")
        mult = (1j * self.rk) ** order
        if order % 2:
            mult[-1] = 0.0  # odd derivative of the Nyquist mode is not real
        return np.fft.irfft(mult * np.fft.rfft(p), n=self.N)

    def antiderivative(self, p: np.ndarray) -> tuple[np.ndarray, float]:
        """Zero-mean periodic antiderivative of p - mean(p), and mean(p)."""
        ph = np.fft.rfft(p)
        mean = ph[0].real / self.N
        mult = np.zeros_like(self.rk, dtype=complex)
        mult[1:] = 1.0 / (1j * self.rk[1:])
        mult[-1] = 0.0
        return np.fft.irfft(mult * ph, n=self.N), mean

    # -- symmetry and norms ----------------------------------------------

    def reflect(self, p: np.ndarray) -> np.ndarray:
        return p[self._reflect]

    def project_even(self, p: np.ndarray) -> np.ndarray:
        return 0.5 * (p + p[self._reflect])

    def inner(self, p: np.ndarray, q: np.ndarray) -> float:
        return float(self.h * np.sum(p * q))

    def l2_norm(self, p: np.ndarray) -> float:
        return math.sqrt(self.h * float(np.sum(p * p)))

    def w22_norm(self, p: np.ndarray) -> float:
        d1 = self.derivative(p, 1)
        d2 = self.derivative(p, 2)
        return math.sqrt(self.l2_norm(p) ** 2 + self.l2_norm(d1) ** 2 + self.l2_norm(d2) ** 2)

    def spectral_l2_sq(self, s: np.ndarray) -> float:
        """Parseval counterpart of l2_norm(p)**2 for s = transform(p)."""
        return float(2.0 * self.L_dom / self.N**2 * np.sum(np.abs(s) ** 2))

    def evaluate(self, p: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Trigonometric interpolant of p at arbitrary points (periodic in 2*L_dom)."""
        c = np.fft.rfft(p) / self.N
        c[1:] *= 2.0
        if self.N % 2 == 0:
            c[-1] *= 0.5
        phase = np.outer(np.asarray(points, dtype=float) + self.L_dom, self.rk)
        return np.cos(phase) @ c.real - np.sin(phase) @ c.imag

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {"L_dom": self.L_dom, "N": self.N}


def json_safe(obj):
    """Copy of a JSON payload with non-finite floats replaced by None."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    return obj


def profile_to_json(grid: Grid, values: np.ndarray) -> dict:
    return {"grid": grid.to_dict(), "values": [float(v) for v in values]}


def profile_from_json(record: dict) -> tuple[Grid, np.ndarray]:
    g = record["grid"]
    grid = Grid(L_dom=float(g["L_dom"]), N=int(g["N"]))
    values = np.asarray(record["values"], dtype=float)
    if values.shape != (grid.N,):
        raise ValueError(f"profile has {values.size} values, grid expects {grid.N}")
    return grid, values


def write_profile_csv(path: str | Path, grid: Grid, columns: dict[str, np.ndarray],
                      header_lines: tuple[str, ...] = ()) -> None:
    """Write x plus one column per named profile."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", *columns])
        cols = list(columns.values())
        for i, xi in enumerate(grid.x):
            w.writerow([repr(float(xi)), *(repr(float(c[i])) for c in cols)])


def read_profile_csv(path: str | Path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    names = rows[0]
    data = np.array(rows[1:], dtype=float)
    return data[:, 0], {n: data[:, i] for i, n in enumerate(names) if i > 0}


def dump_profile_json(path: str | Path, grid: Grid, values: np.ndarray) -> None:
    Path(path).write_text(json.dumps(profile_to_json(grid, values)))
