"""Run configuration: flat ``section.key = value`` text, one file for every command.

Lines starting with ``#`` and blank lines are ignored.  Floats are written
with ``repr`` so a parsed and re-dumped file is identical, and the hash of
that canonical dump (output section excluded) identifies a run in every
output header.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .constitutive import ConstitutiveModel, TabulatedCoefficient, gaussian_decay, power_law, tabulated
from .errors import ConfigError
from .grid import Grid
from .solver import SolverConfig

FAMILIES = ("power_law", "gaussian_decay", "tabulated")
_REQUIRED = object()


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> tuple:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _optional(conv):
    def parse(text):
        return None if text.lower() in ("", "auto", "none") else conv(text)
    return parse


def _fmt(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(float(v))
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def _f(default, conv, **kw):
    return field(default=default, metadata={"conv": conv, **kw})


@dataclass(frozen=True)
class ModelSection:
    family: str = _f(_REQUIRED, str)
    H: float = _f(_REQUIRED, float)
    C2: float = _f(1.0, float)
    C3: float = _f(1.0, float)
    g: float = _f(0.0, float)
    length: float = _f(1.0, float)
    alpha_table: str | None = _f(None, _optional(str))
    beta_table: str | None = _f(None, _optional(str))


@dataclass(frozen=True)
class GridSection:
    L_dom: float | None = _f(None, _optional(float))
    N: int = _f(1024, int)


@dataclass(frozen=True)
class SolverSection:
    epsilon: float = _f(0.2, float)
    outer_tol: float = _f(1e-10, float)
    max_outer: int = _f(60, int)
    inner_tol: float = _f(1e-12, float)
    max_inner: int = _f(2000, int)
    continuation: bool = _f(True, _parse_bool)


@dataclass(frozen=True)
class SweepSection:
    epsilons: tuple = _f((0.4, 0.3, 0.2, 0.1), _parse_floats)


@dataclass(frozen=True)
class DynamicsSection:
    Ly: float | None = _f(None, _optional(float))
    Ny: int | None = _f(None, _optional(int))
    dt: float | None = _f(None, _optional(float))
    t_end: float | None = _f(None, _optional(float))
    stride: int = _f(10, int)


@dataclass(frozen=True)
class OutputSection:
    dir: str = _f("out", str)


SECTIONS = {"model": ModelSection, "grid": GridSection, "solver": SolverSection,
            "sweep": SweepSection, "dynamics": DynamicsSection, "output": OutputSection}


@dataclass(frozen=True)
class RunConfig:
    model: ModelSection
    grid: GridSection = GridSection()
    solver: SolverSection = SolverSection()
    sweep: SweepSection = SweepSection()
    dynamics: DynamicsSection = DynamicsSection()
    output: OutputSection = OutputSection()
    seed: int = 0
    base_dir: Path = field(default=Path("."), compare=False)

    def dump(self) -> str:
        lines = []
        for name in SECTIONS:
            section = getattr(self, name)
            for f in fields(section):
                lines.append(f"{name}.{f.name} = {_fmt(getattr(section, f.name))}")
        lines.append(f"seed = {self.seed}")
        return "\n".join(lines) + "\n"

    @property
    def hash(self) -> str:
        # where results are written does not change them
        body = "".join(l + "\n" for l in self.dump().splitlines() if not l.startswith("output."))
        return hashlib.sha256(body.encode()).hexdigest()[:16]

    def header_lines(self) -> tuple[str, ...]:
        return (f"config_hash: {self.hash}",)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def with_epsilon(self, epsilon: float) -> "RunConfig":
        return replace(self, solver=replace(self.solver, epsilon=float(epsilon)))

    def with_output(self, directory: str) -> "RunConfig":
        return replace(self, output=OutputSection(str(directory)))


def parse_config(text: str, base_dir: str | Path = ".") -> RunConfig:
    raw: dict[str, dict] = {name: {} for name in SECTIONS}
    seen: dict[str, int] = {}
    seed = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, value = (s.strip() for s in stripped.split("=", 1))
        if key in seen:
            raise ConfigError(f"duplicate key (first set on line {seen[key]})", line=lineno, field=key)
        seen[key] = lineno
        if key == "seed":
            try:
                seed = int(value)
            except ValueError:
                raise ConfigError(f"expected an integer, got {value!r}", line=lineno, field=key) from None
            continue
        section, _, name = key.partition(".")
        cls = SECTIONS.get(section)
        spec = {f.name: f for f in fields(cls)} if cls else {}
        if name not in spec:
            raise ConfigError("unknown key", line=lineno, field=key)
        try:
            raw[section][name] = spec[name].metadata["conv"](value)
        except ValueError as exc:
            raise ConfigError(f"bad value {value!r}: {exc}", line=lineno, field=key) from None

    sections = {}
    for name, cls in SECTIONS.items():
        for f in fields(cls):
            if f.default is _REQUIRED and f.name not in raw[name]:
                raise ConfigError("required key is missing", field=f"{name}.{f.name}")
        sections[name] = cls(**raw[name])
    cfg = RunConfig(**sections, seed=seed, base_dir=Path(base_dir))
    _validate(cfg, seen)
    return cfg


def _validate(cfg: RunConfig, lines: dict) -> None:
    def bad(key, msg):
        raise ConfigError(msg, line=lines.get(key), field=key)

    m = cfg.model
    if m.family not in FAMILIES:
        bad("model.family", f"unknown family {m.family!r}; expected one of {', '.join(FAMILIES)}")
    if not (m.H > 0 and math.isfinite(m.H)):
        bad("model.H", "horizon must be positive and finite")
    if m.family == "tabulated":
        for key in ("alpha_table", "beta_table"):
            if getattr(m, key) is None:
                bad(f"model.{key}", "tabulated family needs both coefficient tables")
    if cfg.grid.N <= 0 or cfg.grid.N % 2:
        bad("grid.N", "must be a positive even integer")
    if cfg.grid.L_dom is not None and cfg.grid.L_dom <= 0:
        bad("grid.L_dom", "must be positive")
    if not 0 < cfg.solver.epsilon <= 1:
        bad("solver.epsilon", "must lie in (0, 1]")
    if not cfg.sweep.epsilons or any(not 0 < e <= 1 for e in cfg.sweep.epsilons):
        bad("sweep.epsilons", "need a nonempty list of values in (0, 1]")
    if cfg.dynamics.Ny is not None and (cfg.dynamics.Ny <= 0 or cfg.dynamics.Ny % 2):
        bad("dynamics.Ny", "must be a positive even integer")
    if (cfg.dynamics.Ly is None) != (cfg.dynamics.Ny is None):
        bad("dynamics.Ly" if cfg.dynamics.Ly is None else "dynamics.Ny",
            "dynamics.Ly and dynamics.Ny are set together or both left on auto")
    if cfg.dynamics.stride <= 0:
        bad("dynamics.stride", "must be positive")


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent)


def build_model(cfg: RunConfig) -> ConstitutiveModel:
    m = cfg.model
    if m.family == "power_law":
        return power_law(C2=m.C2, C3=m.C3, H=m.H, g=m.g)
    if m.family == "gaussian_decay":
        return gaussian_decay(C2=m.C2, C3=m.C3, H=m.H, g=m.g, length=m.length)
    tables = {}
    for key in ("alpha_table", "beta_table"):
        try:
            tables[key] = TabulatedCoefficient.from_csv(cfg.resolve(getattr(m, key)))
        except (OSError, ValueError, IndexError) as exc:
            raise ConfigError(f"cannot load table: {exc}", field=f"model.{key}") from None
    return tabulated(tables["alpha_table"], tables["beta_table"], g=m.g, H=m.H,
                     params={"alpha_table": m.alpha_table, "beta_table": m.beta_table})


def build_grid(cfg: RunConfig, d1: float) -> Grid:
    if cfg.grid.L_dom is None:
        return Grid.for_kdv(d1, N=cfg.grid.N)
    return Grid(L_dom=cfg.grid.L_dom, N=cfg.grid.N)


def solver_config(cfg: RunConfig, epsilon: float | None = None) -> SolverConfig:
    s = cfg.solver
    return SolverConfig(epsilon=s.epsilon if epsilon is None else float(epsilon),
                        outer_tol=s.outer_tol, max_outer=s.max_outer, inner_tol=s.inner_tol,
                        max_inner=s.max_inner, continuation=s.continuation)
