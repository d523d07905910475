import json
from dataclasses import replace
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perikdv import checks, cli
from perikdv.checks import CheckResult
from perikdv.config import (DynamicsSection, GridSection, ModelSection, RunConfig, SolverSection,
                            SweepSection, build_grid, build_model, load_config, parse_config)
from perikdv.constitutive import build_moment_table
from perikdv.errors import ConfigError

REPO_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "power_law.cfg"
MINIMAL = "model.family = power_law\nmodel.H = 1.0\n"

finite = st.floats(1e-6, 1e6, allow_nan=False)
eps = st.floats(1e-3, 1.0, allow_nan=False)


@st.composite
def run_configs(draw):
    model = ModelSection(family=draw(st.sampled_from(["power_law", "gaussian_decay"])), H=draw(finite),
                         C2=draw(finite), C3=draw(finite), g=draw(st.floats(0, 10)), length=draw(finite))
    grid = GridSection(L_dom=draw(st.none() | finite), N=2 * draw(st.integers(1, 4096)))
    solver = SolverSection(epsilon=draw(eps), outer_tol=draw(finite), max_outer=draw(st.integers(1, 999)),
                           continuation=draw(st.booleans()))
    sweep = SweepSection(tuple(draw(st.lists(eps, min_size=1, max_size=6))))
    if draw(st.booleans()):
        dyn = DynamicsSection(Ly=draw(finite), Ny=2 * draw(st.integers(1, 10**5)), dt=draw(finite))
    else:
        dyn = DynamicsSection(t_end=draw(st.none() | finite), stride=draw(st.integers(1, 100)))
    return RunConfig(model=model, grid=grid, solver=solver, sweep=sweep, dynamics=dyn,
                     seed=draw(st.integers(0, 2**31)))


@settings(max_examples=60, deadline=None)
@given(run_configs())
def test_config_round_trip_is_lossless(cfg):
    again = parse_config(cfg.dump())
    assert again == cfg
    assert again.dump() == cfg.dump() and again.hash == cfg.hash


def test_defaults_and_hash():
    cfg = parse_config(MINIMAL)
    assert cfg.solver.epsilon == 0.2 and cfg.grid.L_dom is None
    assert cfg.sweep.epsilons == (0.4, 0.3, 0.2, 0.1)
    assert len(cfg.hash) == 16
    # comments and spacing do not change the hash, values do
    assert parse_config("# note\n\nmodel.H=1.0\nmodel.family=power_law\n").hash == cfg.hash
    assert cfg.with_epsilon(0.1).hash != cfg.hash
    assert cfg.with_output("elsewhere").hash == cfg.hash


@pytest.mark.parametrize("text, line, field", [
    ("model.family = power_law\n", None, "model.H"),
    (MINIMAL + "model.H = 2.0\n", 3, "model.H"),
    (MINIMAL + "solver.epslon = 0.1\n", 3, "solver.epslon"),
    (MINIMAL + "grid.N = many\n", 3, "grid.N"),
    (MINIMAL + "grid.N = 7\n", 3, "grid.N"),
    (MINIMAL + "solver.epsilon = 1.5\n", 3, "solver.epsilon"),
    (MINIMAL + "just text\n", 3, None),
    (MINIMAL + "seed = x\n", 3, "seed"),
    ("model.family = cubic\nmodel.H = 1.0\n", 1, "model.family"),
    (MINIMAL + "dynamics.Ly = 10.0\n", None, "dynamics.Ny"),
    ("model.family = tabulated\nmodel.H = 1.0\n", None, "model.alpha_table"),
])
def test_parse_errors_name_line_and_field(text, line, field):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line and info.value.field == field
    if field:
        assert field in str(info.value)


def test_tabulated_model_relative_to_config(tmp_path):
    (tmp_path / "tables").mkdir()
    for name in ("alpha", "beta"):
        (tmp_path / "tables" / f"{name}.csv").write_text("xi,value\n0.0,1.0\n1.0,1.0\n")
    path = tmp_path / "tab.cfg"
    path.write_text("model.family = tabulated\nmodel.H = 1.0\n"
                    "model.alpha_table = tables/alpha.csv\nmodel.beta_table = tables/beta.csv\n")
    cfg = load_config(path)
    m = build_moment_table(build_model(cfg))
    # constant coefficients: I_a4 = 1/5, I_b3 = 1/4
    assert m.d1 == pytest.approx(60.0, rel=1e-12)
    assert m.d2 == pytest.approx(15.0, rel=1e-12)
    assert build_grid(cfg, m.d1).N == 1024
    broken = replace(cfg, model=replace(cfg.model, beta_table="tables/missing.csv"))
    with pytest.raises(ConfigError) as info:
        build_model(broken)
    assert info.value.field == "model.beta_table"


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.cfg")


def write_cfg(tmp_path, extra="", override=None):
    lines = REPO_CONFIG.read_text().splitlines(keepends=True)
    for key, value in (override or {}).items():
        lines = [f"{key} = {value}\n" if l.startswith(key + " ") else l for l in lines]
    path = tmp_path / "run.cfg"
    path.write_text("".join(lines) + extra)
    return path


def run(tmp_path, *args, extra="", override=None):
    out = tmp_path / "out"
    code = cli.main([*args, "--config", str(write_cfg(tmp_path, extra, override)), "--out", str(out)])
    return code, out


def header_hash(path):
    return next(l for l in path.read_text().splitlines() if l.startswith("# config_hash: ")).split(": ")[1]


def test_moments_command(tmp_path):
    code, out = run(tmp_path, "moments")
    assert code == 0
    payload = json.loads((out / "moments.json").read_text())
    assert payload["d1"] == pytest.approx(48.0, rel=1e-12)
    assert payload["d2"] == pytest.approx(24.0, rel=1e-12)
    assert payload["I_g3"] == 0 and payload["I_g4"] == 0
    assert payload["config_hash"] == load_config(tmp_path / "run.cfg").hash


def test_every_output_carries_the_config_hash(tmp_path):
    cfg_hash = load_config(write_cfg(tmp_path)).hash
    for cmd in ("symbol", "solve", "check", "simulate"):
        code, out = run(tmp_path, cmd)
        assert code == 0, cmd
    files = sorted(p for p in out.rglob("*") if p.is_file())
    assert {p.name for p in files} >= {"symbol_eps0.2.csv", "solution_eps0.2.csv", "solution_eps0.2.json",
                                       "check_report.txt", "summary.json", "snapshot_0000.csv"}
    for p in files:
        if p.suffix == ".json":
            assert json.loads(p.read_text())["config_hash"] == cfg_hash, p
        else:
            assert header_hash(p) == cfg_hash, p
    summary = json.loads((out / "simulate" / "summary.json").read_text())
    assert summary["relative_speed_error"] <= 0.02


def test_epsilon_override_names_outputs(tmp_path):
    code, out = run(tmp_path, "solve", "--epsilon", "0.3")
    assert code == 0 and (out / "solution_eps0.3.json").exists()
    assert json.loads((out / "solution_eps0.3.json").read_text())["epsilon"] == 0.3


def test_exit_codes(tmp_path, monkeypatch, capsys):
    assert run(tmp_path, "moments", extra="model.H = 2.0\n")[0] == cli.EXIT_CONFIG
    assert "line" in capsys.readouterr().err
    assert run(tmp_path, "solve", "--epsilon", "1.5")[0] == cli.EXIT_CONFIG
    bad = tmp_path / "bad.cfg"
    bad.write_text("model.family = power_law\nmodel.H = 1.0\nmodel.C2 = -1.0\n")
    assert cli.main(["moments", "--config", str(bad), "--out", str(tmp_path)]) == cli.EXIT_ASSUMPTION
    assert run(tmp_path, "solve", "--epsilon", "0.9")[0] == cli.EXIT_SOLVER
    assert "NotContracting" in capsys.readouterr().err
    monkeypatch.setattr(checks, "run_suite", lambda *a, **k: [CheckResult("forced", False, "x")])
    assert run(tmp_path, "check")[0] == cli.EXIT_CHECK
    assert "FAIL" in (tmp_path / "out" / "check_report.txt").read_text()


def test_bad_dynamics_settings_are_config_errors(tmp_path):
    assert run(tmp_path, "simulate", extra="dynamics.dt = 50.0\n")[0] == cli.EXIT_CONFIG


def test_partial_sweep_exits_nonzero(tmp_path):
    code, out = run(tmp_path, "sweep", "--workers", "1", override={"sweep.epsilons": "0.9, 0.2, 0.1"})
    assert code == cli.EXIT_SOLVER
    assert "NotContracting" in (out / "sweep.csv").read_text()


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("PERIKDV_THREADS", "1")
    assert cli.default_workers() == 1
    monkeypatch.setenv("PERIKDV_THREADS", "lots")
    with pytest.raises(ConfigError):
        cli.default_workers()
