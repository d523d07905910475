import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from perikdv.grid import (Grid, dump_profile_json, profile_from_json, profile_to_json,
                          read_profile_csv, write_profile_csv)

G = Grid(L_dom=math.pi, N=64)


def test_nodes_and_wavenumbers():
    assert G.x[0] == pytest.approx(-math.pi, rel=1e-15)
    assert G.x[G.N // 2] == 0.0
    assert G.h == pytest.approx(2 * math.pi / 64)
    assert G.k_max == pytest.approx(32.0)
    assert set(np.rint(G.k).astype(int)) == set(range(-32, 32))


@pytest.mark.parametrize("N", [0, 7, -2])
def test_rejects_bad_sizes(N):
    with pytest.raises(ValueError):
        Grid(1.0, N)


def test_spectral_derivatives_of_trig():
    p = np.sin(3 * G.x)
    assert np.max(np.abs(G.derivative(p, 1) - 3 * np.cos(3 * G.x))) < 1e-12
    assert np.max(np.abs(G.derivative(p, 2) + 9 * p)) < 1e-11
    assert np.max(np.abs(G.derivative(p, 4) - 81 * p)) < 1e-9
    with pytest.raises(ValueError):
        G.derivative(p, 5)


def test_antiderivative_returns_mean_and_primitive():
    p = 0.5 + np.cos(2 * G.x)
    prim, mean = G.antiderivative(p)
    assert mean == pytest.approx(0.5)
    assert np.max(np.abs(prim - 0.5 * np.sin(2 * G.x))) < 1e-13


def test_transform_round_trip_and_parseval(rng):
    p = rng.standard_normal(G.N)
    s = G.transform(p)
    assert np.allclose(G.inverse_transform(s), p, atol=1e-14)
    assert G.spectral_l2_sq(s) == pytest.approx(G.l2_norm(p) ** 2, rel=1e-12)


def test_reflection_maps_x_to_minus_x():
    assert np.array_equal(G.reflect(G.x)[1:], -G.x[1:])


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 64, elements=st.floats(-1e3, 1e3)))
def test_even_projection_is_idempotent_and_even(p):
    q = G.project_even(p)
    assert np.array_equal(q, G.reflect(q))
    assert np.array_equal(G.project_even(q), q)


def test_w22_norm_of_trig_mode():
    p = np.cos(2 * G.x)
    # |p|^2 = pi, each derivative multiplies by 2
    assert G.w22_norm(p) == pytest.approx(math.sqrt(math.pi * (1 + 4 + 16)), rel=1e-12)


def test_trigonometric_interpolant():
    p = np.cos(3 * G.x) + 0.1 * np.sin(G.x)
    pts = np.array([-1.234, 0.0, 0.5, 2.9])
    assert np.allclose(G.evaluate(p, pts), np.cos(3 * pts) + 0.1 * np.sin(pts), atol=1e-12)
    assert np.allclose(G.evaluate(p, G.x[::7]), p[::7], atol=1e-12)


def test_csv_round_trip_is_exact(tmp_path, rng):
    a, b = rng.standard_normal(G.N), rng.standard_normal(G.N)
    path = tmp_path / "p.csv"
    write_profile_csv(path, G, {"a": a, "b": b}, ("config_hash: abc",))
    assert path.read_text().startswith("# config_hash: abc\nx,a,b\n")
    x, cols = read_profile_csv(path)
    assert np.array_equal(x, G.x) and np.array_equal(cols["a"], a) and np.array_equal(cols["b"], b)


def test_json_round_trip(tmp_path, rng):
    p = rng.standard_normal(G.N)
    grid, q = profile_from_json(profile_to_json(G, p))
    assert grid == G and np.array_equal(p, q)
    dump_profile_json(tmp_path / "p.json", G, p)
    with pytest.raises(ValueError):
        profile_from_json({"grid": {"L_dom": 1.0, "N": 8}, "values": [0.0] * 3})
