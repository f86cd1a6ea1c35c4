import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loewnerlab.driver import (
    BrownianPath,
    DriverPath,
    TimeGrid,
    increment_at,
    negate,
    read_binary,
    refine,
    reverse_shift,
    sample_brownian,
    shift_increments,
    synthetic_path,
    write_binary,
    write_csv,
)
from loewnerlab import GridAlignmentError, LoewnerLabError

GRID = TimeGrid(1.0, 200)


def test_grid_basics():
    g = TimeGrid(2.0, 4)
    assert g.dt == 0.5
    np.testing.assert_array_equal(g.times, [0, 0.5, 1.0, 1.5, 2.0])
    assert g.index_of(1.5) == 3
    with pytest.raises(GridAlignmentError):
        g.index_of(0.7)
    with pytest.raises(LoewnerLabError):
        TimeGrid(1.0, 0)
    with pytest.raises(LoewnerLabError):
        TimeGrid(-1.0, 10)


def test_sample_is_deterministic():
    a = sample_brownian(7, GRID)
    b = sample_brownian(7, GRID)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, sample_brownian(8, GRID).values)


@given(st.integers(0, 2**63))
def test_sample_starts_at_zero(seed):
    assert sample_brownian(seed, GRID).values[0] == 0.0


def test_prefix_shared_across_horizons():
    # counter-based keying: grids with the same dt share the common prefix
    short = sample_brownian(3, TimeGrid(0.5, 5000))
    long = sample_brownian(3, TimeGrid(1.0, 10000))
    np.testing.assert_array_equal(short.values, long.values[:5001])


def test_increment_at_matches_full_path():
    g = TimeGrid(1.0, 10000)
    p = sample_brownian(11, g)
    for j in (0, 4095, 4096, 9999):
        assert increment_at(11, g, j) == pytest.approx(p.increments[j], abs=1e-15)


def test_variance_at_one():
    # Var B_1 = 1; the endpoint is a sum of normals, sampled over many seeds
    g = TimeGrid(1.0, 4)
    ends = np.array([sample_brownian(s, g).values[-1] for s in range(100000)])
    assert 0.97 <= ends.var() <= 1.03
    assert 0.97 <= (-ends).var() <= 1.03  # negated paths are Brownian too


def test_reverse_shift_example():
    p = synthetic_path([0.0, 1.0, -1.0], 1.0)
    np.testing.assert_array_equal(reverse_shift(p, 1.0).values, [0.0, -2.0, -1.0])


@given(st.integers(0, 1000), st.integers(1, 200))
def test_reverse_shift_endpoints_and_involution(seed, k0):
    p = sample_brownian(seed, GRID)
    t0 = k0 * GRID.dt
    r = reverse_shift(p, t0)
    assert r.values[0] == 0.0
    assert r.values[-1] == pytest.approx(p.values[k0], abs=1e-12)
    back = reverse_shift(r, t0)
    np.testing.assert_allclose(back.values, p.values[:k0 + 1], atol=1e-12)


def test_reverse_shift_off_grid():
    with pytest.raises(GridAlignmentError):
        reverse_shift(sample_brownian(0, GRID), 0.0031)


def test_negate():
    p = synthetic_path([0.0, 0.3, -0.1], 1.0)
    np.testing.assert_array_equal(negate(p).values, [0.0, -0.3, 0.1])
    q = sample_brownian(5, GRID)
    np.testing.assert_array_equal(negate(negate(q)).values, q.values)
    assert negate(q).seed == q.seed and "neg" in negate(q).tag


def test_shift_increments_example():
    p = synthetic_path([0.0, 1.0, 3.0, 2.0], 3.0)
    np.testing.assert_array_equal(shift_increments(p, 1.0).values, [0.0, 2.0, 1.0])
    np.testing.assert_array_equal(shift_increments(p, 0.0).values, p.values)
    with pytest.raises(GridAlignmentError):
        shift_increments(p, 3.0)
    with pytest.raises(GridAlignmentError):
        shift_increments(p, 0.5)


@given(st.integers(0, 1000), st.integers(0, 100), st.integers(0, 99))
def test_shift_composition(seed, a, b):
    p = sample_brownian(seed, GRID)
    s, s2 = a * GRID.dt, b * GRID.dt
    one = shift_increments(shift_increments(p, s), s2)
    both = shift_increments(p, (a + b) * GRID.dt)
    np.testing.assert_allclose(one.values, both.values, atol=1e-12)
    assert one.values[0] == 0.0


def test_refine_nested_and_reproducible():
    p = sample_brownian(2, GRID)
    f = refine(p)
    assert f.grid.n_steps == 400
    np.testing.assert_array_equal(f.values[0::2], p.values)
    np.testing.assert_array_equal(refine(p).values, f.values)


def test_refine_bridge_variance():
    # midpoint deviation from the chord has variance dt / 4
    g = TimeGrid(1.0, 1000)
    dev = []
    for s in range(40):
        p = sample_brownian(s, g)
        f = refine(p)
        dev.append(f.values[1::2] - 0.5 * (p.values[:-1] + p.values[1:]))
    dev = np.concatenate(dev)
    se = math.sqrt(2 / dev.size) * g.dt / 4
    assert abs(dev.var() - g.dt / 4) <= 4 * se


def test_driver_scaling():
    p = sample_brownian(1, GRID)
    d = DriverPath(8.0, p)
    np.testing.assert_allclose(d.values, math.sqrt(8) * p.values)
    assert d.values[0] == 0.0
    with pytest.raises(LoewnerLabError):
        DriverPath(-1.0, p)


def test_path_validation():
    with pytest.raises(LoewnerLabError):
        BrownianPath(TimeGrid(1.0, 2), np.array([1.0, 0.0, 0.0]))
    with pytest.raises(LoewnerLabError):
        BrownianPath(TimeGrid(1.0, 2), np.array([0.0, 0.0]))
    p = sample_brownian(1, GRID)
    with pytest.raises(ValueError):
        p.values[1] = 3.0


def test_binary_and_csv_round_trip(tmp_path):
    p = sample_brownian(123456789, GRID)
    write_binary(p, tmp_path / "p.bin")
    q = read_binary(tmp_path / "p.bin")
    assert q.seed == p.seed and q.grid == p.grid
    np.testing.assert_array_equal(q.values, p.values)
    assert (tmp_path / "p.bin").stat().st_size == 24 + 8 * 201
    write_csv(p, tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "t,value" and len(lines) == 202
