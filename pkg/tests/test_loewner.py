import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from conftest import rk4
from loewnerlab import LoewnerLabError
from loewnerlab.driver import DriverPath, TimeGrid, refine, sample_brownian, synthetic_path
from loewnerlab.loewner import (
    BackwardChain,
    backward_elementary,
    backward_trace,
    boundary_images,
    build_chain,
    evolve_backward,
    forward_elementary,
    inverse_forward,
    shifted_chain,
    squared_map,
    trace,
    write_trace_csv,
)
from loewnerlab.lab import ks_critical_value

upper = st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False).filter(lambda z: z.imag > 1e-6)


def chain_for(kappa, seed, n=1000, t_end=1.0, rule="left"):
    return build_chain(DriverPath(kappa, sample_brownian(seed, TimeGrid(t_end, n))), rule)


def zero_chain(n, t_end=1.0):
    return build_chain(DriverPath(0.0, synthetic_path(np.zeros(n + 1), t_end)))


# -- elementary maps against an RK4 oracle ------------------------------------

def test_backward_elementary_vs_rk4():
    oracle = rk4(lambda h: -2 / h, 2j, 1.0, 20000)
    assert abs(oracle - 2 * math.sqrt(2) * 1j) < 1e-10
    assert backward_elementary(2j, 0.0, 1.0) == pytest.approx(oracle, abs=1e-10)
    oracle = rk4(lambda h: -2 / h, 3.0, 1.0, 20000)
    assert backward_elementary(3.0, 0.0, 1.0) == pytest.approx(oracle, abs=1e-10)
    assert backward_elementary(3.0, 0.0, 1.0) == pytest.approx(math.sqrt(5), abs=1e-14)


def test_forward_elementary_vs_rk4():
    oracle = rk4(lambda g: 2 / g, 2.0, 1.0, 20000)
    w, swallowed, st_ = forward_elementary(2.0, 0.0, 1.0)
    assert not swallowed and st_ is None
    assert w == pytest.approx(oracle, abs=1e-10)
    assert w == pytest.approx(math.sqrt(8), abs=1e-14)


def test_forward_swallow_time():
    # integrate g' = 2/g from i until it reaches the singularity
    g, t, h = 1j, 0.0, 1e-6
    while abs(g) > 1e-3:
        g += h * 2 / g
        t += h
    w, swallowed, st_ = forward_elementary(1j, 0.0, 1.0)
    assert swallowed and st_ == pytest.approx(0.25)
    assert t == pytest.approx(0.25, abs=1e-5)
    assert w == 0j


def test_zero_time_is_identity():
    assert backward_elementary(1 + 2j, 0.3, 0.0) == 1 + 2j
    assert forward_elementary(1 + 2j, 0.3, 0.0) == (1 + 2j, False, None)


def test_forward_singular_point_rejected():
    with pytest.raises(LoewnerLabError):
        forward_elementary(0.5, 0.5, 0.1)
    with pytest.raises(LoewnerLabError):
        backward_elementary(1 - 1j, 0.0, 0.1)


def test_backward_on_real_line():
    # outside the slit footprint: real, same side; inside: on the slit
    assert backward_elementary(-3.0, 0.0, 1.0) == pytest.approx(-math.sqrt(5))
    w = backward_elementary(0.5, 0.0, 1.0)
    assert w.real == 0.0 and w.imag == pytest.approx(math.sqrt(4 - 0.25))


@given(upper, st.floats(-2, 2), st.floats(1e-6, 1.0))
def test_backward_lifts(z, u, dt):
    w = backward_elementary(z, u, dt)
    assert w.imag >= z.imag - 1e-12


@given(upper, st.floats(-2, 2), st.floats(1e-6, 1.0))
def test_round_trip(z, u, dt):
    w, swallowed, _ = forward_elementary(backward_elementary(z, u, dt), u, dt)
    assert not swallowed
    assert abs(w - z) <= 1e-12 * max(1.0, abs(z - u) + math.sqrt(dt))


def test_forward_then_inverse_one_step():
    w, _, _ = forward_elementary(1 + 1j, 0.2, 0.05)
    assert abs(backward_elementary(w, 0.2, 0.05) - (1 + 1j)) < 1e-12


# -- chains ---------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 7, 100, 1000])
def test_zero_driver_backward(n):
    ch = zero_chain(n)
    assert abs(evolve_backward(ch, 2j) - 2 * math.sqrt(2) * 1j) < 1e-9
    for z in (1 + 1j, 3.0):
        assert abs(evolve_backward(ch, z) - cmath.sqrt(complex(z) ** 2 - 4)) < 1e-9
    assert evolve_backward(ch, 2j, 0) == 2j


def test_inverse_forward_zero_driver():
    assert abs(inverse_forward(zero_chain(50), 2j) - 2 * math.sqrt(2) * 1j) < 1e-12


def test_imaginary_part_nondecreasing():
    ch = chain_for(3.0, 4, n=300)
    z = 0.3 + 0.1j
    ims = [evolve_backward(ch, z, k).imag for k in range(0, 301)]
    assert np.all(np.diff(ims) >= -1e-15)


def test_vectorized_matches_scalar():
    ch = chain_for(6.0, 1, n=200)
    zs = np.array([1j, 0.5 + 0.2j, -2.0 + 0j])
    out = evolve_backward(ch, zs)
    for z, w in zip(zs, out):
        assert evolve_backward(ch, complex(z)) == w


def test_step_count_validated():
    ch = zero_chain(10)
    with pytest.raises(LoewnerLabError):
        evolve_backward(ch, 1j, 11)
    with pytest.raises(LoewnerLabError):
        evolve_backward(ch, -1j)


def test_midpoint_rule():
    p = synthetic_path([0.0, 1.0, 3.0], 2.0)
    ch = BackwardChain(4.0, DriverPath(4.0, p), "midpoint")
    np.testing.assert_allclose(ch.u, [1.0, 4.0])
    assert len(ch.slits) == 2 and sum(s.dt for s in ch.slits) == pytest.approx(2.0)
    with pytest.raises(LoewnerLabError):
        BackwardChain(4.0, DriverPath(4.0, p), "right")


def test_hydrodynamic_normalization():
    ch = chain_for(4.0, 9, n=500)
    c = []
    for R in (1e3, 1e4):
        z = R * cmath.exp(0.7j)
        c.append(abs(evolve_backward(ch, z) - z + 2 * ch.grid.t_end / z) * R ** 2)
    # the residual times R^2 settles to a constant: it decays like R^-2
    assert c[1] == pytest.approx(c[0], rel=0.05)


@given(st.integers(0, 50), st.floats(3.0, 6.0), st.floats(0.01, 2.0))
def test_boundary_order_preserved(seed, x, gap):
    ch = chain_for(2.0, seed, n=200, t_end=0.2)
    a, b = evolve_backward(ch, np.array([x, x + gap], dtype=complex))
    assert a.imag == 0 and b.imag == 0
    assert a.real < b.real
    a, b = evolve_backward(ch, np.array([-x - gap, -x], dtype=complex))
    assert a.real < b.real


# -- traces ---------------------------------------------------------------------

def test_zero_driver_trace():
    ch = zero_chain(1000)
    poly = trace(ch)
    assert np.max(np.abs(poly.points - 2j * np.sqrt(poly.times))) < 1e-8


def test_single_step_trace():
    p = synthetic_path([0.0, 0.3], 0.01)
    ch = build_chain(DriverPath(1.0, p))
    poly = trace(ch)
    assert poly.points[-1] == pytest.approx(0.0 + 2j * math.sqrt(0.01))


@given(st.integers(0, 1000))
def test_trace_in_upper_half_plane(seed):
    poly = trace(chain_for(6.0, seed, n=300), every=3)
    assert np.all(poly.points.imag >= 0)
    assert poly.points[0] == 0 and poly.times[-1] == pytest.approx(1.0)
    assert len(poly.times) == len(poly.points)


def test_trace_subsampling_keeps_last_step():
    poly = trace(chain_for(2.0, 1, n=100), every=7)
    assert poly.times[-1] == pytest.approx(1.0)
    full = trace(chain_for(2.0, 1, n=100))
    np.testing.assert_array_equal(full.points[::7], poly.points[:-1])


def test_trace_self_convergence():
    # sup distance between successive bridge refinements, averaged over seeds
    dists = []
    for seed in range(10):
        paths = [sample_brownian(seed, TimeGrid(1.0, 250))]
        for _ in range(3):
            paths.append(refine(paths[-1]))
        tr = [trace(build_chain(DriverPath(2.0, p))).points[:: 2 ** i] for i, p in enumerate(paths)]
        dists.append([np.max(np.abs(tr[i] - tr[i + 1])) for i in range(3)])
    mean = np.mean(dists, axis=0)
    assert mean[0] > mean[1] > mean[2]


def test_backward_trace_zero_driver():
    ch = zero_chain(400)
    fwd = trace(ch)
    bwd = backward_trace(ch.driver, 1.0)
    np.testing.assert_allclose(bwd.points[::-1], fwd.points, atol=1e-12)


@given(st.integers(0, 500))
def test_backward_trace_root(seed):
    d = DriverPath(6.0, sample_brownian(seed, TimeGrid(1.0, 400)))
    bt = backward_trace(d, 0.5, every=5)
    assert abs(bt.points[-1].imag) <= 2 * math.sqrt(d.grid.dt)
    assert bt.points[-1].real == pytest.approx(d.values[200])
    assert bt.times[0] == 0 and bt.times[-1] == pytest.approx(0.5)


def test_backward_trace_tip_law():
    # tip relative to root has the law of the forward tip
    n, g = 2000, TimeGrid(1.0, 200)
    tips_b, tips_f = [], []
    for j in range(n):
        d = DriverPath(3.0, sample_brownian(10**6 + j, g))
        bt = backward_trace(d, 1.0, every=200)
        tips_b.append(abs(bt.points[0] - bt.points[-1]))
        f = trace(build_chain(DriverPath(3.0, sample_brownian(2 * 10**6 + j, g))), every=200)
        tips_f.append(abs(f.points[-1]))
    ks = stats.ks_2samp(tips_b, tips_f).statistic
    assert ks < ks_critical_value(n, n)


def test_backward_hull_matches_backward_map():
    # the backward map sends the hull tip region to the slit, so the driver
    # value at t0 lies in the closure of the traced hull's base
    d = DriverPath(2.0, sample_brownian(3, TimeGrid(1.0, 500)))
    ch = build_chain(d)
    bt = backward_trace(d, 1.0)
    hb = boundary_images(ch, 500, 1e-4)
    assert hb.left <= bt.points[-1].real <= hb.right


# -- boundary images, shifts, squared maps ----------------------------------------

def test_boundary_images_zero_driver():
    b = boundary_images(zero_chain(1000), 1000, 1e-3)
    assert b.right - b.left == 0.0


def test_boundary_images_kappa8_positive():
    b = boundary_images(chain_for(8.0, 0, n=10000), 10000, 1e-4)
    assert b.right - b.left > 0
    assert b.left <= b.right


@given(st.integers(0, 200))
def test_boundary_images_nested(seed):
    ch = chain_for(6.0, seed, n=500)
    lengths = [boundary_images(ch, 500, e).right - boundary_images(ch, 500, e).left
               for e in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert np.all(np.diff(lengths) <= 1e-12)


def test_shifted_chain():
    ch = chain_for(4.0, 6, n=300)
    same = shifted_chain(ch, 0)
    np.testing.assert_array_equal(same.u, ch.u)
    sub = shifted_chain(ch, 100)
    assert sub.grid.t_end == pytest.approx(ch.grid.t_end - 100 * ch.dt)
    z = 2j
    mid = evolve_backward(ch, z, 100)
    composed = sub.origin + evolve_backward(sub, mid - sub.origin)
    assert abs(composed - evolve_backward(ch, z)) < 1e-8
    with pytest.raises(LoewnerLabError):
        shifted_chain(ch, 300)


def test_squared_map():
    ch = zero_chain(100)
    assert squared_map(ch, -1 + 0j, 0) == pytest.approx(-1)
    assert squared_map(ch, 2 + 1j, 0) == pytest.approx(2 + 1j)
    assert squared_map(ch, -1 + 0j) == pytest.approx(-5, abs=1e-9)
    with pytest.raises(LoewnerLabError):
        squared_map(ch, 2.0)


def test_squared_map_avoids_hull():
    d = DriverPath(2.0, sample_brownian(12, TimeGrid(1.0, 400)))
    ch = build_chain(d)
    # the image of h_t, recentred at U_t, avoids the backward hull recentred the same way
    hull = (backward_trace(d, 1.0).points - d.values[-1]) ** 2
    rng = np.random.default_rng(0)
    zs = rng.uniform(-3, 3, 100) + 1j * rng.uniform(-3, 3, 100)
    w = squared_map(ch, zs)
    dist = np.min(np.abs(w[:, None] - hull[None, :]), axis=1)
    assert np.all(dist > ch.dt)


def test_trace_csv(tmp_path):
    poly = trace(zero_chain(10))
    write_trace_csv(poly, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,re,im" and len(lines) == 12
