import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from glkpz.cole_hopf import (OverflowGuardError, HeightField, ap_monitor, build_characteristic,
                             gartner, height, height_from_state, hoelder_monitor, smoothed_gartner)
from glkpz.ensemble import homogenized
from glkpz.heat_kernel import KernelEngine
from glkpz.lattice_sde import simulate


def test_unit_alpha_jumps(gauss_cache):
    ch = build_characteristic(gauss_cache, 4, 0.5)
    np.testing.assert_allclose(ch.jumps, np.arange(1, 9) / 16, atol=1e-14)
    assert ch.count(0.5 / 16) == 0 and ch.count(1 / 16) == 1 and ch.count(0.49) == 7
    assert ch.offset(0.1, 0.3) == ch.count(0.3) - ch.count(0.1)


def test_empty_jump_set(pert_cache):
    ch = build_characteristic(pert_cache, 32, 0.0)
    assert ch.jumps.size == 0 and ch.count(0.0) == 0


def test_jump_count_vs_quadrature(pert, pert_cache):
    N = 32
    ch = build_characteristic(pert_cache, N, 1.0)
    g, w = np.polynomial.legendre.leggauss(40)
    ts = 0.5 * (g + 1)
    ia = 0.5 * sum(wi * homogenized(pert, float(t), warn=False).alpha_bar for t, wi in zip(ts, w))
    D1 = 2 * N ** 1.5 * ia
    assert ch.D(1.0) == pytest.approx(D1, abs=1e-7)
    assert ch.jumps.size == math.floor(D1)
    assert np.all(np.diff(ch.jumps) > 0)
    # floor(D) is constant between jumps
    mids = 0.5 * (ch.jumps[1:] + ch.jumps[:-1])
    np.testing.assert_array_equal(np.floor(ch.D(mids)), np.arange(1, ch.jumps.size))


@pytest.fixture(scope="module")
def run(pert, pert_cache):
    N = 32
    tr = simulate(pert, N, 0.004, 11, trajs=(0, 1), record_every=40)
    return tr, build_characteristic(pert_cache, N, 0.01)


def test_height_at_zero(run, pert_cache):
    tr, ch = run
    hf = height(tr, ch, pert_cache, 0.0)
    J = tr.J0[0][:, None] + np.concatenate([np.zeros((2, 1)), np.cumsum(tr.U[0][:, 1:], -1)], -1) / math.sqrt(32)
    np.testing.assert_array_equal(hf.h, J)
    assert hf.renorm_integral == 0.0 and hf.shift == 0


def test_height_lookup_error(run, pert_cache):
    tr, ch = run
    with pytest.raises(KeyError):
        height(tr, ch, pert_cache, 0.00123)


def test_gradient_relation(run, pert_cache):
    tr, ch = run
    t = tr.times[-1]
    hf = height(tr, ch, pert_cache, t)
    N, n = 32, ch.count(t)
    assert n > 0
    U = tr.U[-1]
    x = np.arange(N)
    src = (x - n) % N
    inner = src != 0  # the wrap bond carries the total charge instead
    np.testing.assert_allclose((hf.h - np.roll(hf.h, 1, -1))[:, inner], U[:, src[inner]] / math.sqrt(N),
                               atol=1e-12)


def test_gaussian_height_and_transform(gauss, gauss_cache):
    tr = simulate(gauss, 16, 0.002, 3, record_every=20)
    ch = build_characteristic(gauss_cache, 16, 0.01)
    t = tr.times[-1]
    hf = height(tr, ch, gauss_cache, t)
    assert hf.renorm_integral == 0.0
    J = tr.J0[-1][:, None] + np.concatenate([[[0.0]], np.cumsum(tr.U[-1][:, 1:], -1)], -1) / 4
    np.testing.assert_array_equal(hf.h, J[:, (np.arange(16) - ch.count(t)) % 16])
    Z, G = gartner(hf, gauss_cache)
    assert np.all(Z == 1.0) and np.all(G == 1.0)


def test_gartner_round_trip(run, pert_cache):
    tr, ch = run
    t = tr.times[-1]
    hf = height(tr, ch, pert_cache, t)
    Z, G = gartner(hf, pert_cache)
    lam = float(pert_cache.lam(t))
    assert np.all(Z > 0)
    np.testing.assert_allclose(np.log(Z) / lam, hf.h, atol=1e-12)
    Jn = hf.h[:, (np.arange(32) + hf.shift) % 32] + hf.renorm_integral
    np.testing.assert_allclose(G, np.exp(lam * Jn - lam * hf.renorm_integral), rtol=1e-13)
    flat = HeightField(t, np.zeros(32), 0.0, 0)
    assert np.all(gartner(flat, pert_cache)[0] == 1.0)


def test_overflow_guard(pert_cache):
    lam = float(pert_cache.lam(0.1))
    hf = HeightField(0.1, np.full(8, 800 / abs(lam)), 0.0, 0)
    with pytest.raises(OverflowGuardError):
        gartner(hf, pert_cache)


def test_hoelder_examples():
    assert hoelder_monitor(np.full(16, 3.0), 16, 0.1)[0] == 0.0
    semi, ex = hoelder_monitor(np.array([0.0, 0.0, 1.0, 1.0]), 4, 0.1)
    assert semi == pytest.approx(0.5)
    assert ex == (0.5 >= 4 ** 0.1)


hs = arrays(np.float64, st.integers(4, 24), elements=st.floats(-10, 10))


@given(hs, st.floats(-50, 50))
def test_hoelder_shift_invariant(h, c):
    N = h.size
    a, _ = hoelder_monitor(h, N, 0.1)
    b, _ = hoelder_monitor(h + c, N, 0.1)
    assert b == pytest.approx(a, abs=1e-9)


@given(hs)
def test_hoelder_reflection_and_batch(h):
    N = h.size
    a, _ = hoelder_monitor(h, N, 0.1)
    # reversing x -> -x preserves geodesic distances, so the pair set is symmetric
    assert hoelder_monitor(np.roll(h[::-1], 1), N, 0.1)[0] == pytest.approx(a, abs=1e-12)
    both, _ = hoelder_monitor(np.stack([h, 2 * h]), N, 0.1)
    np.testing.assert_allclose(both, [a, 2 * a], atol=1e-12)


def test_ap_examples():
    one = np.ones(64)
    assert not ap_monitor(one, one, 3)[2]
    assert not ap_monitor(one, one, 64)[2]
    Z = one.copy()
    Z[5] = math.exp(2 * math.log(64))
    big, small, ex = ap_monitor(Z, one, 64, 0.05)
    assert ex and big == pytest.approx(64 ** 2)
    Z[5] = 1 / 64 ** 2
    assert ap_monitor(Z, one, 64)[2]


def test_smoothed_constant(pert_cache):
    eng = KernelEngine(pert_cache, 32)
    S = smoothed_gartner(np.full(32, 2.5), eng, 0.1, 0.1 / 32 ** 2)
    np.testing.assert_allclose(S, 2.5, atol=1e-14)
    with pytest.raises(ValueError):
        smoothed_gartner(np.ones(32), eng, 0.1, 0.0)


def test_smoothed_span_limit(run, pert_cache):
    tr, ch = run
    N = 32
    eng = KernelEngine(pert_cache, N, ch)
    t = tr.times[-1]
    Z, _ = gartner(height(tr, ch, pert_cache, t), pert_cache)
    gaps = [np.abs(smoothed_gartner(Z, eng, t, f * N ** -2.0) - Z).max() for f in (1e-2, 1e-3, 1e-4)]
    assert gaps[0] > gaps[1] > gaps[2]
    S = smoothed_gartner(Z, eng, t, 0.1 * N ** -2.0)
    assert np.abs(S - Z).max() <= 0.1 * np.abs(Z).max()
