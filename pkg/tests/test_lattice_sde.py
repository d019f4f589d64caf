import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from glkpz.lattice_sde import (ConfigError, LatticeState, LocalizedState, StabilityError,
                               discrete_gradients, drift, dt_max, flux, localization_experiment,
                               localization_length, reconstruct_current, simulate, step,
                               step_localized)
from glkpz.rng import NoiseTape

fields = arrays(np.float64, st.integers(4, 40), elements=st.floats(-5, 5))


def test_gradient_examples():
    p, m, a, lap = discrete_gradients([1.0, 0.0, 0.0, 0.0])
    assert list(lap) == [-2.0, 1.0, 0.0, 1.0]
    assert list(p) == [-1.0, 0.0, 0.0, 1.0]
    assert list(m) == [-1.0, 1.0, 0.0, 0.0]
    assert list(a) == [0.0, -1.0, 0.0, 1.0]


@given(fields)
def test_gradients_sum_to_zero(phi):
    for g in discrete_gradients(phi):
        assert abs(g.sum()) <= 1e-12 * max(1.0, np.abs(phi).sum())


@given(fields, st.floats(-3, 3), st.floats(-3, 3))
def test_gradients_linear(phi, a, b):
    psi = np.cos(np.arange(phi.size))
    for g, gp, gq in zip(discrete_gradients(a * phi + b * psi), discrete_gradients(phi), discrete_gradients(psi)):
        np.testing.assert_allclose(g, a * gp + b * gq, atol=1e-10)


@given(arrays(np.float64, st.integers(4, 32), elements=st.floats(-4, 4)), st.floats(0, 1))
@settings(max_examples=40, deadline=None)
def test_drift_sums_to_zero(pert, U, t):
    d = drift(pert, t, U)
    assert abs(d.sum()) <= 1e-9 * U.size ** 2 * max(1.0, np.abs(d).max())


def test_gaussian_drift_on_delta(gauss):
    N = 8
    U = np.zeros(N)
    U[0] = 1.0
    d = drift(gauss, 0.0, U)
    exp = N ** 2 * np.array([-2, 1, 0, 0, 0, 0, 0, 1.0]) + N ** 1.5 * np.array([0, -1, 0, 0, 0, 0, 0, 1.0])
    np.testing.assert_allclose(d, exp)


def test_dt_max_and_guard(gauss):
    assert dt_max(gauss, 10) == pytest.approx(0.5 / 400)
    s = LatticeState(10, 0.0, np.zeros(10), 0.0)
    with pytest.raises(StabilityError):
        step(s, gauss, 2 * dt_max(gauss, 10), np.zeros(10))
    with pytest.raises(ConfigError):
        simulate(gauss, 3, 0.01, 0)
    with pytest.raises(ConfigError):
        simulate(gauss, 8, 0.01, 0, dt_factor=1.5)


def test_charge_conservation(pert):
    tr = simulate(pert, 64, 0.0, 1, trajs=(0, 1))
    s = LatticeState(64, 0.0, tr.U[0], np.zeros(2))
    tape = NoiseTape(1, (0, 1), 64, 0.2 * dt_max(pert, 64))
    for k in range(2000):
        step(s, pert, tape.dt, tape[k])
    assert np.abs(s.charge_drift()).max() <= 1e-9


def test_determinism(pert):
    a = simulate(pert, 16, 0.002, 5, trajs=(0, 3), record_every=10)
    b = simulate(pert, 16, 0.002, 5, trajs=(0, 3), record_every=10)
    assert np.array_equal(a.U, b.U) and np.array_equal(a.J0, b.J0)
    # trajectory 3 does not depend on which other trajectories share the batch
    c = simulate(pert, 16, 0.002, 5, trajs=(3,), record_every=10)
    assert np.array_equal(a.U[:, 1], c.U[:, 0])
    d = simulate(pert, 16, 0.002, 6, trajs=(0, 3), record_every=10)
    assert not np.array_equal(a.U, d.U)


def test_tape_replay():
    t = NoiseTape(3, (0, 1), 8, 1e-4)
    late = t[1500].copy()
    t2 = NoiseTape(3, (0, 1), 8, 1e-4)
    assert np.array_equal(t2[1500], late)
    assert np.array_equal(NoiseTape(3, (1,), 8, 1e-4)[1500][0], late[1])
    assert not NoiseTape(3, (0,), 8, 1e-4, scale=0)[7].any()


def test_zero_noise_gaussian_is_linear(gauss):
    # without noise the Gaussian dynamics is linear in U
    N = 12
    U = np.random.default_rng(0).normal(size=N)
    dt = 0.2 * dt_max(gauss, N)
    a = LatticeState(N, 0.0, U, 0.0)
    b = LatticeState(N, 0.0, 2 * U, 0.0)
    for _ in range(50):
        step(a, gauss, dt, np.zeros(N))
        step(b, gauss, dt, np.zeros(N))
    np.testing.assert_allclose(b.U, 2 * a.U, atol=1e-12)


def test_current_reconstruction(pert):
    tr = simulate(pert, 16, 0.003, 2, trajs=(0,), record_every=5)
    for i in range(tr.times.size):
        U, J0 = tr.U[i, 0], tr.J0[i, 0]
        J = reconstruct_current(U, J0)
        assert J[0] == J0
        np.testing.assert_allclose(np.diff(J), U[1:] / math.sqrt(16), atol=1e-13)


def test_current_tracks_flux(pert):
    # J0 accumulates the flux through the bond (0, 1); U(1) moves by phi(1) - phi(0)
    N, dt = 8, 0.2 * dt_max(pert, 8)
    s = LatticeState(N, 0.0, np.random.default_rng(1).normal(size=N), 0.0)
    tape = NoiseTape(0, (0,), N, dt)
    J = 0.0
    for k in range(100):
        phi = flux(pert, s.t, s.U, dt, tape[k][0])
        J += phi[0] / math.sqrt(N)
        u1 = s.U[1]
        step(s, pert, dt, tape[k][0])
        assert s.U[1] - u1 == pytest.approx(phi[1] - phi[0], abs=1e-9)
    assert float(s.J0) == pytest.approx(J, abs=1e-12)


@given(st.integers(16, 1024), st.floats(0, 2), st.integers(1, 16), st.floats(0, 0.5))
def test_localization_length_monotone(N, hf, I, g):
    h = hf * N ** -2.0
    assert localization_length(N, h, I, g) <= localization_length(N, h, I + 1, g)
    assert localization_length(N, h, I, g) >= I


def test_full_window_localized_equals_full(pert):
    N = 16
    tr = simulate(pert, N, 0.0, 4, trajs=(0,))
    dt = 0.2 * dt_max(pert, N)
    tape = NoiseTape(4, (0,), N, dt)
    full = LatticeState(N, 0.0, tr.U[0], np.zeros(1))
    loc = LocalizedState(N, np.arange(N), 0.0, tr.U[0].copy(), np.zeros(1))
    for k in range(200):
        step(full, pert, dt, tape[k])
        step_localized(loc, pert, dt, tape[k])
    assert np.array_equal(full.U, loc.U)
    assert np.array_equal(full.J0, loc.J)


def test_localization_window_must_fit(pert):
    with pytest.raises(ConfigError):
        localization_experiment(pert, N=32, I_size=8, buffer=20, n_seeds=1)


def test_no_buffer_control_differs(pert):
    r = localization_experiment(pert, N=64, I_size=8, buffer=0, n_seeds=2)
    assert r["max_sup_diff"] > 1e-2
