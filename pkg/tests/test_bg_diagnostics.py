import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glkpz.bg_diagnostics import (CenteredStatistic, block_decay, classify, lemma_statistics, residuals,
                                  space_time_average, verify_lemma4)
from glkpz.cole_hopf import build_characteristic
from glkpz.ensemble import grand_canonical, homogenized, solve_tilt
from glkpz.lattice_sde import reconstruct_current, simulate
from glkpz.potential import perturbed_potential


@pytest.fixture(scope="module")
def misshifted():
    return perturbed_potential(0.3, 1.0, skew=0.3, shift=False)


def test_classify_examples(pert):
    u = CenteredStatistic("u", lambda t, u: u, "CT", 1)
    cls, r = classify(pert, u, 0.3)
    assert cls == "CT" and r[1] == pytest.approx(1.0, abs=1e-10)
    one = CenteredStatistic("one", lambda t, u: np.ones_like(u), "CT", 0)
    assert classify(pert, one, 0.3)[0] == "none"


def test_statistic_validation():
    with pytest.raises(ValueError):
        CenteredStatistic("x", lambda t, u: u, "CT", 13)
    with pytest.raises(ValueError):
        CenteredStatistic("x", lambda t, u: u, "XCT")


@pytest.mark.parametrize("t", [0.0, 0.5, 1.0])
def test_q_is_qct(pert, t):
    q = lemma_statistics(pert, t)["q"]
    cls, r = classify(pert, q, t)
    assert cls == "QCT" and np.abs(r).max() < 1e-5


@given(st.sampled_from(["q", "d", "w1", "w2", "w3"]),
       st.floats(0.1, 10) | st.floats(-10, -0.1))
@settings(max_examples=25, deadline=None)
def test_class_scale_invariant(pert, name, c):
    stat = lemma_statistics(pert, 0.25)[name]
    assert classify(pert, stat.scaled(c), 0.25)[0] == classify(pert, stat, 0.25)[0]


def test_gaussian_q_vanishes(gauss):
    q = lemma_statistics(gauss, 0.5)["q"]
    u = np.linspace(-5, 5, 11)
    assert np.all(q.f(0.5, u) == 0.0)
    assert verify_lemma4(gauss, [0.0, 0.5])["passed"]


def test_lemma_taxonomy(pert):
    rep = verify_lemma4(pert, [0.0, 0.4, 1.0])
    assert rep["passed"]
    found = {(r["t"], r["stat"]): r["found"] for r in rep["rows"]}
    assert found[(0.4, "d")] == "LCT"  # d is not QCT, the check is not vacuous
    assert found[(0.4, "w1")] == "CT"


def test_negative_control(misshifted):
    assert abs(solve_tilt(misshifted, 0.0, 0.3)) > 1e-3
    q = lemma_statistics(misshifted, 0.3)["q"]
    assert classify(misshifted, q, 0.3)[0] == "none"
    assert not verify_lemma4(misshifted, [0.3])["passed"]


@pytest.mark.parametrize("t", [0.0, 0.4])
def test_q_residuals_from_tilt_cumulants(pert, t):
    # E^sigma q = lam(s) - a s - lam lam(s) s / 2 by integration by parts, so at
    # zero: value 0, slope 1/Var - a, curvature -k3/Var^3 - lam/Var
    q = lemma_statistics(pert, t)["q"]
    c = homogenized(pert, t, warn=False)
    g = grand_canonical(pert, 0.0, t)
    d = g.u - g.mean()
    V, k3 = g.p @ d ** 2, g.p @ d ** 3
    ref = [0.0, 1 / V - c.alpha_bar, -k3 / V ** 3 - c.lam / V]
    np.testing.assert_allclose(residuals(pert, q, t), ref, atol=1e-8)


def test_q_residuals_misshifted_fd(misshifted):
    t = 0.3
    c = homogenized(misshifted, t, warn=False)
    q = lemma_statistics(misshifted, t, c)["q"]
    g = lambda s: (lambda l: l - c.alpha_bar * s - 0.5 * c.lam * l * s)(solve_tilt(misshifted, s, t))
    h = 1e-3
    G = [g(k * h) for k in (-2, -1, 0, 1, 2)]
    d1 = (G[0] - 8 * G[1] + 8 * G[3] - G[4]) / (12 * h)
    d2 = (-G[0] + 16 * G[1] - 30 * G[2] + 16 * G[3] - G[4]) / (12 * h * h)
    r = residuals(misshifted, q, t)
    assert r[0] == pytest.approx(G[2], abs=1e-10)
    assert r[1] == pytest.approx(d1, abs=1e-8)
    assert r[2] == pytest.approx(d2, abs=1e-5)


def test_block_decay_structure(pert):
    S = lemma_statistics(pert, 0.0)
    out = block_decay(pert, [S["w1"], S["q"]], (2, 4, 8), 0.0, dict(draws=20, blocks=2))
    assert [o["stat"] for o in out] == ["w1", "q"]
    for o in out:
        assert [r["l"] for r in o["table"]] == [2, 4, 8]
        assert all(r["n"] == 40 for r in o["table"])
        assert np.isfinite(o["slope"]) and np.isfinite(o["slope_se"])
    single = block_decay(pert, S["w1"], (2, 4, 8), 0.0, dict(draws=20, blocks=2))
    assert single["slope"] == out[0]["slope"]


def test_block_decay_exact_vs_mc(pert):
    w1 = lemma_statistics(pert, 0.0)["w1"]
    kw = dict(draws=6, blocks=2, n_chains=400, n_per_chain=10)
    ex = block_decay(pert, w1, (3, 4), 0.0, kw)
    mc = block_decay(pert, w1, (3, 4), 0.0, {**kw, "method": "mc"})
    for a, b in zip(ex["table"], mc["table"]):
        assert abs(a["mean_abs"] - b["mean_abs"]) < 0.05


@pytest.fixture(scope="module")
def traj64(pert, pert_cache):
    N = 64
    tr = simulate(pert, N, 8 / N ** 2, 21, trajs=np.arange(50), record_every=20)
    return tr, build_characteristic(pert_cache, N, 0.01)


def test_space_time_pointwise(traj64, pert, pert_cache):
    tr, ch = traj64
    s = float(tr.times[-1])
    q = lemma_statistics(pert, 0.0)["q"]
    y = 10
    got = space_time_average(tr, ch, pert_cache, q, s, y, 1, 0.0, batch=3)
    U, J0 = tr.snapshot(s)
    lam = float(pert_cache.lam(s))
    x = (y - ch.count(s)) % 64
    G = np.exp(lam * reconstruct_current(U[3], J0[3])[x] - lam * float(pert_cache.int_renorm(0.0, s)))
    assert got == pytest.approx(q.f(s, U[3, x]) * G, rel=1e-13)


def test_space_time_constant_stat(traj64, pert_cache):
    tr, ch = traj64
    s = float(tr.times[-1])
    one = CenteredStatistic("one", lambda t, u: np.ones_like(u), "CT", 0)
    a = space_time_average(tr, ch, pert_cache, one, s, 5, 4, 0.0, "-")
    lam = float(pert_cache.lam(s))
    J = reconstruct_current(*[v[0] for v in tr.snapshot(s)])
    xs = (5 - ch.count(s) - 2 * np.arange(4)) % 64
    ref = np.mean(np.exp(lam * J[xs] - lam * float(pert_cache.int_renorm(0.0, s))))
    assert a == pytest.approx(ref, rel=1e-13)


def test_space_time_cancellation(traj64, pert, pert_cache):
    tr, ch = traj64
    N = 64
    s = float(tr.times[-1])
    q = lemma_statistics(pert, 0.0)["q"]
    pt = [abs(space_time_average(tr, ch, pert_cache, q, s, 0, 1, 0.0, batch=b)) for b in range(50)]
    av = [abs(space_time_average(tr, ch, pert_cache, q, s, 0, 16, 8 / N ** 2, batch=b)) for b in range(50)]
    assert np.median(av) <= 0.5 * np.median(pt)
