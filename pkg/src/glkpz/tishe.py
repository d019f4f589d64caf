"""Discrete time-inhomogeneous stochastic heat equation driven by the lattice noise."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cole_hopf import OverflowGuardError, build_characteristic, gartner, height_from_state
from .ensemble import CoefficientCache
from .heat_kernel import KernelEngine
from .lattice_sde import LatticeState, dt_max, initial_field, step
from .potential import Potential
from .rng import NoiseTape


class DegeneracyError(ValueError):
    pass


@dataclass
class WState:
    t: float
    W: np.ndarray
    breached: np.ndarray

    def __post_init__(self):
        self.W = np.array(self.W, dtype=float)
        if self.breached is None:
            self.breached = np.zeros(self.W.shape[:-1], dtype=bool)


def w_step(ws: WState, cache: CoefficientCache, engine: KernelEngine, dt: float, dB,
           smoothing_span: float) -> WState:
    """Advance W by dt with an exponential integrator for the generator.

    W <- H(t+span, t+span+dt) W + H(t, t+span+dt)[sqrt2 lam N^{1/2} W dB(.(t)) + (lam'/lam) W log W dt],
    with dB read at the shifted sites of the characteristic. Rows that lose
    positivity are frozen and flagged.
    """
    t, N = ws.t, engine.N
    lam = float(cache.lam(t))
    if abs(lam) < 1e-8:
        raise DegeneracyError(f"coupling constant vanishes at t={t}")
    dlog = cache.dlam(t) / lam
    n = engine.char.count(t)
    noise = np.roll(dB, n, axis=-1)  # site y reads dB[y - n(t)]
    W = ws.W
    live = ~ws.breached
    src = math.sqrt(2.0) * lam * math.sqrt(N) * W * noise
    if dlog != 0.0:
        src = src + dlog * W * np.log(np.where(W > 0, W, 1.0)) * dt
    if smoothing_span > 0:
        new = engine.kernel(t + smoothing_span, t + smoothing_span + dt).apply(W) \
            + engine.kernel(t, t + smoothing_span + dt).apply(src)
    else:
        new = engine.kernel(t, t + dt).apply(W + src)
    bad = live & np.any(new <= 0, axis=-1)
    ws.breached = ws.breached | bad
    keep = ~ws.breached
    ws.W = np.where(keep[..., None], new, W)
    ws.t = t + dt
    return ws


def coupling_run(pot: Potential, N: int, T: float, seed: int, n_seeds: int, dt_factor: float = 0.2,
                 span_factor: float = 0.1, cache: CoefficientCache | None = None, record: int = 0):
    """Simulate lattice + W on one tape; return per-seed sup_{t,x}|Z - W| and breach flags."""
    span = span_factor * N ** -2.0
    cache = cache or CoefficientCache(pot, T + 4 * span + 0.02)
    if cache.degenerate or np.min(np.abs(cache.lam_v)) < 1e-8:
        raise DegeneracyError("KPZ coupling constant vanishes for this potential")
    char = build_characteristic(cache, N, cache.t_max)
    engine = KernelEngine(cache, N, char)
    trajs = np.arange(n_seeds)
    dt0 = dt_factor * dt_max(pot, N)
    n_steps = int(math.ceil(T / dt0 - 1e-9)) if T > 0 else 0
    dt = T / n_steps if n_steps else dt0
    tape = NoiseTape(seed, trajs, N, dt)
    U0 = initial_field(pot, N, seed, trajs)
    st = LatticeState(N, 0.0, U0, np.zeros(n_seeds))
    Z, _ = gartner(height_from_state(st.U, st.J0, char, cache, 0.0), cache)
    ws = WState(0.0, Z.copy(), None)
    gap = np.zeros(n_seeds)
    overflow = np.zeros(n_seeds, dtype=bool)
    curve = []
    for k in range(n_steps):
        dB = tape[k]
        w_step(ws, cache, engine, dt, dB, span)
        step(st, pot, dt, dB)
        t = (k + 1) * dt
        st.t = ws.t = t
        try:
            Z, _ = gartner(height_from_state(st.U, st.J0, char, cache, t), cache)
        except OverflowGuardError:
            overflow[:] = True
            break
        d = np.abs(Z - ws.W).max(axis=-1)
        gap = np.where(ws.breached, gap, np.maximum(gap, d))
        if record and (k + 1) % record == 0:
            curve.append((t, d.copy()))
    return dict(N=N, dt=dt, steps=n_steps, gap=gap, breached=ws.breached.copy(),
                overflow=overflow, curve=curve)


def coupling_experiment(pot: Potential, N_list=(16, 32, 64), T: float = 0.25, seed: int = 0,
                        n_seeds: int = 30, dt_factor: float = 0.2, span_factor: float = 0.1,
                        record: int = 0) -> dict:
    out = dict(T=T, n_seeds=n_seeds, per_N=[])
    for N in N_list:
        r = coupling_run(pot, N, T, seed, n_seeds, dt_factor, span_factor, record=record)
        ok = ~r["breached"]
        out["per_N"].append(dict(
            N=N, dt=r["dt"], steps=r["steps"], gaps=r["gap"].tolist(),
            median_gap=float(np.median(r["gap"][ok])) if ok.any() else float("nan"),
            breaches=int(r["breached"].sum()), curve=r["curve"]))
    med = [p["median_gap"] for p in out["per_N"]]
    out["medians"] = med
    out["monotone"] = bool(all(b < a for a, b in zip(med, med[1:])))
    out["breach_fraction"] = float(sum(p["breaches"] for p in out["per_N"])
                                   / (n_seeds * len(N_list)))
    return out
