"""Euler-Maruyama integration of the conservative lattice SDE and its current."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ensemble import CanonicalSampler
from .potential import Potential
from .rng import NoiseTape, init_stream

C_STAB = 0.5


class StabilityError(ValueError):
    pass


class ConfigError(ValueError):
    pass


def discrete_gradients(phi):
    phi = np.asarray(phi, dtype=float)
    plus = np.roll(phi, -1, axis=-1) - phi
    minus = np.roll(phi, 1, axis=-1) - phi
    return plus, minus, plus - minus, plus + minus


def drift(pot: Potential, t: float, U) -> np.ndarray:
    N = np.shape(U)[-1]
    V = pot.dU(t, U)
    _, _, asym, lap = discrete_gradients(V)
    return N ** 2 * lap + N ** 1.5 * asym


def dt_max(pot: Potential, N: int, c_stab: float = C_STAB) -> float:
    return c_stab / (4.0 * pot.c_hi * N ** 2)


def flux(pot: Potential, t: float, U, dt: float, dB) -> np.ndarray:
    """Phi(x) with dU(x) = Phi(x) - Phi(x-1); the current moves by N^{-1/2} Phi."""
    N = np.shape(U)[-1]
    V = pot.dU(t, U)
    V1 = np.roll(V, -1, axis=-1)
    return (N ** 2 * (V1 - V) + N ** 1.5 * (V1 + V)) * dt + math.sqrt(2.0) * N * dB


@dataclass
class LatticeState:
    """Charge field U (shape (..., N)), reference current J0 = J(t, 0) and time."""

    N: int
    t: float
    U: np.ndarray
    J0: np.ndarray
    total_charge: np.ndarray = field(init=False)

    def __post_init__(self):
        self.U = np.array(self.U, dtype=float)
        self.J0 = np.array(self.J0, dtype=float)
        self.total_charge = _fsum(self.U)

    def charge_drift(self) -> np.ndarray:
        return _fsum(self.U) - self.total_charge

    def current(self) -> np.ndarray:
        return reconstruct_current(self.U, self.J0)


def _fsum(U):
    U = np.asarray(U)
    if U.ndim == 1:
        return np.array(math.fsum(U))
    return np.array([math.fsum(r) for r in U.reshape(-1, U.shape[-1])]).reshape(U.shape[:-1])


def reconstruct_current(U, J0) -> np.ndarray:
    """J(x) = J0 + N^{-1/2} sum_{k=1..x} U(k), so that J(x) - J(x-1) = N^{-1/2} U(x)."""
    U = np.asarray(U, dtype=float)
    N = U.shape[-1]
    inc = np.concatenate([np.zeros(U.shape[:-1] + (1,)), np.cumsum(U[..., 1:], axis=-1)], axis=-1)
    return np.asarray(J0)[..., None] + inc / math.sqrt(N)


def step(state: LatticeState, pot: Potential, dt: float, dB) -> LatticeState:
    """One Euler-Maruyama step in flux form, in place. Returns the state."""
    if dt > dt_max(pot, state.N) * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.3e} exceeds dt_max={dt_max(pot, state.N):.3e}")
    phi = flux(pot, state.t, state.U, dt, dB)
    state.U += phi - np.roll(phi, 1, axis=-1)
    state.J0 = state.J0 + phi[..., 0] / math.sqrt(state.N)
    state.t += dt
    return state


def canonical_initial(pot: Potential, N: int, seed: int, traj: int, sweeps: int = 50,
                      t: float = 0.0) -> np.ndarray:
    """Zero-density canonical configuration on the torus, one stream per trajectory."""
    sampler = CanonicalSampler(pot, 0.0, t, N, init_stream(seed, traj))
    sampler.sweep(sweeps)
    return sampler.U[0].copy()


def initial_field(pot: Potential, N: int, seed: int, trajs, kind: str = "canonical") -> np.ndarray:
    trajs = np.atleast_1d(trajs)
    if kind == "flat":
        return np.zeros((trajs.size, N))
    if kind == "canonical":
        return np.stack([canonical_initial(pot, N, seed, tr) for tr in trajs])
    raise ConfigError(f"unknown initial data kind {kind!r}")


@dataclass
class LatticeTrajectory:
    N: int
    dt: float
    times: np.ndarray
    U: np.ndarray  # (snapshots, batch, N)
    J0: np.ndarray  # (snapshots, batch)
    tape: NoiseTape
    steps: np.ndarray  # step index of each snapshot

    def index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} was not recorded")
        return i

    def snapshot(self, t: float):
        i = self.index(t)
        return self.U[i], self.J0[i]


def simulate(pot: Potential, N: int, T_final: float, seed: int, trajs=(0,), dt_factor: float = 0.2,
             record_every: int = 1, initial: str = "canonical", U0=None,
             tape: NoiseTape | None = None) -> LatticeTrajectory:
    """Run a batch of trajectories on [0, T_final] with snapshots every ``record_every`` steps."""
    if N < 4:
        raise ConfigError("N must be >= 4")
    if not 0 < dt_factor <= 1:
        raise ConfigError("dt_factor must lie in (0, 1]")
    trajs = np.atleast_1d(np.asarray(trajs))
    dt0 = dt_factor * dt_max(pot, N)
    n_steps = int(math.ceil(T_final / dt0 - 1e-9)) if T_final > 0 else 0
    dt = T_final / n_steps if n_steps else dt0
    tape = tape or NoiseTape(seed, trajs, N, dt)
    U0 = initial_field(pot, N, seed, trajs, initial) if U0 is None else np.array(U0, dtype=float)
    state = LatticeState(N, 0.0, U0.reshape(trajs.size, N), np.zeros(trajs.size))
    times, Us, Js, steps = [0.0], [state.U.copy()], [state.J0.copy()], [0]
    for k in range(n_steps):
        step(state, pot, dt, tape[k])
        state.t = (k + 1) * dt
        if (k + 1) % record_every == 0 or k + 1 == n_steps:
            times.append(state.t)
            Us.append(state.U.copy())
            Js.append(state.J0.copy())
            steps.append(k + 1)
    return LatticeTrajectory(N, dt, np.array(times), np.array(Us), np.array(Js), tape,
                             np.array(steps))


@dataclass
class LocalizedState:
    """Copy of the dynamics on the sites K (global indices, contiguous mod N) with K-periodic wrap."""

    N: int
    K: np.ndarray
    t: float
    U: np.ndarray
    J: np.ndarray


def step_localized(lstate: LocalizedState, pot: Potential, dt: float, dB_K) -> LocalizedState:
    if dt > dt_max(pot, lstate.N) * (1 + 1e-12):
        raise StabilityError("dt exceeds dt_max")
    N = lstate.N
    V = pot.dU(lstate.t, lstate.U)
    V1 = np.roll(V, -1, axis=-1)
    phi = (N ** 2 * (V1 - V) + N ** 1.5 * (V1 + V)) * dt + math.sqrt(2.0) * N * dB_K
    lstate.U += phi - np.roll(phi, 1, axis=-1)
    lstate.J = lstate.J + phi[..., 0] / math.sqrt(N)
    lstate.t += dt
    return lstate


def localization_length(N: int, horizon: float, I_size: int, gamma_ap: float) -> int:
    return int(math.floor(N ** gamma_ap * (N * math.sqrt(horizon) + N ** 1.5 * horizon + I_size)))


def localization_experiment(pot: Potential, N: int = 256, I_size: int = 8, horizon_factor: float = 1.0,
                            gamma_ap: float = 0.1, seed: int = 0, n_seeds: int = 20,
                            dt_factor: float = 0.2, buffer: int | None = None) -> dict:
    """Couple full and localized runs on one tape; sup |U - U_loc| over I(+) and [0, horizon].

    ``buffer`` overrides the computed localization length (0 is the
    no-buffer control, where the comparison is restricted to I itself).
    """
    horizon = horizon_factor * N ** -2.0
    l = localization_length(N, horizon, I_size, gamma_ap) if buffer is None else int(buffer)
    if I_size + 2 * l > N:
        raise ConfigError("localization window I(t) does not fit in the torus")
    lo = N // 2 - I_size // 2
    I = lo + np.arange(I_size)
    K = np.arange(lo - l, lo + I_size + l) % N
    plus = np.arange(lo - 10, lo + I_size + 10) % N
    cmp_sites = np.array([x for x in plus if x in set(K.tolist())])
    pos = {x: i for i, x in enumerate(K.tolist())}
    cmp_loc = np.array([pos[x] for x in cmp_sites])
    trajs = np.arange(n_seeds)
    dt0 = dt_factor * dt_max(pot, N)
    n_steps = int(math.ceil(horizon / dt0 - 1e-9)) if horizon > 0 else 0
    dt = horizon / n_steps if n_steps else dt0
    tape = NoiseTape(seed, trajs, N, dt)
    U0 = initial_field(pot, N, seed, trajs)
    full = LatticeState(N, 0.0, U0, np.zeros(n_seeds))
    loc = LocalizedState(N, K, 0.0, U0[:, K].copy(), np.zeros(n_seeds))
    sup = np.zeros(n_seeds)
    for k in range(n_steps):
        dB = tape[k]
        step(full, pot, dt, dB)
        step_localized(loc, pot, dt, dB[:, K])
        d = np.abs(full.U[:, cmp_sites] - loc.U[:, cmp_loc]).max(axis=1)
        sup = np.maximum(sup, d)
    return dict(N=N, I_size=I_size, horizon=horizon, l=l, steps=n_steps, dt=dt,
                sup_diff=sup.tolist(), max_sup_diff=float(sup.max()) if n_seeds else 0.0,
                field_scale=float(np.abs(U0).mean()))
