"""Characteristic shift, height function, Gartner transform and stopping monitors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .ensemble import CoefficientCache
from .lattice_sde import reconstruct_current
from .potential import Potential


class OverflowGuardError(FloatingPointError):
    pass


@dataclass(frozen=True)
class Characteristic:
    """D(t) = 2 N^{3/2} int_0^t alpha_bar and the times where floor(D) increments."""

    N: int
    T_final: float
    jumps: np.ndarray
    cache: CoefficientCache

    def D(self, t):
        return 2.0 * self.N ** 1.5 * self.cache.int_alpha(0.0, t)

    def count(self, t) -> int:
        """Number of jumps in (0, t]; equals floor(D(t)) away from crossing instants."""
        return int(np.searchsorted(self.jumps, t, side="right"))

    def offset(self, s: float, t: float) -> int:
        return self.count(t) - self.count(s)

    def shifted(self, x, t):
        return (np.asarray(x) - self.count(t)) % self.N


def build_characteristic(cache, N: int, T_final: float, grid_step: float | None = None) -> Characteristic:
    """Jump times from root-finding D(t) = k on the spline antiderivative of alpha_bar."""
    if isinstance(cache, Potential):
        cache = CoefficientCache(cache, T_final)
    if T_final <= 0:
        return Characteristic(N, 0.0, np.empty(0), cache)
    c = 2.0 * N ** 1.5
    D = lambda t: c * float(cache.int_alpha(0.0, t))
    h = grid_step or min(1.0 / 256, 0.25 / (c * float(np.max(cache.alpha_v))))
    grid = np.linspace(0.0, T_final, int(math.ceil(T_final / h)) + 1)
    Dg = c * cache.int_alpha(0.0, grid)
    if np.any(np.diff(Dg) <= 0):
        raise ValueError("cumulative drift must be increasing")
    n_jumps = int(math.floor(Dg[-1]))
    jumps = np.empty(n_jumps)
    cells = np.searchsorted(Dg, np.arange(1, n_jumps + 1), side="left")
    for k in range(1, n_jumps + 1):
        j = cells[k - 1]
        a, b = grid[max(j - 1, 0)], grid[j]
        jumps[k - 1] = a if D(a) == k else brentq(lambda t: D(t) - k, a, b, xtol=1e-15, rtol=1e-15)
    return Characteristic(N, float(T_final), jumps, cache)


@dataclass(frozen=True)
class HeightField:
    t: float
    h: np.ndarray
    renorm_integral: float
    shift: int


def height_from_state(U, J0, char: Characteristic, cache: CoefficientCache, t: float) -> HeightField:
    J = reconstruct_current(U, J0)
    n = char.count(t)
    N = J.shape[-1]
    x = (np.arange(N) - n) % N
    r = float(cache.int_renorm(0.0, t)) if t > 0 else 0.0
    return HeightField(float(t), J[..., x] - r, r, n)


def height(traj, char: Characteristic, cache: CoefficientCache, t: float) -> HeightField:
    U, J0 = traj.snapshot(t)
    return height_from_state(U, J0, char, cache, t)


def gartner(hf: HeightField, cache: CoefficientCache):
    """Z = exp(lam(t) h) and G = exp(lam(t) J - lam(t) int R)."""
    lam = float(cache.lam(hf.t))
    arg = lam * hf.h
    if np.any(np.abs(arg) > 700):
        raise OverflowGuardError(f"|lambda h| exceeds 700 at t={hf.t}")
    Z = np.exp(arg)
    J = np.roll(hf.h + hf.renorm_integral, -hf.shift, axis=-1)
    G = np.exp(lam * J - lam * hf.renorm_integral)
    return Z, G


def hoelder_monitor(h, N: int, gamma_reg: float):
    """sup_{x != y} |h(x) - h(y)| / (N^{1/2} d(x,y)^{1/2}) with geodesic d, against N^{gamma_reg}."""
    h = np.asarray(h, dtype=float)
    x = np.arange(N)
    d = np.abs(x[:, None] - x[None, :])
    d = np.minimum(d, N - d)
    np.fill_diagonal(d, 1)
    diff = np.abs(h[..., :, None] - h[..., None, :])
    semi = (diff / np.sqrt(d)).max(axis=(-1, -2)) / math.sqrt(N)
    return semi, semi >= N ** gamma_reg


def ap_monitor(Z, S, N: int, gamma_ap: float | None = None):
    """Trigger when max(|Z|, |S|, |1/Z|, |1/S|) reaches log N.

    The upper cut N^{gamma_ap} is redundant once the lower one is active;
    ``gamma_ap`` is accepted only so callers can log it.
    """
    Z, S = np.asarray(Z, float), np.asarray(S, float)
    big = max(np.abs(Z).max(), np.abs(S).max())
    small = max(np.abs(1.0 / Z).max(), np.abs(1.0 / S).max())
    return float(big), float(small), bool(max(big, small) >= math.log(N))


def smoothed_gartner(Z, engine, t: float, smoothing_span: float):
    if smoothing_span <= 0:
        raise ValueError("smoothing_span must be positive")
    return engine.kernel(t, t + smoothing_span).apply(Z)
