"""Semi-discrete heat kernel on the torus, its continuum counterpart, and checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import CoefficientCache


class KernelError(RuntimeError):
    pass


def _symbol_integrals(cache: CoefficientCache, N: int, s: float, t: float):
    ia = float(cache.int_alpha(s, t))
    A = N ** 2 * ia + 0.25 * N * float(cache.int_lam2_alpha(s, t))
    B = N ** 1.5 * ia
    return A, B


def displacement_law(N: int, A: float, B: float, clamp: float = 1e-13) -> np.ndarray:
    """Law of the net displacement of the walk with generator A*Laplacian + B*antisymmetric gradient."""
    theta = 2 * np.pi * np.arange(N) / N
    sym = A * (2 * np.cos(theta) - 2) + 2j * B * np.sin(theta)
    p = np.fft.fft(np.exp(sym)).real / N
    if p.min() < -clamp:
        raise KernelError(f"kernel has negative mass {p.min():.3e}")
    p = np.maximum(p, 0.0)
    return p / p.sum()


@dataclass(frozen=True)
class KernelSlice:
    """H^N(s,t,x,y) = k[(x - offset - y) mod N] = p[(y - x + offset) mod N]."""

    N: int
    s: float
    t: float
    p: np.ndarray
    offset: int

    @property
    def k(self) -> np.ndarray:
        return np.roll(self.p[::-1], 1)

    def matrix(self) -> np.ndarray:
        x = np.arange(self.N)
        return self.p[(x[None, :] - x[:, None] + self.offset) % self.N]

    def apply(self, phi) -> np.ndarray:
        return apply(self, phi)

    def rows(self):
        return [dict(z=int(z), k=float(v)) for z, v in enumerate(self.k)]


def apply(kernel: KernelSlice, phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if kernel.p[0] == 1.0:  # point mass: skip the FFT round-off
        return np.roll(phi, kernel.offset, axis=-1)
    # sum_d p(d) phi(x + d), then the characteristic offset
    out = np.fft.ifft(np.conj(np.fft.fft(kernel.p)) * np.fft.fft(phi, axis=-1), axis=-1).real
    return np.roll(out, kernel.offset, axis=-1)


class KernelEngine:
    """Builds kernel slices for one lattice size from a coefficient cache."""

    def __init__(self, cache: CoefficientCache, N: int, characteristic=None):
        from .cole_hopf import build_characteristic

        self.cache, self.N = cache, int(N)
        self.char = characteristic or build_characteristic(cache, N, cache.t_max)

    def kernel(self, s: float, t: float, jumps: bool = True) -> KernelSlice:
        if t < s:
            raise ValueError("need s <= t")
        if t == s:
            p = np.zeros(self.N)
            p[0] = 1.0
            return KernelSlice(self.N, s, t, p, 0)
        A, B = _symbol_integrals(self.cache, self.N, s, t)
        n = self.char.offset(s, t) if jumps else 0
        return KernelSlice(self.N, s, t, displacement_law(self.N, A, B), int(n))

    def generator(self, t: float, phi) -> np.ndarray:
        """Jump-free generator applied to phi at time t."""
        N = self.N
        a_ = float(self.cache.alpha(t))
        a = (N ** 2 + 0.25 * N * float(self.cache.lam(t)) ** 2) * a_
        b = N ** 1.5 * a_
        up, dn = np.roll(phi, -1, axis=-1), np.roll(phi, 1, axis=-1)
        return a * (up + dn - 2 * phi) + b * (up - dn)


def build_kernel(cache: CoefficientCache, N: int, s: float, t: float, characteristic=None) -> KernelSlice:
    return KernelEngine(cache, N, characteristic).kernel(s, t)


def verify_semigroup(engine: KernelEngine, s: float, r: float, t: float) -> float:
    a, b, c = engine.kernel(s, r), engine.kernel(r, t), engine.kernel(s, t)
    comp = b.matrix() @ a.matrix()
    return float(np.max(np.abs(comp - c.matrix())))


def _geodesic(N: int) -> np.ndarray:
    d = np.arange(N)
    return np.minimum(d, N - d)


def verify_regularity(engine: KernelEngine, s: float, t: float, l_list=(0, 1, 2, 4)) -> dict:
    """Gradient sums, sup and second moment of a kernel row with predicted scalings."""
    N = engine.N
    ker = engine.kernel(s, t)
    row = ker.matrix()[0]
    dt = t - s
    out = dict(N=N, s=s, t=t, gradients=[])
    for l in l_list:
        if l == 0:
            val, pred = float(row.sum()), 1.0
        else:
            shifted = ker.matrix()[l % N]
            val = float(N * np.abs(shifted - row).sum())
            pred = abs(l) * dt ** -0.5
        out["gradients"].append(dict(l=int(l), measured=val, predicted=pred, ratio=val / pred))
    sup = float(row.max())
    out["sup"] = dict(measured=sup, predicted=N ** -1 * dt ** -0.5, ratio=sup * N * dt ** 0.5)
    dist = _geodesic(N)
    mom = float(np.dot(row, (dist / N) ** 2))
    pred = dt + N ** -2.0
    out["moment"] = dict(measured=mom, predicted=pred, ratio=mom / pred)
    return out


def continuum_kernel(cache: CoefficientCache, s: float, t: float, x, y) -> np.ndarray:
    """Wrapped Gaussian on the unit torus with variance 2 * int_s^t alpha_bar."""
    if not t > s:
        raise ValueError("need s < t")
    v = 2.0 * float(cache.int_alpha(s, t))
    K = int(np.ceil(9.0 * np.sqrt(v))) + 2
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    d = d - np.round(d)
    k = np.arange(-K, K + 1)
    z = d[..., None] + k
    return np.exp(-z * z / (2 * v)).sum(axis=-1) / np.sqrt(2 * np.pi * v)


def discrete_continuum_gap(engine: KernelEngine, s: float, t: float, x: float = 0.0,
                           order: int = 8) -> float:
    """int_T |H(s,t,x,y) - N H^N(s,t,Nx,Ny)|^2 dy with H^N piecewise constant in y."""
    N = engine.N
    ker = engine.kernel(s, t)
    xi = int(np.floor(N * x)) % N
    row = ker.matrix()[xi]
    g, w = np.polynomial.legendre.leggauss(order)
    cells = np.arange(N)
    y = (cells[:, None] + 0.5 * (g[None, :] + 1)) / N
    H = continuum_kernel(engine.cache, s, t, x, y)
    diff = H - N * row[:, None]
    return float(np.sum(diff ** 2 * (0.5 * w[None, :] / N)))


def fit_power(xs, ys):
    """OLS of log y on log x; returns slope, its standard error, intercept."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    n = len(lx)
    if n > 2:
        resid = ly - A @ coef
        s2 = float(resid @ resid) / (n - 2)
        se = float(np.sqrt(s2 * np.linalg.inv(A.T @ A)[0, 0]))
    else:
        se = float("nan")
    return float(coef[0]), se, float(coef[1])


def gap_envelope(engine: KernelEngine, dt: float, starts) -> float:
    """Largest continuum gap over start times s at fixed t - s.

    The gap at a single s depends on the fractional part of the cumulative
    drift, which makes it oscillate in N; the estimate is uniform in s, so
    the envelope over a window of start times is what we compare across N.
    """
    return max(discrete_continuum_gap(engine, float(s), float(s) + dt) for s in starts)
