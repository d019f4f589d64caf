"""Tilted single-site measures, canonical ensembles and homogenized coefficients."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from .potential import Potential


class ConvergenceError(RuntimeError):
    pass


class QuadratureError(RuntimeError):
    pass


class DegenerateMeasureError(RuntimeError):
    pass


class DegenerateKPZWarning(UserWarning):
    pass


@lru_cache(maxsize=8)
def _gl_reference(panels: int, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-1.0, 1.0, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def half_width(pot: Potential) -> float:
    return max(12.0, 12.0 / np.sqrt(pot.c_lo))


def _mode(pot: Potential, lam: float, t: float) -> float:
    # maximizer of lam*u - U(t,u); U' is strictly increasing
    m = lam / pot.c_hi
    for _ in range(60):
        g = float(pot.dU(t, m)) - lam
        step = g / float(pot.d2U(t, m))
        m -= step
        if abs(step) < 1e-14 * (1.0 + abs(m)):
            break
    return m


class GrandCanonical:
    """Tilted one-site law exp(tilt*u - U(t,u) - log_norm) on a truncated GL grid."""

    def __init__(self, pot: Potential, sigma: float, t: float, tilt: float,
                 panels: int = 24, order: int = 20):
        self.pot, self.sigma, self.t, self.tilt = pot, float(sigma), float(t), float(tilt)
        self.w = half_width(pot)
        self.center = _mode(pot, tilt, t)
        ref_x, ref_w = _gl_reference(panels, order)
        self.u = self.center + self.w * ref_x
        logd = tilt * self.u - pot.U(t, self.u)
        shift = float(tilt * self.center - pot.U(t, self.center))
        raw = self.w * ref_w * np.exp(logd - shift)
        mass = raw.sum()
        self.log_norm = shift + float(np.log(mass))
        self.p = raw / mass
        self._panels, self._order = panels, order

    def expect(self, F, check: bool = False, tol: float = 1e-9) -> float:
        val = float(np.dot(self.p, F(self.u)))
        if check:
            coarse = GrandCanonical(self.pot, self.sigma, self.t, self.tilt,
                                    self._panels // 2, self._order)
            alt = float(np.dot(coarse.p, F(coarse.u)))
            if abs(alt - val) > tol * max(1.0, abs(val)):
                raise QuadratureError(f"quadrature did not converge: residual {abs(alt - val):.3e}")
        return val

    def mean(self) -> float:
        return float(np.dot(self.p, self.u))

    def moments(self):
        m = self.mean()
        d = self.u - m
        return m, float(np.dot(self.p, d * d)), float(np.dot(self.p, d ** 3))

    def cov(self, F, G=None) -> float:
        g = self.u if G is None else G(self.u)
        f = F(self.u)
        return float(np.dot(self.p, (f - np.dot(self.p, f)) * (g - np.dot(self.p, g))))

    def var(self) -> float:
        return self.moments()[1]


def _gc_at(pot, lam, t):
    return GrandCanonical(pot, 0.0, t, lam)


def solve_tilt(pot: Potential, sigma: float, t: float, tol: float = 1e-13,
               max_bracket: float = 1e6) -> float:
    """Root of lam -> E_lam[u] - sigma; the map is increasing with slope Var."""
    sigma = float(sigma)
    lam = sigma * pot.c_lo

    def f(lam):
        g = _gc_at(pot, lam, t)
        m, v, _ = g.moments()
        return m - sigma, v

    r, v = f(lam)
    if abs(r) <= tol:
        return lam
    # bracket by expansion
    step = 1.0
    lo = hi = lam
    rlo = rhi = r
    while rlo > 0:
        lo -= step
        step *= 2
        if abs(lo) > max_bracket:
            raise ConvergenceError("tilt bracket expansion exceeded bound")
        rlo, _ = f(lo)
    step = 1.0
    while rhi < 0:
        hi += step
        step *= 2
        if abs(hi) > max_bracket:
            raise ConvergenceError("tilt bracket expansion exceeded bound")
        rhi, _ = f(hi)
    for _ in range(200):
        new = lam - r / v
        if not (lo < new < hi):
            new = 0.5 * (lo + hi)
        lam = new
        r, v = f(lam)
        if abs(r) <= tol:
            return lam
        if r < 0:
            lo = lam
        else:
            hi = lam
        if hi - lo < 1e-15 * (1.0 + abs(lam)):
            return lam
    raise ConvergenceError(f"tilt solve stalled, residual {r:.3e}")


def grand_canonical(pot: Potential, sigma: float, t: float, tol: float = 1e-13) -> GrandCanonical:
    g = GrandCanonical(pot, sigma, t, solve_tilt(pot, sigma, t, tol))
    return g


def gc_expect(pot: Potential, sigma: float, t: float, F, tol: float = 1e-9) -> float:
    return grand_canonical(pot, sigma, t).expect(F, check=True, tol=tol)


def _first_derivative(pot, sigma, t, F):
    g = grand_canonical(pot, sigma, t)
    v = g.var()
    if v < 1e-12:
        raise DegenerateMeasureError(f"Var(u) = {v:.3e}")
    return g.cov(F) / v


def sigma_derivative(pot: Potential, sigma: float, t: float, F, order: int = 1,
                     h: float = 1e-2) -> float:
    """d/dsigma E^{sigma,t}F. First order exactly via Cov(F,u)/Var(u);
    second order by a Richardson-extrapolated central difference of the first."""
    if order == 1:
        return _first_derivative(pot, sigma, t, F)
    if order != 2:
        raise ValueError("order must be 1 or 2")

    def cd(hh):
        return (_first_derivative(pot, sigma + hh, t, F)
                - _first_derivative(pot, sigma - hh, t, F)) / (2 * hh)

    return (4.0 * cd(h / 2) - cd(h)) / 3.0


@dataclass(frozen=True)
class HomogenizedCoefficients:
    t: float
    alpha_bar: float
    alpha_bar_wedge: float
    lam: float
    renorm: float
    degenerate: bool = False

    def __post_init__(self):
        if not self.alpha_bar > 0:
            raise ValueError("alpha_bar must be positive")


def renormalization(lam: float, alpha_bar: float, m_dUu3: float, m_u3: float) -> float:
    """Counter-term R = lam^3/12 E[U' u^3] + lam^2 alpha_bar/6 E[u^3] (zero density)."""
    return lam ** 3 / 12.0 * m_dUu3 + lam ** 2 * alpha_bar / 6.0 * m_u3


def homogenized(pot: Potential, t: float, warn: bool = True) -> HomogenizedCoefficients:
    dU = lambda u: pot.dU(t, u)
    alpha = sigma_derivative(pot, 0.0, t, dU, 1)
    wedge = sigma_derivative(pot, 0.0, t, dU, 2)
    lam = wedge / alpha
    g0 = grand_canonical(pot, 0.0, t)
    m_u3 = g0.expect(lambda u: u ** 3)
    m_dUu3 = g0.expect(lambda u: pot.dU(t, u) * u ** 3)
    degenerate = abs(wedge) < 1e-10
    if degenerate and warn:
        warnings.warn(f"alpha_bar_wedge vanishes at t={t}: degenerate KPZ coupling",
                      DegenerateKPZWarning, stacklevel=2)
    return HomogenizedCoefficients(float(t), alpha, wedge, lam,
                                   renormalization(lam, alpha, m_dUu3, m_u3), degenerate)


class CoefficientCache:
    """Homogenized coefficients tabulated on [0, t_max] and spline-interpolated.

    Time integrals of alpha_bar, lam^2*alpha_bar and R come from exact
    spline antiderivatives, so they are additive over adjacent intervals.
    """

    def __init__(self, pot: Potential, t_max: float, step: float = 1.0 / 256):
        self.pot = pot
        n = max(int(np.ceil(t_max / step)), 4) + 4
        self.t_grid = step * np.arange(n + 1)
        if pot.time_independent:
            c = homogenized(pot, 0.0, warn=False)
            rows = [(c.alpha_bar, c.alpha_bar_wedge, c.lam, c.renorm)] * len(self.t_grid)
        else:
            rows = []
            for t in self.t_grid:
                c = homogenized(pot, float(t), warn=False)
                rows.append((c.alpha_bar, c.alpha_bar_wedge, c.lam, c.renorm))
        rows = np.asarray(rows)
        self.alpha_v, self.wedge_v, self.lam_v, self.renorm_v = rows.T
        self.degenerate = bool(np.all(np.abs(self.wedge_v) < 1e-10))
        g = self.t_grid
        self._alpha = CubicSpline(g, self.alpha_v)
        self._wedge = CubicSpline(g, self.wedge_v)
        self._lam = CubicSpline(g, self.lam_v)
        self._renorm = CubicSpline(g, self.renorm_v)
        self._I_alpha = self._alpha.antiderivative()
        self._I_l2a = CubicSpline(g, self.lam_v ** 2 * self.alpha_v).antiderivative()
        self._I_renorm = self._renorm.antiderivative()
        self.t_max = float(g[-1])

    def _chk(self, t):
        if np.any(np.asarray(t) > self.t_max + 1e-12) or np.any(np.asarray(t) < -1e-12):
            raise ValueError(f"time outside coefficient cache [0, {self.t_max}]")

    def alpha(self, t):
        self._chk(t)
        return self._alpha(t)

    def wedge(self, t):
        self._chk(t)
        return self._wedge(t)

    def lam(self, t):
        self._chk(t)
        return self._lam(t)

    def renorm(self, t):
        self._chk(t)
        return self._renorm(t)

    def dlam(self, t, h: float = 1e-4):
        lo = max(t - h, 0.0)
        return float((self._lam(t + h) - self._lam(lo)) / (t + h - lo))

    def int_alpha(self, s, t):
        self._chk(t)
        return self._I_alpha(t) - self._I_alpha(s)

    def int_lam2_alpha(self, s, t):
        self._chk(t)
        return self._I_l2a(t) - self._I_l2a(s)

    def int_renorm(self, s, t):
        self._chk(t)
        return self._I_renorm(t) - self._I_renorm(s)

    def coefficients(self, t) -> HomogenizedCoefficients:
        a, w = float(self.alpha(t)), float(self.wedge(t))
        return HomogenizedCoefficients(float(t), a, w, w / a, float(self.renorm(t)),
                                       abs(w) < 1e-10)

    def rows(self):
        return [dict(t=float(t), alpha_bar=float(a), alpha_bar_wedge=float(w), **{"lambda": float(l)},
                     renorm=float(r))
                for t, a, w, l, r in zip(self.t_grid, self.alpha_v, self.wedge_v,
                                         self.lam_v, self.renorm_v)]


def ibp_check(pot: Potential, sigma: float, t: float, F, dF) -> float:
    g = grand_canonical(pot, sigma, t)
    lhs = g.expect(lambda u: F(u) * pot.dU(t, u))
    return abs(lhs - g.tilt * g.expect(F) - g.expect(dF))


def sample_gc(pot: Potential, sigma: float, t: float, n: int, rng: np.random.Generator,
              table_size: int = 2 ** 16) -> np.ndarray:
    """Inverse-CDF sampling from a tabulated quantile function."""
    g = grand_canonical(pot, sigma, t)
    x = np.linspace(g.center - g.w, g.center + g.w, table_size)
    logd = g.tilt * x - pot.U(t, x)
    d = np.exp(logd - logd.max())
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (d[1:] + d[:-1]))))
    cdf /= cdf[-1]
    return np.interp(rng.random(n), cdf, x)


class CanonicalSampler:
    """Pair-exchange Gibbs sampler for the product law conditioned on mean sigma.

    Each sweep pairs the sites at random and redraws every pair from its
    exact conditional given the pair sum (piecewise-linear proposal on a
    grid, corrected by an independence Metropolis step). Runs ``n_chains``
    independent chains in lockstep.
    """

    def __init__(self, pot: Potential, sigma: float, t: float, size: int,
                 rng: np.random.Generator, n_chains: int = 1, grid: int = 129):
        if size < 2:
            raise ValueError("canonical ensemble needs at least two sites")
        self.pot, self.sigma, self.t, self.size = pot, float(sigma), float(t), int(size)
        self.rng = rng
        self.U = np.full((n_chains, size), float(sigma))
        self.steps = 0
        self.accepted = 0
        self.proposed = 0
        self._G = grid
        self._hw = 10.0 / np.sqrt(2.0 * pot.c_lo)
        self._ref = np.linspace(-1.0, 1.0, grid)

    def _logpi(self, v, s):
        return -self.pot.U(self.t, v) - self.pot.U(self.t, s - v)

    def sweep(self, n: int = 1):
        B, L = self.U.shape
        P = L // 2
        pot, t = self.pot, self.t
        rows = np.arange(B)[:, None]
        for _ in range(n):
            perm = np.argsort(self.rng.random((B, L)), axis=1)
            i, j = perm[:, 0:2 * P:2], perm[:, 1:2 * P:2]
            ui, uj = self.U[rows, i], self.U[rows, j]
            s = ui + uj
            # mode of the pair conditional
            m = 0.5 * s
            for _ in range(4):
                g = pot.dU(t, m) - pot.dU(t, s - m)
                m = m - g / (pot.d2U(t, m) + pot.d2U(t, s - m))
            x = m[..., None] + self._hw * self._ref
            h = x[..., 1] - x[..., 0]
            lp_mode = self._logpi(m, s)
            f = np.exp(self._logpi(x, s[..., None]) - lp_mode[..., None])
            cells = 0.5 * (f[..., 1:] + f[..., :-1])
            cum = np.cumsum(cells, axis=-1)
            total = cum[..., -1]
            r = self.rng.random(s.shape) * total
            k = np.minimum((cum < r[..., None]).sum(axis=-1), self._G - 2)
            before = np.take_along_axis(cum, k[..., None], -1)[..., 0] - np.take_along_axis(cells, k[..., None], -1)[..., 0]
            a = np.take_along_axis(f, k[..., None], -1)[..., 0]
            b = np.take_along_axis(f, (k + 1)[..., None], -1)[..., 0]
            frac = np.clip((r - before) / (0.5 * (a + b)), 0.0, 1.0)
            y = frac * (a + b) / (a + np.sqrt(a * a + frac * (b * b - a * a)))
            v_new = x[..., 0] + (k + y) * h
            # independence Metropolis correction: target pi, proposal ~ f_interp
            f_new = a + (b - a) * y
            pos = (ui - x[..., 0]) / h
            ko = np.clip(np.floor(pos).astype(int), 0, self._G - 2)
            yo = pos - ko
            inside = (pos >= 0) & (pos <= self._G - 1)
            fa = np.take_along_axis(f, ko[..., None], -1)[..., 0]
            fb = np.take_along_axis(f, (ko + 1)[..., None], -1)[..., 0]
            f_old = np.where(inside, fa + (fb - fa) * yo, 0.0)
            lr = (self._logpi(v_new, s) - lp_mode - np.log(f_new)
                  - (self._logpi(ui, s) - lp_mode) + np.log(np.maximum(f_old, 1e-300)))
            acc = np.log(self.rng.random(s.shape)) < lr
            v = np.where(acc, v_new, ui)
            self.U[rows, i] = v
            self.U[rows, j] = s - v
            self.accepted += int(acc.sum())
            self.proposed += acc.size
            self.steps += 1
        return self.U

    def samples(self, n_per_chain: int, burn_in: int = 50, thin: int = 5) -> np.ndarray:
        self.sweep(burn_in)
        out = np.empty((n_per_chain,) + self.U.shape)
        for k in range(n_per_chain):
            out[k] = self.sweep(thin)
        return out.reshape(-1, self.size)


def sample_canonical(pot: Potential, sigma: float, t: float, size: int, sweeps: int,
                     rng: np.random.Generator, n_chains: int | None = None) -> np.ndarray:
    sampler = CanonicalSampler(pot, sigma, t, size, rng, n_chains or 1)
    sampler.sweep(sweeps)
    return sampler.U[0].copy() if n_chains is None else sampler.U.copy()


def canonical_expect_bruteforce(pot: Potential, sigma: float, t: float, size: int, F,
                                nodes: int | None = None) -> float:
    """Tensor-grid quadrature over the hyperplane mean(U) = sigma, |I| in {2,3,4}."""
    if size not in (2, 3, 4):
        raise ValueError("brute-force canonical quadrature supports |I| in {2,3,4}")
    n = nodes or {2: 480, 3: 240, 4: 120}[size]
    ref_x, ref_w = _gl_reference(n // 12, 12)
    w = 10.0 / np.sqrt(pot.c_lo)
    x = sigma + w * ref_x
    wt = w * ref_w
    grids = np.meshgrid(*([x] * (size - 1)), indexing="ij")
    wts = np.meshgrid(*([wt] * (size - 1)), indexing="ij")
    cols = [g.ravel() for g in grids]
    last = size * sigma - np.sum(cols, axis=0)
    conf = np.stack(cols + [last], axis=-1)
    logd = -np.sum(pot.U(t, conf), axis=-1)
    wq = np.prod([g.ravel() for g in wts], axis=0) * np.exp(logd - logd.max())
    vals = np.asarray(F(conf), dtype=float)
    return float(np.dot(wq, vals) / wq.sum())


def canonical_marginal_weights(pot: Potential, sigma: float, t: float, size: int,
                               h: float = 0.02):
    """Exact one-site marginal of the canonical law on a lattice grid.

    The density of U_1 is p(v) * p^{*(size-1)}(size*sigma - v); the
    convolution power is taken by FFT on an aligned grid, which is exact up
    to the (negligible) aliasing error of trapezoidal sums of analytic
    densities.
    """
    g = grand_canonical(pot, sigma, t)
    K = int(np.ceil(half_width(pot) / h))
    k = np.arange(-K, K + 1)
    v = sigma + k * h
    logd = g.tilt * v - pot.U(t, v)
    q = np.exp(logd - logd.max())
    q /= q.sum()
    m = size - 1
    if m == 0:
        return np.array([sigma]), np.array([1.0])
    L = 1 << int(np.ceil(np.log2(2 * m * K + 2)))
    conv = np.fft.irfft(np.fft.rfft(q, L) ** m, L)
    # conv[j] is the law of the sum at m*sigma + (j - m*K)*h; we need j = m*K - k
    tail = conv[m * K - k]
    wts = np.maximum(q * tail, 0.0)
    return v, wts / wts.sum()


def canonical_marginal_expect(pot: Potential, sigma: float, t: float, size: int, f,
                              h: float = 0.02) -> float:
    v, w = canonical_marginal_weights(pot, sigma, t, size, h)
    return float(np.dot(w, f(v)))


def block_sites(N: int, y: int, l: int, sign: str) -> np.ndarray:
    """Sites of I(l,+) = [y, y+l-1] or I(l,-) = [y-l+1, y], increasing order, mod N."""
    if sign == "+":
        return (y + np.arange(l)) % N
    if sign == "-":
        return (y - l + 1 + np.arange(l)) % N
    raise ValueError("sign must be '+' or '-'")


def local_canonical_expect(field, pot: Potential, s: float, y: int, l: int, sign: str, F,
                           mc_params: dict | None = None, site: bool = False) -> float:
    """E^{sigma, s, I(l,sign)} F with sigma the block density of ``field``.

    ``F`` maps configurations (..., l) to values; with ``site=True`` it is a
    single-site function evaluated at the anchor y. mc_params keys: method
    ('mc' or 'exact'; exact needs site=True), n_chains, n_per_chain, burn_in,
    thin, seed.
    """
    field = np.asarray(field, dtype=float)
    idx = block_sites(field.size, y, l, sign)
    sigma = float(field[idx].mean())
    p = dict(method="mc", n_chains=200, n_per_chain=20, burn_in=50, thin=5, seed=0)
    p.update(mc_params or {})
    anchor = 0 if sign == "+" else l - 1
    if l == 1:
        conf = np.array([[sigma]])
        return float(F(conf[0, 0]) if site else F(conf)[0])
    if l <= 4:
        G = (lambda c: F(c[..., anchor])) if site else F
        return canonical_expect_bruteforce(pot, sigma, s, l, G)
    if p["method"] == "exact":
        if not site:
            raise ValueError("exact canonical path supports single-site statistics only")
        return canonical_marginal_expect(pot, sigma, s, l, F)
    rng = np.random.default_rng(p["seed"])
    sampler = CanonicalSampler(pot, sigma, s, l, rng, p["n_chains"])
    conf = sampler.samples(p["n_per_chain"], p["burn_in"], p["thin"])
    if site:
        # exchangeability: every site has the anchor's marginal
        return float(np.mean(F(conf)))
    return float(np.mean(F(conf)))
