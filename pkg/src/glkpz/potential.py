"""Time-dependent uniformly convex single-site potentials."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline


class DomainError(ValueError):
    """Raised when potential parameters leave the admissible convex class."""


class Potential:
    """Base class. Subclasses provide U, dU, d2U, dtU, dtdU as numpy ufunc-style maps.

    Attributes ``c_lo``, ``c_hi`` bound U'' and ``d_max`` bounds
    ``|dtU| + |dtdU|`` on the validation domain ``|a| <= a_bound``.
    """

    name = "potential"
    c_lo: float
    c_hi: float
    d_max: float
    a_bound: float = 6.0
    time_independent: bool = False

    def U(self, t, a):
        raise NotImplementedError

    def dU(self, t, a):
        raise NotImplementedError

    def d2U(self, t, a):
        raise NotImplementedError

    def dtU(self, t, a):
        raise NotImplementedError

    def dtdU(self, t, a):
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianPotential(Potential):
    """U(t, a) = a^2 / 2."""

    name: str = "gaussian"
    c_lo: float = 1.0
    c_hi: float = 1.0
    d_max: float = 0.0
    a_bound: float = 6.0
    time_independent: bool = True

    def U(self, t, a):
        a = np.asarray(a, dtype=float)
        return 0.5 * a * a

    def dU(self, t, a):
        return np.asarray(a, dtype=float) * 1.0

    def d2U(self, t, a):
        return np.ones_like(np.asarray(a, dtype=float))

    def dtU(self, t, a):
        return np.zeros_like(np.asarray(a, dtype=float))

    def dtdU(self, t, a):
        return np.zeros_like(np.asarray(a, dtype=float))


def gaussian_potential() -> GaussianPotential:
    return GaussianPotential()


@dataclass(frozen=True)
class PerturbedPotential(Potential):
    """U(t,a) = a^2/2 + skew*sin(a) + eps*sin(omega t)*cos(a) - lam0(t)*a.

    ``lam0`` is chosen so that the zero-density tilt vanishes for every t.
    Because the unshifted potential depends on t only through
    s = sin(omega t), lam0 is tabulated as a cubic spline in s.
    """

    eps: float = 0.0
    omega: float = 1.0
    skew: float = 0.0
    shift: bool = True
    grid_step: float = 1.0 / 256
    a_bound: float = 6.0
    name: str = "perturbed"
    c_lo: float = field(init=False)
    c_hi: float = field(init=False)
    d_max: float = field(init=False)
    time_independent: bool = field(init=False)
    _lam0: CubicSpline | None = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        r = float(np.hypot(self.eps, self.skew))
        # without the guard the family window [1/2, 3/2] is still what we declare
        r_decl = min(r, 0.5)
        set_ = object.__setattr__
        set_(self, "c_lo", 1.0 - r_decl)
        set_(self, "c_hi", 1.0 + r_decl)
        set_(self, "time_independent", self.eps == 0.0 or self.omega == 0.0)
        set_(self, "_lam0", None)
        if self.shift and self.skew != 0.0:
            set_(self, "_lam0", self._tabulate_shift())
        slope = 0.0
        if self._lam0 is not None:
            s = np.linspace(-1.0, 1.0, 2001)
            slope = float(np.max(np.abs(self._lam0(s, 1))))
        w = abs(self.omega)
        set_(self, "d_max", 2.0 * abs(self.eps) * w + slope * w * (self.a_bound + 1.0))

    def _tabulate_shift(self) -> CubicSpline:
        from .ensemble import solve_tilt

        n = int(round(2.0 / self.grid_step)) + 1
        s_grid = np.linspace(-1.0, 1.0, n)
        vals = np.empty(n)
        for i, s in enumerate(s_grid):
            base = _FrozenBase(self.eps * s, self.skew, 1.0 - min(np.hypot(self.eps, self.skew), 0.5))
            vals[i] = solve_tilt(base, 0.0, 0.0, tol=1e-14)
        return CubicSpline(s_grid, vals)

    def _s(self, t):
        return np.sin(self.omega * np.asarray(t, dtype=float))

    def lam0(self, t):
        if self._lam0 is None:
            return np.zeros_like(np.asarray(t, dtype=float))
        return self._lam0(self._s(t))

    def dlam0(self, t):
        if self._lam0 is None:
            return np.zeros_like(np.asarray(t, dtype=float))
        t = np.asarray(t, dtype=float)
        return self._lam0(self._s(t), 1) * self.omega * np.cos(self.omega * t)

    def U(self, t, a):
        a = np.asarray(a, dtype=float)
        return (0.5 * a * a + self.skew * np.sin(a) + self.eps * self._s(t) * np.cos(a)
                - self.lam0(t) * a)

    def dU(self, t, a):
        a = np.asarray(a, dtype=float)
        return a + self.skew * np.cos(a) - self.eps * self._s(t) * np.sin(a) - self.lam0(t)

    def d2U(self, t, a):
        a = np.asarray(a, dtype=float)
        return 1.0 - self.skew * np.sin(a) - self.eps * self._s(t) * np.cos(a)

    def dtU(self, t, a):
        a = np.asarray(a, dtype=float)
        t = np.asarray(t, dtype=float)
        ds = self.omega * np.cos(self.omega * t)
        return self.eps * ds * np.cos(a) - self.dlam0(t) * a

    def dtdU(self, t, a):
        a = np.asarray(a, dtype=float)
        t = np.asarray(t, dtype=float)
        ds = self.omega * np.cos(self.omega * t)
        return -self.eps * ds * np.sin(a) - self.dlam0(t)


@dataclass(frozen=True)
class _FrozenBase(Potential):
    # unshifted potential at fixed s = sin(omega t), used only to tabulate the shift
    e: float
    skew: float
    c_lo: float
    c_hi: float = 2.0
    d_max: float = 0.0

    def U(self, t, a):
        a = np.asarray(a, dtype=float)
        return 0.5 * a * a + self.skew * np.sin(a) + self.e * np.cos(a)

    def dU(self, t, a):
        a = np.asarray(a, dtype=float)
        return a + self.skew * np.cos(a) - self.e * np.sin(a)

    def d2U(self, t, a):
        a = np.asarray(a, dtype=float)
        return 1.0 - self.skew * np.sin(a) - self.e * np.cos(a)


def perturbed_potential(eps: float, omega: float, skew: float = 0.0, *, shift: bool = True,
                        grid_step: float = 1.0 / 256, check: bool = True) -> PerturbedPotential:
    """Perturbed quadratic potential.

    ``skew`` adds an odd term skew*sin(a); without it the potential is even in
    ``a`` and the second homogenized coefficient vanishes identically.
    ``shift=False`` skips the recentering (negative controls only).
    ``check=False`` bypasses the convexity guard (for validation tests).
    """
    if check and np.hypot(eps, skew) >= 0.5:
        raise DomainError(f"need sqrt(eps^2 + skew^2) < 1/2, got eps={eps}, skew={skew}")
    return PerturbedPotential(eps=float(eps), omega=float(omega), skew=float(skew),
                              shift=shift, grid_step=grid_step)


@dataclass
class ValidationReport:
    passed: bool
    d2U_min: float
    d2U_max: float
    dt_max_observed: float
    c_lo: float
    c_hi: float
    d_max: float

    def as_dict(self):
        return dict(self.__dict__)


def validate_assumptions(pot: Potential, t_grid, a_grid) -> ValidationReport:
    t = np.asarray(t_grid, dtype=float).ravel()
    a = np.asarray(a_grid, dtype=float).ravel()
    if t.size == 0 or a.size == 0:
        raise ValueError("grids must be nonempty")
    lo, hi, dmax = np.inf, -np.inf, 0.0
    for tk in t:  # row at a time keeps memory flat for big grids
        c = pot.d2U(tk, a)
        lo = min(lo, float(c.min()))
        hi = max(hi, float(c.max()))
        d = np.abs(pot.dtU(tk, a)) + np.abs(pot.dtdU(tk, a))
        dmax = max(dmax, float(d.max()))
    slack = 1e-12
    ok = (lo >= pot.c_lo - slack and hi <= pot.c_hi + slack and dmax <= pot.d_max + slack)
    return ValidationReport(bool(ok), lo, hi, dmax, pot.c_lo, pot.c_hi, pot.d_max)
