"""Spherically symmetric stationary backgrounds g = -D du^2 - 2 du dr + r^2 dw^2.

Built-in families are Minkowski, Schwarzschild and Reissner-Nordstrom.  A
custom family takes a user callable ``D(r, order)`` returning the derivative of
order 0..3.  All coordinate maps use the tortoise normalisation r*(R_norm) = R_norm.

Near a horizon the radius is carried as x = r - r_plus and the inverse tortoise
map is solved for ln(x), so that D = D(x) keeps full relative accuracy even when
x is far below machine epsilon times r_plus.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .errors import (DomainError, ExtremalWarning, NoHorizon, Nonconvergence,
                     UnsupportedOrder)

KINDS = ("minkowski", "schwarzschild", "reissner_nordstrom", "custom")

_KIND_ALIASES = {
    "minkowski": "minkowski", "flat": "minkowski",
    "schwarzschild": "schwarzschild",
    "reissner_nordstrom": "reissner_nordstrom", "reissnernordstrom": "reissner_nordstrom",
    "rn": "reissner_nordstrom",
    "custom": "custom", "customd": "custom",
}


def real_array(x):
    """Float array view of x; long double input keeps its extra precision."""
    a = np.asarray(x)
    return a if a.dtype == np.longdouble else a.astype(float, copy=False)


def canonical_kind(kind: str) -> str:
    key = kind.strip().lower().replace("-", "_").replace("–", "_")
    if key not in _KIND_ALIASES:
        raise ValueError(f"unknown background kind {kind!r}")
    return _KIND_ALIASES[key]


@dataclass(frozen=True)
class Background:
    """Immutable metric family instance.

    Use the classmethod constructors rather than the raw initialiser.
    """

    kind: str
    M: float = 0.0
    e: float = 0.0
    R_norm: float = 10.0
    custom_D: Optional[Callable] = field(default=None, compare=False, repr=False)
    r_plus: float = 0.0
    r_minus: float = 0.0
    extremal: bool = False
    has_horizon: bool = False
    _c: float = 0.0           # additive tortoise constant

    # ------------------------------------------------------------ constructors
    @classmethod
    def minkowski(cls, R_norm=10.0):
        return cls(kind="minkowski", M=0.0, R_norm=float(R_norm))

    @classmethod
    def schwarzschild(cls, M=1.0, R_norm=10.0):
        M = float(M)
        if M < 0:
            raise DomainError("mass must be non-negative")
        if M == 0:
            return cls.minkowski(R_norm)
        bg = cls(kind="schwarzschild", M=M, R_norm=float(R_norm), r_plus=2 * M,
                 has_horizon=True)
        return bg._normalised()

    @classmethod
    def reissner_nordstrom(cls, M=1.0, e=0.6, R_norm=10.0):
        M, e = float(M), float(e)
        if M <= 0:
            raise DomainError("RN mass must be positive")
        if abs(e) > M:
            raise DomainError("|e| > M gives a naked singularity")
        if e == 0:
            return cls.schwarzschild(M, R_norm)
        disc = math.sqrt(max(M * M - e * e, 0.0))
        extremal = abs(e) == M
        if extremal:
            warnings.warn("extremal Reissner-Nordstrom background: Morawetz-based "
                          "diagnostics are degenerate", ExtremalWarning, stacklevel=2)
        bg = cls(kind="reissner_nordstrom", M=M, e=e, R_norm=float(R_norm),
                 r_plus=M + disc, r_minus=M - disc, extremal=extremal, has_horizon=True)
        return bg._normalised()

    @classmethod
    def custom(cls, D: Callable, M: Optional[float] = None, R_norm=10.0,
               r_search_min=1e-6, check=True):
        """Custom family from ``D(r, order)``, order in 0..3.

        ``M`` is the asymptotic mass (used for the predicted NP constant of
        static-tail data); if omitted it is estimated from r^2 D'(r) / 2 at a
        large radius.
        """
        R_norm = float(R_norm)
        if M is None:
            rb = 1e6 * R_norm
            M = 0.5 * rb * rb * float(D(rb, 1))
        r_plus = _largest_root(D, R_norm, r_search_min)
        bg = cls(kind="custom", M=float(M), R_norm=R_norm, custom_D=D,
                 r_plus=r_plus if r_plus is not None else 0.0,
                 has_horizon=r_plus is not None)
        if bg.R_norm <= bg.r_plus:
            raise DomainError("R_norm must lie outside the horizon")
        if check:
            err = derivative_consistency(bg)
            if err > 1e-6:
                raise ValueError(f"custom D derivatives are inconsistent (rel err {err:.2e})")
        return bg

    @classmethod
    def from_config(cls, kind, M=1.0, e=0.0, R_norm=10.0):
        kind = canonical_kind(kind)
        if kind == "minkowski":
            return cls.minkowski(R_norm)
        if kind == "schwarzschild":
            return cls.schwarzschild(M, R_norm)
        if kind == "reissner_nordstrom":
            return cls.reissner_nordstrom(M, e, R_norm)
        raise ValueError("custom backgrounds need a callable and cannot come from config")

    def _normalised(self):
        if self.R_norm <= self.r_plus:
            raise DomainError("R_norm must lie outside the horizon")
        c = self.R_norm - self._rstar_raw(self.R_norm - self.r_plus, self.R_norm)
        return _replace(self, _c=float(c))

    # ------------------------------------------------------------ metric function
    def D(self, r, order=0):
        """D^(order)(r).  Built-ins support any order; custom supports 0..3."""
        r = real_array(r)
        if order < 0:
            raise UnsupportedOrder("negative derivative order")
        k = self.kind
        if k == "minkowski":
            return np.ones_like(r) if order == 0 else np.zeros_like(r)
        if k == "custom":
            if order > 3:
                raise UnsupportedOrder("custom D provides derivatives up to order 3")
            return np.asarray(self.custom_D(r, order), dtype=float) * np.ones_like(r)
        # 1 - 2M/r + e^2/r^2 and its derivatives
        n = order
        out = -2 * self.M * (-1) ** n * math.factorial(n) * r ** (-n - 1)
        if self.e != 0:
            out = out + self.e ** 2 * (-1) ** n * math.factorial(n + 1) * r ** (-n - 2)
        if n == 0:
            out = 1.0 + out
        return out

    def D_from_x(self, x):
        """D as a function of x = r - r_plus, accurate for tiny x."""
        x = real_array(x)
        r = self.r_plus + x
        if self.kind == "schwarzschild":
            return x / r
        if self.kind == "reissner_nordstrom":
            return x * (r - self.r_minus) / (r * r)
        return self.D(r)

    def jacobian_dydrs(self, x):
        """d ln(x) / d r* = D / x, evaluated without cancellation."""
        r = self.r_plus + x
        if self.kind == "schwarzschild":
            return 1.0 / r
        if self.kind == "reissner_nordstrom":
            return (r - self.r_minus) / (r * r)
        return self.D(r) / x

    # ------------------------------------------------------------ tortoise
    def _rstar_raw(self, x, r):
        """Tortoise antiderivative without the additive constant."""
        M = self.M
        if self.kind == "schwarzschild":
            return r + 2 * M * np.log(x / (2 * M))
        if self.kind == "reissner_nordstrom":
            if self.extremal:
                return r + 2 * M * np.log(x / M) - M * M / x
            rp, rm = self.r_plus, self.r_minus
            A = rp * rp / (rp - rm)
            B = rm * rm / (rp - rm)
            return r + A * np.log(x / M) - B * np.log((r - rm) / M)
        if self.kind == "minkowski":
            return r
        raise AssertionError

    def rstar(self, r):
        r = real_array(r)
        if np.any(r <= self.r_plus) or (self.r_plus == 0 and np.any(r <= 0)):
            raise DomainError("tortoise coordinate needs r > r_plus")
        if self.kind == "custom":
            return _custom_rstar(self, r)
        return self._rstar_raw(r - self.r_plus, r) + self._c

    def rstar_of_x(self, x):
        x = real_array(x)
        return self._rstar_raw(x, self.r_plus + x) + self._c

    def x_of_rstar(self, rs, tol=1e-13, maxiter=200):
        """Invert r*(r) = rs and return x = r - r_plus (array).

        Newton iteration on y = ln x with a bracket safeguard; the function
        r*(y) is increasing and, for all built-ins, close to linear or
        exponential in y, so Newton converges in a handful of steps.
        """
        rs = np.asarray(rs, dtype=float)
        if self.kind == "minkowski":
            if np.any(rs <= 0):
                raise DomainError("null pair does not meet the region r > 0")
            return rs - self._c
        if self.kind == "custom":
            r = _custom_r_of_rstar(self, rs)
            if r.size <= 64:
                # polish against the quadrature tortoise map
                for _ in range(3):
                    r = r - (_custom_rstar(self, r) - rs) * self.D(r)
            return r - self.r_plus
        M = self.M
        scale = max(self.r_plus, M, 1.0)
        # initial guess
        far = rs > self.R_norm + 2 * scale
        if self.kind == "schwarzschild" or not self.extremal:
            A = (self.r_plus ** 2 / (self.r_plus - self.r_minus)) if self.kind == "reissner_nordstrom" else 2 * M
            y_near = (rs - self._c - self.r_plus) / A + math.log(M)
        else:
            y_near = np.log(M * M / np.maximum(self.r_plus + self._c - rs + M, M * 1e-3))
        y = np.where(far, np.log(np.maximum(rs - self.r_plus, scale)), y_near)
        y = np.clip(y, -740.0, 740.0)
        lo = np.full_like(y, -np.inf)
        hi = np.full_like(y, np.inf)
        done = np.zeros(y.shape, dtype=bool)
        for _ in range(maxiter):
            x = np.exp(y)
            g = self.rstar_of_x(x) - rs
            gp = 1.0 / self.jacobian_dydrs(x)
            pos = g > 0
            hi = np.where(pos, np.minimum(hi, y), hi)
            lo = np.where(~pos, np.maximum(lo, y), lo)
            step = g / gp
            ynew = y - step
            # a zero residual leaves ynew == y == lo, which is not a bracket failure
            bad = ~np.isfinite(ynew) | (ynew < lo) | (ynew > hi)
            both = np.isfinite(lo) & np.isfinite(hi)
            ynew = np.where(bad & both, 0.5 * (lo + hi), ynew)
            ynew = np.where(bad & ~both & np.isfinite(hi), y - 8.0, ynew)
            ynew = np.where(bad & ~both & np.isfinite(lo), y + 8.0, ynew)
            ynew = np.where(done, y, ynew)
            conv = np.abs(ynew - y) <= tol * np.maximum(1.0, np.abs(y))
            y = ynew
            done |= conv
            if done.all():
                break
        else:
            raise Nonconvergence("inverse tortoise map did not converge")
        return np.exp(y)

    def r_of_rstar(self, rs):
        return self.r_plus + self.x_of_rstar(rs)

    # ------------------------------------------------------------ misc
    @property
    def label(self):
        if self.kind == "minkowski":
            return "minkowski"
        if self.kind == "schwarzschild":
            return f"schwarzschild(M={self.M:g})"
        if self.kind == "reissner_nordstrom":
            return f"rn(M={self.M:g},e={self.e:g})"
        return f"custom(M={self.M:g})"

    def max_builtin_order(self):
        return 3 if self.kind == "custom" else 99


def _replace(bg, **kw):
    from dataclasses import replace
    return replace(bg, **kw)


def _largest_root(D, R_norm, r_min):
    """Largest positive root of D below R_norm, or None."""
    grid = np.geomspace(R_norm, r_min * R_norm, 400)
    vals = np.array([float(D(r, 0)) for r in grid])
    if vals[0] <= 0:
        raise DomainError("custom D must be positive at R_norm")
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fb <= 0 < fa:
            if fb == 0:
                return float(b)
            return float(optimize.brentq(lambda r: float(D(r, 0)), b, a, xtol=1e-15, rtol=1e-15))
    return None


def derivative_consistency(bg, radii=None):
    """Max relative mismatch between D^(n+1) and a 4th-order difference of D^(n)."""
    if radii is None:
        base = max(bg.r_plus, bg.M, 0.5)
        radii = base * np.array([1.5, 2.5, 4.0, 10.0, 40.0])
        radii = radii[radii > bg.r_plus]
    worst = 0.0
    for r in radii:
        d = 1e-3 * r
        for n in range(3):
            f = [float(bg.D(r + k * d, n)) for k in (-2, -1, 1, 2)]
            fd = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * d)
            ex = float(bg.D(r, n + 1))
            scale = max(abs(ex), abs(float(bg.D(r, n))) / r, 1e-300)
            worst = max(worst, abs(fd - ex) / scale)
    return worst


def _custom_rstar(bg, r):
    D = bg.custom_D
    out = np.empty(r.shape)
    for idx, rr in np.ndenumerate(r):
        val, err = integrate.quad(lambda s: 1.0 / float(D(s, 0)), bg.R_norm, float(rr),
                                  epsabs=1e-13, epsrel=1e-13, limit=400)
        out[idx] = bg.R_norm + val
    return out


def _custom_r_of_rstar(bg, rs):
    """Integrate dr/dr* = D(r) from r*(R_norm)=R_norm in both directions."""
    rs = np.asarray(rs, dtype=float)
    flat = rs.ravel()
    out = np.empty_like(flat)
    D = bg.custom_D
    f = lambda s, y: [float(D(y[0], 0))]
    for sign in (+1, -1):
        sel = (flat - bg.R_norm) * sign >= 0
        if not sel.any():
            continue
        tgt = flat[sel]
        end = tgt.max() if sign > 0 else tgt.min()
        if end == bg.R_norm:
            out[sel] = bg.R_norm
            continue
        sol = integrate.solve_ivp(f, (bg.R_norm, end), [bg.R_norm], method="DOP853",
                                  rtol=1e-12, atol=1e-14 * max(bg.R_norm, 1.0),
                                  dense_output=True)
        if not sol.success:
            raise Nonconvergence(f"tortoise ODE failed: {sol.message}")
        out[sel] = sol.sol(tgt)[0]
    out = out.reshape(rs.shape)
    if np.any(out <= bg.r_plus) or (bg.r_plus == 0 and np.any(out <= 0)):
        raise DomainError("null pair does not meet the exterior")
    return out


# ---------------------------------------------------------------- public ops
def metric_D(bg: Background, r, order: int = 0):
    """D^(order)(r) for order 0..3.

    The horizon itself is accepted (D(r_plus) = 0 for a black hole); anything
    inside it, or r <= 0, raises DomainError.
    """
    if order > 3 or order < 0:
        raise UnsupportedOrder(f"order {order} not in 0..3")
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < bg.r_plus) or np.any(r_arr <= 0):
        raise DomainError("metric_D needs r >= r_plus and r > 0")
    out = bg.D(r_arr, order)
    return float(out) if np.ndim(out) == 0 else out


def horizon_radius(bg: Background) -> float:
    """Largest root of D (0 for Minkowski)."""
    if bg.kind == "minkowski":
        return 0.0
    if not bg.has_horizon:
        raise NoHorizon("D is strictly positive")
    return bg.r_plus


def tortoise(bg: Background, r):
    """r*(r) with r*(R_norm) = R_norm."""
    out = bg.rstar(r)
    return float(out) if np.ndim(out) == 0 else out


def radius_from_null(bg: Background, u, v):
    """Unique r > r_plus with r*(r) = (v - u)/2 (relative tolerance 1e-12)."""
    rs = 0.5 * (np.asarray(v, dtype=float) - np.asarray(u, dtype=float))
    if not np.all(np.isfinite(rs)):
        raise DomainError("non-finite null coordinates")
    x = bg.x_of_rstar(rs)
    if np.any(x <= 0):
        raise DomainError("null pair meets the horizon to double precision")
    r = bg.r_plus + x
    return float(r) if np.ndim(r) == 0 else r
