"""Characteristic initial data for a single angular mode.

Data live on the two initial null rays of the grid rectangle: the outgoing ray
{u = u0} (a function of v) and the ingoing ray {v = v0} (a function of u).  Both
are stored as callables so that the same data object can be sampled on grids
of different resolution.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .background import Background, real_array
from .errors import BadSupport, DomainError, InsufficientMargin, QuadratureFailure


@dataclass(frozen=True)
class CharacteristicData:
    ell: int
    u0: float
    v0: float
    phi_on_u0: Callable          # v -> phi(u0, v)
    phi_on_v0: Callable          # u -> phi(u, v0)
    corner_value: float
    predicted_I0: Optional[float] = None
    support: Optional[tuple] = None      # compact v-support on {u=u0}, if any
    meta: dict = field(default_factory=dict, compare=False)

    def sample_u0(self, v):
        v = real_array(v)
        out = np.array(real_array(self.phi_on_u0(v))) * np.ones_like(v)
        out[v == self.v0] = self.corner_value
        return out

    def sample_v0(self, u):
        u = real_array(u)
        out = np.array(real_array(self.phi_on_v0(u))) * np.ones_like(u)
        out[u == self.u0] = self.corner_value
        return out

    # linear structure -------------------------------------------------------
    def _check_compat(self, other):
        if (self.ell, self.u0, self.v0) != (other.ell, other.u0, other.v0):
            raise ValueError("data sets live on different rays or modes")

    def __add__(self, other):
        self._check_compat(other)
        f1, f2, g1, g2 = self.phi_on_u0, other.phi_on_u0, self.phi_on_v0, other.phi_on_v0
        I0 = None
        if self.predicted_I0 is not None and other.predicted_I0 is not None:
            I0 = self.predicted_I0 + other.predicted_I0
        sup = None
        if self.support is not None and other.support is not None:
            sup = (min(self.support[0], other.support[0]), max(self.support[1], other.support[1]))
        return CharacteristicData(
            self.ell, self.u0, self.v0,
            lambda v: np.asarray(f1(v)) + np.asarray(f2(v)),
            lambda u: np.asarray(g1(u)) + np.asarray(g2(u)),
            self.corner_value + other.corner_value, I0, sup,
            {"family": "sum", "parts": [self.meta, other.meta]})

    def scaled(self, a):
        a = float(a)
        f, g = self.phi_on_u0, self.phi_on_v0
        I0 = None if self.predicted_I0 is None else a * self.predicted_I0
        meta = dict(self.meta)
        meta["scale"] = a * meta.get("scale", 1.0)
        return replace(self, phi_on_u0=lambda v: a * np.asarray(f(v)),
                       phi_on_v0=lambda u: a * np.asarray(g(u)),
                       corner_value=a * self.corner_value, predicted_I0=I0, meta=meta)

    def __mul__(self, a):
        return self.scaled(a)

    __rmul__ = __mul__

    def __neg__(self):
        return self.scaled(-1.0)

    def __sub__(self, other):
        return self + (-other)


# ---------------------------------------------------------------- profiles
def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(real_array(t), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def polynomial_bump(v, v_lo, v_hi, power=4):
    """(v - v_lo)^n (v_hi - v)^n on [v_lo, v_hi], zero outside (C^(n-1))."""
    v = real_array(v)
    inside = (v > v_lo) & (v < v_hi)
    return np.where(inside, (v - v_lo) ** power * (v_hi - v) ** power, 0.0)


def gaussian_truncated(v, v_lo, v_hi):
    """Gaussian of width (v_hi - v_lo)/16 centred on the interval, peak 1.

    It is multiplied by a C-infinity window that switches on over the first
    and last sigma of the interval, where the Gaussian is already below 1e-10,
    so the profile is smooth and exactly supported in [v_lo, v_hi].
    """
    v = real_array(v)
    sig = (v_hi - v_lo) / 16.0
    vc = 0.5 * (v_lo + v_hi)
    win = smooth_step((v - v_lo) / sig) * smooth_step((v_hi - v) / sig)
    return np.exp(-0.5 * ((v - vc) / sig) ** 2) * win


PROFILES = ("polynomial_bump", "gaussian_truncated")


def bump_data(ell: int, v_lo: float, v_hi: float, amplitude: float = 1.0,
              profile: str = "polynomial_bump", *, u0: float = 0.0, v0: float = 0.0,
              power: int = 4) -> CharacteristicData:
    """Compactly supported outgoing data, zero on the ingoing ray.

    ``polynomial_bump`` is amplitude*(v-v_lo)^power*(v_hi-v)^power (no
    normalisation, so the midpoint of [20, 40] carries amplitude*1e8 for
    power 4).  ``gaussian_truncated`` is the C-infinity bump with peak
    ``amplitude``; it is the choice for high-derivative residual audits.
    """
    v_lo, v_hi, amplitude = float(v_lo), float(v_hi), float(amplitude)
    if not v_lo < v_hi:
        raise BadSupport(f"empty support [{v_lo}, {v_hi}]")
    if v_lo < v0:
        raise BadSupport(f"support starts at {v_lo} before the grid edge v0={v0}")
    if not np.isfinite(amplitude):
        raise BadSupport("amplitude must be finite")
    if ell < 0:
        raise ValueError("ell must be >= 0")
    if profile == "polynomial_bump":
        if power < 3:
            raise BadSupport("polynomial bump needs power >= 3 to be C^2")
        f = lambda v: amplitude * polynomial_bump(v, v_lo, v_hi, power)
    elif profile == "gaussian_truncated":
        f = lambda v: amplitude * gaussian_truncated(v, v_lo, v_hi)
    else:
        raise ValueError(f"unknown profile {profile!r}")
    corner = float(f(np.array([v0]))[0])
    meta = {"family": "bump", "profile": profile, "v_lo": v_lo, "v_hi": v_hi,
            "amplitude": amplitude, "ell": ell}
    if profile == "polynomial_bump":
        meta["power"] = power
    return CharacteristicData(int(ell), float(u0), float(v0), f,
                              lambda u: np.full(np.shape(u), corner), corner,
                              predicted_I0=0.0 if ell == 0 else None,
                              support=(v_lo, v_hi), meta=meta)


def static_profile(bg: Background, C0: float, x):
    """psi(r) = -C0 * int_r^inf dr'/(r'^2 D(r')) as a function of x = r - r_plus."""
    x = np.asarray(x, dtype=float)
    k = bg.kind
    if k == "minkowski":
        return -C0 / x
    if k == "schwarzschild":
        return -(C0 / (2 * bg.M)) * np.log1p(2 * bg.M / x)
    if k == "reissner_nordstrom":
        if bg.extremal:
            return -C0 / x
        gap = bg.r_plus - bg.r_minus
        return -(C0 / gap) * np.log1p(gap / x)
    return -C0 * _custom_tail_integral(bg, bg.r_plus + x)


def _custom_tail_integral(bg, r):
    r = np.atleast_1d(np.asarray(r, dtype=float))
    r_far = 1e4 * max(bg.M, bg.R_norm, 1.0)
    M = bg.M
    out = np.empty_like(r)
    f = lambda s: 1.0 / (s * s * float(bg.D(s)))
    for i, rr in enumerate(r):
        if rr >= r_far:
            out[i] = 1.0 / rr + M / rr ** 2
            continue
        val, err = integrate.quad(f, rr, r_far, epsabs=0, epsrel=1e-12, limit=500)
        if not np.isfinite(val) or err > 1e-9 * abs(val) + 1e-15:
            raise QuadratureFailure(f"static profile quadrature failed at r={rr}")
        out[i] = val + 1.0 / r_far + M / r_far ** 2
    return out


def static_tail_data(bg: Background, C0: float, r_min_data: Optional[float] = None, *,
                     u0: float = 0.0, v0: Optional[float] = None,
                     cutoff: Optional[float] = None) -> CharacteristicData:
    """Static-tail family with Newman-Penrose constant C0*M (ell = 0).

    The corner of the data rectangle sits at radius ``r_min_data`` (so that
    v0 = u0 + 2 r*(r_min_data)); alternatively pass ``v0`` directly.

    With ``cutoff=None`` both rays carry the static solution phi = r*psi(r),
    psi(r) = -C0 int_r^inf dr'/(r'^2 D).  With ``cutoff=w`` the outgoing data
    are multiplied by a smooth step rising over v in [v0, v0 + w] and the
    ingoing ray is set to the corner value 0; this keeps the far field, and
    hence the NP constant, while removing the horizon divergence of psi.
    """
    if (r_min_data is None) == (v0 is None):
        raise ValueError("give exactly one of r_min_data or v0")
    if r_min_data is not None:
        if r_min_data <= bg.r_plus or r_min_data <= 0:
            raise DomainError("r_min_data must lie outside the horizon")
        v0 = u0 + 2 * float(bg.rstar(r_min_data))
    u0, v0, C0 = float(u0), float(v0), float(C0)

    def phi_at(u, v):
        rs = 0.5 * (np.asarray(v, dtype=float) - u)
        x = bg.x_of_rstar(rs)
        if np.any(x <= 0):
            raise DomainError("static profile evaluated at the horizon")
        return (bg.r_plus + x) * static_profile(bg, C0, x)

    if cutoff is None:
        f = lambda v: phi_at(u0, v)
        g = lambda u: phi_at(np.asarray(u, dtype=float), v0)
        corner = float(phi_at(u0, np.array([v0]))[0])
    else:
        w = float(cutoff)
        if w <= 0:
            raise ValueError("cutoff width must be positive")
        f = lambda v: phi_at(u0, v) * smooth_step((np.asarray(v, dtype=float) - v0) / w)
        g = lambda u: np.zeros(np.shape(u))
        corner = 0.0
    meta = {"family": "static_tail", "C0": C0, "cutoff": cutoff, "bg": bg.label}
    return CharacteristicData(0, u0, v0, f, g, corner, predicted_I0=C0 * bg.M,
                              support=None, meta=meta)


def tabulated_data(path, ell: int = 0, *, u0: float = 0.0, v0: Optional[float] = None,
                   predicted_I0=None) -> CharacteristicData:
    """Outgoing data from a two-column text file (v, phi), linear interpolation.

    The ingoing ray is held at the corner value.
    """
    tab = np.loadtxt(path, comments="#", ndmin=2)
    if tab.shape[1] < 2:
        raise ValueError("expected two columns (v, phi)")
    vv, pp = tab[:, 0], tab[:, 1]
    order = np.argsort(vv)
    vv, pp = vv[order], pp[order]
    if v0 is None:
        v0 = float(vv[0])
    lo, hi = vv[0], vv[-1]

    def f(v):
        v = np.asarray(v, dtype=float)
        if np.any(v < lo - 1e-12) or np.any(v > hi + 1e-12):
            raise BadSupport("grid extends beyond the tabulated range")
        return np.interp(v, vv, pp)

    corner = float(f(np.array([v0]))[0])
    return CharacteristicData(int(ell), float(u0), float(v0), f,
                              lambda u: np.full(np.shape(u), corner), corner,
                              predicted_I0=predicted_I0, support=None,
                              meta={"family": "tabulated", "path": str(path)})


def time_derivative_data(base: CharacteristicData, sol, u0: Optional[float] = None,
                         v0: Optional[float] = None) -> CharacteristicData:
    """Data for T phi sampled from an evolved solution.

    T phi = d_u phi|_v + d_v phi|_u with centred second-order differences.  The
    new rectangle has corner (u0, v0), by default one cell inside the old one.
    The returned rays are cubic splines through the grid samples and cover
    [v0, v1 - h] and [u0, u1 - h].
    """
    from .evolve import t_derivative_rays
    if base.ell != sol.ell:
        raise ValueError("base data and solution disagree on ell")
    g = sol.grid
    h = g.h
    u0 = g.u0 + h if u0 is None else float(u0)
    v0 = g.v0 + h if v0 is None else float(v0)
    (vs, row), (us, col) = t_derivative_rays(sol, u0, v0)
    corner = float(row[0])
    col = col.copy()
    col[0] = corner
    sv = CubicSpline(vs, row) if len(vs) > 3 else None
    su = CubicSpline(us, col) if len(us) > 3 else None

    def _wrap(spl, lo, hi, name):
        def f(x):
            x = np.asarray(x, dtype=float)
            if np.any(x < lo - 1e-9 * max(1.0, abs(lo))) or np.any(x > hi + 1e-9 * max(1.0, abs(hi))):
                raise InsufficientMargin(f"T-derivative data requested outside {name} range")
            if spl is None:
                raise InsufficientMargin("T-derivative ray too short")
            return spl(x)
        return f

    meta = {"family": "time_derivative", "base": base.meta, "order": base.meta.get("order", 0) + 1}
    return CharacteristicData(base.ell, u0, v0, _wrap(sv, vs[0], vs[-1], "v"),
                              _wrap(su, us[0], us[-1], "u"), corner,
                              predicted_I0=0.0 if base.ell == 0 else None,
                              support=None, meta=meta)
