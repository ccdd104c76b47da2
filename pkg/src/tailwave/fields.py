"""Derived radiation fields, Newman-Penrose constants and commuted-equation audits.

All 2-D arrays follow the layout of ``ModeSolution.phi`` (stored rows x v-grid).
Stencils that run off the stored data leave NaN, so margins propagate
automatically through nested derivatives.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _symbolic
from .background import real_array
from .errors import (InsufficientMargin, InsufficientRadialRange, UnsupportedK, WrongMode)

# 4th-order centred first derivative
_C1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0

FIELD_SELECTORS = ("phi", "Phi", "PhiTilde", "Phi2", "dr_k_phi", "dr_k_Phi2")

MAX_K = 2


@dataclass(frozen=True)
class DerivedField:
    selector: str
    values: np.ndarray
    stencil_margin: int
    k: int = 0

    @property
    def name(self):
        return f"{self.selector}({self.k})" if self.selector.startswith("dr_k") else self.selector


def parse_selector(sel: str):
    """'dr_k_phi(2)' -> ('dr_k_phi', 2); 'Phi' -> ('Phi', 0)."""
    m = re.fullmatch(r"\s*([A-Za-z_0-9]+?)\s*(?:\(\s*(\d+)\s*\))?\s*", sel)
    if not m:
        raise ValueError(f"bad selector {sel!r}")
    name, k = m.group(1), int(m.group(2) or 0)
    return name, k


# ---------------------------------------------------------------- stencils
def _dv(f, h):
    """4th-order centred d/dv along the last axis (NaN in a 2-cell margin)."""
    out = np.full(f.shape, np.nan, dtype=f.dtype)
    n = f.shape[-1]
    if n < 5:
        return out
    acc = (f[..., 0:n - 4] - 8 * f[..., 1:n - 3] + 8 * f[..., 3:n - 1] - f[..., 4:n]) / (12 * h)
    out[..., 2:n - 2] = acc
    return out


def _du(f, row_index, h):
    """4th-order centred d/du|_v across stored rows (needs 2 neighbours each side)."""
    out = np.full(f.shape, np.nan, dtype=f.dtype)
    idx = np.asarray(row_index)
    n = len(idx)
    for s in range(2, n - 2):
        if idx[s + 2] - idx[s - 2] == 4:
            out[s] = (f[s - 2] - 8 * f[s - 1] + 8 * f[s + 1] - f[s + 2]) / (12 * h)
    return out


class _Grid:
    """Per-row geometric arrays aligned with sol.phi."""

    def __init__(self, sol):
        self.sol = sol
        X = np.stack([sol.x_row(i) for i in sol.row_index])
        self.x = X
        self.r = sol.bg.r_plus + X
        self.D = sol.bg.D_from_x(X)
        self._Dn = {0: self.D}

    def Dn(self, n):
        if n not in self._Dn:
            self._Dn[n] = self.sol.bg.D(self.r, n)
        return self._Dn[n]


def radial_derivative(sol, field, order: int = 1, _geo=None):
    """d_r^order of a field sampled like ``sol.phi`` (d_r = 2 D^-1 d_v at fixed u)."""
    if order < 0:
        raise ValueError("order must be >= 0")
    f = real_array(field)
    if 4 * order >= f.shape[-1]:
        raise InsufficientMargin("radial stencil wider than the grid")
    geo = _geo or _Grid(sol)
    for _ in range(order):
        f = 2.0 / geo.D * _dv(f, sol.h)
    return f


def _u_at_fixed_r(sol, f, f_r, geo):
    """d_u|_r f = d_u|_v f + (D/2) d_r f."""
    return _du(f, sol.row_index, sol.h) + 0.5 * geo.D * f_r


class FieldCache:
    """Lazily computed d_r^j X for X in phi, Phi, PhiTilde, Phi2."""

    def __init__(self, sol):
        self.sol = sol
        self.geo = _Grid(sol)
        self.c = {("phi", 0): real_array(sol.phi)}

    def get(self, X, j=0):
        key = (X, j)
        if key in self.c:
            return self.c[key]
        if j > 0:
            val = radial_derivative(self.sol, self.get(X, j - 1), 1, self.geo)
        else:
            r = self.geo.r
            if X == "Phi":
                val = r ** 2 * self.get("phi", 1)
            elif X == "PhiTilde":
                val = r * (r - self.sol.bg.M) * self.get("phi", 1)
            elif X == "Phi2":
                val = r ** 2 * self.get("Phi", 1)
            else:
                raise KeyError(X)
        self.c[key] = val
        return val


def derived_field(sol, selector: str, k: Optional[int] = None) -> DerivedField:
    """Phi = r^2 d_r phi, PhiTilde = r(r-M) d_r phi, Phi2 = r^2 d_r Phi, and d_r^k of phi, Phi2."""
    name, kk = parse_selector(selector)
    if k is not None:
        kk = k
    cache = FieldCache(sol)
    margins = {"phi": 0, "Phi": 2, "PhiTilde": 2, "Phi2": 4}
    if name in ("phi", "Phi", "PhiTilde", "Phi2"):
        vals, m, kk = cache.get(name, 0), margins[name], 0
    elif name == "dr_k_phi":
        vals, m = cache.get("phi", kk), 2 * kk
    elif name == "dr_k_Phi2":
        vals, m = cache.get("Phi2", kk), 4 + 2 * kk
    elif name == "Phi2_direct":
        r = cache.geo.r
        vals = 2 * r ** 3 * cache.get("phi", 1) + r ** 4 * cache.get("phi", 2)
        m, kk = 4, 0
    else:
        raise ValueError(f"unknown selector {selector!r}")
    if np.all(np.isnan(vals)):
        raise InsufficientMargin(f"no valid samples for {selector}")
    return DerivedField(name, vals, m, kk)


def phi2_consistency(sol) -> float:
    """Max |Phi2 nested - Phi2 direct| / max|Phi2| on the common interior."""
    a = derived_field(sol, "Phi2").values
    b = derived_field(sol, "Phi2_direct").values
    ok = np.isfinite(a) & np.isfinite(b)
    scale = max(np.max(np.abs(a[ok])), 1e-300)
    return float(np.max(np.abs(a[ok] - b[ok])) / scale)


# ---------------------------------------------------------------- extrapolation to scri
EXTRAP_MAX_DEGREE = 3


def _extrapolate(r, y, window, max_points=400, max_degree=EXTRAP_MAX_DEGREE):
    """Polynomial-in-1/r extrapolation over a radial window.

    Degrees 1..max_degree are tried; late cones carry corrections in powers
    of u/r, so a higher max_degree helps when r_max/u is modest.  Returns
    (estimate, tolerance, degree): the degree whose estimate changed least
    from the previous degree wins; the tolerance is that change.
    """
    lo, hi = window
    sel = np.isfinite(y) & (r >= lo) & (r <= hi)
    if sel.sum() < 8:
        raise InsufficientRadialRange("fewer than 8 samples in the extrapolation window")
    rr, yy = r[sel].astype(float), y[sel].astype(float)
    if len(rr) > max_points:
        pick = np.unique(np.linspace(0, len(rr) - 1, max_points).round().astype(int))
        rr, yy = rr[pick], yy[pick]
    x = lo / rr                      # in (0, 1]
    est = [float(np.mean(yy))]
    degrees = range(1, max_degree + 1)
    for deg in degrees:
        c = np.polynomial.polynomial.polyfit(x, yy, deg)
        est.append(float(c[0]))
    changes = [abs(est[d] - est[d - 1]) for d in degrees]
    best = int(np.argmin(changes)) + 1
    floor = 64 * np.finfo(float).eps * max(np.max(np.abs(yy)), 1e-300)
    return est[best], max(changes[best - 1], floor), best


def _row_profile(sol, X, u, j=0, cache=None):
    """(r, d_r^j X) along the stored row at u, computed from that row only."""
    i = sol.i_of_u(u)
    row = real_array(sol.row(i))[None, :]
    geo_r = sol.r_row(i)[None, :]
    D = sol.D_row(i)[None, :]
    h = sol.h

    def dr(f):
        return 2.0 / D * _dv(f, h)

    phi_r = dr(row)
    if X == "phi":
        base = row
    elif X == "Phi":
        base = geo_r ** 2 * phi_r
    elif X == "PhiTilde":
        base = geo_r * (geo_r - sol.bg.M) * phi_r
    elif X == "Phi2":
        base = geo_r ** 2 * dr(geo_r ** 2 * phi_r)
    else:
        raise ValueError(X)
    for _ in range(j):
        base = dr(base)
    return geo_r[0], base[0]


def row_profile(sol, selector: str, u: float, extra: int = 0):
    """(r, d_r^extra F) along the stored row at u, for any field selector F.

    Works on checkpoint-only solutions, since it uses one row.
    """
    name, kk = parse_selector(selector)
    if name in ("phi", "Phi", "PhiTilde", "Phi2"):
        return _row_profile(sol, name, u, extra)
    if name == "dr_k_phi":
        return _row_profile(sol, "phi", u, kk + extra)
    if name == "dr_k_Phi2":
        return _row_profile(sol, "Phi2", u, kk + extra)
    raise ValueError(f"unknown selector {selector!r}")


def _outer_decade(r, y, decade=10.0):
    good = np.isfinite(y)
    if not good.any():
        raise InsufficientRadialRange("no valid samples on this row")
    r_max = float(np.max(r[good]))
    return (r_max / decade, r_max)


def extract_np_constant(sol, u: float, window=None, r_threshold: float = 200.0):
    """I0(u) = lim r^2 d_r phi along {u}; returns (estimate, tolerance)."""
    if sol.ell != 0:
        raise WrongMode("the first NP constant is defined for ell = 0")
    r, Phi = _row_profile(sol, "Phi", u)
    if window is None:
        window = _outer_decade(r, Phi)
    if window[1] < r_threshold * max(sol.bg.M, 1.0) * (1 - 1e-12):
        raise InsufficientRadialRange(f"r_max = {window[1]:.1f} below threshold {r_threshold}")
    est, tol, _ = _extrapolate(r, Phi, window)
    return est, tol


def common_window(sol, u_samples, decade=10.0):
    """Outermost decade of radii covered (with valid stencils) on every sample row."""
    hi = np.inf
    for u in u_samples:
        i = sol.i_of_u(u)
        r = sol.r_row(i)
        hi = min(hi, float(r[-3]))      # last point with a valid 5-point stencil
    return (hi / decade, hi)


def check_np_conservation(sol, u_samples, window=None, r_threshold: float = 200.0) -> float:
    """max_u |I0(u) - I0(u_first)| with one radial window shared by all samples."""
    u_samples = list(u_samples)
    if window is None:
        window = common_window(sol, u_samples)
    vals = [extract_np_constant(sol, u, window, r_threshold)[0] for u in u_samples]
    return float(max(abs(v - vals[0]) for v in vals))


def extract_second_np(sol, u: float, window=None, r_threshold: float = 200.0):
    """I1(u) = lim r^2 d_r PhiTilde for ell = 1; returns (estimate, tolerance)."""
    if sol.ell != 1:
        raise WrongMode("the second NP constant is defined for ell = 1")
    r, Pt = _row_profile(sol, "PhiTilde", u)
    i = sol.i_of_u(u)
    D = sol.D_row(i)
    y = r ** 2 * (2.0 / D) * _dv(Pt[None, :], sol.h)[0]
    if window is None:
        window = _outer_decade(r, y)
    if window[1] < r_threshold * max(sol.bg.M, 1.0) * (1 - 1e-12):
        raise InsufficientRadialRange("radial coverage below threshold")
    est, tol, _ = _extrapolate(r, y, window)
    return est, tol


# Validated (selector, m) weights: r^m * field has a finite limit at scri.
SCRI_TABLE = {
    ("phi", 0): "radiation field",
    ("Phi", 0): "first-order radiation field",
    ("PhiTilde", 0): "first-order radiation field (shifted weight)",
    ("Phi2", 0): "second-order radiation field",
    ("Phi2", -1): "r^-1 Phi2",
    ("Phi2", -2): "r^-2 Phi2",
    ("dr_k_phi(1)", 2): "r^2 d_r phi = Phi",
    ("dr_k_Phi2(1)", 0): "d_r Phi2", ("dr_k_Phi2(1)", 1): "r d_r Phi2",
    ("dr_k_Phi2(1)", 2): "r^2 d_r Phi2",
    ("dr_k_Phi2(2)", 0): "d_r^2 Phi2", ("dr_k_Phi2(2)", 1): "r d_r^2 Phi2",
    ("dr_k_Phi2(2)", 2): "r^2 d_r^2 Phi2", ("dr_k_Phi2(2)", 3): "r^3 d_r^2 Phi2",
}


def scri_limit(sol, field: DerivedField, weight_m: float, u: float, window=None):
    """Extrapolated lim r^m * field(u, r) for a validated (selector, m) pair."""
    key = (field.name, int(weight_m)) if float(weight_m).is_integer() else None
    if key is None or key not in SCRI_TABLE:
        raise ValueError(f"weight m={weight_m} is not validated for {field.name}")
    i = sol.i_of_u(u)
    s = int(np.searchsorted(sol.row_index, i))
    if s >= len(sol.row_index) or sol.row_index[s] != i:
        raise InsufficientMargin(f"row at u={u} not stored")
    r = sol.r_row(i)
    y = r ** weight_m * field.values[s]
    if window is None:
        window = _outer_decade(r, y)
    est, tol, _ = _extrapolate(r, y, window)
    return est, tol


# ---------------------------------------------------------------- commuted-equation audit
def _selector_k(equation, k):
    name, kk = parse_selector(equation)
    if k is not None:
        kk = k
    if name not in _symbolic.SELECTORS:
        raise ValueError(f"unknown equation {equation!r}")
    return name, kk


def _mutated(name):
    flag = os.environ.get("TAILWAVE_MUTATE", "")
    return name in {s.strip() for s in flag.split(",") if s.strip()}


def box_terms(sol, equation: str, k: Optional[int] = None, cache: Optional[FieldCache] = None,
              mutate: Optional[bool] = None):
    """Numerical pieces of one identity: returns (G, G_r, G_u|_r, lhs, rhs)."""
    name, kk = _selector_k(equation, k)
    if name.startswith("box_drk") and kk > MAX_K:
        raise UnsupportedK(f"k={kk} exceeds the audited range k <= {MAX_K}")
    need = _symbolic.max_D_order(name, kk)
    if sol.bg.kind == "custom" and need > 3:
        raise UnsupportedK(f"{name}(k={kk}) needs D^({need}); custom D provides 3 derivatives")
    if mutate is None:
        mutate = _mutated(name)
    if not sol.is_full:
        raise InsufficientMargin("commuted-equation audits need full storage")
    cache = cache or FieldCache(sol)
    geo = cache.geo
    target, fA, fterms = _symbolic.numeric_identity(name, kk, bool(mutate))
    root, kt = target
    lam = sol.ell * (sol.ell + 1)
    r, D = geo.r, geo.D
    Ds = [geo.Dn(n) for n in range(max(need, 1) + 1)]
    G = cache.get(root, kt)
    G_r = cache.get(root, kt + 1)
    G_rr = cache.get(root, kt + 2)
    G_u = _u_at_fixed_r(sol, G, G_r, geo)
    G_ur = radial_derivative(sol, G_u, 1, geo)
    D1 = geo.Dn(1)
    lhs = -2 * G_ur + D * G_rr - 2 / r * G_u + (D1 + 2 * D / r) * G_r - lam * G / r ** 2
    rhs = fA(r, lam, sol.bg.M, Ds) * G_r - 2 / r * G_u
    for (X, j), fc in fterms.items():
        rhs = rhs + fc(r, lam, sol.bg.M, Ds) * cache.get(X, j)
    return G, G_r, G_u, lhs, rhs


def commutator_residual(sol, equation: str, k: Optional[int] = None, *,
                        mutate: Optional[bool] = None, cache=None) -> float:
    """Interior max of |box G - RHS| * r^2 for the named commuted equation.

    ``equation`` is one of box_phi, box_Phi, box_PhiTilde, box_Phi2,
    box_drk_phi(k), box_drk_Phi2(k).  Setting the environment variable
    TAILWAVE_MUTATE to a selector (or passing ``mutate=True``) flips the sign
    of the Phi term in the Phi2 equations; the audit should then fail.
    """
    cache = cache or FieldCache(sol)
    *_, lhs, rhs = box_terms(sol, equation, k, cache, mutate)
    res = np.abs(lhs - rhs) * cache.geo.r ** 2
    ok = np.isfinite(res)
    if not ok.any():
        raise InsufficientMargin("no interior points survive the stencils")
    return float(np.max(res[ok]))
