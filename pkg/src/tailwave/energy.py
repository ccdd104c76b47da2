"""Weighted fluxes, T-energy, Morawetz diagnostics and divergence identities.

All quantities are per angular mode: a mode psi = (phi / r) Y with
int Y^2 dw = 1, so the sphere integral is replaced by the mode amplitude.
Integrals along an outgoing cone {u = const} are taken in v with dr = (D/2) dv.

The multiplier identity behind the r^p hierarchies is checked in integrated
form: for V = r^(p-2) d_r and a field f with known box f,

    int int (K^V + E^V) (D/2) r^2 du dv
        = [r^2 J.L]_{u=u1} - [r^2 J.L]_{u=u2} + [r^2 J.Lbar]_{v=v_lo} - [r^2 J.Lbar]_{v=v_hi}

with J.L = (1/2) D r^(p-2) f_r^2 and J.Lbar = (1/2) r^(p-2) lam f^2 / r^2.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import simpson

from . import fields as F
from .errors import (HypothesisViolated, InsufficientMargin, InsufficientRadialRange,
                     SupportViolation)

MODE_NORMS = ("per_mode", "sphere_integrated")


# ---------------------------------------------------------------- types
@dataclass(frozen=True)
class FluxSpec:
    """What to integrate: r^p (d_r F)^2 over r in [r_cut_lo, r_cut_hi]."""
    field_selector: str = "phi"
    p: float = 0.0
    r_cut_lo: float = 10.0
    r_cut_hi: Optional[float] = None        # None: last valid grid point
    mode_norm: str = "per_mode"

    def __post_init__(self):
        if not math.isfinite(self.p):
            raise ValueError("p must be finite")
        if self.mode_norm not in MODE_NORMS:
            raise ValueError(f"mode_norm must be one of {MODE_NORMS}")
        if self.r_cut_hi is not None and self.r_cut_hi <= self.r_cut_lo:
            raise ValueError("r_cut_hi must exceed r_cut_lo")
        F.parse_selector(self.field_selector)

    def as_dict(self):
        return {"field": self.field_selector, "p": self.p, "r_cut_lo": self.r_cut_lo,
                "r_cut_hi": self.r_cut_hi, "mode_norm": self.mode_norm}


@dataclass
class FluxSeries:
    spec: Optional[FluxSpec]
    samples: list                                   # (u, value, richardson_error)
    provenance: dict = field(default_factory=dict)
    aux: dict = field(default_factory=dict)         # extra columns, e.g. cumulative

    def __post_init__(self):
        us = [s[0] for s in self.samples]
        if any(b <= a for a, b in zip(us, us[1:])):
            raise ValueError("FluxSeries u values must be strictly increasing")

    @property
    def u(self):
        return np.array([s[0] for s in self.samples], dtype=float)

    @property
    def values(self):
        return np.array([s[1] for s in self.samples], dtype=float)

    @property
    def errors(self):
        return np.array([s[2] for s in self.samples], dtype=float)

    @property
    def tags(self):
        return set(self.provenance.get("tags", ()))

    def scaled(self, a):
        return FluxSeries(self.spec, [(u, a * v, abs(a) * e) for u, v, e in self.samples],
                          dict(self.provenance), dict(self.aux))

    # -- CSV ------------------------------------------------------------------
    def to_csv(self, path, extra_meta: Optional[dict] = None):
        meta = {}
        if self.spec is not None:
            meta.update({f"spec.{k}": v for k, v in self.spec.as_dict().items()})
        for k, v in sorted(self.provenance.items()):
            meta[k] = v if isinstance(v, (str, int, float)) or v is None else json.dumps(v, sort_keys=True)
        meta.update(extra_meta or {})
        lines = ["# tailwave flux v1", "u,value,rich_err"]
        for u, v, e in self.samples:
            lines.append(f"{u!r},{float(v)!r},{float(e)!r}")
        for k in sorted(meta):
            lines.append(f"#{k}={meta[k]}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path):
        samples, meta = [], {}
        with open(path) as fh:
            head = fh.readline().strip()
            if head != "# tailwave flux v1":
                raise ValueError(f"{path}: not a tailwave flux file")
            cols = fh.readline().strip()
            if cols != "u,value,rich_err":
                raise ValueError(f"{path}: unexpected columns {cols!r}")
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    k, _, v = line[1:].partition("=")
                    meta[k] = v
                else:
                    a, b, c = (float(t) for t in line.split(","))
                    samples.append((a, b, c))
        return cls(None, samples, meta)


def grid_hash(sol) -> str:
    blob = json.dumps({"grid": sol.grid.as_dict(), "bg": sol.bg.label, "ell": sol.ell},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _provenance(sol):
    return {"grid": sol.grid.as_dict(), "grid_hash": grid_hash(sol),
            "background": sol.bg.label, "ell": sol.ell,
            "data": {k: v for k, v in sol.data_meta.items() if _jsonable(v)}}


def _jsonable(v):
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


# ---------------------------------------------------------------- quadrature
def _d_full(f, h):
    """4th-order d/ds on a uniform 1-D grid, one-sided at the two edge points."""
    f = np.asarray(f, dtype=float)
    n = len(f)
    if n < 5:
        raise InsufficientRadialRange("need at least 5 samples for a derivative")
    out = np.empty(n)
    out[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    out[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    out[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    out[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    out[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return out


def _cut_integral(s0, h, y, lo, hi):
    """int_lo^hi y ds for y on nodes s0 + j h.

    Composite Simpson over the whole nodes inside [lo, hi]; the partial cells
    at either end use the trapezoid rule with linearly interpolated end values.
    """
    n = len(y)
    tol = 1e-9
    a = (lo - s0) / h
    b = (hi - s0) / h
    if a < -tol or b > n - 1 + tol:
        raise InsufficientRadialRange("integration range exceeds the sampled range")
    a, b = max(a, 0.0), min(b, n - 1.0)
    ja = int(math.ceil(a - tol))
    jb = int(math.floor(b + tol))

    def lin(t):
        j = min(int(math.floor(t)), n - 2)
        w = t - j
        return (1 - w) * y[j] + w * y[j + 1]

    if jb < ja:                                   # inside a single cell
        return 0.5 * (lin(a) + lin(b)) * (b - a) * h
    core = 0.0
    if jb - ja >= 2:
        core = float(simpson(y[ja:jb + 1], dx=h))
    elif jb - ja == 1:
        core = 0.5 * h * (y[ja] + y[jb])
    if a < ja - tol:
        core += 0.5 * (lin(a) + y[ja]) * (ja - a) * h
    if b > jb + tol:
        core += 0.5 * (y[jb] + lin(b)) * (b - jb) * h
    return core


def _finite_span(y):
    ok = np.flatnonzero(np.isfinite(y))
    if ok.size == 0:
        raise InsufficientRadialRange("no valid samples on this slice")
    lo, hi = ok[0], ok[-1]
    if not np.all(np.isfinite(y[lo:hi + 1])):
        raise InsufficientRadialRange("invalid samples inside the slice")
    return lo, hi


def _norm_factor(spec, ell):
    return 4 * math.pi / (2 * ell + 1) if spec.mode_norm == "sphere_integrated" else 1.0


def _v_of_r(sol, u, r):
    return u + 2 * float(sol.bg.rstar(r))


# ---------------------------------------------------------------- r^p fluxes
def rp_flux(sol, spec: FluxSpec, u: float) -> float:
    """int_{r_cut_lo}^{r_cut_hi} r^p (d_r F)^2 dr along the outgoing cone {u}."""
    if spec.r_cut_lo <= sol.bg.r_plus:
        raise InsufficientRadialRange("r_cut_lo must lie outside the horizon")
    i = sol.i_of_u(u)
    r, dF = F.row_profile(sol, spec.field_selector, u, extra=1)
    D = sol.D_row(i)
    y = r ** spec.p * dF ** 2 * (0.5 * D)
    lo, hi = _finite_span(y)
    v = sol.v
    u_i = sol.u[i]
    v_lo = _v_of_r(sol, u_i, spec.r_cut_lo)
    if v_lo < v[lo] - 1e-9:
        raise InsufficientRadialRange(
            f"r_cut_lo = {spec.r_cut_lo} is not covered at u = {u_i} (first valid r = {r[lo]:.4g})")
    if spec.r_cut_hi is None:
        v_hi = v[hi]
    else:
        v_hi = _v_of_r(sol, u_i, spec.r_cut_hi)
        if v_hi > v[hi] + 1e-9:
            raise InsufficientRadialRange(
                f"r_cut_hi = {spec.r_cut_hi} exceeds the coverage r = {r[hi]:.4g} at u = {u_i}")
    if v_hi <= v_lo:
        return 0.0
    val = _cut_integral(v[lo], sol.h, y[lo:hi + 1], v_lo, v_hi)
    return val * _norm_factor(spec, sol.ell)


def flux_series(sol, spec: FluxSpec, us: Optional[Sequence[float]] = None,
                coarse=None) -> FluxSeries:
    """rp_flux on every stored row (or the given u's).

    With ``coarse`` (the same run at twice the step) the Richardson error
    |F_h - F_2h| / 3 is attached to each sample; otherwise it is NaN.
    """
    if us is None:
        us = [float(sol.u[i]) for i in sol.row_index]
    out = []
    for u in us:
        try:
            val = rp_flux(sol, spec, u)
        except InsufficientRadialRange:
            continue
        err = float("nan")
        if coarse is not None:
            err = abs(val - rp_flux(coarse, spec, u)) / 3.0
        out.append((float(u), val, err))
    prov = _provenance(sol)
    return FluxSeries(spec, out, prov)


# ---------------------------------------------------------------- T energy
def _parse_cone(cone):
    if isinstance(cone, str):
        name, _, rest = cone.partition("(")
        return name.strip(), float(rest.rstrip(")"))
    name, val = cone
    return str(name), float(val)


def t_energy_flux(sol, cone, range=None, r_min: Optional[float] = None) -> float:
    """J^T flux through an outgoing cone ("outgoing", u) or ingoing cone ("ingoing", v).

    ``range`` restricts the integration variable (v on outgoing cones, u on
    ingoing ones); ``r_min`` further restricts an outgoing cone to r >= r_min.
    """
    kind, c = _parse_cone(cone)
    lam = sol.ell * (sol.ell + 1)
    h = sol.h
    if kind == "outgoing":
        i = sol.i_of_u(c)
        phi = np.asarray(sol.row(i), dtype=float)
        r, D = sol.r_row(i), sol.D_row(i)
        s = sol.v
        phi_s = _d_full(phi, h)
        psi = phi / r
        psi_s = phi_s / r - phi * 0.5 * D / r ** 2
    elif kind == "ingoing":
        j = sol.j_of_v(c)
        phi = np.asarray(sol.column(j), dtype=float)
        k = j - np.arange(sol.nu + 1) + sol.nu
        x = np.asarray(sol.x_tab, dtype=float)[k]
        r = sol.bg.r_plus + x
        D = sol.bg.D_from_x(x)
        s = sol.u
        phi_s = _d_full(phi, h)
        psi = phi / r
        psi_s = phi_s / r + phi * 0.5 * D / r ** 2
    else:
        raise ValueError(f"unknown cone {kind!r}")
    dens = r ** 2 * psi_s ** 2 + 0.25 * D * lam * psi ** 2
    lo, hi = (s[0], s[-1]) if range is None else (float(range[0]), float(range[1]))
    if r_min is not None:
        if kind != "outgoing":
            raise ValueError("r_min applies to outgoing cones")
        if r_min <= sol.bg.r_plus:
            raise InsufficientRadialRange("r_min must lie outside the horizon")
        lo = max(lo, _v_of_r(sol, sol.u[i], r_min))
        if lo < s[0] - 1e-9:
            raise InsufficientRadialRange(f"r_min = {r_min} not covered on this cone")
    if lo < s[0] - 1e-9 or hi > s[-1] + 1e-9:
        raise InsufficientRadialRange("requested range leaves the grid")
    if hi <= lo:
        return 0.0
    return _cut_integral(s[0], h, dens, lo, hi)


def t_energy_series(sol, r_min: float, us: Optional[Sequence[float]] = None,
                    coarse=None) -> FluxSeries:
    """Outgoing J^T flux through N_u intersected with {r >= r_min}, per stored row."""
    if us is None:
        us = [float(sol.u[i]) for i in sol.row_index]
    out = []
    for u in us:
        try:
            val = t_energy_flux(sol, ("outgoing", u), r_min=r_min)
        except InsufficientRadialRange:
            continue
        err = float("nan")
        if coarse is not None:
            err = abs(val - t_energy_flux(coarse, ("outgoing", u), r_min=r_min)) / 3.0
        out.append((float(u), val, err))
    prov = _provenance(sol)
    prov["measurable"] = f"t_energy(r>={r_min})"
    return FluxSeries(None, out, prov)


def energy_balance(sol, rect=None) -> float:
    """(in through u0 and v0) - (out through u1 and v1) on a node rectangle."""
    u0, u1, v0, v1 = rect if rect is not None else (sol.u[0], sol.u[-1], sol.v[0], sol.v[-1])
    fin = (t_energy_flux(sol, ("outgoing", u0), (v0, v1))
           + t_energy_flux(sol, ("ingoing", v0), (u0, u1)))
    fout = (t_energy_flux(sol, ("outgoing", u1), (v0, v1))
            + t_energy_flux(sol, ("ingoing", v1), (u0, u1)))
    return fin - fout


# ---------------------------------------------------------------- divergence identity
_EQUATION = {"phi": "box_phi", "Phi": "box_Phi", "PhiTilde": "box_PhiTilde",
             "Phi2": "box_Phi2", "dr_k_phi": "box_drk_phi", "dr_k_Phi2": "box_drk_Phi2"}


def divergence_terms(sol, field_selector: str, p: float, rect):
    """Bulk and boundary pieces of the integrated V-multiplier identity."""
    name, k = F.parse_selector(field_selector)
    if name not in _EQUATION:
        raise ValueError(f"no commuted equation for {field_selector!r}")
    u1, u2, v_lo, v_hi = (float(t) for t in rect)
    if not (u2 > u1 and v_hi > v_lo):
        raise ValueError("rect must satisfy u1 < u2 and v_lo < v_hi")
    if not sol.is_full:
        raise InsufficientMargin("divergence identities need full storage")
    i1, i2 = sol.i_of_u(u1), sol.i_of_u(u2)
    j1, j2 = sol.j_of_v(v_lo), sol.j_of_v(v_hi)
    for val, idx, grid in ((u1, i1, sol.u), (u2, i2, sol.u), (v_lo, j1, sol.v), (v_hi, j2, sol.v)):
        if abs(grid[idx] - val) > 1e-9 * max(1.0, abs(val)):
            raise ValueError("rect corners must be grid nodes")
    cache = F.FieldCache(sol)
    f, f_r, f_u, _, rhs = F.box_terms(sol, _EQUATION[name], k if k else None, cache)
    sl = (slice(i1, i2 + 1), slice(j1, j2 + 1))
    f, f_r, f_u, rhs = (np.asarray(a[sl], dtype=float) for a in (f, f_r, f_u, rhs))
    geo = cache.geo
    r = np.asarray(geo.r[sl], dtype=float)
    D = np.asarray(geo.D[sl], dtype=float)
    D1 = np.asarray(geo.Dn(1)[sl], dtype=float)
    for a in (f, f_r, f_u, rhs):
        if not np.all(np.isfinite(a)):
            raise InsufficientMargin("rect reaches into the stencil margin")
    lam = sol.ell * (sol.ell + 1)
    ang = lam * f ** 2 / r ** 2
    K = (0.5 * r ** (p - 3) * (D * (p - 4) - D1 * r) * f_r ** 2
         + 2 * r ** (p - 3) * f_r * f_u + 0.5 * (2 - p) * r ** (p - 3) * ang)
    E = r ** (p - 2) * f_r * rhs
    h = sol.h
    bulk_density = (K + E) * 0.5 * D * r ** 2
    bulk = float(simpson(simpson(bulk_density, dx=h, axis=1), dx=h))
    JL = 0.5 * D * r ** (p - 2) * f_r ** 2 * r ** 2
    JLb = 0.5 * r ** (p - 2) * ang * r ** 2
    b_u1 = float(simpson(JL[0], dx=h))
    b_u2 = float(simpson(JL[-1], dx=h))
    b_vlo = float(simpson(JLb[:, 0], dx=h))
    b_vhi = float(simpson(JLb[:, -1], dx=h))
    return {"bulk": bulk, "u1": b_u1, "u2": b_u2, "v_lo": b_vlo, "v_hi": b_vhi,
            "boundary": b_u1 - b_u2 + b_vlo - b_vhi}


def divergence_residual(sol, field_selector: str, p: float, rect) -> float:
    """|bulk integral of (K^V + E^V) - boundary flux sum| on the node rectangle."""
    t = divergence_terms(sol, field_selector, p, rect)
    return abs(t["bulk"] - t["boundary"])


# ---------------------------------------------------------------- Morawetz diagnostic
def morawetz_timeseries(sol, r_band, us: Optional[Sequence[float]] = None) -> FluxSeries:
    """Nondegenerate energy density integrated over r in r_band, per u.

    Density per mode: r^2 [(d_u psi)^2 + (d_v psi)^2] + lam psi^2 + psi^2,
    integrated in r.  Rows need two stored neighbours on each side (full
    storage or checkpoint blocks of half-width 2).  The running u-integral
    is returned in ``aux["cumulative"]``.
    """
    a, b = (float(t) for t in r_band)
    if not (b > a > sol.bg.r_plus):
        raise InsufficientRadialRange("r_band must satisfy r_plus < a < b")
    lam = sol.ell * (sol.ell + 1)
    rows = np.asarray(sol.phi, dtype=float)
    phi_u = F._du(rows, sol.row_index, sol.h)
    out = []
    want = None if us is None else {sol.i_of_u(u) for u in us}
    for s, i in enumerate(sol.row_index):
        if want is not None and i not in want:
            continue
        if not np.all(np.isfinite(phi_u[s])):
            continue
        r, D = sol.r_row(i), sol.D_row(i)
        phi = rows[s]
        phi_v = _d_full(phi, sol.h)
        psi = phi / r
        psi_v = phi_v / r - 0.5 * D * phi / r ** 2
        psi_u = phi_u[s] / r + 0.5 * D * phi / r ** 2
        dens = (r ** 2 * (psi_u ** 2 + psi_v ** 2) + lam * psi ** 2 + psi ** 2) * 0.5 * D
        u = float(sol.u[i])
        v_a, v_b = _v_of_r(sol, u, a), _v_of_r(sol, u, b)
        if v_a < sol.v[0] - 1e-9 or v_b > sol.v[-1] + 1e-9:
            continue
        out.append((u, _cut_integral(sol.v[0], sol.h, dens, v_a, v_b), float("nan")))
    if not out:
        raise InsufficientRadialRange("the band is not covered on any usable row")
    uu = np.array([o[0] for o in out])
    vals = np.array([o[1] for o in out])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(uu))])
    prov = _provenance(sol)
    prov["measurable"] = f"morawetz({a},{b})"
    if sol.bg.kind == "reissner_nordstrom" and sol.bg.extremal:
        prov["tags"] = ["extremal_warning"]
    return FluxSeries(None, out, prov, {"cumulative": cum})


# ---------------------------------------------------------------- inequality checkers
def _tail_decay_ok(r, g, frac=0.1):
    """g -> 0 numerically: the last samples are small against the peak and shrinking."""
    g = np.abs(g)
    peak = max(float(np.max(g)), 1e-300)
    n = max(3, int(frac * len(g)))
    return g[-1] <= 1e-6 * peak or (g[-1] <= 1e-2 * peak and g[-1] <= g[-n])


def hardy_check(samples, q: float, rel_tol: float = 1e-8):
    """Hardy inequality int r^q f^2 <= 4/(q+1)^2 int r^(q+2) f'^2 on [r0, r_max].

    ``samples`` is (r, f) or (r, f, f_r) on a grid.  For q = -1 the lemma's
    companion form int f^2 <= 4 int (r - r0)^2 f'^2 is checked instead.
    Returns (lhs, rhs, ok).
    """
    if len(samples) == 3:
        r, f, fr = (np.asarray(a, dtype=float) for a in samples)
    else:
        r, f = (np.asarray(a, dtype=float) for a in samples)
        fr = np.gradient(f, r, edge_order=2)
    if len(r) < 5 or np.any(np.diff(r) <= 0):
        raise HypothesisViolated("need at least 5 increasing radii")
    scale = max(float(np.max(np.abs(f))), 1e-300)
    if not np.any(f):
        return 0.0, 0.0, True
    r0 = r[0]
    if q == -1:
        if not _tail_decay_ok(r, r * f ** 2):
            raise HypothesisViolated("r f^2 does not decay on the sampled tail")
        lhs = float(simpson(f ** 2, x=r))
        rhs = 4.0 * float(simpson((r - r0) ** 2 * fr ** 2, x=r))
    else:
        if abs(f[0]) > 1e-12 * scale:
            raise HypothesisViolated(f"f(r0) = {f[0]:.3g} must vanish")
        if not _tail_decay_ok(r, r ** (q + 1) * f ** 2):
            raise HypothesisViolated("r^(q+1) f^2 does not decay on the sampled tail")
        lhs = float(simpson(r ** q * f ** 2, x=r))
        rhs = 4.0 / (q + 1) ** 2 * float(simpson(r ** (q + 2) * fr ** 2, x=r))
    return lhs, rhs, bool(lhs <= rhs * (1 + rel_tol))


def poincare_check(coeffs: dict, r: float, L: int):
    """Poincare inequality on the sphere in coefficient space.

    lhs = int psi^2 dw = sum c^2, rhs = r^2 / (L(L+1)) int |grad psi|^2 dw
    = sum l(l+1) c^2 / (L(L+1)).  Equality for a single mode l = L.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    if not r > 0:
        raise ValueError("r must be positive")
    lhs = 0.0
    grad = 0.0
    for (ell, m), c in coeffs.items():
        if abs(m) > ell:
            raise ValueError(f"invalid mode (l={ell}, m={m})")
        if c != 0 and ell < L:
            raise SupportViolation(f"mode l={ell} lies below L={L}")
        lhs += c * c
        grad += ell * (ell + 1) * c * c / r ** 2
    rhs = r ** 2 * grad / (L * (L + 1))
    return lhs, rhs, bool(lhs <= rhs * (1 + 1e-12))


def _growth_slope(t, g):
    """Least-squares slope of ln g against ln(1 + t) over the last third."""
    n = len(t)
    sel = slice(2 * n // 3, n)
    x, y = np.log1p(t[sel]), np.log(g[sel])
    if len(x) < 2:
        return 0.0
    return float(np.polyfit(x, y, 1)[0])


def interpolation_check(f_series, p: float, q: float, eps: float, R: float = 1.0,
                        growth_tol: float = 0.05):
    """Check the interpolation lemma on measured series.

    ``f_series`` = (s1, s2, s_p): the fluxes int r^(p-eps) f^2,
    int r^(p+1-eps) f^2 and int r^p f^2 sampled at the same tau values.  The
    hypothesis constants are fitted as D1 = sup s1 (1+tau)^q and
    D2 = sup s2 (1+tau)^(q-1); a hypothesis counts as violated when the
    normalised series still grows over the last third of the window.  The
    conclusion is checked with the constant that the proof produces,
    C = max(1, R)^eps + min(1, R)^(eps-1).  Returns (ok, info).
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    s1, s2, sp = f_series
    t = s1.u
    if not (np.array_equal(t, s2.u) and np.array_equal(t, sp.u)):
        raise ValueError("series must share their tau samples")
    y1, y2, yp = s1.values, s2.values, sp.values
    if np.any(y1 < 0) or np.any(y2 < 0) or np.any(yp < 0):
        raise HypothesisViolated("flux series must be nonnegative")
    if not np.any(y1) and not np.any(y2):
        if np.any(yp):
            raise HypothesisViolated("hypothesis series vanish but the r^p series does not")
        return True, {"D1": 0.0, "D2": 0.0, "ratio": 0.0, "C": 0.0}
    g1 = y1 * (1 + t) ** q
    g2 = y2 * (1 + t) ** (q - 1)
    for g, label in ((g1, "first"), (g2, "second")):
        if np.all(g > 0) and _growth_slope(t, g) > growth_tol:
            raise HypothesisViolated(f"the {label} hypothesis series is not bounded by a power law")
    D1, D2 = float(np.max(g1)), float(np.max(g2))
    C = max(1.0, R) ** eps + min(1.0, R) ** (eps - 1)
    bound = max(D1, D2) * (1 + t) ** (-q + eps)
    ratio = float(np.max(yp / bound))
    return bool(ratio <= C * (1 + 1e-9)), {"D1": D1, "D2": D2, "ratio": ratio, "C": C}
