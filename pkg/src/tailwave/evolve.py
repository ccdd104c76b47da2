"""Second-order diamond integrator for the per-mode radiation field.

Solves d_u d_v phi = -(1/4) D (l(l+1)/r^2 + D'/r) phi on a uniform double-null
grid.  Because the background is stationary, r depends on v - u only, so the
radius and the potential on the whole grid are one-dimensional tables indexed
by the diagonal offset k = j - i.  Grid node (i, j) and the centre of the cell
with south corner (i, j) share the same value of v - u, hence the same table
entry.
"""
from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numba
import numpy as np

from .background import Background
from .errors import (BadSupport, DomainError, InsufficientMargin, StabilityWarning)
from .initial_data import CharacteristicData

FULL_STORAGE_LIMIT = 6_000_000      # cells; above this only checkpoints are kept


@dataclass(frozen=True)
class GridSpec:
    u0: float
    u1: float
    v0: float
    v1: float
    h: float
    checkpoint_stride: int = 0
    delta_floor: float = 0.0        # in units of M; see notes on the horizon floor

    def __post_init__(self):
        if not self.h > 0:
            raise DomainError("grid step h must be positive")
        if not self.u1 > self.u0:
            raise DomainError("u1 must exceed u0")
        if not self.v1 > self.v0:
            raise DomainError("v1 must exceed v0")
        for a, b, name in ((self.u0, self.u1, "u"), (self.v0, self.v1, "v")):
            n = (b - a) / self.h
            if abs(n - round(n)) > 1e-9 * max(1.0, n):
                raise DomainError(f"({name}1-{name}0)/h = {n} is not an integer")

    @property
    def nu(self):
        return int(round((self.u1 - self.u0) / self.h))

    @property
    def nv(self):
        return int(round((self.v1 - self.v0) / self.h))

    @property
    def cells(self):
        return self.nu * self.nv

    def refined(self, factor: int = 2):
        stride = self.checkpoint_stride * factor if self.checkpoint_stride else 0
        return replace(self, h=self.h / factor, checkpoint_stride=stride)

    @classmethod
    def for_data(cls, data: CharacteristicData, u1, v1, h, **kw):
        """Grid whose corner matches the data; u1, v1 are rounded onto the lattice."""
        nu = max(1, int(round((u1 - data.u0) / h)))
        nv = max(1, int(round((v1 - data.v0) / h)))
        return cls(data.u0, data.u0 + nu * h, data.v0, data.v0 + nv * h, h, **kw)

    def as_dict(self):
        return {"u0": self.u0, "u1": self.u1, "v0": self.v0, "v1": self.v1, "h": self.h}


# ---------------------------------------------------------------- kernel
@numba.njit(cache=True)
def _sweep(nu, nv, P, cc, row0, col0, row_slot, rows_out, diag_off, diag_out,
           col_idx, col_out):
    prev = row0.copy()
    cur = np.empty_like(prev)
    nd = diag_off.shape[0]
    nc = col_idx.shape[0]
    for i in range(nu + 1):
        if i > 0:
            cur[0] = col0[i]
            base = nu - (i - 1)
            for j in range(nv):
                w = cur[j]
                e = prev[j + 1]
                cur[j + 1] = w + e - prev[j] - cc * P[j + base] * (w + e)
            tmp = prev
            prev = cur
            cur = tmp
        s = row_slot[i]
        if s >= 0:
            for j in range(nv + 1):
                rows_out[s, j] = prev[j]
        for d in range(nd):
            j = i + diag_off[d]
            if j >= 0 and j <= nv:
                diag_out[d, i] = prev[j]
        for c in range(nc):
            col_out[c, i] = prev[col_idx[c]]


def _sweep_extended(nu, nv, P, cc, row0, col0):
    """Same scheme in long double, one anti-diagonal at a time (full array).

    Cells with equal i + j do not depend on each other, so each diagonal is a
    vector operation.  Only used for the small audit grids, where roundoff in
    high nested derivatives would otherwise mask the truncation error.
    """
    phi = np.empty((nu + 1, nv + 1), dtype=np.longdouble)
    phi[0] = row0
    phi[:, 0] = col0
    for s in range(2, nu + nv + 1):
        i = np.arange(max(1, s - nv), min(nu, s - 1) + 1)
        j = s - i
        w = phi[i, j - 1]
        e = phi[i - 1, j]
        phi[i, j] = w + e - phi[i - 1, j - 1] - cc * P[j - i + nu] * (w + e)
    return phi


def _lagrange4(t):
    """Weights for nodes -1, 0, 1, 2 at fractional position t in [0, 1)."""
    return np.array([-t * (t - 1) * (t - 2) / 6, (t + 1) * (t - 1) * (t - 2) / 2,
                     -(t + 1) * t * (t - 2) / 2, (t + 1) * t * (t - 1) / 6])


# ---------------------------------------------------------------- solution
@dataclass
class ModeSolution:
    """Evolved phi_l(u, v).

    ``phi`` holds the stored rows (all rows for small grids); ``row_index``
    gives their u-indices.  Radii come from the offset table ``x_tab``
    (x = r - r_plus), so ``r`` is produced on demand.
    """
    bg: Background
    ell: int
    grid: GridSpec
    data_meta: dict
    phi: np.ndarray
    row_index: np.ndarray
    x_tab: np.ndarray
    stations: dict = field(default_factory=dict)
    columns: dict = field(default_factory=dict)
    max_potential_h2: float = 0.0

    # ---- coordinates
    @property
    def h(self):
        return self.grid.h

    @property
    def nu(self):
        return self.grid.nu

    @property
    def nv(self):
        return self.grid.nv

    @property
    def u(self):
        return self.grid.u0 + self.h * np.arange(self.nu + 1)

    @property
    def v(self):
        return self.grid.v0 + self.h * np.arange(self.nv + 1)

    @property
    def is_full(self):
        return len(self.row_index) == self.nu + 1

    @property
    def r_tab(self):
        return self.bg.r_plus + self.x_tab

    @property
    def r(self):
        """Radii matching ``phi`` (2-D)."""
        return np.stack([self.r_row(i) for i in self.row_index])

    def i_of_u(self, u):
        n = (u - self.grid.u0) / self.h
        i = int(round(n))
        if abs(n - i) > 1e-6 or i < 0 or i > self.nu:
            raise InsufficientMargin(f"u={u} is not a grid row")
        return i

    def j_of_v(self, v):
        n = (v - self.grid.v0) / self.h
        j = int(round(n))
        if abs(n - j) > 1e-6 or j < 0 or j > self.nv:
            raise InsufficientMargin(f"v={v} is not a grid column")
        return j

    def _slot(self, i):
        k = np.searchsorted(self.row_index, i)
        if k < len(self.row_index) and self.row_index[k] == i:
            return int(k)
        raise InsufficientMargin(f"row i={i} (u={self.grid.u0 + i * self.h:g}) is not stored")

    def has_row(self, i):
        try:
            self._slot(i)
            return True
        except InsufficientMargin:
            return False

    def row(self, i):
        return self.phi[self._slot(i)]

    def row_at(self, u):
        return self.row(self.i_of_u(u))

    def x_row(self, i):
        return self.x_tab[self.nu - i: self.nu - i + self.nv + 1]

    def r_row(self, i):
        return self.bg.r_plus + self.x_row(i)

    def D_row(self, i):
        return self.bg.D_from_x(self.x_row(i))

    def block(self, i, half):
        """Consecutive rows i-half..i+half as a 2-D array."""
        if i - half < 0 or i + half > self.nu:
            raise InsufficientMargin("row block leaves the grid")
        return np.stack([self.row(k) for k in range(i - half, i + half + 1)])

    def column(self, j):
        if self.is_full:
            return self.phi[:, j]
        if j in self.columns:
            return self.columns[j]
        raise InsufficientMargin(f"column j={j} was not recorded")

    def station(self, r0):
        """(u, phi(u, r0)) along the fixed-radius curve r = r0."""
        key = float(r0)
        if key in self.stations:
            return self.u, self.stations[key]
        if self.is_full:
            return self.u, _station_from_full(self, r0)
        raise InsufficientMargin(f"no station recorded at r={r0}")

    def scri(self):
        """(u, phi(u, v1)) on the outermost ingoing ray."""
        return self.u, self.column(self.nv)

    def station_offset(self, r0):
        return _station_offset(self.bg, self.grid, r0)


def _station_offset(bg, grid, r0):
    rs0 = float(bg.rstar(r0))
    return (2 * rs0 - (grid.v0 - grid.u0)) / grid.h


def _station_from_full(sol, r0):
    off = sol.station_offset(r0)
    j0 = int(math.floor(off))
    w = _lagrange4(off - j0)
    out = np.full(sol.nu + 1, np.nan)
    for i in range(sol.nu + 1):
        js = i + j0 + np.arange(-1, 3)
        if js[0] >= 0 and js[-1] <= sol.nv:
            out[i] = w @ sol.phi[i, js]
    return out


# ---------------------------------------------------------------- operations
def offset_table(bg: Background, grid: GridSpec, extended: bool = False):
    """x = r - r_plus at v - u = v0 - u0 + k h, k = -nu..nv.

    With ``extended`` the double-precision root is polished by two Newton
    steps in long double (built-in backgrounds only).
    """
    k = np.arange(-grid.nu, grid.nv + 1)
    rs = 0.5 * ((grid.v0 - grid.u0) + k * grid.h)
    x = bg.x_of_rstar(rs)
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise DomainError("grid reaches the horizon to double precision; raise v0 or lower u1")
    if extended:
        if bg.kind == "custom":
            raise ValueError("extended precision needs a closed-form tortoise map")
        rs = 0.5 * ((np.longdouble(grid.v0) - np.longdouble(grid.u0)) + k * np.longdouble(grid.h))
        x = x.astype(np.longdouble)
        for _ in range(2):
            x = x - (bg.rstar_of_x(x) - rs) * bg.D_from_x(x)
    return x


def potential(bg: Background, ell: int, x):
    """D (l(l+1)/r^2 + D'/r) as a function of x = r - r_plus."""
    r = bg.r_plus + x
    return bg.D_from_x(x) * (ell * (ell + 1) / r ** 2 + bg.D(r, 1) / r)


def evolve_mode(bg: Background, data: CharacteristicData, grid: GridSpec, *,
                store: str = "auto", store_stride: Optional[int] = None, block: int = 0,
                stations: Sequence[float] = (), columns: Sequence[float] = (),
                checkpoint_path=None, precision: str = "double",
                extra_rows: Sequence[float] = ()) -> ModeSolution:
    """Evolve one mode with the diamond scheme.

    Parameters
    ----------
    store : "full", "checkpoints" or "auto"
        "auto" keeps the whole array when it has at most FULL_STORAGE_LIMIT cells.
    store_stride, block : int
        With checkpoints, rows i = n*store_stride + b for |b| <= block are kept
        (block > 0 allows u-derivatives at checkpoints).
    stations : radii at which phi(u, r0) is recorded for every row.
    columns : v-values whose full columns are recorded (v1 is always recorded).
    extra_rows : u-values whose rows are stored in addition to the checkpoints.
    precision : "double" or "extended"
        "extended" runs in long double and keeps the full array; it is meant
        for convergence audits of high derivatives on small grids.
    """
    if precision not in ("double", "extended"):
        raise ValueError(f"unknown precision {precision!r}")
    ext = precision == "extended"
    tol = 1e-9 * max(1.0, abs(grid.u0), abs(grid.v0))
    if abs(data.u0 - grid.u0) > tol or abs(data.v0 - grid.v0) > tol:
        raise DomainError("data corner does not match the grid corner")
    if data.support is not None:
        lo, hi = data.support
        if lo < grid.v0 - tol or lo >= grid.v1:
            raise BadSupport("data support lies outside the grid")
    nu, nv, h = grid.nu, grid.nv, grid.h
    x_tab = offset_table(bg, grid, extended=ext)
    if bg.has_horizon and grid.delta_floor > 0:
        if x_tab[0] <= grid.delta_floor * max(bg.M, 1e-300):
            raise DomainError("r(u1, v0) is inside the horizon floor delta_floor")
    P = potential(bg, data.ell, x_tab)
    pmax = float(np.max(np.abs(P))) * h * h
    if pmax > 1:
        warnings.warn(f"|D V| h^2 = {pmax:.3g} > 1: potential under-resolved",
                      StabilityWarning, stacklevel=2)
    ftype = np.longdouble if ext else float
    u = ftype(grid.u0) + ftype(h) * np.arange(nu + 1)
    v = ftype(grid.v0) + ftype(h) * np.arange(nv + 1)
    row0 = data.sample_u0(v)
    col0 = data.sample_v0(u)
    row0[0] = col0[0] = data.corner_value

    # storage plan
    if ext:
        if store == "checkpoints":
            raise ValueError("extended precision keeps the full array")
        store = "full"
    if store == "auto":
        store = "full" if (nu + 1) * (nv + 1) <= FULL_STORAGE_LIMIT else "checkpoints"
    if store == "full":
        idx = np.arange(nu + 1)
    elif store == "checkpoints":
        stride = store_stride or grid.checkpoint_stride or max(1, nu // 100)
        centres = np.arange(0, nu + 1, stride)
        idx = np.unique(np.clip((centres[:, None] + np.arange(-block, block + 1)[None, :]).ravel(),
                                0, nu))
    else:
        raise ValueError(f"unknown storage mode {store!r}")
    if len(extra_rows):
        want = np.rint((np.asarray(extra_rows, dtype=float) - grid.u0) / h).astype(np.int64)
        if np.any(want < 0) or np.any(want > nu):
            raise InsufficientMargin("requested row outside the grid")
        idx = np.union1d(idx, want)
    if checkpoint_path is not None and grid.checkpoint_stride:
        idx = np.union1d(idx, np.arange(0, nu + 1, grid.checkpoint_stride))
    row_slot = np.full(nu + 1, -1, dtype=np.int64)
    row_slot[idx] = np.arange(len(idx))
    rows_out = np.empty((len(idx), nv + 1))

    # stations: four diagonals each for cubic interpolation at fixed r
    st_plan = []
    diag = []
    for r0 in stations:
        off = _station_offset(bg, grid, r0)
        j0 = int(math.floor(off))
        st_plan.append((float(r0), len(diag), _lagrange4(off - j0)))
        diag.extend([j0 - 1, j0, j0 + 1, j0 + 2])
    diag_off = np.array(diag, dtype=np.int64)
    diag_out = np.full((len(diag), nu + 1), np.nan)
    cols = sorted({nv} | {int(round((cv - grid.v0) / h)) for cv in columns})
    for c in cols:
        if c < 0 or c > nv:
            raise InsufficientMargin("requested column outside the grid")
    col_idx = np.array(cols, dtype=np.int64)
    col_out = np.empty((len(cols), nu + 1))

    if ext:
        rows_out = _sweep_extended(nu, nv, P, ftype(h) * ftype(h) / 8, row0, col0)
        ii = np.arange(nu + 1)
        for dd, off in enumerate(diag_off):
            ok = (ii + off >= 0) & (ii + off <= nv)
            diag_out[dd, ok] = rows_out[ii[ok], ii[ok] + off]
        col_out = rows_out[:, col_idx].T.copy()
    else:
        _sweep(nu, nv, P, h * h / 8.0, row0, col0, row_slot, rows_out, diag_off, diag_out,
               col_idx, col_out)

    st = {}
    for r0, k, w in st_plan:
        st[r0] = w @ diag_out[k:k + 4]
    colmap = {int(c): col_out[n] for n, c in enumerate(cols)}
    for arr in [rows_out, *st.values(), *colmap.values()]:
        arr.setflags(write=False)
    meta = dict(data.meta)
    meta["predicted_I0"] = data.predicted_I0
    sol = ModeSolution(bg, data.ell, grid, meta, rows_out, idx, x_tab, st, colmap, pmax)
    if checkpoint_path is not None:
        write_checkpoint(sol, checkpoint_path)
    return sol


def evolve_refined(bg: Background, data: CharacteristicData, grid: GridSpec, levels: int = 3,
                   **kw) -> list:
    """Solutions at h, h/2, ..., h/2^(levels-1)."""
    if levels < 2:
        raise ValueError("levels must be >= 2")
    out = []
    g = grid
    for lev in range(levels):
        kw_l = dict(kw)
        if kw_l.get("store_stride"):
            kw_l["store_stride"] = kw["store_stride"] * 2 ** lev
        out.append(evolve_mode(bg, data, g, **kw_l))
        g = g.refined(2)
    return out


def t_derivative_field(sol: ModeSolution, k: int = 1) -> np.ndarray:
    """T^k phi on the full grid (NaN in the k-cell margin).

    T = d_u|_v + d_v|_u, centred second-order differences, iterated k times.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not sol.is_full:
        raise InsufficientMargin("t_derivative_field needs full storage")
    if 2 * k >= min(sol.nu, sol.nv):
        raise InsufficientMargin("grid too small for the requested order")
    f = np.array(sol.phi, dtype=float)
    for _ in range(k):
        g = np.full_like(f, np.nan)
        g[1:-1, 1:-1] = ((f[2:, 1:-1] - f[:-2, 1:-1]) + (f[1:-1, 2:] - f[1:-1, :-2])) / (2 * sol.h)
        f = g
    return f


def t_derivative_rays(sol: ModeSolution, u0: float, v0: float):
    """T phi along {u=u0} (v in [v0, v1-h]) and {v=v0} (u in [u0, u1-h])."""
    i0, j0 = sol.i_of_u(u0), sol.j_of_v(v0)
    if i0 < 1 or j0 < 1 or i0 >= sol.nu or j0 >= sol.nv:
        raise InsufficientMargin("T-derivative rays need one cell of margin on every side")
    h = sol.h
    rows = sol.block(i0, 1)
    row = ((rows[2, j0:-1] - rows[0, j0:-1]) + (rows[1, j0 + 1:] - rows[1, j0 - 1:-2])) / (2 * h)
    cm, c0, cp = sol.column(j0 - 1), sol.column(j0), sol.column(j0 + 1)
    col = ((c0[i0 + 1:] - c0[i0 - 1:-2]) + (cp[i0:-1] - cm[i0:-1])) / (2 * h)
    vs = sol.v[j0:-1]
    us = sol.u[i0:-1]
    return (vs, row), (us, col)


# ---------------------------------------------------------------- checkpoints
_MAGIC = b"TWV1"


def write_checkpoint(sol: ModeSolution, path):
    """Binary row dump, little-endian.

    Layout: b"TWV1", then float64 ell, h, u0, u1, v0, v1, stride, nrows, then
    nrows rows of (nv+1) float64 values of phi.  Row n sits at u0 + n*stride*h.
    """
    g = sol.grid
    stride = g.checkpoint_stride or 1
    rows = [i for i in range(0, sol.nu + 1, stride) if sol.has_row(i)]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<8d", sol.ell, g.h, g.u0, g.u1, g.v0, g.v1, stride, len(rows)))
        for i in rows:
            fh.write(np.asarray(sol.row(i), dtype="<f8").tobytes())


def read_checkpoint(path):
    """Inverse of ``write_checkpoint``: returns (header dict, u array, rows)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError("not a tailwave checkpoint")
        ell, h, u0, u1, v0, v1, stride, nrows = struct.unpack("<8d", fh.read(64))
        nv = int(round((v1 - v0) / h))
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(int(nrows), nv + 1)
    hdr = {"ell": int(ell), "h": h, "u0": u0, "u1": u1, "v0": v0, "v1": v1,
           "stride": int(stride)}
    u = u0 + h * stride * np.arange(int(nrows))
    return hdr, u, data
