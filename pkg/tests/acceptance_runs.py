"""Shared evolutions and measurements for the acceptance suite.

Each scenario is evolved once per grid level and cached for the session.
Levels are (h, h/2) with the finest level on the desk grid h = 0.125.
"""
from functools import lru_cache

import numpy as np

from tailwave import analysis as A
from tailwave import energy as En
from tailwave import fields as F
from tailwave.background import Background
from tailwave.energy import FluxSeries
from tailwave.evolve import GridSpec, evolve_mode
from tailwave.initial_data import bump_data, static_tail_data

LEVELS = (0.25, 0.125)
LATE = (400.0, 800.0)
NP_US = (0.0, 50.0, 100.0, 200.0)
STATIC_C0 = 2.0
SHARP_R = 2000.0
SHARP_WINDOW = (200.0, 800.0)
ROW_SPACING = 10.0          # M between stored rows for flux series


def background(kind):
    if kind == "schwarzschild":
        return Background.schwarzschild(1.0)
    if kind == "rn":
        return Background.reissner_nordstrom(1.0, 0.6)
    raise ValueError(kind)


@lru_cache(maxsize=None)
def compact_run(kind, ell, h):
    """Compact bump on [20, 40], desk grid u in [0, 1000], v in [0, 3000]."""
    bg = background(kind)
    d = bump_data(ell, 20, 40, 1e-8)
    grid = GridSpec(0, 1000, 0, 3000, h)
    return evolve_mode(bg, d, grid, store="checkpoints", store_stride=round(ROW_SPACING / h),
                       stations=[10.0])


@lru_cache(maxsize=None)
def static_run(kind, h):
    """Static-tail data (I0 = C0 M) with a 4M cut-off, u in [0, 800], v in [0, 20000]."""
    bg = background(kind)
    d = static_tail_data(bg, STATIC_C0, v0=0.0, cutoff=4.0)
    grid = GridSpec(0, 800, 0, 20000, h)
    return evolve_mode(bg, d, grid, store="checkpoints", store_stride=round(ROW_SPACING / h),
                       stations=[10.0], extra_rows=list(NP_US))


def _series(u, y, stride=1):
    u = np.asarray(u, dtype=float)[::stride]
    y = np.asarray(y, dtype=float)[::stride]
    return FluxSeries(None, [(float(a), float(b), float("nan")) for a, b in zip(u, y)])


def _stride(sol):
    return max(1, round(1.0 / sol.h))


def pointwise_series(sol, r0=10.0, k=0):
    u, st = sol.station(r0)
    y = np.asarray(st, dtype=float) / r0
    for _ in range(k):
        y = np.gradient(y, sol.h)
    return _series(u, np.abs(y), _stride(sol))


def scri_series(sol):
    u, col = sol.scri()
    return _series(u, np.abs(np.asarray(col, dtype=float)), _stride(sol))


def stored_us(sol, u_min=0.0):
    return [float(sol.u[i]) for i in sol.row_index
            if sol.u[i] >= u_min and abs(sol.u[i] / ROW_SPACING - round(sol.u[i] / ROW_SPACING)) < 1e-9]


def energy_series(sol, r_min=10.0):
    return En.t_energy_series(sol, r_min, stored_us(sol, 100.0))


def exponent(series, window=LATE):
    fit = A.fit_tail(series, window)
    return fit.exponent, fit.stderr


def np_values(sol):
    window = F.common_window(sol, NP_US)
    return [F.extract_np_constant(sol, u, window) for u in NP_US]


def sharpness(sol):
    return A.sharpness_scan(sol, 2.0, "phi", SHARP_R, SHARP_WINDOW, us=stored_us(sol))


def p3_slope(sol, u=0.0, his=(1000.0, 2000.0, 4000.0, 8000.0)):
    vals = [En.rp_flux(sol, En.FluxSpec("phi", 3.0, 100.0, hi), u) for hi in his]
    return float(np.polyfit(np.log(his), vals, 1)[0])
