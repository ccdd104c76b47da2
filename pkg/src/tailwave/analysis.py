"""Decay exponents, convergence orders and sharpness verdicts from series."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import curve_fit

from . import energy as En
from . import fields as F
from .errors import (DegenerateDifferences, I0Unresolved, InsufficientPoints,
                     InsufficientRadialRange, MissingSeries, NonpositiveValues, WrongMode)

MODELS = ("pure_power", "power_with_offset")
STDERR_FLAG = 0.05          # fits with a larger slope error are flagged, not trusted
RESID_FLAG = 0.1            # ... and so are fits whose log residuals scatter more than this
EPS_BAND = 0.3              # default widening of a theorem rate into a band
VACUUM_FLOOR = 1e-13        # relative to the series peak


def _as_uy(series):
    if isinstance(series, En.FluxSeries):
        return series.u, series.values
    u, y = series
    return np.asarray(u, dtype=float), np.asarray(y, dtype=float)


@dataclass
class PowerLawFit:
    exponent: float
    stderr: float
    window: tuple
    lpi_curve: list
    model: str = "pure_power"
    amplitude: float = float("nan")
    offset: float = 0.0
    n_points: int = 0
    richardson_error: float = float("nan")
    resid_rms: float = 0.0

    @property
    def flagged(self):
        return not (self.stderr <= STDERR_FLAG and self.resid_rms <= RESID_FLAG)


# ---------------------------------------------------------------- local power index
def local_power_index(series, n_resample: Optional[int] = None, u_range=None):
    """d ln y / d ln u from a 5-point stencil on log-spaced resamples.

    The series is interpolated with a cubic spline in (ln u, ln y); samples
    with u <= 0 are dropped.  Returns a list of (u, lpi).
    """
    u, y = _as_uy(series)
    keep = u > 0
    if u_range is not None:
        keep &= (u >= u_range[0]) & (u <= u_range[1])
    u, y = u[keep], y[keep]
    if len(u) < 5:
        raise InsufficientPoints("local power index needs at least 5 positive-u samples")
    if np.any(~(y > 0)):
        raise NonpositiveValues("local power index needs strictly positive values")
    s, ly = np.log(u), np.log(y)
    n = n_resample or min(len(u), 400)
    n = max(n, 5)
    grid = np.linspace(s[0], s[-1], n)
    if len(u) == n and np.allclose(np.diff(s), np.diff(s)[0], rtol=1e-9, atol=0):
        f = ly
    else:
        f = CubicSpline(s, ly)(grid)
    ds = grid[1] - grid[0]
    lpi = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * ds)
    return list(zip(np.exp(grid[2:-2]).tolist(), lpi.tolist()))


# ---------------------------------------------------------------- fits
def default_window(series, u_margin: Optional[float] = None):
    """Last half-decade of u below 0.8 of the usable range."""
    u, _ = _as_uy(series)
    top = 0.8 * (u_margin if u_margin is not None else float(u[-1]))
    return (top / math.sqrt(10.0), top)


def fit_tail(series, window=None, model: str = "pure_power") -> PowerLawFit:
    """Least squares in log-log over the window.

    ``power_with_offset`` fits y = A u^s (1 + B/u).
    """
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}")
    u, y = _as_uy(series)
    if window is None:
        window = default_window(series)
    lo, hi = window
    if not hi > lo:
        raise ValueError("empty fit window")
    sel = (u >= lo) & (u <= hi) & (u > 0)
    if sel.sum() < 8:
        raise InsufficientPoints(f"{int(sel.sum())} samples in window {window}; need >= 8")
    uu, yy = u[sel], y[sel]
    if np.any(~(yy > 0)):
        raise NonpositiveValues("log-log fit needs positive values")
    x, ly = np.log(uu), np.log(yy)
    A = np.vstack([np.ones_like(x), x]).T
    coef = np.linalg.lstsq(A, ly, rcond=None)[0]
    n = len(x)
    resid = ly - A @ coef
    dof = max(n - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    expo, err, amp, off = float(coef[1]), float(math.sqrt(cov[1, 1])), float(math.exp(coef[0])), 0.0
    if model == "power_with_offset":
        def fn(x_, lnA, s_, B):
            return lnA + s_ * x_ + np.log(np.abs(1 + B * np.exp(-x_)))
        try:
            p, pc = curve_fit(fn, x, ly, p0=[coef[0], coef[1], 0.0], maxfev=20000)
            expo, amp, off = float(p[1]), float(math.exp(p[0])), float(p[2])
            resid = ly - fn(x, *p)
            err = float(math.sqrt(pc[1, 1])) if np.isfinite(pc[1, 1]) else float("inf")
        except RuntimeError:
            err = float("inf")
    try:
        lpi = local_power_index((uu, yy))
    except (InsufficientPoints, NonpositiveValues):
        lpi = []
    rms = float(np.sqrt(np.mean(resid ** 2)))
    return PowerLawFit(expo, err, (float(lo), float(hi)), lpi, model, amp, off, n,
                       resid_rms=rms)


# ---------------------------------------------------------------- convergence
def convergence_order(y_h, y_h2, y_h4) -> float:
    """log2(|y_h - y_h2| / |y_h2 - y_h4|); arrays use the max norm."""
    a, b, c = (np.asarray(t, dtype=float) for t in (y_h, y_h2, y_h4))
    d1 = float(np.max(np.abs(a - b)))
    d2 = float(np.max(np.abs(b - c)))
    floor = 64 * np.finfo(float).eps * max(float(np.max(np.abs(np.concatenate(
        [a.ravel(), b.ravel(), c.ravel()])))), 1e-300)
    if d1 <= floor or d2 <= floor:
        raise DegenerateDifferences("increments are at the roundoff floor")
    return math.log2(d1 / d2)


def residual_order(res_h: float, res_h2: float) -> float:
    """Order of a quantity that should vanish: log2(res_h / res_h2)."""
    if not (res_h > 0 and res_h2 > 0):
        raise DegenerateDifferences("residuals must be positive")
    return math.log2(res_h / res_h2)


# ---------------------------------------------------------------- sharpness
@dataclass
class SharpnessVerdict:
    verdict: str
    p: float
    field_selector: str
    I0: float
    I0_tol: float
    series: En.FluxSeries
    late_window: tuple
    late_infimum: float
    threshold: float
    flux_exponent: float
    cumulative_exponent: float


def _model_tail_flux(R, r_max):
    """Leading-order p = 2 flux for unit I0: int_R^r_max r^-2 dr."""
    return 1.0 / R - 1.0 / r_max


def sharpness_scan(sol, p: float, field_selector: str = "phi", R: float = 10.0,
                   late_window=None, c: float = 0.5, u_I0: Optional[float] = None,
                   us: Optional[Sequence[float]] = None) -> SharpnessVerdict:
    """Per-slice r^p flux series and an integrability verdict.

    With I0 != 0 and p = 2 the verdict is "non-integrable" when the per-slice
    flux stays above c I0^2 (1/R - 1/r_max) over the late window.  Otherwise
    the verdict follows the fitted decay exponent s of the per-slice flux:
    the u-integral diverges for s >= -1.
    """
    if sol.ell != 0:
        raise WrongMode("sharpness scans are defined for ell = 0")
    u_I0 = float(sol.u[sol.row_index[0]]) if u_I0 is None else u_I0
    predicted = sol.data_meta.get("predicted_I0")
    try:
        I0, tol = F.extract_np_constant(sol, u_I0)
    except InsufficientRadialRange as exc:
        raise I0Unresolved(f"I0 extraction failed: {exc}") from exc
    zero_branch = predicted == 0 and abs(I0) <= max(10 * tol, 1e-8)
    if not zero_branch and not tol < 0.1 * abs(I0):
        raise I0Unresolved(f"I0 = {I0:.4g} +- {tol:.2g} is not resolved to 10%")
    spec = En.FluxSpec(field_selector, p, R)
    series = En.flux_series(sol, spec, us)
    u, y = series.u, series.values
    if len(u) < 8:
        raise InsufficientPoints("too few slices for a sharpness scan")
    if late_window is None:
        late_window = (u[-1] / 4, u[-1])
    sel = (u >= late_window[0]) & (u <= late_window[1])
    if sel.sum() < 2:
        raise InsufficientPoints("late window holds fewer than two slices")
    inf_late = float(np.min(y[sel]))
    r_max = _series_rmax(sol, spec, u[sel])
    threshold = c * I0 ** 2 * _model_tail_flux(R, r_max) if not zero_branch else 0.0
    try:
        fe = fit_tail(series, late_window).exponent
    except (InsufficientPoints, NonpositiveValues):
        fe = float("nan")
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(u))])
    pos = (u >= late_window[0]) & (cum > 0)
    ce = float("nan")
    if pos.sum() >= 2:
        ce = float(np.polyfit(np.log(u[pos]), np.log(cum[pos]), 1)[0])
    if not zero_branch and p == 2:
        verdict = "non-integrable" if inf_late >= threshold else "integrable trend"
    else:
        verdict = "non-integrable" if (np.isfinite(fe) and fe >= -1.0) else "integrable trend"
    return SharpnessVerdict(verdict, p, field_selector, float(I0), float(tol), series,
                            tuple(late_window), inf_late, threshold, fe, ce)


def _series_rmax(sol, spec, us):
    """Smallest outer radius covered by the flux integrals over the given slices."""
    r_max = np.inf
    for u in us:
        r, d = F.row_profile(sol, spec.field_selector, u, extra=1)
        good = np.isfinite(d)
        r_max = min(r_max, float(r[good][-1]))
    return r_max


# ---------------------------------------------------------------- reports
@dataclass
class Measurable:
    name: str
    theorem_ref: str
    series_key: str
    band: tuple                   # (lo, hi) exponent band
    window: Optional[tuple] = None
    widen_eps: bool = False       # band given as rate +- EPS_BAND


@dataclass
class ReportRow:
    measurable: str
    theorem_ref: str
    exponent: float
    stderr: float
    band_lo: float
    band_hi: float
    verdict: str
    fits: list = field(default_factory=list)

    def csv(self):
        def g(x):
            return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))
        return ",".join([self.measurable, self.theorem_ref, g(self.exponent), g(self.stderr),
                         g(self.band_lo), g(self.band_hi), self.verdict])


def band_for_rate(rate: float, eps_band: float = EPS_BAND):
    return (rate - eps_band, rate + eps_band)


def _vacuum(series, window):
    u, y = _as_uy(series)
    peak = float(np.max(np.abs(y))) if len(y) else 0.0
    sel = (u >= window[0]) & (u <= window[1])
    if peak == 0.0:
        return True
    return bool(sel.any() and np.max(np.abs(y[sel])) <= VACUUM_FLOOR * peak)


def decay_report(bundle: dict, measurables: Sequence[Measurable]) -> list:
    """One fit per measurable, tested against its band at every grid level.

    ``bundle`` maps a series key to a list of series ordered from the finest
    grid to the coarsest (a single series is accepted too).  A PASS needs the
    band test, widened by the fit stderr, to hold at every level.  Series that
    fall below VACUUM_FLOOR of their peak in the window are reported as
    "vacuum-cleared" with no exponent.
    """
    rows = []
    for m in measurables:
        if m.series_key not in bundle:
            raise MissingSeries(f"series {m.series_key!r} needed by {m.name} is missing")
        levels = bundle[m.series_key]
        if not isinstance(levels, (list, tuple)):
            levels = [levels]
        lo, hi = m.band
        window = m.window or default_window(levels[0])
        if _vacuum(levels[0], window):
            rows.append(ReportRow(m.name, m.theorem_ref, float("nan"), float("nan"), lo, hi,
                                  "vacuum-cleared"))
            continue
        fits, ok = [], True
        for s in levels:
            try:
                fit = fit_tail(s, window)
            except (InsufficientPoints, NonpositiveValues):
                ok = False
                continue
            fits.append(fit)
            ok &= (lo - fit.stderr <= fit.exponent <= hi + fit.stderr) and not fit.flagged
        if not fits:
            rows.append(ReportRow(m.name, m.theorem_ref, float("nan"), float("nan"), lo, hi, "FAIL"))
            continue
        best = fits[0]
        if len(fits) > 1:
            best.richardson_error = abs(fits[0].exponent - fits[1].exponent) / 3.0
        rows.append(ReportRow(m.name, m.theorem_ref, best.exponent, best.stderr, lo, hi,
                              "PASS" if ok else "FAIL", fits))
    return rows
