"""Property suite behind ``tailwave check``.

Every property returns ``(ok, detail)``; a failing property puts the
offending case (seed, parameters, measured values) into ``detail``.  Grids
are kept small so the whole suite runs well inside a minute.
"""
from __future__ import annotations


import numpy as np

from . import analysis as A
from . import energy as En
from .background import Background
from .errors import HypothesisViolated
from .evolve import GridSpec, evolve_mode
from .fields import commutator_residual, FieldCache
from .initial_data import bump_data

ORDER_MIN = 1.5
AUDIT_EQUATIONS = ("box_phi", "box_Phi", "box_PhiTilde", "box_Phi2",
                   "box_drk_phi(1)", "box_drk_phi(2)", "box_drk_Phi2(1)", "box_drk_Phi2(2)")
DIVERGENCE_PAIRS = (("phi", 1.0), ("phi", 2.0), ("phi", 2.9), ("Phi", 1.0), ("Phi2", 0.5))
HARDY_QS = (-3.0, 0.0, 2.0)


def _levels(bg, data, grid, hs, **kw):
    return [evolve_mode(bg, data, GridSpec(grid[0], grid[1], grid[2], grid[3], h), **kw)
            for h in hs]


def _on_coarse(sol, coarse):
    """Values of sol at the nodes of the coarser grid ``coarse``."""
    fu = round(coarse.h / sol.h)
    return np.asarray(sol.phi, dtype=float)[::fu, ::fu]


# ---------------------------------------------------------------- evolution properties
def flat_exactness(seed=0):
    """Minkowski ell = 0 reproduces the d'Alembert solution phi = F(v) + G(u)."""
    bg = Background.minkowski()
    d = bump_data(0, 20, 40, 1e-8, v0=10)
    sol = evolve_mode(bg, d, GridSpec(0, 5, 10, 60, 0.125))
    exact = d.sample_u0(sol.v)[None, :] + d.sample_v0(sol.u)[:, None] - d.corner_value
    err = float(np.max(np.abs(sol.phi - exact)))
    return err < 1e-12, f"max |phi - dAlembert| = {err:.2e} (tol 1e-12)"


def scheme_order(seed=0):
    """Self-convergence of phi on three levels, Schwarzschild bump."""
    bg = Background.schwarzschild()
    d = bump_data(0, 25, 45, 1e-8, "gaussian_truncated", v0=20)
    sols = _levels(bg, d, (0, 40, 20, 120), (0.5, 0.25, 0.125))
    ys = [_on_coarse(s, sols[0]) for s in sols]
    p = A.convergence_order(*ys)
    return 1.8 <= p <= 2.2, f"order = {p:.3f} (band [1.8, 2.2])"


def commutator(seed=0):
    """Self-convergence of every commuted-equation residual (extended precision).

    Honours TAILWAVE_MUTATE, so a mutated equation shows up as a failure here.
    """
    out, bad = [], []
    for bgname, bg, ell in (("schwarzschild", Background.schwarzschild(), 1),
                            ("rn(e=0.6)", Background.reissner_nordstrom(1.0, 0.6), 2)):
        d = bump_data(ell, 25, 65, 1.0, "gaussian_truncated", v0=20)
        sols = _levels(bg, d, (0, 20, 20, 80), (0.125, 0.0625), precision="extended")
        caches = [FieldCache(s) for s in sols]
        for eq in AUDIT_EQUATIONS:
            res = [commutator_residual(s, eq, cache=c) for s, c in zip(sols, caches)]
            try:
                p = A.residual_order(*res)
            except Exception:
                p = float("nan")
            out.append(f"{eq}@{bgname}={p:.2f}")
            if not p >= ORDER_MIN:
                bad.append(f"{eq} on {bgname} ell={ell}: residuals {res[0]:.3e} -> {res[1]:.3e}, "
                           f"order {p:.2f} < {ORDER_MIN}")
    if bad:
        return False, "counterexample: " + "; ".join(bad)
    return True, "orders " + " ".join(out)


def divergence(seed=0):
    """Integrated divergence identity residuals self-converge for the audited (field, p)."""
    out, bad = [], []
    for bgname, bg in (("schwarzschild", Background.schwarzschild()),
                       ("rn(e=0.6)", Background.reissner_nordstrom(1.0, 0.6))):
        d = bump_data(1, 25, 55, 1.0, "gaussian_truncated", v0=20)
        sols = _levels(bg, d, (0, 30, 20, 100), (0.25, 0.125))
        rect = (5, 25, 30, 90)
        for sel, p in DIVERGENCE_PAIRS:
            res = [En.divergence_residual(s, sel, p, rect) for s in sols]
            order = A.residual_order(*res)
            out.append(f"({sel},{p:g})@{bgname}={order:.2f}")
            if not order >= ORDER_MIN:
                bad.append(f"({sel}, p={p:g}) on {bgname}: {res[0]:.3e} -> {res[1]:.3e}")
    if bad:
        return False, "counterexample: " + "; ".join(bad)
    return True, "orders " + " ".join(out)


def energy_balance(seed=0):
    """T-energy in minus out through a characteristic rectangle -> 0 at second order."""
    bg = Background.schwarzschild()
    d = bump_data(0, 25, 55, 1.0, "gaussian_truncated", v0=20)
    sols = _levels(bg, d, (0, 40, 20, 100), (0.25, 0.125))
    res = [abs(En.energy_balance(s)) for s in sols]
    order = A.residual_order(*res)
    return order >= ORDER_MIN, f"imbalance {res[0]:.2e} -> {res[1]:.2e}, order {order:.2f}"


# ---------------------------------------------------------------- inequality properties
def random_hardy_case(rng, q):
    """Random C^2 compactly supported profile on [r0, r0 + 40] with f(r0) = 0."""
    r0 = rng.uniform(0.5, 5.0)
    r = np.linspace(r0, r0 + 40.0, 4001)
    f = np.zeros_like(r)
    fr = np.zeros_like(r)
    params = []
    for _ in range(rng.integers(1, 4)):
        a = r0 + rng.uniform(0.0, 20.0)
        b = a + rng.uniform(0.5, 19.0)
        c = rng.normal()
        m = (r > a) & (r < b)
        s, t = r[m] - a, b - r[m]
        f[m] += c * s ** 3 * t ** 3 / ((b - a) / 2) ** 6
        fr[m] += c * 3 * s ** 2 * t ** 2 * (t - s) / ((b - a) / 2) ** 6
        params.append((round(a, 4), round(b, 4), round(c, 4)))
    return r, f, fr, {"r0": round(r0, 4), "q": q, "bumps": params}


def hardy(seed=0, n=1000):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n_case in range(n):
        q = HARDY_QS[n_case % len(HARDY_QS)]
        r, f, fr, info = random_hardy_case(rng, q)
        try:
            lhs, rhs, ok = En.hardy_check((r, f, fr), q)
        except HypothesisViolated as exc:
            return False, f"counterexample #{n_case} {info}: {exc}"
        if not ok:
            return False, f"counterexample #{n_case} {info}: lhs {lhs:.6e} > rhs {rhs:.6e}"
        worst = max(worst, lhs / rhs if rhs > 0 else 0.0)
    return True, f"{n} cases, q in {HARDY_QS}, max lhs/rhs = {worst:.3f}"


def poincare(seed=0, n=300):
    rng = np.random.default_rng(seed + 1)
    for L in (1, 2, 3, 5):
        lhs, rhs, ok = En.poincare_check({(L, 0): rng.normal()}, 1.0, L)
        if not (ok and abs(lhs - rhs) <= 1e-14 * max(lhs, 1e-300)):
            return False, f"counterexample: single mode ell=L={L} not an equality ({lhs!r} vs {rhs!r})"
    for n_case in range(n):
        L = int(rng.integers(1, 5))
        coeffs = {}
        for _ in range(rng.integers(1, 6)):
            ell = int(rng.integers(L, L + 6))
            m = int(rng.integers(-ell, ell + 1))
            coeffs[(ell, m)] = float(rng.normal())
        lhs, rhs, ok = En.poincare_check(coeffs, float(rng.uniform(1, 100)), L)
        if not ok:
            return False, f"counterexample #{n_case}: L={L} coeffs={coeffs}"
    return True, f"equality for single modes, {n} random inequality cases"


def _bump(s):
    out = np.zeros_like(s)
    m = (s > 1) & (s < 2)
    out[m] = ((s[m] - 1) * (2 - s[m])) ** 3 * 64
    return out


def synthetic_interpolation_family(p, q, eps, taus, n_r=4000):
    """The three fluxes of f(tau, r) = (1+tau)^(-q/2) r^(-(p+1)/2) b(r/(1+tau))."""
    cols = {"s1": [], "s2": [], "sp": []}
    for tau in taus:
        r = np.linspace(1 + tau, 2 * (1 + tau), n_r)
        f2 = (1 + tau) ** (-q) * r ** (-(p + 1)) * _bump(r / (1 + tau)) ** 2
        cols["s1"].append(np.trapezoid(r ** (p - eps) * f2, r))
        cols["s2"].append(np.trapezoid(r ** (p + 1 - eps) * f2, r))
        cols["sp"].append(np.trapezoid(r ** p * f2, r))
    return tuple(En.FluxSeries(None, [(float(t), float(y), float("nan")) for t, y in zip(taus, cols[k])])
                 for k in ("s1", "s2", "sp"))


def interpolation(seed=0):
    taus = np.linspace(0.0, 500.0, 101)
    details = []
    for p, q, eps in ((1.0, 1.0, 0.1), (2.0, 2.0, 0.3), (2.5, 3.5, 0.05), (0.5, 1.5, 0.5)):
        series = synthetic_interpolation_family(p, q, eps, taus)
        try:
            ok, info = En.interpolation_check(series, p, q, eps)
        except HypothesisViolated as exc:
            return False, f"counterexample p={p} q={q} eps={eps}: {exc}"
        if not ok:
            return False, f"counterexample p={p} q={q} eps={eps}: ratio {info['ratio']:.4g} > C {info['C']:.4g}"
        details.append(f"{info['ratio'] / info['C']:.2f}")
    return True, "synthetic family, ratio/C = " + ",".join(details)


PROPERTIES = {
    "flat_exactness": flat_exactness,
    "scheme_order": scheme_order,
    "commutator": commutator,
    "divergence": divergence,
    "energy_balance": energy_balance,
    "hardy": hardy,
    "poincare": poincare,
    "interpolation": interpolation,
}
