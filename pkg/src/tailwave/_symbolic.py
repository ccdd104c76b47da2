"""Symbolic form of the commuted wave equations (mode form).

Every identity is stored as

    box G = A(r) d_r G - 2 r^{-1} d_u G + sum_{(X, j)} c_{X,j}(r) d_r^j X

where box is the Bondi-coordinate wave operator acting on a single angular
mode (the sphere Laplacian replaced by -lam/r^2, lam = l(l+1)), d_u is taken
at fixed r, and X ranges over phi, Phi, PhiTilde, Phi2.  Coefficients are
sympy expressions in r, lam, M and the derivatives of an undetermined
function D(r); they are turned into numpy callables on demand.

The four first-generation identities are transcribed from their published
form.  The r-derivative families use the exact commutator

    [d_r, box] f = D' f_rr + 2 r^-2 f_u + (D'' + 2D'/r - 2D/r^2) f_r - 2 r^-1 lap f

applied recursively, so no O(.) remainders are dropped.
"""
from __future__ import annotations

import functools

import sympy as sp

r, u, lam, M = sp.symbols("r u lam M", real=True)
Dfun = sp.Function("D")
D = Dfun(r)


def d(n):
    return sp.diff(D, r, n) if n else D


SELECTORS = ("box_phi", "box_Phi", "box_PhiTilde", "box_Phi2", "box_drk_phi", "box_drk_Phi2")

# field each selector acts on: (root field, number of extra r-derivatives)
TARGET = {"box_phi": ("phi", 0), "box_Phi": ("Phi", 0), "box_PhiTilde": ("PhiTilde", 0),
          "box_Phi2": ("Phi2", 0)}


def _base(selector):
    lap = -lam / r ** 2                # angular Laplacian on a mode
    D1, D2, D3 = d(1), d(2), d(3)
    if selector == "box_phi":
        return 2 * D / r, {("phi", 0): D1 / r}
    if selector == "box_Phi":
        return ((4 * D - D1 * r) / r,
                {("Phi", 0): (-D2 * r + 3 * D1 - 2 * D / r) / r,
                 ("phi", 0): r * (D2 + D1 / r)})
    if selector == "box_PhiTilde":
        A = (4 * D - D1 * r + M * D / (r - M)) / r
        cP = (-D2 * r + 3 * D1 - 2 * D / r - M * D / (r - M) ** 2
              + M / (r - M) * (D1 - D / r)) / r
        cphi = (r - M) * D2 + D1 - M * lap
        return A, {("PhiTilde", 0): cP, ("phi", 0): cphi}
    if selector == "box_Phi2":
        return ((6 * D - 2 * D1 * r) / r,
                {("Phi2", 0): (-6 * D / r - 3 * D2 * r + 7 * D1) / r,
                 ("Phi", 0): r * (-D3 * r + 2 * D2 + 2 * D1 / r),
                 ("phi", 0): r ** 3 * (D3 + 4 * D2 / r + 2 * D1 / r ** 2)})
    raise KeyError(selector)


def _step(A, terms, root, k):
    """Identity for d_r^{k+1} root from the identity for d_r^k root."""
    new = {}

    def add(key, val):
        new[key] = new.get(key, 0) + val

    add((root, k + 1), sp.diff(A, r) - d(2) - 2 * d(1) / r + 2 * D / r ** 2)
    add((root, k), 2 / r * (-lam / r ** 2))
    for (X, j), c in terms.items():
        add((X, j), sp.diff(c, r))
        add((X, j + 1), c)
    return A - d(1), {key: sp.simplify(v) for key, v in new.items() if v != 0}


@functools.lru_cache(maxsize=None)
def identity(selector: str, k: int = 0, mutate: bool = False):
    """(target, A, terms) for the named identity.

    ``target`` is (root, k): the identity is for d_r^k root.  ``mutate`` flips
    the sign of the Phi coefficient in the Phi2 identity (mutation-test hook).
    """
    if selector in TARGET:
        A, terms = _base(selector)
        target = TARGET[selector]
    elif selector == "box_drk_phi":
        A, terms = _base("box_phi")
        for j in range(k):
            A, terms = _step(A, terms, "phi", j)
        target = ("phi", k)
    elif selector == "box_drk_Phi2":
        A, terms = _base("box_Phi2")
        for j in range(k):
            A, terms = _step(A, terms, "Phi2", j)
        target = ("Phi2", k)
    else:
        raise KeyError(f"unknown equation {selector!r}")
    if mutate and selector in ("box_Phi2", "box_drk_Phi2"):
        terms = dict(terms)
        for key in list(terms):
            if key[0] == "Phi":
                terms[key] = -terms[key]
    return target, A, terms


def max_D_order(selector: str, k: int = 0) -> int:
    """Highest derivative of D appearing in the identity."""
    _, A, terms = identity(selector, k)
    exprs = [A, *terms.values()]
    top = 0
    for ex in exprs:
        for dv in ex.atoms(sp.Derivative):
            top = max(top, dv.derivative_count)
    return top


def _symbols_for(n):
    return sp.symbols(" ".join(f"D{i}" for i in range(n + 1)))


@functools.lru_cache(maxsize=None)
def numeric_identity(selector: str, k: int = 0, mutate: bool = False):
    """Numpy version: returns (target, fA, {key: f}) with f(r, lam, M, Ds)."""
    target, A, terms = identity(selector, k, mutate)
    n = max(max_D_order(selector, k), 1)
    Ds = _symbols_for(n)
    rep = {d(i): Ds[i] for i in range(n, -1, -1)}

    def lam_(ex):
        ex = ex.subs(rep)
        return sp.lambdify((r, lam, M, Ds), ex, "numpy")

    return target, lam_(A), {key: lam_(c) for key, c in terms.items()}


# ---------------------------------------------------------------- verification
phi = sp.Function("phi")(u, r)


def box(f):
    """Mode wave operator in Bondi coordinates (u, r)."""
    return (-2 * sp.diff(f, u, r) + D * sp.diff(f, r, 2) - 2 / r * sp.diff(f, u)
            + (d(1) + 2 * D / r) * sp.diff(f, r) - lam * f / r ** 2)


def _reduce(expr, sol_ur, max_iter=30):
    """Eliminate mixed derivatives d_u d_r^m phi with the wave equation."""
    for _ in range(max_iter):
        mixed = [a for a in expr.atoms(sp.Derivative)
                 if a.expr == phi and dict(a.variable_count).get(u, 0) == 1
                 and dict(a.variable_count).get(r, 0) >= 1]
        if not mixed:
            return expr
        top = max(mixed, key=lambda a: dict(a.variable_count)[r])
        m = dict(top.variable_count)[r]
        expr = expr.subs(top, sp.diff(sol_ur, r, m - 1))
    raise RuntimeError("elimination did not terminate")


def _fields():
    Phi_ = r ** 2 * sp.diff(phi, r)
    return {"phi": phi, "Phi": Phi_, "PhiTilde": r * (r - M) * sp.diff(phi, r),
            "Phi2": r ** 2 * sp.diff(Phi_, r)}


def verify_identity(selector: str, k: int = 0, mutate: bool = False) -> sp.Expr:
    """Symbolic residual box G - RHS on solutions; zero iff the identity holds.

    Only valid for the Schwarzschild-type parameter M when the selector uses
    M (PhiTilde); D itself is left arbitrary.
    """
    target, A, terms = identity(selector, k, mutate)
    F = _fields()
    G = sp.diff(F[target[0]], r, target[1])
    rhs = A * sp.diff(G, r) - 2 / r * sp.diff(G, u)
    for (X, j), c in terms.items():
        rhs += c * sp.diff(F[X], r, j)
    eq = box(phi / r)
    sol_ur = sp.solve(eq, sp.diff(phi, u, r))[0]
    res = _reduce(sp.expand(box(G) - rhs), sol_ur)
    return sp.simplify(sp.expand(res))


def verify_KV_identity() -> sp.Expr:
    """div J^V - (K^V + V f * box f) for an arbitrary mode f; should vanish."""
    p = sp.Symbol("p", real=True)
    f = sp.Function("f")(u, r)
    fr, fu = sp.diff(f, r), sp.diff(f, u)
    ang = lam * f ** 2 / r ** 2            # |grad_sphere f|^2 after averaging
    grad2 = -2 * fu * fr + D * fr ** 2 + ang
    T_rr = fr ** 2
    T_ur = fu * fr + sp.Rational(1, 2) * grad2
    Ju = r ** (p - 2) * (-T_rr)             # g^{ur} = -1, g^{uu} = 0
    Jr = r ** (p - 2) * (-T_ur + D * T_rr)  # g^{rr} = D
    div = (sp.diff(r ** 2 * Ju, u) + sp.diff(r ** 2 * Jr, r)) / r ** 2
    K = (sp.Rational(1, 2) * r ** (p - 3) * (D * (p - 4) - d(1) * r) * fr ** 2
         + 2 * r ** (p - 3) * fr * fu + sp.Rational(1, 2) * (2 - p) * r ** (p - 3) * ang)
    E = r ** (p - 2) * fr * box(f)
    return sp.simplify(sp.expand(div - K - E))
