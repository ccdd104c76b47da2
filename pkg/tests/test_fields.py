import numpy as np
import pytest

from tailwave import analysis as A
from tailwave.background import Background, radius_from_null
from tailwave.errors import InsufficientMargin, UnsupportedK, WrongMode
from tailwave.evolve import GridSpec, evolve_mode
from tailwave.fields import (SCRI_TABLE, FieldCache, check_np_conservation, commutator_residual,
                             derived_field, extract_np_constant, extract_second_np,
                             parse_selector, phi2_consistency, radial_derivative, row_profile,
                             scri_limit)
from tailwave.initial_data import CharacteristicData, bump_data, smooth_step, static_tail_data

S = Background.schwarzschild(1.0)
MINK = Background.minkowski()


@pytest.fixture(scope="module")
def bump_sol():
    return evolve_mode(S, bump_data(0, 20, 40, 1e-8), GridSpec(0, 40, 0, 160, 0.25))


@pytest.fixture(scope="module")
def zero_sol():
    return evolve_mode(S, bump_data(0, 20, 40, 0.0), GridSpec(0, 30, 0, 600, 0.5))


def test_parse_selector():
    assert parse_selector("dr_k_phi(2)") == ("dr_k_phi", 2)
    assert parse_selector("Phi") == ("Phi", 0)
    with pytest.raises(ValueError):
        parse_selector("Phi(")


def test_radial_derivative_of_r():
    sol = evolve_mode(S, bump_data(0, 20, 40, 1e-8), GridSpec(0, 20, 0, 100, 0.125))
    r = sol.r
    dr = radial_derivative(sol, r, 1)
    ok = np.isfinite(dr) & (r > 8)
    assert np.max(np.abs(dr[ok] - 1)) < 1e-10
    d2 = radial_derivative(sol, r ** 2, 1)
    ok = np.isfinite(d2) & (r > 8)
    np.testing.assert_allclose(d2[ok], 2 * r[ok], rtol=1e-8)


def test_radial_derivative_minkowski_oracle():
    F = lambda v: np.sin(0.3 * v)
    d = CharacteristicData(0, 0.0, 50.0, F, lambda u: np.full(np.shape(u), F(50.0)), F(50.0))
    sol = evolve_mode(MINK, d, GridSpec(0, 20, 50, 120, 0.125))
    dphi = radial_derivative(sol, sol.phi, 1)
    exact = 2 * 0.3 * np.cos(0.3 * sol.v)[None, :] * np.ones_like(dphi)
    ok = np.isfinite(dphi)
    assert np.max(np.abs(dphi[ok] - exact[ok])) < 1e-6


def test_radial_derivative_margin():
    sol = evolve_mode(S, bump_data(0, 20, 25, 1e-8), GridSpec(0, 2, 0, 26, 2.0))
    with pytest.raises(InsufficientMargin):
        radial_derivative(sol, sol.phi, 4)


def test_zero_solution_fields(zero_sol):
    for sel in ("phi", "Phi", "PhiTilde", "Phi2", "dr_k_phi(2)", "dr_k_Phi2(1)"):
        vals = derived_field(zero_sol, sel).values
        assert not np.any(vals[np.isfinite(vals)])


def test_phitilde_equals_phi_on_minkowski():
    d = bump_data(0, 120, 140, 1.0, "gaussian_truncated", v0=110)
    sol = evolve_mode(MINK, d, GridSpec(0, 20, 110, 200, 0.25))
    a = derived_field(sol, "Phi").values
    b = derived_field(sol, "PhiTilde").values
    ok = np.isfinite(a)
    assert np.array_equal(a[ok], b[ok])


def test_phi2_nested_vs_direct():
    d = bump_data(1, 25, 65, 1.0, "gaussian_truncated", v0=20)
    errs = []
    for h in (0.25, 0.125, 0.0625):
        sol = evolve_mode(S, d, GridSpec(0, 20, 20, 80, h), precision="extended")
        errs.append(phi2_consistency(sol))
    assert errs[-1] < 1e-4
    assert A.residual_order(errs[1], errs[2]) >= 1.5


def test_static_tail_Phi_approaches_I0():
    d = static_tail_data(S, 2.0, v0=0.0, cutoff=4.0)
    sol = evolve_mode(S, d, GridSpec(0, 1, 0, 8000, 0.5))
    r, Phi = row_profile(sol, "Phi", 0.0)
    ok = np.isfinite(Phi)
    far = ok & (r > 1000)
    assert np.max(np.abs(Phi[far] - 2.0)) < 0.05
    # the deviation falls off like a power of r
    mid = ok & (r > 100) & (r < 200)
    assert np.max(np.abs(Phi[far] - 2)) < 0.3 * np.max(np.abs(Phi[mid] - 2))


def test_extract_np_examples(zero_sol):
    est, tol = extract_np_constant(zero_sol, 0.0)
    assert est == 0.0
    d = static_tail_data(MINK, 5.0, r_min_data=1.0)
    sol = evolve_mode(MINK, d, GridSpec(0, 1, d.v0, d.v0 + 4000, 0.5))
    est, tol = extract_np_constant(sol, 0.0)
    assert abs(est) <= max(tol, 1e-9)
    with pytest.raises(WrongMode):
        extract_np_constant(evolve_mode(S, bump_data(1, 20, 40), GridSpec(0, 1, 0, 500, 0.5)), 0.0)


def test_check_np_conservation_static_tail():
    d = static_tail_data(S, 1.0, v0=0.0, cutoff=4.0)
    sol = evolve_mode(S, d, GridSpec(0, 100, 0, 20000, 0.5), store="checkpoints",
                      store_stride=100, extra_rows=[0, 50, 100])
    dev = check_np_conservation(sol, [0.0, 50.0, 100.0])
    assert dev <= 1e-3 * 1.0


def test_check_np_conservation_zero_and_bump(zero_sol):
    assert check_np_conservation(zero_sol, [0.0, 10.0, 20.0]) == 0.0
    sol = evolve_mode(S, bump_data(0, 20, 40, 1e-8), GridSpec(0, 50, 0, 4000, 0.5),
                      store="checkpoints", store_stride=50)
    for u in (0.0, 25.0, 50.0):
        est, tol = extract_np_constant(sol, u)
        assert abs(est) <= tol


def _l1_tail_data(c):
    # phi ~ c / r^2 on the outgoing ray: r^2 d_r PhiTilde -> 2c
    def f(v):
        v = np.asarray(v, dtype=float)
        return smooth_step(v / 4) * c / radius_from_null(S, 0.0, v) ** 2
    return CharacteristicData(1, 0.0, 0.0, f, lambda u: np.zeros(np.shape(u)), 0.0)


def test_second_np_constant():
    grid = GridSpec(0, 100, 0, 8000, 0.5)
    sol = evolve_mode(S, _l1_tail_data(3.0), grid, store="checkpoints", store_stride=50)
    vals = [extract_second_np(sol, u) for u in (0.0, 50.0, 100.0)]
    assert vals[0][0] == pytest.approx(6.0, abs=1e-3)
    # conserved up to the u/r corrections of the finite extraction window
    for est, tol in vals:
        assert abs(est - vals[0][0]) <= 5e-3 * abs(vals[0][0])
    sol2 = evolve_mode(S, -2 * _l1_tail_data(3.0), grid, store="checkpoints", store_stride=50)
    assert extract_second_np(sol2, 0.0)[0] == pytest.approx(-2 * vals[0][0], rel=1e-10)


def test_second_np_constant_compact_and_zero():
    d = bump_data(1, 20, 40, 1e-8)
    sol = evolve_mode(S, d, GridSpec(0, 100, 0, 8000, 0.5), store="checkpoints", store_stride=50)
    assert extract_second_np(sol, 0.0)[0] == 0.0
    # later rows: each r^2 d_r = r^2 (2/D) d_v stencil (coefficient sum 18/12)
    # amplifies rounding by 3 r^2 / h, so two of them by 9 r^4 / h^2
    for u in (50.0, 100.0):
        est, tol = extract_second_np(sol, u)
        r, phi = row_profile(sol, "phi", u)
        floor = 9 * np.finfo(float).eps * r[-3] ** 4 / sol.h ** 2 * np.max(np.abs(phi))
        assert abs(est) <= max(3 * tol, floor)
    zero = evolve_mode(S, 0 * d, GridSpec(0, 10, 0, 500, 0.5))
    assert extract_second_np(zero, 0.0)[0] == 0.0


def test_scri_limits():
    d = bump_data(0, 20, 40, 1e-8)
    sol = evolve_mode(S, d, GridSpec(0, 60, 0, 3000, 0.5))
    est, tol = scri_limit(sol, derived_field(sol, "phi"), 0, 40.0)
    assert np.isfinite(est) and tol < 1e-3 * abs(est)
    est2, tol2 = scri_limit(sol, derived_field(sol, "Phi2"), -1, 40.0)
    scale = np.nanmax(np.abs(derived_field(sol, "Phi2").values[sol.i_of_u(40.0)]))
    assert abs(est2) <= max(3 * tol2, 1e-3 * scale)
    with pytest.raises(ValueError):
        scri_limit(sol, derived_field(sol, "phi"), 1, 40.0)
    with pytest.raises(ValueError):
        scri_limit(sol, derived_field(sol, "Phi"), 0.5, 40.0)
    assert ("phi", 0) in SCRI_TABLE


def test_commutator_zero_and_flat(zero_sol):
    for eq in ("box_phi", "box_Phi", "box_PhiTilde", "box_Phi2"):
        assert commutator_residual(zero_sol, eq) == 0.0
    d = bump_data(0, 120, 140, 1e-8, v0=110)
    sol = evolve_mode(MINK, d, GridSpec(0, 20, 110, 200, 0.25))
    assert commutator_residual(sol, "box_phi") < 1e-10


def test_box_phi2_self_convergence():
    d = bump_data(1, 25, 65, 1.0, "gaussian_truncated", v0=20)
    res = []
    for h in (0.125, 0.0625):
        sol = evolve_mode(S, d, GridSpec(0, 20, 20, 80, h), precision="extended")
        res.append(commutator_residual(sol, "box_Phi2"))
    assert 2.5 <= res[0] / res[1] <= 4.5


def test_box_phi_bondi_consistency():
    # the double-null scheme solves the Bondi-form mode equation to O(h^2)
    d = bump_data(2, 20, 40, 1e-8)
    res = [commutator_residual(evolve_mode(S, d, GridSpec(0, 30, 0, 100, h)), "box_phi")
           for h in (0.25, 0.125)]
    assert A.residual_order(*res) >= 1.8


def test_mutation_flag(monkeypatch):
    d = bump_data(1, 25, 65, 1.0, "gaussian_truncated", v0=20)
    sol = evolve_mode(S, d, GridSpec(0, 20, 20, 80, 0.25))
    cache = FieldCache(sol)
    clean = commutator_residual(sol, "box_Phi2", cache=cache)
    bad = commutator_residual(sol, "box_Phi2", mutate=True, cache=cache)
    assert bad > 10 * clean
    monkeypatch.setenv("TAILWAVE_MUTATE", "box_Phi2")
    assert commutator_residual(sol, "box_Phi2", cache=cache) == bad


def test_commutator_errors():
    d = bump_data(0, 20, 40, 1e-8)
    sol = evolve_mode(S, d, GridSpec(0, 20, 0, 60, 0.5))
    with pytest.raises(UnsupportedK):
        commutator_residual(sol, "box_drk_Phi2(3)")
    with pytest.raises(ValueError):
        commutator_residual(sol, "box_nothing")
    part = evolve_mode(S, d, GridSpec(0, 20, 0, 60, 0.5), store="checkpoints", store_stride=8)
    with pytest.raises(InsufficientMargin):
        commutator_residual(part, "box_phi")
