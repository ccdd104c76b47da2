import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from tailwave.background import Background
from tailwave.errors import BadSupport, DomainError, InsufficientMargin
from tailwave.evolve import GridSpec, evolve_mode
from tailwave.fields import extract_np_constant
from tailwave.initial_data import (CharacteristicData, bump_data, gaussian_truncated,
                                   polynomial_bump, smooth_step, static_profile, static_tail_data, tabulated_data,
                                   time_derivative_data)

S = Background.schwarzschild(1.0)
MINK = Background.minkowski()


def test_polynomial_bump_midpoint():
    d = bump_data(0, 20, 40, 1.0)
    assert d.sample_u0(np.array([30.0]))[0] == pytest.approx(1e8, rel=1e-14)
    d3 = bump_data(0, 20, 40, 3.0)
    assert d3.sample_u0(np.array([30.0]))[0] == pytest.approx(3e8, rel=1e-14)
    v = np.linspace(0, 60, 601)
    assert np.argmax(d.sample_u0(v)) == 300


def test_bump_support_and_smoothness():
    v = np.linspace(0, 60, 6001)
    for prof in ("polynomial_bump", "gaussian_truncated"):
        f = bump_data(1, 20, 40, 1.0, prof).sample_u0(v)
        assert np.all(f[(v <= 20) | (v >= 40)] == 0)
        # first two differences vanish at the support edges
        d1 = np.gradient(f, v)
        d2 = np.gradient(d1, v)
        edge = (np.abs(v - 20) < 0.05) | (np.abs(v - 40) < 0.05)
        assert np.max(np.abs(d2[edge])) < 1e-3 * np.max(np.abs(d2))


def test_corner_compatibility():
    for d in (bump_data(0, 20, 40, 1.0, v0=5.0), static_tail_data(S, 2.0, r_min_data=6.0),
              static_tail_data(S, 2.0, v0=0.0, cutoff=4.0)):
        assert d.sample_u0(np.array([d.v0]))[0] == d.corner_value
        assert d.sample_v0(np.array([d.u0]))[0] == d.corner_value
    d = static_tail_data(S, 2.0, r_min_data=6.0)
    raw = float(np.asarray(d.phi_on_u0(np.array([d.v0])))[0])
    assert raw == pytest.approx(d.corner_value, rel=1e-12)


def test_bump_errors():
    with pytest.raises(BadSupport):
        bump_data(0, 40, 20)
    with pytest.raises(BadSupport):
        bump_data(0, 20, 40, v0=25)
    with pytest.raises(BadSupport):
        bump_data(0, 20, 40, float("nan"))
    with pytest.raises(ValueError):
        bump_data(0, 20, 40, profile="boxcar")


def test_zero_amplitude_gives_zero_evolution():
    d = bump_data(0, 20, 40, 0.0)
    sol = evolve_mode(S, d, GridSpec(0, 20, 0, 80, 0.5))
    assert not np.any(sol.phi)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_superposition(a, b):
    d1 = bump_data(1, 20, 40, 1.0)
    d2 = bump_data(1, 25, 50, 1.0, "gaussian_truncated")
    v = np.linspace(0, 60, 121)
    comb = a * d1 + b * d2
    np.testing.assert_allclose(comb.sample_u0(v), a * d1.sample_u0(v) + b * d2.sample_u0(v),
                               rtol=1e-13, atol=1e-300)
    assert comb.corner_value == a * d1.corner_value + b * d2.corner_value


def test_bump_np_constant_zero():
    d = bump_data(0, 20, 40, 1e-8)
    assert d.predicted_I0 == 0.0
    sol = evolve_mode(S, d, GridSpec(0, 10, 0, 4000, 0.5))
    est, tol = extract_np_constant(sol, 0.0)
    assert abs(est) <= max(tol, 1e-12)


def test_static_profile_oracles():
    r = np.array([1.0, 3.0, 17.0])
    np.testing.assert_allclose(static_profile(MINK, 1.0, r), -1 / r, rtol=0, atol=0)
    for bg in (S, Background.reissner_nordstrom(1.0, 0.6)):
        for rr in (2.5, 10.0, 80.0):
            q = quad(lambda s: 1 / (s * s * float(bg.D(s))), rr, np.inf, epsabs=1e-14)[0]
            got = static_profile(bg, 2.0, np.array([rr - bg.r_plus]))[0]
            assert got == pytest.approx(-2 * q, rel=1e-10)


def test_static_tail_predicted_I0():
    assert static_tail_data(MINK, 5.0, r_min_data=1.0).predicted_I0 == 0.0
    assert static_tail_data(S, 2.0, r_min_data=6.0).predicted_I0 == 2.0
    assert static_tail_data(Background.schwarzschild(3.0), 2.0, r_min_data=9.0).predicted_I0 == 6.0
    with pytest.raises(DomainError):
        static_tail_data(S, 2.0, r_min_data=1.5)
    with pytest.raises(ValueError):
        static_tail_data(S, 2.0)


def test_static_tail_extracted_I0():
    d = static_tail_data(S, 2.0, v0=0.0, cutoff=4.0)
    sol = evolve_mode(S, d, GridSpec(0, 5, 0, 20000, 0.5))
    est, tol = extract_np_constant(sol, 0.0)
    assert abs(est - 2.0) <= max(tol, 1e-3)


def test_minkowski_static_tail_I0_zero():
    d = static_tail_data(MINK, 5.0, r_min_data=1.0)
    sol = evolve_mode(MINK, d, GridSpec(0, 1, d.v0, d.v0 + 4000, 0.5))
    est, tol = extract_np_constant(sol, 0.0)
    assert abs(est) <= max(tol, 1e-9)


def test_tabulated_data(tmp_path):
    v = np.linspace(10, 50, 401)
    p = tmp_path / "ray.txt"
    np.savetxt(p, np.column_stack([v, np.sin(v)]), header="v phi")
    d = tabulated_data(p, 2, v0=10.0)
    assert d.ell == 2 and d.corner_value == pytest.approx(np.sin(10.0))
    np.testing.assert_allclose(d.sample_u0(v[1:]), np.sin(v[1:]), rtol=1e-12)
    with pytest.raises(BadSupport):
        d.sample_u0(np.array([60.0]))


def test_time_derivative_of_bump_has_zero_I0():
    d = bump_data(0, 20, 40, 1e-8)
    sol = evolve_mode(S, d, GridSpec(0, 20, 0, 100, 0.25))
    td = time_derivative_data(d, sol)
    assert td.predicted_I0 == 0.0
    assert td.u0 == 0.25 and td.v0 == 0.25
    with pytest.raises(InsufficientMargin):
        td.sample_u0(np.array([100.0]))


def test_time_derivative_of_static_data_small():
    # static data on both rays: T phi vanishes up to the scheme error
    d = static_tail_data(S, 1.0, r_min_data=5.0)
    g = GridSpec.for_data(d, 10, d.v0 + 40, 0.125)
    sol = evolve_mode(S, d, g)
    td = time_derivative_data(d, sol)
    v = np.linspace(td.v0, sol.v[-2], 200)
    scale = np.max(np.abs(sol.phi))
    assert np.max(np.abs(td.sample_u0(v))) < 1e-3 * scale


def test_time_derivative_of_left_mover():
    # Minkowski l=0 with G(v) = sin(v) on u0: T phi = cos(v) up to O(h^2)
    errs = []
    for h in (0.1, 0.05):
        d = CharacteristicData(0, 0.0, 20.0, lambda v: np.sin(np.asarray(v, float)),
                                lambda u: np.full(np.shape(u), np.sin(20.0)), np.sin(20.0))
        sol = evolve_mode(MINK, d, GridSpec(0, 5, 20, 40, h))
        td = time_derivative_data(d, sol)
        v = sol.v[4:-4]
        errs.append(np.max(np.abs(td.sample_u0(v) - np.cos(v))))
    assert errs[0] < 1e-2
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_smooth_step_limits():
    t = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    np.testing.assert_allclose(smooth_step(t), [0, 0, 0.5, 1, 1])
    assert polynomial_bump(np.array([19.0]), 20, 40)[0] == 0
    assert gaussian_truncated(np.array([30.0]), 20, 40)[0] == pytest.approx(1.0, rel=1e-9)
