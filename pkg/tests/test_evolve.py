import warnings

import numpy as np
import pytest

from tailwave import analysis as A
from tailwave.background import Background
from tailwave.errors import BadSupport, DomainError, InsufficientMargin, StabilityWarning
from tailwave.evolve import (GridSpec, evolve_mode, evolve_refined, read_checkpoint,
                             t_derivative_field)
from tailwave.initial_data import CharacteristicData, bump_data, static_tail_data

S = Background.schwarzschild(1.0)
MINK = Background.minkowski()


def _bump(v, lo=60.0, hi=100.0):
    v = np.asarray(v, dtype=float)
    return np.where((v > lo) & (v < hi), (v - lo) ** 4 * (hi - v) ** 4, 0.0) * 1e-8


def _bump_d(v, lo=60.0, hi=100.0):
    v = np.asarray(v, dtype=float)
    return np.where((v > lo) & (v < hi),
                    4 * (v - lo) ** 3 * (hi - v) ** 4 - 4 * (v - lo) ** 4 * (hi - v) ** 3, 0.0) * 1e-8


def test_gridspec_validation():
    with pytest.raises(DomainError):
        GridSpec(0, 10, 0, 10, 0.3)
    with pytest.raises(DomainError):
        GridSpec(0, 10, 10, 5, 0.5)
    with pytest.raises(DomainError):
        GridSpec(0, 10, 0, 10, 0.0)
    g = GridSpec(0, 10, 0, 20, 0.5)
    assert (g.nu, g.nv, g.cells) == (20, 40, 800)
    assert g.refined().h == 0.25


def test_minkowski_dalembert_exact():
    d = bump_data(0, 120, 140, 1e-8, v0=110)
    sol = evolve_mode(MINK, d, GridSpec(0, 100, 110, 300, 0.25))
    exact = d.sample_u0(sol.v)[None, :] + d.sample_v0(sol.u)[:, None] - d.corner_value
    assert np.max(np.abs(sol.phi - exact)) < 1e-12


def test_minkowski_l1_closed_form():
    # phi = G'(v) - 2 G(v) / (v - u) solves the flat l=1 mode equation
    def exact(u, v):
        return _bump_d(v) - 2 * _bump(v) / (v - u)

    errs = []
    for h in (0.5, 0.25, 0.125):
        d = CharacteristicData(1, 0.0, 40.0, lambda v: exact(0.0, v),
                               lambda u: exact(np.asarray(u, float), 40.0), 0.0)
        sol = evolve_mode(MINK, d, GridSpec(0, 30, 40, 140, h))
        U, V = np.meshgrid(sol.u, sol.v, indexing="ij")
        errs.append(np.max(np.abs(sol.phi - exact(U, V))))
    p1, p2 = np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])
    assert 1.8 <= p1 <= 2.2 and 1.8 <= p2 <= 2.2


def test_boundary_rows_match_data():
    d = bump_data(2, 20, 40, 1e-8)
    sol = evolve_mode(S, d, GridSpec(0, 20, 0, 80, 0.5))
    assert np.array_equal(sol.phi[0], d.sample_u0(sol.v))
    assert np.array_equal(sol.phi[:, 0], d.sample_v0(sol.u))


def test_linearity():
    d1 = bump_data(1, 20, 40, 1e-8)
    d2 = bump_data(1, 25, 45, 1.0, "gaussian_truncated")
    g = GridSpec(0, 40, 0, 120, 0.25)
    a, b = 2.5, -0.75
    lhs = evolve_mode(S, a * d1 + b * d2, g).phi
    rhs = a * evolve_mode(S, d1, g).phi + b * evolve_mode(S, d2, g).phi
    assert np.max(np.abs(lhs - rhs)) <= 1e-13 * np.max(np.abs(rhs))


def test_determinism_and_zero_data():
    d = bump_data(0, 20, 40, 1e-8)
    g = GridSpec(0, 30, 0, 100, 0.25)
    a, b = evolve_mode(S, d, g), evolve_mode(S, d, g)
    assert a.phi.tobytes() == b.phi.tobytes()
    for s in evolve_refined(S, bump_data(0, 20, 40, 0.0), g, levels=3):
        assert not np.any(s.phi)


def test_time_translation_equivariance():
    g = GridSpec(0, 30, 0, 100, 0.25)
    d = bump_data(1, 20, 40, 1e-8)
    shift = 7.5
    d2 = bump_data(1, 20 + shift, 40 + shift, 1e-8, u0=shift, v0=shift)
    g2 = GridSpec(shift, 30 + shift, shift, 100 + shift, 0.25)
    a, b = evolve_mode(S, d, g).phi, evolve_mode(S, d2, g2).phi
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


def test_refined_self_convergence():
    d = bump_data(0, 20, 40, 1e-8)
    sols = evolve_refined(S, d, GridSpec(0, 60, 0, 160, 0.5), levels=3)
    ys = [s.phi[::2 ** n, ::2 ** n] for n, s in enumerate(sols)]
    d01 = np.max(np.abs(ys[0] - ys[1]))
    d12 = np.max(np.abs(ys[1] - ys[2]))
    assert 3.2 <= d01 / d12 <= 4.8
    assert 1.8 <= A.convergence_order(*ys) <= 2.2


def test_static_tail_stationarity():
    d = static_tail_data(S, 1.0, r_min_data=5.0)
    eps = []
    for h in (0.25, 0.125):
        sol = evolve_mode(S, d, GridSpec.for_data(d, 20, d.v0 + 60, h))
        T = t_derivative_field(sol, 1)
        eps.append(np.nanmax(np.abs(T)))
    assert 0.22 <= eps[1] / eps[0] <= 0.30


def test_t_derivative_composition():
    d = bump_data(0, 20, 40, 1e-8)
    sol = evolve_mode(S, d, GridSpec(0, 30, 0, 90, 0.125))
    T2 = t_derivative_field(sol, 2)
    T1 = t_derivative_field(sol, 1)
    f = np.full_like(T1, np.nan)
    f[1:-1, 1:-1] = ((T1[2:, 1:-1] - T1[:-2, 1:-1]) + (T1[1:-1, 2:] - T1[1:-1, :-2])) / (2 * sol.h)
    ok = np.isfinite(T2)
    np.testing.assert_allclose(T2[ok], f[ok], rtol=0, atol=1e-12 * np.nanmax(np.abs(T2)))
    with pytest.raises(ValueError):
        t_derivative_field(sol, 0)


def test_t_derivative_needs_full_storage():
    d = bump_data(0, 20, 40, 1e-8)
    sol = evolve_mode(S, d, GridSpec(0, 30, 0, 90, 0.25), store="checkpoints", store_stride=10)
    with pytest.raises(InsufficientMargin):
        t_derivative_field(sol, 1)


def test_checkpoint_roundtrip(tmp_path):
    d = bump_data(1, 20, 40, 1e-8)
    g = GridSpec(0, 20, 0, 60, 0.25, checkpoint_stride=8)
    path = tmp_path / "run.twv"
    sol = evolve_mode(S, d, g, checkpoint_path=path)
    raw = path.read_bytes()
    assert raw[:4] == b"TWV1"
    hdr, u, rows = read_checkpoint(path)
    assert hdr["ell"] == 1 and hdr["stride"] == 8 and hdr["h"] == 0.25
    np.testing.assert_array_equal(u, sol.u[::8])
    for k, uu in enumerate(u):
        assert np.array_equal(rows[k], sol.row_at(uu))
    bad = tmp_path / "bad.twv"
    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        read_checkpoint(bad)


def test_checkpoint_storage_matches_full():
    d = bump_data(0, 20, 40, 1e-8)
    g = GridSpec(0, 40, 0, 100, 0.25)
    full = evolve_mode(S, d, g, store="full", stations=[10.0])
    part = evolve_mode(S, d, g, store="checkpoints", store_stride=16, stations=[10.0])
    for i in part.row_index:
        assert np.array_equal(part.row(i), full.row(i))
    assert np.array_equal(part.station(10.0)[1], full.station(10.0)[1])
    assert np.array_equal(part.scri()[1], full.scri()[1])


def test_station_against_full_interpolation():
    d = bump_data(0, 20, 40, 1e-8)
    sol = evolve_mode(S, d, GridSpec(0, 60, 0, 120, 0.125))
    u, st = sol.station(10.0)
    # a recorded station agrees with interpolation from the full array
    sol2 = evolve_mode(S, d, GridSpec(0, 60, 0, 120, 0.125), stations=[10.0])
    ok = np.isfinite(st) & np.isfinite(sol2.station(10.0)[1])
    np.testing.assert_allclose(sol2.station(10.0)[1][ok], st[ok], rtol=1e-10, atol=1e-12)


def test_stability_warning():
    d = bump_data(10, 20, 40, 1e-8)
    with pytest.warns(StabilityWarning):
        evolve_mode(S, d, GridSpec(0, 4, 0, 60, 1.0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        evolve_mode(S, d, GridSpec(0, 4, 0, 60, 0.25))


def test_data_grid_mismatch():
    d = bump_data(0, 20, 40, 1e-8)
    with pytest.raises(DomainError):
        evolve_mode(S, d, GridSpec(1, 10, 0, 60, 0.5))
    with pytest.raises(BadSupport):
        evolve_mode(S, d, GridSpec(0, 10, 0, 15, 0.5))


def test_extended_precision_agrees():
    d = bump_data(1, 25, 45, 1.0, "gaussian_truncated", v0=20)
    g = GridSpec(0, 10, 20, 60, 0.25)
    a = evolve_mode(S, d, g)
    b = evolve_mode(S, d, g, precision="extended")
    assert b.phi.dtype == np.longdouble
    np.testing.assert_allclose(np.asarray(b.phi, float), a.phi, rtol=0, atol=1e-12)
