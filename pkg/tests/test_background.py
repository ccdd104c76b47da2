import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from tailwave.background import (Background, derivative_consistency, horizon_radius, metric_D,
                                 radius_from_null, tortoise)
from tailwave.errors import DomainError, ExtremalWarning, NoHorizon, UnsupportedOrder

S = Background.schwarzschild(1.0)
RN = Background.reissner_nordstrom(1.0, 0.6)
MINK = Background.minkowski()


def test_metric_D_examples():
    assert metric_D(MINK, 5.0) == 1.0
    assert metric_D(RN, 2.0) == pytest.approx(1 - 1 + 0.36 / 4, abs=1e-15)
    assert metric_D(S, 2.0) == 0.0
    assert 0 < metric_D(S, 2.0 + 1e-9) < 1e-9
    with pytest.raises(DomainError):
        metric_D(S, 1.9)
    with pytest.raises(DomainError):
        metric_D(MINK, 0.0)
    with pytest.raises(UnsupportedOrder):
        metric_D(S, 5.0, order=4)


def test_D_zero_at_horizon_formula():
    # the closed form itself is zero at r = 2M
    assert S.D(np.array([2.0]))[0] == 0.0


def test_horizon_radius():
    assert horizon_radius(S) == 2.0
    assert horizon_radius(RN) == pytest.approx(1 + math.sqrt(1 - 0.36), rel=1e-15)
    assert horizon_radius(RN) == pytest.approx(1.8)
    assert horizon_radius(MINK) == 0.0
    for bg in (S, RN):
        assert abs(float(bg.D(bg.r_plus + 1e-12))) < 1e-10


def test_no_horizon_custom():
    bg = Background.custom(lambda r, n: np.ones_like(r) if n == 0 else np.zeros_like(r), M=0.0)
    with pytest.raises(NoHorizon):
        horizon_radius(bg)


def test_tortoise_examples():
    assert tortoise(MINK, 7.0) == pytest.approx(7.0, abs=1e-14)
    assert tortoise(S, 10.0) == pytest.approx(10.0, abs=1e-13)
    assert tortoise(S, 18.0) == pytest.approx(18 + 2 * math.log(2), abs=1e-12)
    # quadrature oracle: r*(18) - r*(10) = int_10^18 dr / D
    q = quad(lambda r: 1 / (1 - 2 / r), 10, 18, epsabs=1e-13)[0]
    assert tortoise(S, 18.0) - 10.0 == pytest.approx(q, abs=1e-10)
    near = [tortoise(S, 2 + 10.0 ** -k) for k in range(2, 9)]
    assert all(b < a for a, b in zip(near, near[1:]))
    assert near[-1] < -20


def test_rn_tortoise_against_quadrature():
    q = quad(lambda r: 1 / (1 - 2 / r + 0.36 / r ** 2), 10, 40, epsabs=1e-13)[0]
    assert tortoise(RN, 40.0) - tortoise(RN, 10.0) == pytest.approx(q, abs=1e-10)
    assert tortoise(RN, RN.R_norm) == pytest.approx(RN.R_norm, abs=1e-12)


def test_radius_from_null_examples():
    assert radius_from_null(MINK, 0.0, 10.0) == pytest.approx(5.0)
    v = 2 * tortoise(S, 18.0)
    assert radius_from_null(S, 0.0, v) == pytest.approx(18.0, rel=1e-12)
    # near-horizon pair: compare with an independent bisection
    u, v = 0.0, 0.02
    target = 0.5 * (v - u)
    oracle = brentq(lambda r: tortoise(S, r) - target, 2 + 1e-12, 20, xtol=1e-14)
    assert radius_from_null(S, u, v) == pytest.approx(oracle, abs=1e-10)


def test_roundtrip_log_grid():
    for bg in (S, RN, MINK):
        r = bg.r_plus + np.logspace(-6, 5, 200) * max(bg.M, 1.0)
        back = radius_from_null(bg, 0.0, 2 * tortoise(bg, r))
        np.testing.assert_allclose(back, r, rtol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.floats(2.001, 1e4), st.floats(1e-3, 10))
def test_tortoise_monotone(r, dr):
    assert tortoise(S, r + dr) > tortoise(S, r)


def test_derivative_fd_convergence():
    r0 = 7.0
    errs = []
    for eps in (1e-2, 5e-3):
        fd = (metric_D(RN, r0 + eps, 1) - metric_D(RN, r0 - eps, 1)) / (2 * eps)
        errs.append(abs(fd - metric_D(RN, r0, 2)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    assert derivative_consistency(S) < 1e-8
    assert derivative_consistency(RN) < 1e-8


def test_extremal_rn_warns():
    with pytest.warns(ExtremalWarning):
        bg = Background.reissner_nordstrom(1.0, 1.0)
    assert bg.extremal and bg.r_plus == pytest.approx(1.0)
    with pytest.raises(DomainError):
        Background.reissner_nordstrom(1.0, 1.2)


def test_custom_matches_builtin():
    def D(r, n):
        return [1 - 2 / r, 2 / r ** 2, -4 / r ** 3, 12 / r ** 4][n]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        bg = Background.custom(D)
    assert bg.r_plus == pytest.approx(2.0, rel=1e-10)
    assert bg.M == pytest.approx(1.0, rel=1e-5)
    r = np.array([3.0, 10.0, 50.0])
    np.testing.assert_allclose(tortoise(bg, r), tortoise(S, r), atol=1e-7)
    with pytest.raises(UnsupportedOrder):
        bg.D(r, 4)


def test_inconsistent_custom_rejected():
    with pytest.raises(ValueError):
        Background.custom(lambda r, n: [1 - 2 / r, 5 / r ** 2, -4 / r ** 3, 12 / r ** 4][n])


def test_from_config():
    assert Background.from_config("Schwarzschild", 2.0).r_plus == 4.0
    assert Background.from_config("rn", 1.0, 0.6).kind == "reissner_nordstrom"
    with pytest.raises(ValueError):
        Background.from_config("custom")
