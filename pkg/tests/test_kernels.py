"""Kernel evaluations.

Frozen reference values were produced once with mpmath at 30 digits and are
independent of the package code.
"""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from halfheat.errors import DivergenceError, DomainError
from halfheat.kernels import (
    _mass_defect,
    _semigroup_defect,
    gauss_kernel,
    green_boundary,
    green_neumann,
    semigroup_apply,
    semigroup_selftest,
)
from halfheat.measure import (
    BoundedDecay,
    ConstantStrip,
    GaussianGrowth,
    MeasureSpec,
    PowerLog,
    scale,
)

coord = st.floats(-2.0, 2.0)
height = st.floats(0.0, 2.0)
times = st.floats(0.01, 3.0)


def point(lat, n):
    return np.array(list(lat) + [n])


# ---- gauss kernel ----------------------------------------------------------


def test_gauss_unit_peak():
    assert gauss_kernel(np.array([0.0]), 1 / (4 * math.pi)) == pytest.approx(1.0, rel=1e-15)


def test_gauss_frozen_value():
    # exp(-1)/sqrt(4 pi)
    assert gauss_kernel(np.array([2.0]), 1.0) == pytest.approx(0.10377687435514867583, rel=1e-14)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_gauss_at_origin(N):
    t = 0.37
    assert gauss_kernel(np.zeros(N), t) == pytest.approx((4 * math.pi * t) ** (-N / 2), rel=1e-14)


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_nonpositive_time_rejected(t):
    with pytest.raises(DomainError):
        gauss_kernel(np.array([0.0]), t)
    with pytest.raises(DomainError):
        green_neumann(np.array([0.0]), np.array([0.0]), t)
    with pytest.raises(DomainError):
        green_boundary(np.array([0.0]), np.array([]), t)


# ---- Neumann Green function --------------------------------------------------


def test_green_on_boundary_source_doubles():
    x, y, t = np.array([0.3, 0.8]), np.array([-0.1, 0.0]), 0.4
    assert green_neumann(x, y, t) == pytest.approx(2 * gauss_kernel(x - y, t), rel=1e-14)


def test_green_origin_1d():
    t = 0.25
    assert green_neumann(np.array([0.0]), np.array([0.0]), t) == pytest.approx(2 * (4 * math.pi * t) ** -0.5, rel=1e-14)


def test_green_deep_interior_close_to_gauss():
    x = np.array([50.0])
    g = green_neumann(x, x, 1.0)
    gam = gauss_kernel(np.array([0.0]), 1.0)
    assert gam <= g <= 2 * gam
    assert g == pytest.approx(gam, rel=1e-12)


@given(st.integers(1, 3), st.lists(coord, min_size=4, max_size=4), height, height, times)
def test_green_symmetric_and_bounded(N, lat, xn, yn, t):
    x = point(lat[: N - 1], xn)
    y = point(lat[2 : 2 + N - 1], yn)
    a, b = green_neumann(x, y, t), green_neumann(y, x, t)
    assert a == b
    gam = gauss_kernel(x - y, t)
    assert gam <= a <= 2 * gam


# ---- boundary factorization ----------------------------------------------------


def test_green_boundary_unit():
    assert green_boundary(np.array([0.0]), np.array([]), 1 / (4 * math.pi)) == pytest.approx(2.0, rel=1e-15)


def test_green_boundary_frozen_2d():
    # 2 exp(-1/4) / (4 pi)
    val = green_boundary(np.array([0.0, 1.0]), np.array([0.0]), 1.0)
    assert val == pytest.approx(0.12394999430965296619, rel=1e-14)


@given(st.integers(1, 3), st.lists(coord, min_size=4, max_size=4), height, times)
def test_green_boundary_matches_neumann(N, lat, xn, t):
    x = point(lat[: N - 1], xn)
    yp = np.array(lat[2 : 2 + N - 1])
    y = point(yp, 0.0)
    assert green_boundary(x, yp, t) == pytest.approx(green_neumann(x, y, t), rel=1e-13, abs=1e-300)


# ---- semigroup --------------------------------------------------------------------


def test_semigroup_interior_atom_at_boundary_point():
    mu = MeasureSpec.atom((1.0,), 1.0)
    t = 0.3
    # 2 (4 pi t)^{-1/2} exp(-1/(4t))
    assert semigroup_apply(mu, np.array([0.0]), t) == pytest.approx(0.44766420317807839725, rel=1e-13)


def test_semigroup_gaussian_growth_closed_form():
    mu = MeasureSpec.density(1, GaussianGrowth(lam=1.0))
    assert semigroup_apply(mu, np.array([0.0]), 0.2) == pytest.approx(2.2360679774997896964, rel=1e-10)


def test_semigroup_gaussian_growth_diverges():
    mu = MeasureSpec.density(1, GaussianGrowth(lam=1.0))
    with pytest.raises(DivergenceError):
        semigroup_apply(mu, np.array([0.0]), 0.25)


def test_semigroup_strip_closed_form():
    mu = MeasureSpec.density(1, ConstantStrip(h=0.1, c=1.0))
    # erf(h / (2 sqrt t))
    assert semigroup_apply(mu, np.array([0.0]), 0.05) == pytest.approx(0.24817036595415071085, rel=1e-9)


def test_semigroup_bounded_decay_quadrature():
    mu = MeasureSpec.density(1, BoundedDecay(A=0.5))
    assert semigroup_apply(mu, np.array([0.0]), 0.5) == pytest.approx(0.77488836243689203734, rel=1e-8)


def test_semigroup_power_log_quadrature():
    mu = MeasureSpec.density(1, PowerLog(A=-0.5, B=1.0))
    assert semigroup_apply(mu, np.array([0.3]), 0.1) == pytest.approx(1.0041512797488577694, rel=1e-8)


def test_semigroup_strip_quadrature_matches_closed_form():
    mu = MeasureSpec.density(1, ConstantStrip(h=0.7, c=2.0))
    for x in (0.0, 0.35, 1.2):
        a = semigroup_apply(mu, np.array([x]), 0.2, method="closed")
        b = semigroup_apply(mu, np.array([x]), 0.2, method="quad")
        assert a == pytest.approx(b, rel=1e-7)


def test_semigroup_zero_scale():
    mu = scale(MeasureSpec.atom((0.0, 0.5), 2.0), 0.0)
    assert semigroup_apply(mu, np.array([0.1, 0.0]), 0.3) == 0.0


@given(st.floats(0.0, 50.0), height, times)
def test_semigroup_kappa_homogeneous(k, xn, t):
    base = MeasureSpec(N=1, kappa=1.0, atoms=MeasureSpec.atom((0.4,), 1.0).atoms, densities=(ConstantStrip(h=0.5, c=1.0),))
    a = semigroup_apply(scale(base, k), np.array([xn]), t)
    b = k * semigroup_apply(base, np.array([xn]), t)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-300)


def test_semigroup_continuity_below_divergence_window():
    mu = MeasureSpec.density(1, GaussianGrowth(lam=1.0))
    vals = [semigroup_apply(mu, np.array([0.0]), t) for t in np.linspace(0.01, 0.249, 25)]
    assert all(math.isfinite(v) for v in vals)
    assert np.all(np.diff(vals) > 0)


# ---- self test ------------------------------------------------------------------


def test_selftest_point_example():
    assert _semigroup_defect(np.array([0.0]), np.array([0.0]), 0.5, 0.5) < 1e-8


@pytest.mark.parametrize("N", [1, 2, 3])
def test_mass_conservation(N):
    x = np.append(np.full(N - 1, 0.2), 0.3)
    assert _mass_defect(x, 0.4) < 1e-8


def test_selftest_report():
    rep = semigroup_selftest(seed=3, samples=10)
    assert rep["max_semigroup_rel_defect"] < 1e-6
    assert rep["max_mass_defect"] < 1e-8
    assert rep["bound_violations"] == 0
    assert all(v["tail_monotone_violations"] == 0 for v in rep["dims"].values())
