import math

import numpy as np
import pytest

from sigmaflow.errors import ConeViolation, QuadratureError
from sigmaflow.experiments import cos2_profile
from sigmaflow.functionals import (
    ConformalFactor,
    Grid,
    evaluate_functionals,
    gauss_legendre,
    holder_lower_bound,
    integrate,
    quotient_Yeps_value,
)
from sigmaflow.sphere_geometry import Convention, schouten_arrays, sigma1_arrays, sigma2_arrays, sphere_area

PI3 = math.pi**3


@pytest.fixture(scope="module")
def grid():
    return Grid(128, 200)


def test_gauss_legendre_interval():
    x, w = gauss_legendre(10, 0.0, 2.0)
    assert np.sum(w) == pytest.approx(2.0)
    assert np.sum(w * x**5) == pytest.approx(2.0**6 / 6)


def test_integrate_volume():
    assert integrate(lambda s: np.ones_like(s), 5) == pytest.approx(PI3, rel=1e-10)
    assert integrate(lambda s: np.ones_like(s), 6) == pytest.approx(sphere_area(6), rel=1e-13)


def test_integrate_rejects_nonfinite():
    with pytest.raises(QuadratureError):
        integrate(lambda s: np.where(s > 0.5, np.nan, 1.0), 5)


def test_spectral_derivatives(grid):
    u = ConformalFactor.from_s(grid, lambda s: np.exp(0.3 * s) * s**3, 5)
    s, u0, du, d2u = u.jets("quad")
    e = np.exp(0.3 * s)
    assert np.allclose(u0, e * s**3, atol=1e-13)
    assert np.allclose(du, e * (0.3 * s**3 + 3 * s**2), atol=1e-11)
    assert np.allclose(d2u, e * (0.09 * s**3 + 1.8 * s**2 + 6 * s), atol=1e-9)


@pytest.mark.parametrize("eps", [0.0, 0.1, 0.5])
def test_round_sphere(grid, eps):
    rep = evaluate_functionals(ConformalFactor(grid, np.zeros(128), 5), eps)
    assert rep.F2 == pytest.approx(2.5 * PI3, rel=1e-10)
    assert rep.F0eps == pytest.approx(PI3, rel=1e-10)
    assert rep.vol == pytest.approx(PI3, rel=1e-10)
    assert rep.total_scalar == pytest.approx(20 * PI3, rel=1e-10)
    assert rep.r_eps == pytest.approx(2.5, rel=1e-10)
    assert abs(rep.s_eps) < 1e-14
    assert rep.min_sigma1 == pytest.approx(2.5)
    assert rep.min_sigma2 == pytest.approx(2.5)


def test_quadrature_refinement(grid):
    u = cos2_profile(grid, 0.2, 5)
    fine = cos2_profile(Grid(128, 400), 0.2, 5)
    a, b = evaluate_functionals(u, 0.1), evaluate_functionals(fine, 0.1)
    for key in ("F2", "F0eps", "vol", "total_scalar"):
        assert getattr(a, key) == pytest.approx(getattr(b, key), rel=1e-9)
    assert a.s_eps == pytest.approx(b.s_eps, abs=1e-10)


def test_against_independent_quadrature(grid):
    # u = 0.1 cos(2 theta) = 0.1 (2 s^2 - 1), g = exp(2u) g0, with exact jets at 4x order
    amp, n, eps = 0.1, 5, 0.1
    rep = evaluate_functionals(cos2_profile(grid, amp, n), eps)

    def fields(s):
        v = -amp * (2 * s * s - 1)  # minus-convention exponent
        lr, lt = schouten_arrays(s, -4 * amp * s, -4 * amp * np.ones_like(s), Convention.MINUS_TWO_U)
        return v, sigma1_arrays(lr, lt, n), sigma2_arrays(lr, lt, n)

    order = 800
    F2 = integrate(lambda s: np.exp((4 - n) * fields(s)[0]) * fields(s)[2], n, order)
    F0 = integrate(lambda s: np.exp((2 * eps - n) * fields(s)[0]), n, order)
    R = integrate(lambda s: 2 * (n - 1) * np.exp((2 - n) * fields(s)[0]) * fields(s)[1], n, order)
    assert rep.F2 == pytest.approx(F2, rel=1e-9)
    assert rep.F0eps == pytest.approx(F0, rel=1e-9)
    assert rep.total_scalar == pytest.approx(R, rel=1e-9)


def test_s_eps_makes_velocity_mean_zero(grid):
    rep = evaluate_functionals(cos2_profile(grid, 0.2, 5), 0.1)
    f = rep.fields
    mean = np.sum(np.exp((2 * 0.1 - 5) * f.u) * (f.quotient + rep.s_eps) * f.dvol0)
    assert abs(mean) < 1e-10


def test_shift_invariance(grid):
    u = cos2_profile(grid, 0.2, 5).to_convention(Convention.MINUS_TWO_U)
    for eps in (0.0, 0.1, 0.3):
        a = quotient_Yeps_value(u, eps)
        b = quotient_Yeps_value(u.with_values(u.u_values + 0.37), eps)
        assert a == pytest.approx(b, rel=1e-12)


def test_eps_continuity(grid):
    u = cos2_profile(grid, 0.2, 5)
    values = [quotient_Yeps_value(u, eps) for eps in (1e-2, 1e-3, 1e-4)]
    limit = quotient_Yeps_value(u, 0.0)
    gaps = [abs(v - limit) for v in values]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-3 * abs(limit)


@pytest.mark.parametrize("amp", [0.0, 0.1, 0.2, 0.3])
@pytest.mark.parametrize("eps", [0.05, 0.2, 0.6])
def test_holder_bound(grid, amp, eps):
    u = cos2_profile(grid, amp, 5)
    lower = holder_lower_bound(evaluate_functionals(u, 0.0), 5, eps)
    assert evaluate_functionals(u, eps).tildeF2eps >= lower * (1 - 1e-12)


def test_holder_bound_is_sharp_on_round_metric(grid):
    u = ConformalFactor(grid, np.full(128, 0.4), 5)
    lower = holder_lower_bound(evaluate_functionals(u, 0.0), 5, 0.2)
    assert evaluate_functionals(u, 0.2).tildeF2eps == pytest.approx(lower, rel=1e-10)


def test_cone_violation(grid):
    with pytest.raises(ConeViolation) as info:
        evaluate_functionals(cos2_profile(grid, 5.0, 5), 0.1)
    assert info.value.min_sigma1 < 0
    assert -1 < info.value.location < 1


def test_eps_range(grid):
    with pytest.raises(ValueError):
        evaluate_functionals(ConformalFactor(grid, np.zeros(128), 5), 1.0)


def test_factor_validation(grid):
    with pytest.raises(ValueError):
        ConformalFactor(grid, np.zeros(10), 5)
    with pytest.raises(ValueError):
        ConformalFactor(grid, np.zeros(128), 4)
    with pytest.raises(ValueError):
        ConformalFactor(grid, np.full(128, np.nan), 5)
