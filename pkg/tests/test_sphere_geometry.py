import math

import numpy as np
import pytest

from sigmaflow.sphere_geometry import (
    Convention,
    PointJet,
    schouten_arrays,
    schouten_eigs,
    sigma2_arrays,
    sphere_area,
    weight,
)
from sigmaflow.symfunc import sigma_k


def family_eigs(ell, s):
    lam1 = 0.5 + 2 * ell - 4 * ell * s**2 + 2 * ell**2 * s**2 * (1 - s**2)
    lam2 = 0.5 - 2 * ell * s**2 - 2 * ell**2 * s**2 * (1 - s**2)
    return lam1, lam2


def test_family_eigenvalues_on_grid():
    ell, s = np.meshgrid(np.linspace(0, 10, 100), np.linspace(-0.99, 0.99, 100))
    lr, lt = schouten_arrays(s, -2 * ell * s, -2 * ell, Convention.PLUS_TWO_U)
    er, et = family_eigs(ell, s)
    assert np.max(np.abs(lr - er) / np.maximum(np.abs(er), 1e-300)) <= 1e-12
    assert np.max(np.abs(lt - et) / np.maximum(np.abs(et), 1e-300)) <= 1e-12


def test_conventions_are_mirror_images():
    s, du, d2u = 0.3, 0.7, -1.1
    a = schouten_arrays(s, du, d2u, Convention.MINUS_TWO_U)
    b = schouten_arrays(s, -du, -d2u, Convention.PLUS_TWO_U)
    assert a == b


def test_round_sphere_eigenvalues():
    eigs = schouten_eigs(PointJet(0.4, 1.3, 0.0, 0.0, 5))
    assert (eigs.lambda_r, eigs.lambda_t) == (0.5, 0.5)
    assert eigs.sigma1(5) == 2.5
    assert eigs.sigma2(5) == 2.5


def test_sigma2_matches_expanded_profile():
    eigs = schouten_eigs(PointJet(-0.2, 0.0, 0.4, 2.0, 7), Convention.PLUS_TWO_U)
    assert eigs.sigma2(7) == pytest.approx(sigma_k(eigs.expanded(7), 2), rel=1e-13)
    assert eigs.sigma1(7) == pytest.approx(sigma_k(eigs.expanded(7), 1), rel=1e-13)


def test_scalar_curvature_of_conformal_factor():
    # e^{2u} R_g = R0 - 2(n-1) Lap u - (n-1)(n-2) |grad u|^2 for g = e^{2u} g0
    n, s, a = 6, 0.25, 0.3
    du, d2u = a, 0.0
    lr, lt = schouten_arrays(s, du, d2u, Convention.PLUS_TWO_U)
    lap = (1 - s**2) * d2u - n * s * du
    grad2 = (1 - s**2) * du**2
    R = n * (n - 1) - 2 * (n - 1) * lap - (n - 1) * (n - 2) * grad2
    assert 2 * (n - 1) * (lr + (n - 1) * lt) == pytest.approx(R, rel=1e-13)


def test_sphere_area():
    assert sphere_area(1) == pytest.approx(2 * math.pi)
    assert sphere_area(2) == pytest.approx(4 * math.pi)
    assert sphere_area(5) == pytest.approx(math.pi**3)
    with pytest.raises(ValueError):
        sphere_area(0)


def test_weight():
    assert weight(0.0, 5) == 1.0
    assert weight(1.0, 5) == 0.0
    assert weight(0.6, 6) == pytest.approx(0.64**2)


def test_point_jet_validation():
    with pytest.raises(ValueError):
        PointJet(1.0, 0.0, 0.0, 0.0, 5)
    with pytest.raises(ValueError):
        PointJet(0.0, 0.0, 0.0, 0.0, 4)


def test_sigma2_arrays_vectorised():
    lr = np.array([0.5, 1.0])
    lt = np.array([0.5, -0.2])
    assert np.allclose(sigma2_arrays(lr, lt, 5), [2.5, 0.5 * 12 * 0.04 + 4 * 1.0 * -0.2])
