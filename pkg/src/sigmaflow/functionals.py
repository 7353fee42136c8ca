"""Quadrature and the integral functionals of the perturbed sigma_2 problem.

A rotationally symmetric conformal exponent is sampled at the cell-centred
polar nodes ``theta_j = (j + 1/2) pi / N``. Its even reflection across both
poles is a cosine series, i.e. a Chebyshev series in ``s = cos(theta)``, so
values, ``du/ds`` and ``d2u/ds2`` are available anywhere in ``[-1, 1]`` to
spectral accuracy and without any pole singularity.

Integrals over the sphere are reduced to
``omega_{n-1} * int_{-1}^{1} f(s) (1 - s^2)^((n-2)/2) ds`` and evaluated with
Gauss-Legendre quadrature in ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import chebyshev as cheb
from numpy.polynomial import legendre

from sigmaflow.errors import ConeViolation, QuadratureError
from sigmaflow.sphere_geometry import (
    Convention,
    schouten_arrays,
    sigma1_arrays,
    sigma2_arrays,
    sphere_area,
    weight,
)

DEFAULT_QUAD_ORDER = 200


def gauss_legendre(order, a=-1.0, b=1.0):
    """Nodes and weights of the ``order``-point Gauss-Legendre rule on ``[a, b]``."""
    x, w = legendre.leggauss(order)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def panel_rule(edges, order):
    """Composite Gauss-Legendre rule over consecutive panels ``edges[i]..edges[i+1]``."""
    nodes, weights = zip(*(gauss_legendre(order, a, b) for a, b in zip(edges[:-1], edges[1:])))
    return np.concatenate(nodes), np.concatenate(weights)


def _check_finite(values, nodes):
    bad = ~np.isfinite(values)
    if np.any(bad):
        where = float(np.asarray(nodes)[np.argmax(bad)])
        raise QuadratureError(f"non-finite integrand at s={where:.17g}", location=where)


def integrate(f, n, order=DEFAULT_QUAD_ORDER):
    """``omega_{n-1} * int_{-1}^{1} f(s) (1 - s^2)^((n-2)/2) ds`` for zonal ``f``.

    ``f`` is called once with the array of quadrature nodes.
    """
    s, w = gauss_legendre(order)
    values = np.broadcast_to(np.asarray(f(s), dtype=float), s.shape)
    _check_finite(values, s)
    return sphere_area(n - 1) * float(np.sum(w * weight(s, n) * values))


class Grid:
    """Collocation nodes in the polar angle plus a Gauss-Legendre rule in ``s``."""

    def __init__(self, size=128, quad_order=DEFAULT_QUAD_ORDER):
        if size < 4:
            raise ValueError("grid needs at least 4 nodes")
        self.size = int(size)
        self.quad_order = int(quad_order)
        self.theta = (np.arange(self.size) + 0.5) * np.pi / self.size
        self.s = np.cos(self.theta)
        self.quad_nodes, self.quad_weights = gauss_legendre(self.quad_order)

    def __repr__(self):
        return f"Grid(size={self.size}, quad_order={self.quad_order})"

    @cached_property
    def to_coefficients(self):
        """Matrix taking node values to Chebyshev coefficients (a DCT-II)."""
        k = np.arange(self.size)[:, None]
        c = (2.0 / self.size) * np.cos(k * self.theta[None, :])
        c[0] *= 0.5
        return c

    def evaluation_matrices(self, x):
        """``(E0, E1, E2)`` mapping node values to ``u, u_s, u_ss`` at points ``x``."""
        x = np.asarray(x, dtype=float)
        eye = np.eye(self.size)
        d1 = cheb.chebder(eye, axis=0)
        d2 = cheb.chebder(eye, m=2, axis=0)
        e0 = cheb.chebvander(x, self.size - 1)
        e1 = cheb.chebvander(x, self.size - 2) @ d1
        e2 = cheb.chebvander(x, self.size - 3) @ d2
        c = self.to_coefficients
        return e0 @ c, e1 @ c, e2 @ c

    @cached_property
    def node_maps(self):
        return self.evaluation_matrices(self.s)

    @cached_property
    def quad_maps(self):
        return self.evaluation_matrices(self.quad_nodes)

    @cached_property
    def stacked_maps(self):
        """Grid-node maps followed by quad-node maps, stacked for a single product."""
        return np.vstack(self.node_maps + self.quad_maps)

    def volume_weights(self, n):
        """Quadrature weights of the round-sphere measure ``dvol(g0)`` at the quad nodes."""
        s = self.quad_nodes
        return sphere_area(n - 1) * self.quad_weights * weight(s, n)


@dataclass
class ConformalFactor:
    """Conformal exponent sampled on ``grid.theta``."""

    grid: Grid
    u_values: np.ndarray
    n: int
    convention: Convention = Convention.MINUS_TWO_U

    def __post_init__(self):
        self.u_values = np.asarray(self.u_values, dtype=float)
        if self.u_values.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} samples, got shape {self.u_values.shape}")
        if not np.all(np.isfinite(self.u_values)):
            raise ValueError("conformal exponent has non-finite samples")
        if self.n < 5:
            raise ValueError(f"dimension n={self.n} must be at least 5")

    @classmethod
    def from_theta(cls, grid, func, n, convention=Convention.MINUS_TWO_U):
        return cls(grid, func(grid.theta), n, convention)

    @classmethod
    def from_s(cls, grid, func, n, convention=Convention.MINUS_TWO_U):
        return cls(grid, func(grid.s), n, convention)

    def with_values(self, values):
        return ConformalFactor(self.grid, values, self.n, self.convention)

    def to_convention(self, convention):
        if convention is self.convention:
            return self
        return ConformalFactor(self.grid, -self.u_values, self.n, convention)

    def jets(self, where="quad"):
        """``(s, u, du/ds, d2u/ds2)`` at the quadrature nodes or the grid nodes."""
        if where == "quad":
            s, maps = self.grid.quad_nodes, self.grid.quad_maps
        elif where == "grid":
            s, maps = self.grid.s, self.grid.node_maps
        else:
            raise ValueError(f"unknown node set {where!r}")
        u0, u1, u2 = (m @ self.u_values for m in maps)
        return s, u0, u1, u2

    def schouten(self, where="quad"):
        """Radial and tangential eigenvalues of ``g0^{-1} A_g`` at a node set."""
        s, _, du, d2u = self.jets(where)
        return schouten_arrays(s, du, d2u, self.convention)


@dataclass
class PointwiseFields:
    """Quadrature-node data behind a :class:`FunctionalReport` (``g = exp(-2u) g0``)."""

    s: np.ndarray
    u: np.ndarray
    sigma1_w: np.ndarray
    sigma2_w: np.ndarray
    dvol0: np.ndarray
    quotient: np.ndarray  # (sigma_2(W) - nu) / sigma_1(W): flow velocity minus s_eps


@dataclass
class FunctionalReport:
    F2: float
    F0eps: float
    r_eps: float
    s_eps: float
    tildeF2eps: float
    vol: float
    total_scalar: float
    min_sigma1: float
    min_sigma2: float
    total_sigma1: float = 0.0
    dissipation: float = 0.0
    eps: float = 0.0
    n: int = 5
    fields: PointwiseFields | None = field(default=None, repr=False, compare=False)


def pointwise_sigmas(u):
    """``(s, u, sigma_1(W), sigma_2(W))`` at the quad nodes, ``u`` in the minus convention."""
    u = u.to_convention(Convention.MINUS_TWO_U)
    s, u0, du, d2u = u.jets("quad")
    lr, lt = schouten_arrays(s, du, d2u, Convention.MINUS_TWO_U)
    return s, u0, sigma1_arrays(lr, lt, u.n), sigma2_arrays(lr, lt, u.n)


def evaluate_functionals(u, eps):
    """All integral quantities of the perturbed problem for one conformal factor.

    With ``g = exp(-2u) g0`` the metric curvatures are ``sigma_k(g) =
    exp(2ku) sigma_k(W)`` and ``dvol(g) = exp(-nu) dvol(g0)``; ``W`` denotes
    the Schouten matrix relative to ``g0``. Raises :class:`ConeViolation` if
    ``sigma_1`` is not positive at some quadrature node.
    """
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"eps={eps} outside [0, 1)")
    n = u.n
    s, u0, s1w, s2w = pointwise_sigmas(u)
    _check_finite(s1w + s2w + u0, s)
    if np.min(s1w) <= 0.0:
        i = int(np.argmin(s1w))
        raise ConeViolation(
            f"sigma_1 = {s1w[i]:.6g} <= 0 at s={s[i]:.6g}; metric is outside C_1",
            min_sigma1=float(s1w[i] * np.exp(2 * u0[i])),
            location=float(s[i]),
        )
    dv0 = u.grid.volume_weights(n)
    e_vol = np.exp(-n * u0)
    e_perturbed = np.exp((2.0 * eps - n) * u0)
    F2 = float(np.sum(np.exp((4.0 - n) * u0) * s2w * dv0))
    F0 = float(np.sum(e_perturbed * dv0))
    vol = float(np.sum(e_vol * dv0))
    total_sigma1 = float(np.sum(np.exp((2.0 - n) * u0) * s1w * dv0))
    r = F2 / F0
    nu = r * np.exp(-(4.0 - 2.0 * eps) * u0)
    q = (s2w - nu) / s1w
    s_eps = -float(np.sum(e_perturbed * q * dv0)) / F0
    dissipation = float(np.sum(np.exp((4.0 - n) * u0) * s1w * q * q * dv0))
    return FunctionalReport(
        F2=F2,
        F0eps=F0,
        r_eps=r,
        s_eps=s_eps,
        tildeF2eps=F0 ** (-(n - 4.0) / (n - 2.0 * eps)) * F2,
        vol=vol,
        total_scalar=2.0 * (n - 1) * total_sigma1,
        min_sigma1=float(np.min(np.exp(2.0 * u0) * s1w)),
        min_sigma2=float(np.min(np.exp(4.0 * u0) * s2w)),
        total_sigma1=total_sigma1,
        dissipation=dissipation,
        eps=eps,
        n=n,
        fields=PointwiseFields(s, u0, s1w, s2w, dv0, q),
    )


def quotient_Yeps_value(u, eps):
    """The normalised functional ``F0eps^(-(n-4)/(n-2 eps)) * F2`` minimised by ``Y_eps``."""
    return evaluate_functionals(u, eps).tildeF2eps


def holder_lower_bound(report0, n, eps):
    """Lower bound for the eps-functional implied by Hoelder's inequality.

    ``report0`` must be the ``eps = 0`` report of the same metric; the bound is
    ``F2 / vol^((n-4)/n) * vol(g0)^(-2 eps (n-4) / (n (n - 2 eps)))`` and holds
    whenever ``F2 > 0``.
    """
    vol0 = sphere_area(n)
    return report0.tildeF2eps * vol0 ** (-2.0 * eps * (n - 4.0) / (n * (n - 2.0 * eps)))
