"""Schouten eigenvalues of rotationally symmetric conformal metrics on S^n.

The round unit sphere is written as ``ds^2/(1-s^2) + (1-s^2) g_{S^{n-1}}`` with
``s = x_{n+1} = cos(theta)``. A conformal exponent ``u(s)`` then has a Hessian
with one radial eigenvalue and an ``(n-1)``-fold tangential one, so the
Schouten matrix relative to the round metric is diagonal in the same frame.

Two sign conventions are in use and both are carried explicitly:

* ``Convention.MINUS_TWO_U``: ``g = exp(-2u) g0`` (the flow convention),
* ``Convention.PLUS_TWO_U``:  ``g = exp(+2u) g0`` (the explicit examples).

Flipping the sign of ``u`` and its derivatives maps one onto the other.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from math import gamma, pi

import numpy as np


class Convention(enum.Enum):
    MINUS_TWO_U = "minus"
    PLUS_TWO_U = "plus"

    @property
    def sign(self):
        """Factor that turns a ``u`` in this convention into the ``exp(+2u)`` one."""
        return -1.0 if self is Convention.MINUS_TWO_U else 1.0


@dataclass(frozen=True)
class PointJet:
    s: float
    u: float
    du: float
    d2u: float
    n: int

    def __post_init__(self):
        if not -1.0 < self.s < 1.0:
            raise ValueError(f"height coordinate s={self.s} must lie strictly inside (-1, 1)")
        if self.n < 5:
            raise ValueError(f"dimension n={self.n} must be at least 5")


@dataclass(frozen=True)
class SchoutenEigs:
    lambda_r: float
    lambda_t: float

    def sigma1(self, n):
        return scalar_sigma1(self, n)

    def sigma2(self, n):
        return sigma2_point(self, n)

    def expanded(self, n):
        return np.array([self.lambda_r] + [self.lambda_t] * (n - 1))


def schouten_arrays(s, du, d2u, convention=Convention.MINUS_TWO_U):
    """Vectorised radial/tangential eigenvalues of ``g0^{-1} A_g``.

    ``du`` and ``d2u`` are derivatives with respect to ``s``. Returns
    ``(lambda_r, lambda_t)`` with the broadcast shape of the inputs.
    """
    s = np.asarray(s, dtype=float)
    sign = convention.sign
    p = sign * np.asarray(du, dtype=float)
    q = sign * np.asarray(d2u, dtype=float)
    c = 1.0 - s * s
    half_grad2 = 0.5 * c * p * p
    lambda_r = 0.5 - c * q + s * p + half_grad2
    lambda_t = 0.5 + s * p - half_grad2
    return lambda_r, lambda_t


def schouten_eigs(jet, convention=Convention.MINUS_TWO_U):
    lr, lt = schouten_arrays(jet.s, jet.du, jet.d2u, convention)
    return SchoutenEigs(float(lr), float(lt))


def sigma1_arrays(lambda_r, lambda_t, n):
    return lambda_r + (n - 1) * lambda_t


def sigma2_arrays(lambda_r, lambda_t, n):
    return 0.5 * (n - 1) * (n - 2) * lambda_t * lambda_t + (n - 1) * lambda_r * lambda_t


def sigma2_point(eigs, n):
    if n < 2:
        raise ValueError("sigma_2 needs n >= 2")
    return float(sigma2_arrays(eigs.lambda_r, eigs.lambda_t, n))


def scalar_sigma1(eigs, n):
    """sigma_1 of the eigenvalues; the scalar curvature is ``2 (n-1)`` times this."""
    return float(sigma1_arrays(eigs.lambda_r, eigs.lambda_t, n))


def weight(s, n):
    """Round-sphere volume density ``(1 - s^2)^((n-2)/2)`` in the height coordinate."""
    s = np.asarray(s, dtype=float)
    out = np.clip(1.0 - s * s, 0.0, None) ** (0.5 * (n - 2))
    return float(out) if out.ndim == 0 else out


def sphere_area(m):
    """Area of the unit m-sphere, ``2 pi^((m+1)/2) / Gamma((m+1)/2)``."""
    if m < 1:
        raise ValueError("m must be at least 1")
    return 2.0 * pi ** (0.5 * (m + 1)) / gamma(0.5 * (m + 1))
