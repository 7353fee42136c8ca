"""Elementary symmetric functions, Garding cones and the sigma_2/sigma_1 quotient.

Everything here is a pure function of its inputs. Eigenvalue profiles may be
passed either as :class:`EigenProfile` instances or as plain sequences.
Matrix arguments are dense ``numpy`` arrays; they are symmetrised on entry so
that ``w[i, j] == w[j, i]`` holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from sigmaflow.errors import ConeViolation


@dataclass(frozen=True)
class EigenProfile:
    """Ordered eigenvalues ``lambda_1 .. lambda_n``.

    The compressed form ``(lambda_r, lambda_t, m)`` stands for one radial
    eigenvalue followed by ``lambda_t`` repeated ``m`` times; it is what the
    rotationally symmetric sphere computations produce.
    """

    values: tuple
    compressed: tuple | None = None

    def __post_init__(self):
        if len(self.values) < 1:
            raise ValueError("an eigenvalue profile needs at least one entry")

    @classmethod
    def from_values(cls, values):
        return cls(tuple(float(v) for v in np.ravel(values)))

    @classmethod
    def from_compressed(cls, lambda_r, lambda_t, m):
        m = int(m)
        if m < 0:
            raise ValueError("multiplicity must be non-negative")
        values = (float(lambda_r),) + (float(lambda_t),) * m
        return cls(values, (float(lambda_r), float(lambda_t), m))

    @property
    def n(self):
        return len(self.values)

    def as_array(self):
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class ConeLabel:
    k: int
    member: bool

    def __bool__(self):
        return self.member


def _values(profile):
    if isinstance(profile, EigenProfile):
        return profile.as_array()
    values = np.asarray(profile, dtype=float)
    if values.ndim == 0:
        values = values[None]
    return values


def elementary_symmetric(values, kmax=None):
    """Return ``[sigma_0, ..., sigma_kmax]`` of ``values`` along the last axis.

    Expands ``prod_i (1 + t * lambda_i)`` one factor at a time, which costs
    O(n * kmax) and avoids the cancellation of power-sum formulas. Leading
    axes of ``values`` are treated as a batch.
    """
    lam = np.asarray(values, dtype=float)
    n = lam.shape[-1]
    if kmax is None:
        kmax = n
    coeffs = np.zeros(lam.shape[:-1] + (kmax + 1,))
    coeffs[..., 0] = 1.0
    for i in range(n):
        li = lam[..., i : i + 1]
        top = min(i + 1, kmax)
        # right-hand side is evaluated on the previous row before assignment
        coeffs[..., 1 : top + 1] = coeffs[..., 1 : top + 1] + li * coeffs[..., :top]
    return coeffs


def sigma_k(profile, k):
    """k-th elementary symmetric function of an eigenvalue profile.

    >>> sigma_k([1, 1, 1, 1, 1], 2)
    10.0
    """
    if isinstance(profile, EigenProfile) and profile.compressed is not None:
        lam_r, lam_t, m = profile.compressed
        _check_k(k, m + 1, lower=0)
        if k == 0:
            return 1.0
        return float(comb(m, k) * lam_t**k + lam_r * comb(m, k - 1) * lam_t ** (k - 1))
    lam = _values(profile)
    _check_k(k, lam.shape[-1], lower=0)
    return float(elementary_symmetric(lam, k)[k])


def _check_k(k, n, lower):
    if not lower <= k <= n:
        raise ValueError(f"k={k} outside [{lower}, {n}]")


def in_gamma_plus(profile, k):
    """Membership in the open Garding cone: sigma_j > 0 for every j <= k.

    No tolerance is applied; shift the profile if a safety margin is needed.
    """
    lam = _values(profile)
    _check_k(k, lam.shape[-1], lower=1)
    sig = elementary_symmetric(lam, k)
    return ConeLabel(k=k, member=bool(np.all(sig[1:] > 0)))


def quotient(profile, k):
    """sigma_k / sigma_{k-1} of an eigenvalue profile (any 1 < k <= n)."""
    lam = _values(profile)
    _check_k(k, lam.shape[-1], lower=1)
    sig = elementary_symmetric(lam, k)
    if sig[k - 1] <= 0:
        raise ConeViolation(f"sigma_{k - 1} = {sig[k - 1]:.6g} is not positive", min_sigma1=sig[1])
    return float(sig[k] / sig[k - 1])


# ---------------------------------------------------------------------------
# matrix forms (k = 2 only)


def as_symmetric(a, atol=1e-12):
    """Return an exactly symmetric copy of ``a``.

    Raises ``ValueError`` if ``a`` is not square or is visibly asymmetric.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if np.max(np.abs(a - a.T), initial=0.0) > atol * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def sigma_k_matrix(w, k):
    """sigma_k of the eigenvalues of a symmetric matrix."""
    w = as_symmetric(w)
    return sigma_k(np.linalg.eigvalsh(w), k)


def _sigma12(w):
    tr = float(np.trace(w))
    return tr, 0.5 * (tr * tr - float(np.sum(w * w)))


def newton_transform(w):
    """First Newton transformation ``T = sigma_1(W) I - W``."""
    w = as_symmetric(w)
    return np.trace(w) * np.eye(w.shape[0]) - w


def _require_gamma1(s1):
    if not s1 > 0:
        raise ConeViolation(f"sigma_1(W) = {s1:.6g} is not positive; the quotient is not elliptic", min_sigma1=s1)


def quotient_F(w, nu=0.0):
    """``(sigma_2(W) - nu) / sigma_1(W)``."""
    w = as_symmetric(w)
    s1, s2 = _sigma12(w)
    _require_gamma1(s1)
    return (s2 - nu) / s1


def quotient_grad(w, nu=0.0):
    """Matrix of partial derivatives of :func:`quotient_F` with respect to ``w_ij``."""
    w = as_symmetric(w)
    s1, s2 = _sigma12(w)
    _require_gamma1(s1)
    eye = np.eye(w.shape[0])
    return (s1 * newton_transform(w) - (s2 - nu) * eye) / s1**2


def quotient_hessian_form(w, r):
    """Second derivative of sigma_2/sigma_1 at ``W`` in the direction ``R``.

    Uses the closed form ``-sum_ij (s1(W) r_ij - s1(R) w_ij)^2 / s1(W)^3``,
    which is never positive on the positive-trace half space.
    """
    w = as_symmetric(w)
    r = as_symmetric(r)
    s1 = float(np.trace(w))
    _require_gamma1(s1)
    d = s1 * r - float(np.trace(r)) * w
    return -float(np.sum(d * d)) / s1**3


def quotient_second_derivative(w, r, nu=0.0):
    """d^2/dh^2 of ``quotient_F(W + hR, nu)`` at ``h = 0``.

    The ``nu`` term contributes ``-2 nu sigma_1(R)^2 / sigma_1(W)^3`` on top of
    :func:`quotient_hessian_form`.
    """
    s1 = float(np.trace(as_symmetric(w)))
    tr_r = float(np.trace(as_symmetric(r)))
    return quotient_hessian_form(w, r) - 2.0 * nu * tr_r**2 / s1**3


# ---------------------------------------------------------------------------
# randomized property suite


def random_gamma1_pair(n, rng):
    """A random symmetric ``W`` with ``sigma_1(W) in [0.2 n, 2 n]`` and a random symmetric ``R``."""
    a = rng.standard_normal((n, n))
    w = 0.5 * (a + a.T)
    w += (rng.uniform(0.2, 2.0) - np.trace(w) / n) * np.eye(n)
    b = rng.standard_normal((n, n))
    return w, 0.5 * (b + b.T)


@dataclass(frozen=True)
class IdentityReport:
    trials: int
    max_deviation: float  # closed form vs central second difference
    max_hessian: float  # largest closed-form value; concavity wants <= 0
    max_nu_excess: float  # largest violation of the nu-perturbed bound


def central_second_difference(f, h):
    """Five-point central estimate of ``f''(0)``, error ``O(h^4)``."""
    return (-f(2 * h) + 16.0 * f(h) - 30.0 * f(0.0) + 16.0 * f(-h) - f(-2 * h)) / (12.0 * h * h)


def check_hessian_identity(n, trials, seed=0, nu_max=2.0, h=1e-3):
    """Compare the closed-form second derivative of sigma_2/sigma_1 with finite differences."""
    rng = np.random.default_rng(seed)
    dev = excess = 0.0
    top = -np.inf
    for _ in range(trials):
        w, r = random_gamma1_pair(n, rng)
        nu = rng.uniform(0.0, nu_max)
        fd = central_second_difference(lambda x: quotient_F(w + x * r, nu), h)
        exact = quotient_second_derivative(w, r, nu)
        dev = max(dev, abs(fd - exact))
        hess = quotient_hessian_form(w, r)
        top = max(top, hess)
        bound = -2.0 * nu * np.trace(r) ** 2 / np.trace(w) ** 3
        excess = max(excess, exact - bound)
    return IdentityReport(trials, float(dev), float(top), float(excess))
