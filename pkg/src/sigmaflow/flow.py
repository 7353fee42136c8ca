"""Time integration of the volume-preserving perturbed sigma_2 flow.

For ``g = exp(-2u) g0`` the flow reads

    du/dt = (sigma_2(W) - nu) / sigma_1(W) + s_eps,   nu = r_eps exp(-(4 - 2 eps) u),

where ``W`` is the Schouten matrix relative to ``g0``, ``r_eps = F2 / F0eps`` and
``s_eps`` is the constant that keeps ``F0eps`` fixed. ``F2`` decreases along
the flow and stationary points solve ``sigma_2(g) = r_eps exp(2 eps u)``.

The spatial discretisation is the Chebyshev/cosine collocation of
:class:`sigmaflow.functionals.Grid`; time stepping is explicit (classical
RK4 by default, forward Euler on request) with step rejection and halving.
The explicit step is limited by ``dt ~ 1 / N^2`` for ``N`` polar nodes.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from sigmaflow.errors import ConeViolation, StepFailure
from sigmaflow.functionals import ConformalFactor, FunctionalReport, Grid, evaluate_functionals
from sigmaflow.sphere_geometry import Convention, schouten_arrays, sigma1_arrays, sigma2_arrays

log = logging.getLogger(__name__)

MAX_HALVINGS = 40
MONOTONE_SLACK = 1e-12
RK4_STABILITY = 2.78  # extent of the RK4 stability region on the negative real axis
EULER_STABILITY = 2.0


class Status(enum.Enum):
    CONVERGED = "Converged"
    MAX_TIME_REACHED = "MaxTimeReached"
    CONE_VIOLATION = "ConeViolation"
    STEP_FAILURE = "StepFailure"


@dataclass
class FlowConfig:
    n: int = 5
    eps: float = 0.1
    grid_size: int = 128
    quad_order: int = 200
    dt_init: float = 1e-3
    dt_policy: str = "adaptive"  # "fixed" or "adaptive"
    scheme: str = "rk4"  # "rk4" or "euler"
    cfl_safety: float = 0.8
    cfl_interval: int = 1000  # accepted steps between stable-step re-estimates
    max_time: float = 50.0
    max_steps: int | None = None
    residual_tol: float = 1e-6
    conservation_tol: float = 1e-8
    sigma1_floor: float = 0.0

    def __post_init__(self):
        if self.n < 5:
            raise ValueError(f"the flow requires n >= 5, got n={self.n}")
        if not 0.0 <= self.eps < 1.0:
            raise ValueError(f"eps={self.eps} outside [0, 1)")
        if self.grid_size < 32:
            raise ValueError("grid_size must be at least 32")
        if self.dt_init <= 0 or self.residual_tol <= 0:
            raise ValueError("dt_init and residual_tol must be positive")
        if self.dt_policy not in ("fixed", "adaptive"):
            raise ValueError(f"unknown dt_policy {self.dt_policy!r}")
        if self.scheme not in ("rk4", "euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.sigma1_floor < 0:
            raise ValueError("sigma1_floor must be non-negative")

    def grid(self):
        return Grid(self.grid_size, self.quad_order)


@dataclass
class DiagnosticsRow:
    time: float
    dt: float
    F2: float
    F0eps: float
    r_eps: float
    s_eps: float
    min_sigma1: float
    min_sigma2: float
    residual: float

    FIELDS = ("time", "dt", "F2", "F0eps", "r_eps", "s_eps", "min_sigma1", "min_sigma2", "residual")

    def as_tuple(self):
        return tuple(getattr(self, name) for name in self.FIELDS)


class FlowOperator:
    """Right-hand side of the flow on node values of ``u`` (minus convention)."""

    def __init__(self, grid, n, eps):
        self.grid = grid
        self.n = n
        self.eps = eps
        self._stack = grid.stacked_maps
        self._dvol0 = grid.volume_weights(n)
        self._s_all = np.concatenate((grid.s, grid.quad_nodes))

    def evaluate(self, values):
        """Velocity and node data for one set of node values."""
        n, eps = self.n, self.eps
        N = self.grid.size
        Q = self.grid.quad_order
        out = self._stack @ values
        u_all = np.concatenate((out[:N], out[3 * N : 3 * N + Q]))
        du_all = np.concatenate((out[N : 2 * N], out[3 * N + Q : 3 * N + 2 * Q]))
        d2u_all = np.concatenate((out[2 * N : 3 * N], out[3 * N + 2 * Q :]))
        lr, lt = schouten_arrays(self._s_all, du_all, d2u_all, Convention.MINUS_TWO_U)
        s1_all = sigma1_arrays(lr, lt, n)
        s2_all = sigma2_arrays(lr, lt, n)
        bad = float(np.min(s1_all))
        if not bad > 0.0:
            i = int(np.argmin(s1_all))
            where = self._s_all[i]
            raise ConeViolation(
                f"sigma_1 = {bad:.6g} <= 0 (lost parabolicity at s={where:.6g})",
                min_sigma1=bad,
                location=float(where),
            )
        u, du, d2u, s1, s2 = u_all[:N], du_all[:N], d2u_all[:N], s1_all[:N], s2_all[:N]
        uq, s1q, s2q = u_all[N:], s1_all[N:], s2_all[N:]
        e_pert = np.exp((2.0 * eps - n) * uq) * self._dvol0
        F0 = float(np.sum(e_pert))
        r = float(np.sum(np.exp((4.0 - n) * uq) * s2q * self._dvol0)) / F0
        qq = (s2q - r * np.exp(-(4.0 - 2.0 * eps) * uq)) / s1q
        s_eps = -float(np.sum(e_pert * qq)) / F0
        q = (s2 - r * np.exp(-(4.0 - 2.0 * eps) * u)) / s1
        return _NodeData(
            velocity=q + s_eps,
            quotient=q,
            min_sigma1=float(np.min(np.exp(2.0 * u) * s1)),
            c2_norm=float(np.max(np.abs(u)) + np.max(np.abs(du)) + np.max(np.abs(d2u))),
        )

    def __call__(self, values):
        return self.evaluate(values).velocity


@dataclass
class _NodeData:
    velocity: np.ndarray
    quotient: np.ndarray
    min_sigma1: float
    c2_norm: float


@dataclass
class FlowState:
    u: ConformalFactor
    time: float
    report: FunctionalReport
    velocity: np.ndarray = field(repr=False)
    quotient: np.ndarray = field(repr=False)
    eps: float = 0.0
    last_dt: float = 0.0
    grid_min_sigma1: float = np.inf
    c2: float = 0.0

    @property
    def residual(self):
        """Max-norm of ``(sigma_2(g) - r_eps e^{2 eps u}) e^{-2u} / sigma_1(g)`` on the grid."""
        return float(np.max(np.abs(self.quotient)))

    @property
    def min_sigma1(self):
        """Smallest sigma_1(g) over grid and quadrature nodes."""
        return min(self.grid_min_sigma1, self.report.min_sigma1)

    @classmethod
    def from_factor(cls, u, eps, time=0.0, last_dt=0.0):
        u = u.to_convention(Convention.MINUS_TWO_U)
        report = evaluate_functionals(u, eps)
        data = FlowOperator(u.grid, u.n, eps).evaluate(u.u_values)
        return cls(u, time, report, data.velocity, data.quotient, eps, last_dt, data.min_sigma1, data.c2_norm)

    def row(self):
        r = self.report
        return DiagnosticsRow(
            self.time, self.last_dt, r.F2, r.F0eps, r.r_eps, r.s_eps, self.min_sigma1, r.min_sigma2, self.residual
        )

    def c2_norm(self):
        """``max|u| + max|u_s| + max|u_ss|`` over the grid nodes."""
        return self.c2


def velocity(state):
    """du/dt at the grid nodes of ``state`` (recomputed from ``state.u``)."""
    return FlowOperator(state.u.grid, state.u.n, state.eps)(state.u.u_values)


def _advance(op, values, dt, scheme, k1=None):
    if k1 is None:
        k1 = op(values)
    if scheme == "euler":
        return values + dt * k1
    k2 = op(values + 0.5 * dt * k1)
    k3 = op(values + 0.5 * dt * k2)
    k4 = op(values + dt * k3)
    return values + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(state, dt, config=None, operator=None):
    """Advance ``state`` by one explicit step of size ``dt``.

    Without ``config`` (or with ``dt_policy="fixed"``) the step is taken as is
    using RK4 (or ``config.scheme``). Under the adaptive policy a step is
    rejected and ``dt`` halved if it raises ``F2`` by more than
    ``1e-12 |F2|``, drops ``min sigma_1`` below ``sigma1_floor``, moves
    ``F0eps`` by more than ``conservation_tol * dt * F0eps``, or leaves the
    cone at an intermediate stage. Raises :class:`StepFailure` after 40
    halvings.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    scheme = config.scheme if config is not None else "rk4"
    adaptive = config is not None and config.dt_policy == "adaptive"
    op = operator or FlowOperator(state.u.grid, state.u.n, state.eps)
    before = state.report
    last_error = None
    for _ in range(MAX_HALVINGS + 1):
        try:
            values = _advance(op, state.u.u_values, dt, scheme, k1=state.velocity)
            new = FlowState.from_factor(state.u.with_values(values), state.eps, state.time + dt, dt)
        except ConeViolation as exc:
            if not adaptive:
                raise
            last_error = exc
            dt *= 0.5
            continue
        if not adaptive:
            return new
        after = new.report
        reason = None
        if after.F2 > before.F2 + MONOTONE_SLACK * abs(before.F2):
            reason = f"F2 increased by {after.F2 - before.F2:.3e}"
        elif new.min_sigma1 < config.sigma1_floor:
            reason = f"min sigma_1 {new.min_sigma1:.3e} below floor"
        elif abs(after.F0eps - before.F0eps) > config.conservation_tol * dt * before.F0eps:
            reason = f"F0eps drift {after.F0eps - before.F0eps:.3e}"
        if reason is None:
            return new
        log.debug("rejecting step dt=%.3e at t=%.6g: %s", dt, state.time, reason)
        dt *= 0.5
    if isinstance(last_error, ConeViolation):
        raise last_error
    raise StepFailure(f"step size underflow after {MAX_HALVINGS} halvings at t={state.time:.6g}")


def stable_dt(state, scheme="rk4", safety=0.8):
    """Largest explicit step allowed by the spectrum of the linearised flow.

    The Jacobian of the velocity is formed by forward differences on the grid
    nodes; its spectral radius bounds the stable step of the chosen scheme.
    """
    op = FlowOperator(state.u.grid, state.u.n, state.eps)
    v0 = state.velocity
    values = state.u.u_values
    h = 1e-7 * max(1.0, float(np.max(np.abs(values))))
    jac = np.empty((values.size, values.size))
    for j in range(values.size):
        bumped = values.copy()
        bumped[j] += h
        jac[:, j] = (op(bumped) - v0) / h
    radius = float(np.max(np.abs(np.linalg.eigvals(jac))))
    limit = RK4_STABILITY if scheme == "rk4" else EULER_STABILITY
    return safety * limit / radius if radius > 0 else np.inf


@dataclass
class Trajectory:
    rows: list
    final: FlowState
    status: Status
    initial: FlowState
    min_sigma1: float
    c2_bound: float
    c2_bound_half: float
    steps: int = 0
    rejections: int = 0
    message: str = ""

    @property
    def converged(self):
        return self.status is Status.CONVERGED


def renormalize(u, eps):
    """Shift ``u`` by a constant so that ``F0eps = 1``."""
    u = u.to_convention(Convention.MINUS_TWO_U)
    F0 = evaluate_functionals(u, eps).F0eps
    shift = np.log(F0) / (u.n - 2.0 * eps)
    return u.with_values(u.u_values + shift)


def initial_state(config, u0):
    """Validate ``u0`` and return the renormalised starting state.

    Raises :class:`ConeViolation` if ``u0`` is not in ``C_1``.
    """
    if u0.n != config.n:
        raise ValueError(f"profile dimension {u0.n} does not match config n={config.n}")
    u = renormalize(u0, config.eps)
    return FlowState.from_factor(u, config.eps)


def run(config, u0, sink=None):
    """Integrate the flow from ``u0`` until stationary, out of time, or failed.

    ``sink`` (optional) is called with each :class:`DiagnosticsRow` as it is
    produced. The initial profile is shifted so that ``F0eps = 1``; a profile
    outside ``C_1`` raises :class:`ConeViolation` before any step is taken.
    """
    state = initial_state(config, u0)
    initial = state
    op = FlowOperator(state.u.grid, config.n, config.eps)
    rows = []

    def emit(s):
        row = s.row()
        rows.append(row)
        if sink is not None:
            sink(row)

    emit(state)
    dt = config.dt_init
    if config.dt_policy == "adaptive":
        dt = min(dt, stable_dt(state, config.scheme, config.cfl_safety))
    min_s1 = state.min_sigma1
    c2 = state.c2_norm()
    c2_history = [(state.time, c2)]
    steps = rejections = 0
    status, message = Status.MAX_TIME_REACHED, ""
    while True:
        if state.residual <= config.residual_tol:
            status = Status.CONVERGED
            break
        if state.time >= config.max_time or (config.max_steps is not None and steps >= config.max_steps):
            status = Status.MAX_TIME_REACHED
            break
        try:
            new = step(state, min(dt, config.max_time - state.time), config, op)
        except ConeViolation as exc:
            status, message = Status.CONE_VIOLATION, str(exc)
            break
        except StepFailure as exc:
            status, message = Status.STEP_FAILURE, str(exc)
            break
        if new.last_dt < dt and config.dt_policy == "adaptive" and new.time < config.max_time:
            rejections += 1
            dt = new.last_dt
        state = new
        steps += 1
        if config.dt_policy == "adaptive" and steps % config.cfl_interval == 0:
            dt = min(config.dt_init, stable_dt(state, config.scheme, config.cfl_safety))
        emit(state)
        min_s1 = min(min_s1, state.min_sigma1)
        c2 = max(c2, state.c2_norm())
        c2_history.append((state.time, c2))
    if status is Status.CONVERGED and state.min_sigma1 <= config.sigma1_floor:
        status, message = Status.CONE_VIOLATION, "sigma_1 reached the floor"
    half = 0.5 * state.time
    c2_half = next((b for t, b in c2_history if t >= half), c2)
    return Trajectory(rows, state, status, initial, min_s1, c2, c2_half, steps, rejections, message)


def dissipation_check(before, after, dt):
    """Relative mismatch between the measured and predicted decay of ``F2``.

    Compares ``(F2(after) - F2(before)) / dt`` with
    ``-(n - 4) int e^{2u} sigma_1(g) (du/dt - s_eps)^2 dvol(g)`` evaluated at
    the state whose ``u`` is the average of the two. Returns 0 when both
    sides are below 1e-14.
    """
    measured = (after.report.F2 - before.report.F2) / dt
    mid_values = 0.5 * (before.u.u_values + after.u.u_values)
    mid = evaluate_functionals(before.u.with_values(mid_values), before.eps)
    predicted = -(before.u.n - 4.0) * mid.dissipation
    if abs(measured) < 1e-14 and abs(predicted) < 1e-14:
        return 0.0
    return abs(measured - predicted) / max(abs(predicted), abs(measured))
