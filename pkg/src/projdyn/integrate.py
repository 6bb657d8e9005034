"""Integration of screen dynamics.

The primary system is first order in (q, pi):

    q' = dh(q) ⌟ pi,    pi' = f(q)

It preserves h(q) and q ∧ pi exactly; after each accepted step the state is
nevertheless projected back (q <- q/h(q), pi <- q ∧ (dh ⌟ pi)) to remove
round-off drift.  The second-order form q'' = f_h(q) + λq is kept as an
independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DomainError,
    InvalidArgumentError,
    SingularityError,
    StiffnessError,
)
from .exterior import AlternatingForm, as_array, contract_arrays, wedge_arrays
from .forces import ForceField, distance_ratio
from .screens import ProjectiveState, Screen, ScreenState, decomposability_residual

TIME_LIMIT = "time_limit"
SINGULARITY = "singularity"
DOMAIN_EXIT = "domain_exit"
EVENT_LIMIT = "event_limit"


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "dopri5"
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    renormalize: bool = True
    singularity_cutoff: float = 1e-6
    step: float = 1e-3  # fixed step for rk4
    max_steps: int = 2_000_000

    def __post_init__(self):
        if self.method not in ("dopri5", "rk4"):
            raise InvalidArgumentError(f"unknown method {self.method!r}")
        if not (self.rel_tol > 0 and self.abs_tol > 0 and self.max_step > 0 and self.step > 0):
            raise InvalidArgumentError("tolerances and steps must be positive")


# --------------------------------------------------------------------------
# Dormand-Prince 5(4) coefficients, with the continuous extension of
# Shampine (1986) written as a 7x4 matrix acting on (x, x^2, x^3, x^4).

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


# --------------------------------------------------------------------------
# systems


class _BivectorSystem:
    form = "bivector"

    def __init__(self, fs: ForceField, s: Screen):
        self.fs, self.s, self.dim = fs, s, s.dim
        self.m = math.comb(s.dim, 2)

    def split(self, y):
        return y[: self.dim], y[self.dim:]

    def rhs(self, y):
        q, pi = self.split(y)
        return np.concatenate([contract_arrays(self.dim, 2, self.s.gradient(q), pi), self.fs.evaluate(q)])

    def project(self, y):
        q, pi = self.split(y)
        q = q / self.s.value(q)
        v = contract_arrays(self.dim, 2, self.s.gradient(q), pi)
        return np.concatenate([q, wedge_arrays(self.dim, 1, 1, q, v)])

    def to_sample(self, y):
        return self.split(y)

    def initial(self, q, pi):
        return np.concatenate([q, pi])


class _SecondOrderSystem(_BivectorSystem):
    form = "second_order"

    def rhs(self, y):
        q, v = self.split(y)
        grad = self.s.gradient(q)
        lam = -float(v @ self.s.hessian(q) @ v)
        f_h = contract_arrays(self.dim, 2, grad, self.fs.evaluate(q))
        return np.concatenate([v, f_h + lam * q])

    def project(self, y):
        q, v = self.split(y)
        hq = self.s.value(q)
        q = q / hq
        v = v * hq
        v = v - float(self.s.gradient(q) @ v) * q
        return np.concatenate([q, v])

    def to_sample(self, y):
        q, v = self.split(y)
        return q, wedge_arrays(self.dim, 1, 1, q, v)

    def initial(self, q, pi):
        return np.concatenate([q, contract_arrays(self.dim, 2, self.s.gradient(q), pi)])


# --------------------------------------------------------------------------
# dense output


@dataclass
class DenseOutput:
    """Piecewise quartic interpolant y(t0 + x h) = y0 + h Q (x, x^2, x^3, x^4)."""

    t0: np.ndarray
    h: np.ndarray
    y0: np.ndarray
    Q: np.ndarray
    system: object = field(repr=False)

    @property
    def t_start(self) -> float:
        return float(self.t0[0])

    @property
    def t_stop(self) -> float:
        return float(self.t0[-1] + self.h[-1])

    def _segment(self, t):
        k = int(np.searchsorted(self.t0, t, side="right")) - 1
        return min(max(k, 0), len(self.t0) - 1)

    def raw(self, t: float, k: int | None = None) -> np.ndarray:
        k = self._segment(t) if k is None else k
        x = (t - self.t0[k]) / self.h[k]
        return self.y0[k] + self.h[k] * self.Q[k] @ np.array([x, x * x, x**3, x**4])

    def raw_derivative(self, t: float, k: int | None = None) -> np.ndarray:
        k = self._segment(t) if k is None else k
        x = (t - self.t0[k]) / self.h[k]
        return self.Q[k] @ np.array([1.0, 2 * x, 3 * x * x, 4 * x**3])

    def state(self, t: float):
        """(q, pi) at time t."""
        return self.system.to_sample(self.raw(t))

    def derivative(self, t: float):
        """(dq/dt, dpi/dt) of the interpolant at time t."""
        y, dy = self.raw(t), self.raw_derivative(t)
        d = self.system.dim
        if self.system.form == "bivector":
            return dy[:d], dy[d:]
        q, v = y[:d], y[d:]
        dq, dv = dy[:d], dy[d:]
        return dq, wedge_arrays(d, 1, 1, dq, v) + wedge_arrays(d, 1, 1, q, dv)


def _hermite_Q(y0, y1, f0, f1, h):
    d = (y1 - y0) / h
    return np.stack([f0, 3 * d - 2 * f0 - f1, f0 + f1 - 2 * d, np.zeros_like(f0)], axis=-1)


# --------------------------------------------------------------------------
# trajectories and events


@dataclass(frozen=True)
class Leaf:
    """Oriented hyperplane crossing detector.

    A crossing is a sign change of <form, q> with the given direction (+1 for
    - to +).  If ``half_plane`` is given, <half_plane, q> must also be
    positive at the crossing, which selects one half of the hyperplane.
    """

    form: np.ndarray
    direction: int = 1
    half_plane: Optional[np.ndarray] = None

    def __post_init__(self):
        f = as_array(self.form)
        if not np.any(f):
            raise InvalidArgumentError("leaf form must be non-zero")
        object.__setattr__(self, "form", f)
        if self.half_plane is not None:
            object.__setattr__(self, "half_plane", as_array(self.half_plane))
        if self.direction not in (1, -1):
            raise InvalidArgumentError("direction must be +1 or -1")


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    q: np.ndarray
    pi: np.ndarray


@dataclass
class Trajectory:
    screen: Screen
    field: Optional[ForceField]
    t: np.ndarray
    q: np.ndarray
    pi: np.ndarray
    events: list = field(default_factory=list)
    terminated_by: str = TIME_LIMIT
    dense: Optional[DenseOutput] = field(default=None, repr=False)
    method: str = "dopri5"

    def __len__(self):
        return len(self.t)

    @property
    def dim(self) -> int:
        return self.screen.dim

    def sample(self, k: int):
        return self.t[k], self.q[k], self.pi[k]

    def state_at(self, t: float):
        """(q, pi) at an arbitrary time, from the dense output when available."""
        if self.dense is not None:
            return self.dense.state(t)
        return _hermite_state(self, t)

    def velocity(self, k: int) -> np.ndarray:
        return contract_arrays(self.dim, 2, self.screen.gradient(self.q[k]), self.pi[k])

    def h_residuals(self) -> np.ndarray:
        return np.array([abs(self.screen.value(q) - 1.0) for q in self.q])

    def decomposability_residuals(self) -> np.ndarray:
        return np.array([decomposability_residual(q, p) for q, p in zip(self.q, self.pi)])

    def last_state(self) -> ProjectiveState:
        return ProjectiveState(self.q[-1], self.pi[-1])


def _rhs_sample(traj: Trajectory, q, pi):
    dq = contract_arrays(traj.dim, 2, traj.screen.gradient(q), pi)
    return np.concatenate([dq, traj.field.evaluate(q)])


def _hermite_state(traj: Trajectory, t: float):
    if traj.field is None:
        raise InvalidArgumentError("sample-only trajectory without a field has no interpolant")
    k = int(np.clip(np.searchsorted(traj.t, t, side="right") - 1, 0, len(traj.t) - 2))
    h = traj.t[k + 1] - traj.t[k]
    y0 = np.concatenate([traj.q[k], traj.pi[k]])
    y1 = np.concatenate([traj.q[k + 1], traj.pi[k + 1]])
    Q = _hermite_Q(y0, y1, _rhs_sample(traj, traj.q[k], traj.pi[k]), _rhs_sample(traj, traj.q[k + 1], traj.pi[k + 1]), h)
    x = (t - traj.t[k]) / h
    y = y0 + h * Q @ np.array([x, x * x, x**3, x**4])
    return y[: traj.dim], y[traj.dim:]


# --------------------------------------------------------------------------
# driver


def _initial_step(system, y0, f0, t_span, cfg):
    scale = cfg.abs_tol + np.abs(y0) * cfg.rel_tol
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, t_span, cfg.max_step)
    y1 = y0 + h0 * f0
    f1 = system.rhs(y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, t_span, cfg.max_step)


def _dopri_step(system, y, f0, h):
    K = np.empty((7, y.size))
    K[0] = f0
    for s in range(1, 6):
        dy = h * (np.array(_A[s]) @ K[:s])
        K[s] = system.rhs(y + dy)
    y_new = y + h * (_B @ K[:6])
    K[6] = system.rhs(y_new)
    err = h * (_E @ K)
    return y_new, K, err


def _rk4_step(system, y, f0, h):
    k1 = f0
    k2 = system.rhs(y + 0.5 * h * k1)
    k3 = system.rhs(y + 0.5 * h * k2)
    k4 = system.rhs(y + h * k3)
    y_new = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y_new, system.rhs(y_new)


def _find_crossing(dense, k, leaf, system):
    """Root of the leaf coordinate inside segment k, or None.

    A start lying on the leaf up to rounding is not a crossing.
    """
    t_a = dense.t0[k]
    t_b = t_a + dense.h[k]

    def g(t):
        q = dense.raw(t, k)[: system.dim]
        return float(leaf.form @ q)

    ga, gb = g(t_a), g(t_b)
    if k == 0 and abs(ga) <= 1e-14 * np.linalg.norm(dense.raw(t_a, k)[: system.dim]):
        ga = 0.0
    if leaf.direction * ga >= 0.0 or leaf.direction * gb < 0.0:
        return None
    if gb == 0.0:
        t_star = t_b
    else:
        t_star = brentq(g, t_a, t_b, xtol=1e-15 * max(1.0, abs(t_b)), rtol=4 * np.finfo(float).eps, maxiter=200)
    y = dense.raw(t_star, k)
    q = y[: system.dim]
    # bisection polish when brentq stops short of the residual target
    lo, hi = t_a, t_b
    for _ in range(200):
        if abs(leaf.form @ q) < 1e-12 * np.linalg.norm(q):
            break
        mid = 0.5 * (lo + hi)
        if leaf.direction * g(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        t_star = 0.5 * (lo + hi)
        q = dense.raw(t_star, k)[: system.dim]
    if leaf.half_plane is not None and float(leaf.half_plane @ q) <= 0.0:
        return None
    return t_star


def _event_state(system, dense, t, k):
    y = system.project(dense.raw(t, k))
    return system.to_sample(y)


def _solve(system, y0, t_end, cfg: IntegratorConfig, leaves: Sequence[Leaf], max_events):
    t = 0.0
    y = system.project(y0) if cfg.renormalize else np.array(y0, dtype=float)
    f = system.rhs(y)
    seg_t0, seg_h, seg_y0, seg_Q = [], [], [], []
    events: list[Event] = []
    status = TIME_LIMIT
    center = system.fs.center
    adaptive = cfg.method == "dopri5"
    h = _initial_step(system, y, f, t_end, cfg) if adaptive else min(cfg.step, t_end)
    # segment lists are shared with the dense output; indexed access by
    # segment number works on lists, arrays are built once at the end
    dense = DenseOutput(seg_t0, seg_h, seg_y0, seg_Q, system)
    steps = 0

    while t < t_end:
        steps += 1
        if steps > cfg.max_steps:
            raise StiffnessError(f"exceeded {cfg.max_steps} steps at t={t}")
        h = min(h, t_end - t, cfg.max_step)
        min_step = 1e-14 * max(1.0, abs(t))
        if h < min_step:
            if t_end - t <= min_step:
                break
            status = SINGULARITY if center is not None else None
            if status is None:
                raise StiffnessError(f"step size underflow at t={t}")
            break
        try:
            if adaptive:
                y_new, K, err = _dopri_step(system, y, f, h)
                scale = cfg.abs_tol + np.maximum(np.abs(y), np.abs(y_new)) * cfg.rel_tol
                err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
            else:
                y_new, f_new = _rk4_step(system, y, f, h)
                err_norm = 0.0
        except SingularityError:
            h *= 0.25
            continue
        except DomainError:
            h *= 0.25
            if h < min_step:
                status = DOMAIN_EXIT
                break
            continue
        if not np.all(np.isfinite(y_new)) or err_norm > 1.0:
            if adaptive:
                fac = 0.2 if not np.isfinite(err_norm) else max(0.2, 0.9 * err_norm ** -0.2)
                h *= fac
                continue
            raise StiffnessError("non-finite state in fixed-step integration")
        seg_t0.append(t)
        seg_h.append(h)
        seg_y0.append(y)
        seg_Q.append(K.T @ _P if adaptive else _hermite_Q(y, y_new, f, f_new, h))
        k = len(seg_t0) - 1
        t = t + h
        if cfg.renormalize:
            try:
                y_new = system.project(y_new)
            except DomainError:
                status = DOMAIN_EXIT
                break
        y = y_new
        if leaves:
            hits = []
            for leaf in leaves:
                t_star = _find_crossing(dense, k, leaf, system)
                if t_star is not None:
                    hits.append(t_star)
            for t_star in sorted(hits):
                q_e, pi_e = _event_state(system, dense, t_star, k)
                events.append(Event(float(t_star), "crossing", q_e, pi_e))
                if max_events is not None and len(events) >= max_events:
                    status = EVENT_LIMIT
                    break
            if status == EVENT_LIMIT:
                break
        if center is not None and distance_ratio(y[: system.dim], center) < cfg.singularity_cutoff:
            status = SINGULARITY
            break
        try:
            f = system.rhs(y)
        except SingularityError:
            status = SINGULARITY
            break
        if adaptive:
            fac = 10.0 if err_norm == 0.0 else min(10.0, max(0.2, 0.9 * err_norm ** -0.2))
            h *= fac
    n = y.size
    dense.t0 = np.asarray(seg_t0, dtype=float)
    dense.h = np.asarray(seg_h, dtype=float)
    dense.y0 = np.asarray(seg_y0, dtype=float).reshape(-1, n)
    dense.Q = np.asarray(seg_Q, dtype=float).reshape(-1, n, 4)
    return dense, events, status, y


def _grid(t_eval, t_stop, dense):
    if t_eval is None:
        return np.append(dense.t0, t_stop) if len(dense.t0) else np.array([0.0])
    if np.isscalar(t_eval):
        n = int(t_eval)
        if n < 2:
            raise InvalidArgumentError("an integer output grid needs at least 2 points")
        return np.linspace(0.0, t_stop, n)
    grid = np.asarray(t_eval, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise InvalidArgumentError("output times must be strictly increasing")
    return grid[grid <= t_stop * (1 + 1e-15) + 1e-300]


def _initial_arrays(s: Screen, init):
    if isinstance(init, ScreenState):
        q0 = init.q.coeffs
        pi0 = wedge_arrays(s.dim, 1, 1, q0, init.qdot.coeffs)
    elif isinstance(init, ProjectiveState):
        q0, pi0 = init.ray.coeffs, init.pi.coeffs
    else:
        raise InvalidArgumentError("initial state must be a ScreenState or ProjectiveState")
    if q0.size != s.dim:
        raise InvalidArgumentError("initial state and screen dimensions differ")
    q0 = q0 / s.value(q0)
    return q0, pi0


def _run(system, fs, s, init, t_end, cfg, t_eval, events, max_events, on_singularity):
    if not t_end > 0:
        raise InvalidArgumentError("t_end must be positive")
    cfg = cfg or IntegratorConfig()
    leaves = [events] if isinstance(events, Leaf) else list(events or ())
    q0, pi0 = _initial_arrays(s, init)
    dense, evs, status, _ = _solve(system, system.initial(q0, pi0), t_end, cfg, leaves, max_events)
    t_stop = dense.t_stop if len(dense.t0) else 0.0
    grid = _grid(t_eval, t_stop, dense)
    qs, pis = [], []
    for tk in grid:
        y = dense.raw(tk) if len(dense.t0) else system.initial(q0, pi0)
        if cfg.renormalize:
            y = system.project(y)
        q, pi = system.to_sample(y)
        qs.append(q)
        pis.append(pi)
    traj = Trajectory(s, fs, grid, np.array(qs), np.array(pis), evs, status, dense, cfg.method)
    if status == SINGULARITY and on_singularity == "raise":
        raise SingularityError(f"trajectory entered the singular region at t={t_stop}", trajectory=traj)
    return traj


def integrate(fs: ForceField, s: Screen, init, t_end: float, cfg: IntegratorConfig | None = None,
              t_eval=None, events: Iterable[Leaf] | Leaf = (), max_events: int | None = None,
              on_singularity: str = "stop") -> Trajectory:
    """Integrate q' = dh(q) ⌟ pi, pi' = f(q) on the screen ``s``.

    ``t_eval`` is None (accepted steps), an integer number of evenly spaced
    samples, or an explicit increasing array of times starting at 0.  Leaf
    crossings are recorded as events; integration stops after
    ``max_events`` of them when given.  When the state enters the singular
    cone around [c] the trajectory is truncated and flagged, or a
    SingularityError carrying it is raised if ``on_singularity="raise"``.
    """
    return _run(_BivectorSystem(fs, s), fs, s, init, t_end, cfg, t_eval, events, max_events, on_singularity)


def integrate_second_order(fs: ForceField, s: Screen, init, t_end: float, cfg: IntegratorConfig | None = None,
                           t_eval=None, events=(), max_events=None, on_singularity="stop") -> Trajectory:
    """Same contract as :func:`integrate`, solving q'' = f_h(q) + λq instead."""
    return _run(_SecondOrderSystem(fs, s), fs, s, init, t_end, cfg, t_eval, events, max_events, on_singularity)


# --------------------------------------------------------------------------
# post-processing


def detect_crossings(traj: Trajectory, leaf) -> list[Event]:
    """Oriented crossings of a leaf, refined on the trajectory's interpolant.

    ``leaf`` is a :class:`Leaf` or a bare covector (direction - to +).
    Trajectories without dense output (imported or transported) fall back to
    cubic Hermite interpolation of the samples using the field.
    """
    if not isinstance(leaf, Leaf):
        leaf = Leaf(leaf.coeffs if isinstance(leaf, AlternatingForm) else leaf)
    dense = traj.dense
    system = dense.system if dense is not None else _BivectorSystem(traj.field, traj.screen)
    if dense is None:
        if traj.field is None:
            raise InvalidArgumentError("trajectory has neither dense output nor a field")
        dense = _hermite_dense(traj, system)
    out = []
    for k in range(len(dense.t0)):
        t_star = _find_crossing(dense, k, leaf, system)
        if t_star is not None:
            q, pi = _event_state(system, dense, t_star, k)
            out.append(Event(float(t_star), "crossing", q, pi))
    return out


def _hermite_dense(traj: Trajectory, system) -> DenseOutput:
    ys = np.concatenate([traj.q, traj.pi], axis=1)
    fs = np.array([_rhs_sample(traj, q, p) for q, p in zip(traj.q, traj.pi)])
    hs = np.diff(traj.t)
    Q = np.array([_hermite_Q(ys[k], ys[k + 1], fs[k], fs[k + 1], hs[k]) for k in range(len(hs))])
    return DenseOutput(traj.t[:-1].copy(), hs, ys[:-1].copy(), Q, system)


def transport_to_screen(traj: Trajectory, s1: Screen) -> Trajectory:
    """Carry a trajectory to another screen along its rays.

    Positions become q / h1(q), pi is unchanged, and the new clock satisfies
    dτ/dt = h1(q)^-2, accumulated with the endpoint-corrected trapezoid rule
    (fourth order; uses the exact derivative of the integrand).
    """
    if s1.dim != traj.dim:
        raise InvalidArgumentError("screen dimension mismatch")
    qs = []
    g = np.empty(len(traj))
    dg = np.empty(len(traj))
    for k, (tk, q, pi) in enumerate(zip(traj.t, traj.q, traj.pi)):
        if not s1.in_domain(q):
            raise DomainError(f"sample at t={tk} leaves the domain of the target screen")
        h1 = s1.value(q)
        if h1 <= 0.0:
            raise DomainError(f"sample at t={tk} leaves the domain of the target screen")
        qdot = contract_arrays(traj.dim, 2, traj.screen.gradient(q), pi)
        g[k] = h1**-2
        dg[k] = -2.0 * h1**-3 * float(s1.gradient(q) @ qdot)
        qs.append(q / h1)
    dt = np.diff(traj.t)
    incr = 0.5 * dt * (g[:-1] + g[1:]) + dt**2 / 12.0 * (dg[:-1] - dg[1:])
    tau = np.concatenate([[traj.t[0]], traj.t[0] + np.cumsum(incr)])
    events = []
    for ev in traj.events:
        k = int(np.clip(np.searchsorted(traj.t, ev.t, side="right") - 1, 0, len(traj.t) - 1))
        h1 = s1.value(ev.q)
        qdot = contract_arrays(traj.dim, 2, traj.screen.gradient(ev.q), ev.pi)
        g_ev = h1**-2
        dg_ev = -2.0 * h1**-3 * float(s1.gradient(ev.q) @ qdot)
        d = ev.t - traj.t[k]
        t_ev = tau[k] + 0.5 * d * (g[k] + g_ev) + d**2 / 12.0 * (dg[k] - dg_ev)
        events.append(replace(ev, t=float(t_ev), q=ev.q / h1))
    return Trajectory(s1, traj.field, tau, np.array(qs), traj.pi.copy(), events, traj.terminated_by, None, traj.method)
