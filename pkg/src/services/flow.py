"""
Flow Service
Adaptive Dormand-Prince integration with dense output, event location and
arclength bookkeeping; tangent and adjoint transport along trajectories.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import RK45, OdeSolution, solve_ivp
from scipy.optimize import brentq

from services.errors import ConfigError, FlipscopeError
from services.model import as_field

logger = logging.getLogger(__name__)

DEFAULT_REL_TOL = 1e-10
DEFAULT_ABS_TOL = 1e-12
DEFAULT_T_MAX = 5000.0
ESCAPE_RADIUS = 50.0
GRAZING_TOL = 1e-12
# Surfaces through the initial state do not fire on the first step
START_SURFACE_TOL = 1e-12
# Dense-output samples inside each step; catches pairs of crossings within one step
INTERIOR_SAMPLES = 4

# Root polishing on the dense output
_ROOT_XTOL = 1e-14
_ROOT_RTOL = 4 * np.finfo(float).eps


class StepSizeUnderflow(FlipscopeError):
    """Error when the adaptive step falls below floating-point spacing"""
    pass


class Divergence(FlipscopeError):
    """Error when a trajectory leaves the escape ball"""

    def __init__(self, message: str, trajectory: "Trajectory", **kwargs):
        super().__init__(message, **kwargs)
        self.trajectory = trajectory

    @property
    def last_state(self) -> np.ndarray:
        return self.trajectory.final_state


class Direction(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"

    @property
    def sign(self) -> float:
        return 1.0 if self is Direction.FORWARD else -1.0


class Termination(str, Enum):
    TIME_LIMIT = "time-limit"
    ARCLENGTH = "arclength-cap"
    EVENT = "event"
    DIVERGED = "diverged"


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = DEFAULT_REL_TOL
    abs_tol: float = DEFAULT_ABS_TOL
    max_step: float = math.inf
    t_max: float = DEFAULT_T_MAX
    direction: Direction = Direction.FORWARD
    arclength_cap: Optional[float] = None
    escape_radius: float = ESCAPE_RADIUS

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            value = getattr(self, name)
            if not 1e-14 <= value <= 1e-3:
                raise ConfigError(f"{name}={value} outside [1e-14, 1e-3]")
        if not self.t_max > 0:
            raise ConfigError(f"t_max must be positive, got {self.t_max}")
        if self.max_step <= 0:
            raise ConfigError(f"max_step must be positive, got {self.max_step}")
        if self.arclength_cap is not None and self.arclength_cap <= 0:
            raise ConfigError(f"arclength_cap must be positive, got {self.arclength_cap}")

    def backward(self) -> "IntegratorConfig":
        return replace(self, direction=Direction.BACKWARD)

    def forward(self) -> "IntegratorConfig":
        return replace(self, direction=Direction.FORWARD)

    def with_(self, **changes) -> "IntegratorConfig":
        return replace(self, **changes)


class EventKind(str, Enum):
    PLANE = "plane"
    SPHERE = "sphere"
    HALF_SPACE_ENTRY = "half-space-entry"
    PROXIMITY = "proximity"


@dataclass(frozen=True)
class EventSpec:
    """
    Event surface g(s) = 0 with crossing filter and action.

    direction: 0 any crossing, +1 g increasing, -1 g decreasing (along the
    integration direction). terminal events stop the run after max_count
    occurrences; recording events keep at most max_count records.
    """
    kind: EventKind
    name: str
    normal: Optional[tuple] = None
    offset: float = 0.0
    center: Optional[tuple] = None
    radius: float = 0.0
    direction: int = 0
    terminal: bool = False
    max_count: Optional[int] = None

    def __post_init__(self):
        if self.kind is EventKind.PLANE and (self.normal is None or not np.any(np.asarray(self.normal))):
            raise ValueError("plane event needs a nonzero normal")
        if self.kind in (EventKind.SPHERE, EventKind.PROXIMITY) and not self.radius > 0:
            raise ValueError(f"{self.kind.value} event needs a positive radius")
        if self.max_count is not None and self.max_count < 1:
            raise ValueError("max_count must be at least 1")

    @classmethod
    def plane(cls, normal, offset: float, name: str = "plane", **kwargs) -> "EventSpec":
        return cls(EventKind.PLANE, name, normal=tuple(float(v) for v in normal), offset=float(offset), **kwargs)

    @classmethod
    def sphere(cls, center, radius: float, name: str = "sphere", **kwargs) -> "EventSpec":
        return cls(EventKind.SPHERE, name, center=tuple(float(v) for v in center), radius=float(radius), **kwargs)

    @classmethod
    def half_space_entry(cls, name: str = "enter-V", terminal: bool = True) -> "EventSpec":
        """Entry into {x <= 0 and y <= 0}: max(x, y) decreasing through zero."""
        return cls(EventKind.HALF_SPACE_ENTRY, name, direction=-1, terminal=terminal)

    @classmethod
    def proximity(cls, target, radius: float, name: str = "proximity", **kwargs) -> "EventSpec":
        kwargs.setdefault("direction", -1)
        return cls(EventKind.PROXIMITY, name, center=tuple(float(v) for v in target), radius=float(radius), **kwargs)

    def value(self, s: np.ndarray) -> float:
        if self.kind is EventKind.PLANE:
            return float(np.dot(self.normal, s) - self.offset)
        if self.kind is EventKind.HALF_SPACE_ENTRY:
            return float(max(s[0], s[1]))
        return float(np.linalg.norm(np.asarray(s) - self.center) - self.radius)

    def gradient(self, s: np.ndarray) -> np.ndarray:
        if self.kind is EventKind.PLANE:
            return np.asarray(self.normal, dtype=float)
        if self.kind is EventKind.HALF_SPACE_ENTRY:
            return np.array([1.0, 0.0, 0.0]) if s[0] >= s[1] else np.array([0.0, 1.0, 0.0])
        offset = np.asarray(s) - self.center
        norm = np.linalg.norm(offset)
        return offset / norm if norm > 0 else np.zeros(3)

    @property
    def limit(self) -> int:
        return 1 if self.max_count is None and self.terminal else (self.max_count or 0)


@dataclass
class EventRecord:
    event_id: int
    name: str
    t: float
    state: np.ndarray
    direction: int


@dataclass
class Trajectory:
    """Time-ordered samples, event log and dense output of one integration."""
    t: np.ndarray
    states: np.ndarray
    arclength: np.ndarray
    events: list[EventRecord]
    termination: Termination
    config: IntegratorConfig
    solution: Optional[OdeSolution] = field(default=None, repr=False)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_time(self) -> float:
        return float(self.t[-1])

    @property
    def total_arclength(self) -> float:
        return float(self.arclength[-1])

    @property
    def duration(self) -> float:
        return abs(float(self.t[-1] - self.t[0]))

    def events_named(self, name: str) -> list[EventRecord]:
        return [e for e in self.events if e.name == name]

    def state_at(self, t: float) -> np.ndarray:
        if self.solution is None:
            raise ValueError("trajectory has no dense output")
        return self.solution(t)[:3]

    def dense_samples(self, per_step: int = 4) -> tuple[np.ndarray, np.ndarray]:
        """Samples at per_step points inside every step, for post-hoc surface searches."""
        if self.solution is None or len(self.t) < 2:
            return self.t, self.states
        fractions = np.arange(per_step) / per_step
        times = [t0 + (t1 - t0) * fractions for t0, t1 in zip(self.t[:-1], self.t[1:])]
        times = np.concatenate(times + [self.t[-1:]])
        return times, self.solution(times)[:3].T


def _crossing_direction(spec: EventSpec, s: np.ndarray, f: np.ndarray, sign: float) -> int:
    rate = float(np.dot(spec.gradient(s), f)) * sign
    if abs(rate) <= GRAZING_TOL:
        return 0
    return 1 if rate > 0 else -1


def _matches(spec: EventSpec, g_old: float, g_new: float) -> bool:
    up = g_old < 0.0 <= g_new
    down = g_old > 0.0 >= g_new
    if spec.direction > 0:
        return up
    if spec.direction < 0:
        return down
    return up or down


def integrate(
    p,
    s0: Sequence[float],
    cfg: Optional[IntegratorConfig] = None,
    events: Sequence[EventSpec] = (),
) -> Trajectory:
    """
    Integrate from s0 with adaptive Dormand-Prince steps.

    Args:
        p: model parameters or any VectorField
        s0: initial state
        cfg: integrator settings (defaults when omitted)
        events: event surfaces to record or stop on

    Returns:
        Trajectory ending at t_max, the arclength cap or a terminating event

    Raises:
        StepSizeUnderflow: the step size collapsed
        Divergence: the state left the escape ball
    """
    cfg = cfg or IntegratorConfig()
    vf = as_field(p)
    sign = cfg.direction.sign
    s0 = np.asarray(s0, dtype=float)
    if not np.all(np.isfinite(s0)):
        raise ValueError(f"initial state must be finite, got {s0}")

    def rhs(t, y):
        f = vf.rhs(y[:3])
        return np.append(f, sign * math.sqrt(f[0] ** 2 + f[1] ** 2 + f[2] ** 2))

    # Internal guards: escape ball and arclength cap, then user events
    guards = [EventSpec.sphere((0.0, 0.0, 0.0), cfg.escape_radius, name="escape", direction=1, terminal=True)]
    cap = cfg.arclength_cap

    solver = RK45(
        rhs, 0.0, np.append(s0, 0.0), sign * cfg.t_max,
        rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step,
    )

    ts, ys, interpolants = [0.0], [np.append(s0, 0.0)], []
    records: list[EventRecord] = []
    counts = [0] * len(events)
    g_old = [0.0 if abs(g) <= START_SURFACE_TOL else g for g in (spec.value(s0) for spec in events)]
    escape_old = guards[0].value(s0)
    termination = Termination.TIME_LIMIT

    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            raise StepSizeUnderflow(
                f"integration failed at t={solver.t:.6g}: {message}",
                operation="integrate",
            )
        t_old, t_new, y_new = solver.t_old, solver.t, solver.y
        dense = solver.dense_output()

        # (time, kind, index) of crossings inside this step
        hits = []
        g_new = [spec.value(y_new[:3]) for spec in events]
        if events:
            inner = np.linspace(t_old, t_new, INTERIOR_SAMPLES + 2)[1:-1]
            inner_states = dense(inner)[:3].T
        for k, spec in enumerate(events):
            times = [t_old, *inner, t_new]
            values = [g_old[k], *(spec.value(s) for s in inner_states), g_new[k]]
            for i in range(len(times) - 1):
                if _matches(spec, values[i], values[i + 1]):
                    t_hit = _locate(lambda t, sp=spec: sp.value(dense(t)[:3]), times[i], times[i + 1], values[i + 1])
                    hits.append((t_hit, "event", k))
        escape_new = guards[0].value(y_new[:3])
        if escape_old < 0.0 <= escape_new:
            hits.append((_locate(lambda t: guards[0].value(dense(t)[:3]), t_old, t_new, escape_new), "escape", -1))
        if cap is not None and y_new[3] >= cap:
            hits.append((_locate(lambda t: dense(t)[3] - cap, t_old, t_new, y_new[3] - cap), "cap", -1))
        hits.sort(key=lambda h: sign * h[0])

        stop_at = None
        for t_hit, kind, k in hits:
            y_hit = dense(t_hit)
            if kind == "escape":
                stop_at, termination = (t_hit, y_hit), Termination.DIVERGED
                break
            if kind == "cap":
                stop_at, termination = (t_hit, y_hit), Termination.ARCLENGTH
                break
            spec = events[k]
            counts[k] += 1
            if spec.terminal or spec.max_count is None or counts[k] <= spec.max_count:
                f_hit = vf.rhs(y_hit[:3])
                records.append(EventRecord(k, spec.name, float(t_hit), y_hit[:3].copy(),
                                           _crossing_direction(spec, y_hit[:3], f_hit, sign)))
            if spec.terminal and counts[k] >= spec.limit:
                stop_at, termination = (t_hit, y_hit), Termination.EVENT
                break

        if stop_at is not None:
            if float(stop_at[0]) == ts[-1]:
                ys[-1] = stop_at[1]
            else:
                interpolants.append(dense)
                ts.append(float(stop_at[0]))
                ys.append(stop_at[1])
            break
        interpolants.append(dense)
        ts.append(float(t_new))
        ys.append(y_new.copy())
        g_old, escape_old = g_new, escape_new

    ys = np.asarray(ys)
    traj = Trajectory(
        t=np.asarray(ts),
        states=ys[:, :3],
        arclength=ys[:, 3],
        events=records,
        termination=termination,
        config=cfg,
        solution=OdeSolution(np.asarray(ts), interpolants) if interpolants else None,
    )
    if termination is Termination.DIVERGED:
        raise Divergence(
            f"trajectory left the ball of radius {cfg.escape_radius} at t={traj.final_time:.6g}",
            trajectory=traj,
            operation="integrate",
        )
    logger.debug(
        f"integrate: {len(ts) - 1} steps, t={traj.final_time:.6g}, "
        f"termination={termination.value}, events={len(records)}"
    )
    return traj


def _locate(g: Callable[[float], float], t_old: float, t_new: float, g_new: float) -> float:
    if g_new == 0.0:
        return t_new
    lo, hi = (t_old, t_new) if t_old < t_new else (t_new, t_old)
    return brentq(g, lo, hi, xtol=_ROOT_XTOL, rtol=_ROOT_RTOL)


@dataclass
class TransportPath:
    """Samples of a transported vector (or frame) along a trajectory."""
    t: np.ndarray
    values: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def _require_dense(traj: Trajectory) -> None:
    if traj.solution is None:
        raise ValueError("transport needs a trajectory with dense output")


def _transport(traj: Trajectory, rhs, y0: np.ndarray, reverse: bool,
               t_eval: Optional[np.ndarray] = None) -> TransportPath:
    _require_dense(traj)
    t0, t1 = (traj.t[-1], traj.t[0]) if reverse else (traj.t[0], traj.t[-1])
    cfg = traj.config
    sol = solve_ivp(rhs, (t0, t1), y0, method="RK45", t_eval=t_eval, rtol=cfg.rel_tol, atol=cfg.abs_tol)
    if not sol.success:
        raise StepSizeUnderflow(f"transport failed: {sol.message}", operation="transport")
    return TransportPath(t=sol.t, values=sol.y.T)


def transport_tangent(p, traj: Trajectory, v0: Sequence[float], reverse: bool = False,
                      t_eval: Optional[np.ndarray] = None) -> TransportPath:
    """Solve v' = Df(x(t)) v along traj from v(t_start) = v0, optionally sampled at t_eval."""
    vf = as_field(p)

    def rhs(t, v):
        return vf.jacobian(traj.state_at(t)) @ v

    return _transport(traj, rhs, np.asarray(v0, dtype=float), reverse, t_eval)


def transport_frame(p, traj: Trajectory, frame0: Optional[np.ndarray] = None) -> np.ndarray:
    """Fundamental matrix along traj: columns are transported frame vectors."""
    vf = as_field(p)
    phi0 = np.eye(3) if frame0 is None else np.asarray(frame0, dtype=float)

    def rhs(t, y):
        return (vf.jacobian(traj.state_at(t)) @ y.reshape(3, 3)).ravel()

    return _transport(traj, rhs, phi0.ravel(), reverse=False).final.reshape(3, 3)


def transport_adjoint(p, traj: Trajectory, w0: Sequence[float], reverse: bool = False) -> TransportPath:
    """
    Solve w' = -Df(x(t))^T w along traj.

    With reverse=True, w0 is imposed at the end of traj and the path runs backward.
    """
    vf = as_field(p)

    def rhs(t, w):
        return -vf.jacobian(traj.state_at(t)).T @ w

    return _transport(traj, rhs, np.asarray(w0, dtype=float), reverse)


def trace_integral(p, traj: Trajectory) -> float:
    """Integral of trace Df(x(t)) from the start to the end of traj."""
    vf = as_field(p)

    def rhs(t, y):
        return [float(np.trace(vf.jacobian(traj.state_at(t))))]

    return float(_transport(traj, rhs, np.zeros(1), reverse=False).final[0])
