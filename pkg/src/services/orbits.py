"""
Periodic Orbit Service
Poincare-section fixed points, Floquet multipliers and orientability, natural
continuation in mu, multiplier events and return-map statistics.
"""
import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from services.errors import FlipscopeError, NoSignChange
from services.flow import (
    Divergence,
    EventSpec,
    IntegratorConfig,
    Termination,
    Trajectory,
    integrate,
    trace_integral,
    transport_frame,
)
from services.model import Params, as_field, find_q
from services.winding import unstable_seed
from utils.bisection_utils import bisect_change, bisect_sign
from utils.linalg_utils import section_basis, unit

logger = logging.getLogger(__name__)

SECTION_EVENT = "section"
TRANSVERSE_TOL = 1e-6
FD_STEP = 1e-7
RESIDUAL_TOL = 1e-10
NEWTON_MAX_ITER = 30
NEWTON_MAX_STEP = 0.05
RETURN_T_MAX = 200.0
UNIT_MULTIPLIER_TOL = 1e-6
IMAG_TOL = 1e-10

STEP_FLOOR = 1e-9
STEP_MAX = 2e-4
BRANCH_JUMP_TOL = 0.05
EVENT_TOL = 1e-8

N_SKIP = 200
ENVELOPE_BINS = 20

ESCAPE_EVENT = "enter-V"
CAPTURE_EVENT = "capture"
Q_RADIUS = 0.02
FATE_T_MAX = 600.0
SHADOW_T_MAX = 400.0
EDGE_TOL = 1e-10
EDGE_SPAN = 0.05
PARITY_SAMPLES = 24
DOUBLING_OFFSETS = (1e-4, 3e-4, 1e-3, 3e-3, 1e-2)
DOUBLING_NUDGE = 1e-5

# Orbits are solved tighter than the default so Newton can reach RESIDUAL_TOL
ORBIT_INTEGRATOR = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14, t_max=RETURN_T_MAX)


class NoReturn(FlipscopeError):
    """Error when the flow does not come back to the section"""
    pass


class NewtonDiverged(FlipscopeError):
    """Error when the fixed-point Newton iteration fails"""
    pass


class SectionNotTransverse(FlipscopeError):
    """Error when the flow is tangent to the section at a recorded crossing"""
    pass


class StepFloorReached(FlipscopeError):
    """Error when continuation cannot proceed with steps above the floor"""

    def __init__(self, message: str, branch: list, failed_mu: float, **kwargs):
        super().__init__(message, **kwargs)
        self.branch = branch
        self.failed_mu = failed_mu

    @property
    def last_mu(self) -> float:
        return self.branch[-1][0]

    @property
    def last_orbit(self) -> "PeriodicOrbit":
        return self.branch[-1][1]


class NoBracket(FlipscopeError):
    """Error when a multiplier trace does not bracket the requested event"""
    pass


class InsufficientReturns(FlipscopeError):
    """Error when a trajectory returns to the section fewer times than requested"""
    pass


class ConstantSequence(FlipscopeError):
    """Error when a return sequence has no spread to rescale"""
    pass


class Orientability(str, Enum):
    ORIENTABLE = "orientable"
    NONORIENTABLE = "nonorientable"
    COMPLEX = "complex"


class MultiplierTarget(str, Enum):
    PLUS_ONE = "+1"
    MINUS_ONE = "-1"
    COMPLEX = "complex"


@dataclass(frozen=True)
class SectionMap:
    """
    Plane n.s = offset crossed in the given direction.

    The default is y = 0 crossed upward (n.f > 0). Near the primary
    homoclinic orbit an upward crossing happens only when a trajectory passes
    the origin on the side that starts another large loop.
    """
    normal: tuple = (0.0, 1.0, 0.0)
    offset: float = 0.0
    direction: int = 1

    @property
    def unit_normal(self) -> np.ndarray:
        return unit(np.asarray(self.normal, dtype=float))

    @property
    def anchor(self) -> np.ndarray:
        n = np.asarray(self.normal, dtype=float)
        return n * self.offset / float(n.dot(n))

    def basis(self) -> np.ndarray:
        return section_basis(np.asarray(self.normal, dtype=float))

    def to_coords(self, s: np.ndarray) -> np.ndarray:
        return self.basis().T @ (np.asarray(s, dtype=float) - self.anchor)

    def from_coords(self, c: np.ndarray) -> np.ndarray:
        return self.anchor + self.basis() @ np.asarray(c, dtype=float)

    def project(self, s: np.ndarray) -> np.ndarray:
        """Closest point of the section."""
        return self.from_coords(self.to_coords(s))

    def event(self, max_count: Optional[int] = None, terminal: bool = True) -> EventSpec:
        return EventSpec.plane(self.normal, self.offset, name=SECTION_EVENT, direction=self.direction,
                               terminal=terminal, max_count=max_count)

    def check_transverse(self, p, s: np.ndarray) -> None:
        rate = float(self.unit_normal.dot(as_field(p).rhs(s)))
        if abs(rate) < TRANSVERSE_TOL:
            raise SectionNotTransverse(f"|n.f| = {abs(rate):.3e} at {np.round(s, 8)}", operation="section")


@dataclass
class PeriodicOrbit:
    fixed_point: np.ndarray
    period: float
    monodromy: np.ndarray
    multipliers: tuple[complex, complex]
    orientability: Orientability
    loop_count: int
    section: SectionMap
    params: object
    return_jacobian: np.ndarray
    trivial_residual: float
    liouville_residual: float
    label: str = ""
    trajectory: Optional[Trajectory] = field(default=None, repr=False)

    @property
    def mu(self) -> float:
        return float(self.params.mu)

    @property
    def is_saddle(self) -> bool:
        l1, l2 = self.multipliers
        return self.orientability is not Orientability.COMPLEX and abs(l1) < 1.0 < abs(l2)

    def fold_test(self) -> float:
        return float(np.linalg.det(self.return_jacobian - np.eye(2)))

    def flip_test(self) -> float:
        return float(np.linalg.det(self.return_jacobian + np.eye(2)))

    def discriminant(self) -> float:
        dp = self.return_jacobian
        return float(np.trace(dp) ** 2 - 4.0 * np.linalg.det(dp))

    def unstable_direction(self) -> np.ndarray:
        """Section-coordinate eigenvector of the return map for the larger multiplier."""
        values, vectors = np.linalg.eig(self.return_jacobian)
        return unit(vectors[:, int(np.argmax(np.abs(values)))].real)

    def to_row(self) -> list:
        l1, l2 = self.multipliers
        return [
            self.mu, self.period, float(self.fixed_point[0]), float(self.fixed_point[2]),
            l1.real, l1.imag, l2.real, l2.imag, self.orientability.value,
        ]


def flow_to_section(
    p,
    s0: np.ndarray,
    section: SectionMap,
    loops: int = 1,
    cfg: Optional[IntegratorConfig] = None,
) -> Trajectory:
    """
    Integrate from s0 until the loops-th crossing of the section.

    Raises:
        NoReturn: the flow diverged or ran out of time first
        SectionNotTransverse: a crossing is (numerically) tangent
    """
    cfg = cfg or ORBIT_INTEGRATOR.with_(t_max=RETURN_T_MAX * loops)
    try:
        traj = integrate(p, s0, cfg, [section.event(max_count=loops)])
    except Divergence as e:
        raise NoReturn(f"diverged before returning to the section: {e}", operation="flow_to_section") from e

    hits = traj.events_named(SECTION_EVENT)
    if traj.termination is not Termination.EVENT or len(hits) < loops:
        raise NoReturn(
            f"{len(hits)} of {loops} returns within t={cfg.t_max:g}",
            operation="flow_to_section",
        )
    for hit in hits:
        section.check_transverse(p, hit.state)
    return traj


def return_map(p, c: np.ndarray, section: SectionMap, loops: int = 1,
               cfg: Optional[IntegratorConfig] = None) -> tuple[np.ndarray, Trajectory]:
    """P^loops in section coordinates."""
    traj = flow_to_section(p, section.from_coords(c), section, loops, cfg)
    return section.to_coords(traj.final_state), traj


def _fd_jacobian(p, c: np.ndarray, pc: np.ndarray, section: SectionMap, loops: int,
                 cfg: Optional[IntegratorConfig]) -> np.ndarray:
    jac = np.empty((2, 2))
    for i in range(2):
        shifted = c.copy()
        shifted[i] += FD_STEP
        jac[:, i] = (return_map(p, shifted, section, loops, cfg)[0] - pc) / FD_STEP
    return jac


def _classify(multipliers: Sequence[complex]) -> Orientability:
    l1, l2 = multipliers
    if abs(l1.imag) > IMAG_TOL * max(1.0, abs(l1)) or abs(l2.imag) > IMAG_TOL * max(1.0, abs(l2)):
        return Orientability.COMPLEX
    return Orientability.ORIENTABLE if l1.real > 0.0 else Orientability.NONORIENTABLE


def _assemble_orbit(p, fixed_point: np.ndarray, traj: Trajectory, section: SectionMap,
                    loops: int, label: str) -> PeriodicOrbit:
    monodromy = transport_frame(p, traj)
    f = as_field(p).rhs(fixed_point)
    n = section.unit_normal
    basis = section.basis()
    projector = np.eye(3) - np.outer(f, n) / float(n.dot(f))
    dp = basis.T @ projector @ monodromy @ basis

    values = np.linalg.eigvals(dp).astype(complex)
    values = sorted(values, key=abs)
    multipliers = (complex(values[0]), complex(values[1]))

    trivial = float(np.linalg.norm(monodromy @ f - f) / np.linalg.norm(f))
    liouville = float(np.exp(trace_integral(p, traj)))
    liouville_residual = abs(float(np.linalg.det(monodromy)) - liouville) / liouville
    if trivial > UNIT_MULTIPLIER_TOL:
        logger.warning(f"trivial multiplier residual {trivial:.2e} on orbit {label or '?'}")

    return PeriodicOrbit(
        fixed_point=fixed_point,
        period=traj.final_time,
        monodromy=monodromy,
        multipliers=multipliers,
        orientability=_classify(multipliers),
        loop_count=loops,
        section=section,
        params=p,
        return_jacobian=dp,
        trivial_residual=trivial,
        liouville_residual=liouville_residual,
        label=label,
        trajectory=traj,
    )


def find_periodic_orbit(
    p,
    section: SectionMap,
    guess: Sequence[float],
    loop_count: int = 1,
    label: str = "",
    cfg: Optional[IntegratorConfig] = None,
) -> PeriodicOrbit:
    """
    Newton solve of P^loop_count(c) = c on the section.

    Args:
        p: model parameters or any VectorField
        section: Poincare section
        guess: state near the section (projected onto it)
        loop_count: returns per period
        label: name carried by the orbit
        cfg: integrator settings for the return map

    Returns:
        PeriodicOrbit with monodromy and multipliers

    Raises:
        NoReturn, SectionNotTransverse: the return map is undefined at an iterate
        NewtonDiverged: no convergence within NEWTON_MAX_ITER iterations
    """
    c = section.to_coords(np.asarray(guess, dtype=float))
    best = np.inf

    for iteration in range(NEWTON_MAX_ITER):
        pc, traj = return_map(p, c, section, loop_count, cfg)
        residual = pc - c
        norm = float(np.linalg.norm(residual))
        best = min(best, norm)
        logger.debug(f"orbit newton {iteration}: |P(c)-c|={norm:.3e}")
        if norm <= RESIDUAL_TOL:
            break

        jac = _fd_jacobian(p, c, pc, section, loop_count, cfg) - np.eye(2)
        try:
            step = np.linalg.solve(jac, -residual)
        except np.linalg.LinAlgError as e:
            raise NewtonDiverged(f"singular Newton matrix at iteration {iteration}",
                                 operation="find_periodic_orbit") from e
        size = float(np.linalg.norm(step))
        if size > NEWTON_MAX_STEP:
            step *= NEWTON_MAX_STEP / size
        if size <= 1e-14 and norm <= 10.0 * RESIDUAL_TOL:
            logger.warning(f"orbit newton stalled at residual {norm:.2e}; accepting")
            break
        c = c + step
        if not np.all(np.isfinite(c)):
            raise NewtonDiverged("Newton iterate is not finite", operation="find_periodic_orbit")
    else:
        raise NewtonDiverged(
            f"no convergence in {NEWTON_MAX_ITER} iterations (best residual {best:.3e})",
            operation="find_periodic_orbit",
        )

    fixed_point = section.from_coords(c)
    orbit = _assemble_orbit(p, fixed_point, traj, section, loop_count, label)
    logger.info(
        f"Periodic orbit {label or ''} found: T={orbit.period:.6f}, "
        f"multipliers=({orbit.multipliers[0]:.6g}, {orbit.multipliers[1]:.6g}), {orbit.orientability.value}"
    )
    return orbit


@dataclass
class OrbitGuess:
    state: np.ndarray
    return_distance: float


class FateKind(str, Enum):
    BASIN = "basin-of-q"
    ESCAPED = "escaped"
    UNDECIDED = "undecided"


@dataclass
class Fate:
    """Where a trajectory ends up and how many section returns it makes on the way."""
    kind: FateKind
    returns: int
    time: float


def _crossings(traj: Trajectory) -> list[np.ndarray]:
    return [hit.state for hit in traj.events_named(SECTION_EVENT)]


def _trajectory_or_partial(p, s0: np.ndarray, cfg: IntegratorConfig, events) -> Trajectory:
    try:
        return integrate(p, s0, cfg, events)
    except Divergence as e:
        return e.trajectory


def trajectory_fate(
    p: Params,
    s0: np.ndarray,
    q: np.ndarray,
    section: Optional[SectionMap] = None,
    t_max: float = FATE_T_MAX,
) -> Fate:
    """
    Classify a trajectory as captured by q, escaped into V (or to infinity), or undecided.

    Reaching the Q_RADIUS ball around the stable focus q counts as capture.
    """
    section = section or SectionMap()
    if np.linalg.norm(np.asarray(s0) - q) <= Q_RADIUS:
        return Fate(FateKind.BASIN, 0, 0.0)
    events = [
        section.event(terminal=False),
        EventSpec.half_space_entry(name=ESCAPE_EVENT),
        EventSpec.proximity(q, Q_RADIUS, name=CAPTURE_EVENT, terminal=True),
    ]
    cfg = IntegratorConfig(t_max=t_max)
    try:
        traj = integrate(p, s0, cfg, events)
        escaped = bool(traj.events_named(ESCAPE_EVENT))
    except Divergence as e:
        traj, escaped = e.trajectory, True

    returns = len(traj.events_named(SECTION_EVENT))
    if traj.events_named(CAPTURE_EVENT):
        kind = FateKind.BASIN
    elif escaped:
        kind = FateKind.ESCAPED
    else:
        kind = FateKind.UNDECIDED
    return Fate(kind, returns, traj.duration)


def _along(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    return a + t * (b - a)


def basin_edge(p: Params, q: np.ndarray, anchor: np.ndarray, section: Optional[SectionMap] = None,
               tol: float = EDGE_TOL) -> tuple[np.ndarray, np.ndarray]:
    """
    Bisect the segment from q to anchor on capture by q.

    The boundary of the basin of q is the stable manifold of the orientable
    saddle orbit around it (or, past the last heteroclinic connection, partly
    the stable manifold of the origin).

    Returns:
        (inside, outside) ends of the final bracket

    Raises:
        NoSignChange: anchor is itself captured by q
    """
    def captured(t: float) -> int:
        return int(trajectory_fate(p, _along(q, anchor, t), q, section).kind is FateKind.BASIN)

    bracket = bisect_change(captured, 0.0, 1.0, tol, value_lo=1)
    return _along(q, anchor, bracket.lo), _along(q, anchor, bracket.hi)


def parity_edges(p: Params, q: np.ndarray, a: np.ndarray, b: np.ndarray, section: Optional[SectionMap] = None,
                 samples: int = PARITY_SAMPLES, tol: float = EDGE_TOL) -> list[np.ndarray]:
    """
    Points on the segment [a, b] where the parity of the returns before escape flips.

    Crossing the stable manifold of a nonorientable saddle orbit changes the
    number of returns before escape by one; the stable manifold of the origin
    changes it by two. Captured and undecided samples separate the brackets.
    """
    def parity(t: float) -> int:
        fate = trajectory_fate(p, _along(a, b, t), q, section)
        return fate.returns % 2 if fate.kind is FateKind.ESCAPED else -1

    ts = np.linspace(0.0, 1.0, samples)
    values = [parity(t) for t in ts]
    edges = []
    for k in range(samples - 1):
        if values[k] < 0 or values[k + 1] < 0 or values[k] == values[k + 1]:
            continue
        bracket = bisect_change(parity, ts[k], ts[k + 1], tol, value_lo=values[k], value_hi=values[k + 1])
        edges.append(_along(a, b, bracket.mid))
    logger.debug(f"parity flips on segment: {len(edges)} of {samples - 1} intervals")
    return edges


def _ranked_returns(points: list[np.ndarray], loop_count: int) -> list[OrbitGuess]:
    guesses = []
    for i in range(len(points) - loop_count):
        distance = float(np.linalg.norm(points[i + loop_count] - points[i]))
        if np.isfinite(distance):
            guesses.append(OrbitGuess(state=points[i], return_distance=distance))
    guesses.sort(key=lambda g: g.return_distance)
    return guesses


def shadow_guesses(p: Params, start: np.ndarray, section: SectionMap, loop_count: int = 1,
                   t_max: float = SHADOW_T_MAX, keep: int = 3) -> list[OrbitGuess]:
    """Section returns of a trajectory started on a stable manifold, best repeating first."""
    events = [section.event(terminal=False), EventSpec.half_space_entry(name=ESCAPE_EVENT)]
    traj = _trajectory_or_partial(p, start, IntegratorConfig(t_max=t_max), events)
    return _ranked_returns(_crossings(traj), loop_count)[:keep]


def harvest_orbit_guesses(
    p: Params,
    section: SectionMap,
    loop_count: int = 1,
    t_max: float = 400.0,
    limit: int = 8,
) -> list[OrbitGuess]:
    """
    Newton seeds from the section crossings of the unstable branch of the origin
    and of a trajectory started beside it, ranked by how closely each crossing
    repeats loop_count crossings later. Crossings that never repeat are dropped.
    """
    cfg = IntegratorConfig(t_max=t_max)
    recorder = [section.event(terminal=False)]
    branch = _trajectory_or_partial(p, unstable_seed(p), cfg, recorder)
    runs = [_crossings(branch)]

    if runs[0]:
        start = runs[0][0] + np.array([1e-3, 0.0, 0.0])
    else:
        try:
            start = find_q(p).location + np.array([1e-2, 0.0, 0.0])
        except FlipscopeError:
            start = np.array([0.9, 0.0, 0.05])
    runs.append(_crossings(_trajectory_or_partial(p, start, cfg, recorder)))

    guesses = [g for points in runs for g in _ranked_returns(points, loop_count)]
    guesses.sort(key=lambda g: g.return_distance)
    logger.debug(f"harvested {len(guesses)} orbit guesses (loop_count={loop_count})")
    return guesses[:limit]


def _edge_anchors(p: Params, branch_points: list[np.ndarray]) -> list[np.ndarray]:
    into_v = -unstable_seed(p, offset=EDGE_SPAN)
    return [*branch_points[:2], into_v, np.array([1.2, 0.0, 0.0])]


def _edge_points(p: Params, q: np.ndarray, section: SectionMap, orientability: Orientability):
    cfg = IntegratorConfig(t_max=SHADOW_T_MAX)
    branch_points = _crossings(_trajectory_or_partial(p, unstable_seed(p), cfg, [section.event(terminal=False)]))
    if orientability is Orientability.ORIENTABLE:
        for anchor in _edge_anchors(p, branch_points):
            try:
                inside, outside = basin_edge(p, q, anchor, section)
            except NoSignChange:
                continue
            yield 0.5 * (inside + outside)
        return
    for c in branch_points[:2]:
        for axis in section.basis().T:
            yield from parity_edges(p, q, c - EDGE_SPAN * axis, c + EDGE_SPAN * axis, section)


def _edge_guesses(p: Params, section: SectionMap, loop_count: int, orientability: Orientability):
    """Seeds shadowed from the basin boundary of q (orientable) or from parity flips near the branch."""
    try:
        q = find_q(p).location
    except FlipscopeError as e:
        logger.debug(f"no edge seeds without q: {e}")
        return
    for edge in _edge_points(p, q, section, orientability):
        yield from shadow_guesses(p, edge, section, loop_count)


def find_saddle_orbit(
    p: Params,
    orientability: Orientability,
    loop_count: int = 1,
    section: Optional[SectionMap] = None,
    label: str = "",
) -> PeriodicOrbit:
    """
    First seed converging to an orbit with the requested orientability.

    Seeds come from recurring returns of the unstable branch first, then from
    trajectories shadowing the stable manifolds found by basin and parity
    bisection. A seed whose return map is undefined is skipped.

    Raises:
        NewtonDiverged: no seed produced such an orbit
    """
    section = section or SectionMap()
    seeds = itertools.chain(
        harvest_orbit_guesses(p, section, loop_count),
        _edge_guesses(p, section, loop_count, orientability),
    )
    for guess in seeds:
        try:
            orbit = find_periodic_orbit(p, section, guess.state, loop_count, label=label)
        except (NoReturn, NewtonDiverged, SectionNotTransverse) as e:
            logger.debug(f"guess {np.round(guess.state, 6)} rejected: {e}")
            continue
        if orbit.orientability is orientability and orbit.is_saddle:
            return orbit
    raise NewtonDiverged(
        f"no {orientability.value} orbit with {loop_count} loop(s) from harvested guesses",
        operation="find_saddle_orbit",
        params=p.as_dict(),
    )


def attractor_seed(p: Params, section: Optional[SectionMap] = None, offset: float = 1e-4) -> np.ndarray:
    """
    Start on the outer sheet of the unstable manifold of the orientable saddle orbit.

    Past the last heteroclinic connection the unstable branch of the origin is
    captured by q; the outer sheet instead runs into the attractor beside it.

    Raises:
        NewtonDiverged: the orientable orbit was not found
        NoBracket: both sheets are captured by q
    """
    orbit = find_saddle_orbit(p, Orientability.ORIENTABLE, section=section, label="gamma_o")
    q = find_q(p).location
    direction = orbit.section.from_coords(orbit.unstable_direction()) - orbit.section.anchor
    for sign in (1.0, -1.0):
        start = orbit.fixed_point + sign * offset * direction
        if trajectory_fate(p, start, q, orbit.section).kind is not FateKind.BASIN:
            return start
    raise NoBracket("both unstable sheets are captured by q", operation="attractor_seed", params=p.as_dict())


def continue_orbit(
    p0: Params,
    orbit: PeriodicOrbit,
    mu_target: float,
    step: Optional[float] = None,
    step_floor: float = STEP_FLOOR,
    step_max: float = STEP_MAX,
) -> list[tuple[float, PeriodicOrbit]]:
    """
    March the orbit in mu with secant prediction and Newton correction.

    The step halves on every failed correction and doubles after three
    successes. A correction landing farther than BRANCH_JUMP_TOL from the
    prediction counts as a failure.

    Returns:
        list of (mu, orbit) ending at mu_target

    Raises:
        StepFloorReached: the step fell below step_floor (a fold of the branch);
            carries the branch so far and the first mu that failed
    """
    sign = 1.0 if mu_target >= p0.mu else -1.0
    h = min(step or abs(mu_target - p0.mu) / 50.0, step_max)
    branch = [(p0.mu, orbit)]
    section, loops = orbit.section, orbit.loop_count
    successes = 0

    while sign * (mu_target - branch[-1][0]) > 0.0:
        mu_last, orb_last = branch[-1]
        mu_next = mu_last + sign * h
        if sign * (mu_next - mu_target) > 0.0:
            mu_next = mu_target

        c_last = section.to_coords(orb_last.fixed_point)
        if len(branch) >= 2:
            mu_prev, orb_prev = branch[-2]
            c_prev = section.to_coords(orb_prev.fixed_point)
            c_pred = c_last + (c_last - c_prev) * (mu_next - mu_last) / (mu_last - mu_prev)
        else:
            c_pred = c_last

        try:
            found = find_periodic_orbit(p0.with_mu(mu_next), section, section.from_coords(c_pred),
                                        loops, label=orbit.label)
            if np.linalg.norm(section.to_coords(found.fixed_point) - c_pred) > BRANCH_JUMP_TOL:
                raise NewtonDiverged("corrector jumped to another branch", operation="continue_orbit")
        except (NoReturn, NewtonDiverged, SectionNotTransverse) as e:
            h *= 0.5
            successes = 0
            logger.debug(f"continuation failed at mu={mu_next:.10g} ({e}); step -> {h:.3e}")
            if h < step_floor:
                raise StepFloorReached(
                    f"step below {step_floor:g} between mu={mu_last:.10g} and {mu_next:.10g}",
                    branch=branch,
                    failed_mu=mu_next,
                    operation="continue_orbit",
                    params=p0.as_dict(),
                ) from e
            continue

        branch.append((mu_next, found))
        successes += 1
        if successes >= 3:
            h = min(2.0 * h, step_max)
            successes = 0

    logger.info(f"Continued {orbit.label or 'orbit'} to mu={branch[-1][0]:.10g} in {len(branch) - 1} steps")
    return branch


def _test_function(target: MultiplierTarget):
    if target is MultiplierTarget.MINUS_ONE:
        return PeriodicOrbit.flip_test
    if target is MultiplierTarget.PLUS_ONE:
        return PeriodicOrbit.fold_test
    return PeriodicOrbit.discriminant


def detect_multiplier_event(
    trace: Sequence[tuple[float, PeriodicOrbit]],
    target: MultiplierTarget,
    tol: float = EVENT_TOL,
) -> float:
    """
    Refine the first sign change of a multiplier test function along a branch.

    Test functions: det(DP + I) for -1, det(DP - I) for +1, and the
    discriminant tr(DP)^2 - 4 det(DP) for a complex collision.

    Raises:
        NoBracket: the test function keeps its sign along the trace
    """
    test = _test_function(target)
    values = [test(orb) for _, orb in trace]
    for k in range(len(trace) - 1):
        if np.sign(values[k]) != np.sign(values[k + 1]):
            break
    else:
        raise NoBracket(f"no {target.value} multiplier event along {len(trace)} branch points",
                        operation="detect_multiplier_event")

    (mu_a, orb_a), (mu_b, orb_b) = trace[k], trace[k + 1]
    guess = {"c": orb_a.section.to_coords(orb_a.fixed_point)}

    def value(mu: float) -> float:
        orb = find_periodic_orbit(orb_a.params.with_mu(mu), orb_a.section,
                                  orb_a.section.from_coords(guess["c"]), orb_a.loop_count)
        guess["c"] = orb.section.to_coords(orb.fixed_point)
        return test(orb)

    bracket = bisect_sign(value, mu_a, mu_b, tol, value_lo=values[k], value_hi=values[k + 1])
    logger.info(f"Multiplier event {target.value} at mu={bracket.mid:.10g}")
    return bracket.mid


def period_doubled_orbit(orbit: PeriodicOrbit, offsets: Sequence[float] = DOUBLING_OFFSETS) -> PeriodicOrbit:
    """
    Switch from an orbit just past a period doubling to the doubled orbit.

    Newton for twice the loop count starts on both sides of the fixed point
    along the eigenvector of the multiplier closest to -1. A solution that
    moved away from the parent fixed point is the doubled orbit.

    Raises:
        NewtonDiverged: no offset led to a doubled orbit
    """
    values, vectors = np.linalg.eig(orbit.return_jacobian)
    flip = unit(vectors[:, int(np.argmin(np.abs(values + 1.0)))].real)
    section = orbit.section
    c0 = section.to_coords(orbit.fixed_point)
    loops = 2 * orbit.loop_count
    label = f"{loops}{orbit.label.lstrip('0123456789')}"
    for offset in offsets:
        for sign in (1.0, -1.0):
            guess = section.from_coords(c0 + sign * offset * flip)
            try:
                found = find_periodic_orbit(orbit.params, section, guess, loops, label=label)
            except (NoReturn, NewtonDiverged, SectionNotTransverse):
                continue
            if np.linalg.norm(found.fixed_point - orbit.fixed_point) > 0.25 * offset:
                logger.info(f"Switched to {label} at mu={orbit.mu:.10g} (offset {offset:g})")
                return found
    raise NewtonDiverged(
        f"no doubled orbit next to {orbit.label or 'orbit'} from {len(offsets)} offsets",
        operation="period_doubled_orbit",
    )


def period_doubling_cascade(
    p0: Params,
    orbit: PeriodicOrbit,
    mu_target: float,
    mu_stop: float,
    depth: int = 2,
    nudge: float = DOUBLING_NUDGE,
) -> list[tuple[str, float]]:
    """
    Period-doubling points of an orbit and of its successive doublings.

    The orbit is continued from p0 to mu_target. Each doubled orbit is picked
    up nudge past the previous doubling, on the side of p0, and continued
    toward mu_stop.

    Returns:
        (label, mu) per level, the parent orbit first

    Raises:
        NoBracket: a level shows no doubling on its branch
    """
    events = []
    branch = continue_orbit(p0, orbit, mu_target)
    current = orbit
    for level in range(depth):
        mu_pd = detect_multiplier_event(branch, MultiplierTarget.MINUS_ONE)
        events.append((current.label, mu_pd))
        if level == depth - 1:
            break
        mu_near = mu_pd + (nudge if p0.mu > mu_pd else -nudge)
        nearest = min(branch, key=lambda item: abs(item[0] - mu_near))[1]
        parent = find_periodic_orbit(p0.with_mu(mu_near), nearest.section, nearest.fixed_point,
                                     nearest.loop_count, label=nearest.label)
        current = period_doubled_orbit(parent)
        branch = continue_orbit(p0.with_mu(mu_near), current, mu_stop)
    return events


def refine_fold(error: StepFloorReached, tol: float = EVENT_TOL) -> float:
    """Bisect on orbit existence between the last converged mu and the failed one."""
    orbit = error.last_orbit
    guess = {"state": orbit.fixed_point}

    def exists(mu: float) -> int:
        try:
            found = find_periodic_orbit(orbit.params.with_mu(mu), orbit.section, guess["state"], orbit.loop_count)
        except (NoReturn, NewtonDiverged, SectionNotTransverse):
            return 0
        guess["state"] = found.fixed_point
        return 1

    bracket = bisect_change(exists, error.last_mu, error.failed_mu, tol, value_lo=1, value_hi=0)
    logger.info(f"Fold of {orbit.label or 'orbit'} at mu={bracket.mid:.10g}")
    return bracket.mid


@dataclass
class ReturnSequence:
    """Section returns after the transient, raw and rescaled to [0, 1]."""
    raw: np.ndarray
    scaled: np.ndarray

    def pairs(self) -> np.ndarray:
        return np.column_stack([self.scaled[:-1], self.scaled[1:]])


@dataclass
class Envelope:
    centers: np.ndarray
    means: np.ndarray
    slope_sign_changes: int


def collect_returns(
    p,
    s0: Sequence[float],
    section: Optional[SectionMap] = None,
    n: int = 300,
    n_skip: int = N_SKIP,
    cfg: Optional[IntegratorConfig] = None,
) -> ReturnSequence:
    """
    First section coordinate of n returns after n_skip transient returns.

    Raises:
        InsufficientReturns: fewer than n_skip + n returns before divergence or t_max
        ConstantSequence: all recorded returns coincide
    """
    section = section or SectionMap()
    total = n_skip + n
    cfg = cfg or IntegratorConfig(t_max=RETURN_T_MAX * total)
    try:
        traj = integrate(p, s0, cfg, [section.event(max_count=total)])
    except Divergence as e:
        raise InsufficientReturns(f"trajectory diverged: {e}", operation="collect_returns") from e

    hits = traj.events_named(SECTION_EVENT)
    if len(hits) < total:
        raise InsufficientReturns(f"{len(hits)} of {total} returns", operation="collect_returns")

    raw = np.array([section.to_coords(hit.state)[0] for hit in hits[n_skip:total]])
    lo, hi = float(raw.min()), float(raw.max())
    if hi - lo <= 1e-9 * max(1.0, abs(hi)):
        raise ConstantSequence(f"returns constant at {lo:.12g}", operation="collect_returns")
    return ReturnSequence(raw=raw, scaled=(raw - lo) / (hi - lo))


def collect_returns_replicated(
    p,
    s0: Sequence[float],
    section: Optional[SectionMap] = None,
    n: int = 300,
    replicates: int = 3,
    spread: float = 1e-6,
) -> list[ReturnSequence]:
    """Return sequences of initial conditions spaced by spread along x."""
    s0 = np.asarray(s0, dtype=float)
    shift = np.array([spread, 0.0, 0.0])
    return [collect_returns(p, s0 + k * shift, section, n) for k in range(replicates)]


def unimodal_envelope(seq: ReturnSequence, bins: int = ENVELOPE_BINS) -> Envelope:
    """Bin-averaged return map on [0, 1] and the sign changes of its slope."""
    pairs = seq.pairs()
    edges = np.linspace(0.0, 1.0, bins + 1)
    index = np.clip(np.digitize(pairs[:, 0], edges) - 1, 0, bins - 1)
    centers, means = [], []
    for b in range(bins):
        members = pairs[index == b, 1]
        if members.size:
            centers.append(0.5 * (edges[b] + edges[b + 1]))
            means.append(float(members.mean()))
    centers, means = np.array(centers), np.array(means)

    slopes = np.sign(np.diff(means))
    slopes = slopes[slopes != 0]
    changes = int(np.count_nonzero(slopes[1:] != slopes[:-1])) if slopes.size > 1 else 0
    return Envelope(centers=centers, means=means, slope_sign_changes=changes)


def envelope_distance(a: Envelope, b: Envelope) -> float:
    """Largest difference of bin means over bins populated in both envelopes."""
    common = np.intersect1d(np.round(a.centers, 12), np.round(b.centers, 12))
    if not common.size:
        return np.inf
    lookup_a = dict(zip(np.round(a.centers, 12), a.means))
    lookup_b = dict(zip(np.round(b.centers, 12), b.means))
    return float(max(abs(lookup_a[c] - lookup_b[c]) for c in common))
