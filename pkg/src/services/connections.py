"""
Connection Service
Signed split and gap functions for homoclinic and heteroclinic connections,
bisection drivers along parameter slices, the orientation index of the primary
homoclinic orbit and the inclination-flip locator.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from services.errors import FlipscopeError, NoSignChange
from services.flow import Divergence, EventSpec, IntegratorConfig, Trajectory, integrate, transport_adjoint
from services.manifolds import (
    ManifoldKind,
    ManifoldPatch,
    grow_equilibrium_manifold,
    grow_orbit_manifold,
    section_trace,
)
from services.model import (
    CaseReport,
    EigenData,
    Params,
    classify_case,
    describe_equilibrium,
    eval_field,
    find_q,
    origin_eigens,
)
from services.orbits import (
    MultiplierTarget,
    NewtonDiverged,
    NoReturn,
    Orientability,
    PeriodicOrbit,
    SectionMap,
    SectionNotTransverse,
    find_periodic_orbit,
    find_saddle_orbit,
)
from services.winding import ENTER_V_EVENT, ZETA_SATURATED, compute_zeta, unstable_seed
from utils.bisection_utils import bisect_change, bisect_sign
from utils.geometry_utils import count_crossings
from utils.linalg_utils import canonical_sign, unit

logger = logging.getLogger(__name__)

CLOSE_RETURN_RADIUS = 0.05
PROXIMITY_RADIUS = 0.1
NEAR_ORBIT = 0.1
SPLIT_TOL = 1e-8
INTEGER_TOL = 1e-6
FLIP_TOL = 1e-6
HOMOCLINIC_LOCUS_TOL = 1e-6
APPROACH_T_MAX = 500.0
EXCURSION_RADIUS = 0.5
GAP_RETURNS = 80
SIGMA_EVENT = "sigma"
SPLIT_INTEGRATOR = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14, t_max=APPROACH_T_MAX)

# Located points of the alpha = 0.5 slice, ordered from mu = 0 downward
REFERENCE_SLICE: list[tuple[str, float]] = [
    ("2H_t", -2.880268e-3),
    ("Q0^Gt[Go]", -2.880324e-3),
    ("H_t[2Go]", -3.816057e-3),
    ("Q0^Gt[2Go]", -3.816233e-3),
    ("H_t[3Go]", -4.249463e-3),
    ("Q0^Gt[3Go]", -4.249668e-3),
    ("H_t[4Go]", -4.483178e-3),
    ("H_t[5Go]", -4.619987e-3),
    ("H_t[6Go]", -4.704132e-3),
    ("H_t[7Go]", -4.757563e-3),
    ("H_t[8Go]", -4.792227e-3),
    ("H_t[9Go]", -4.815051e-3),
    ("Q0^Go", -4.861805e-3),
    ("F", -7.054355e-3),
    ("Tan_Go", -7.076705e-3),
    ("SNP_10Go", -7.077572e-3),
    ("SNP_9Go", -7.078122e-3),
    ("SNP_7Go", -7.080554e-3),
    ("SNP_6Go", -7.083202e-3),
    ("SNP_5Go", -7.088049e-3),
    ("SNP_4Go", -7.097747e-3),
    ("SNP_3Go", -7.120570e-3),
    ("PD_8Gt", -7.151054e-3),
    ("PD_4Gt", -7.153300e-3),
    ("PD_2Gt", -7.163762e-3),
    ("PD_Gt", -7.211185e-3),
    ("SNP_Go", -7.386406e-3),
]
REFERENCE_ALPHA = 0.5
INCLINATION_FLIP_ALPHA = 0.3694818


class NoCloseApproach(FlipscopeError):
    """Error when the unstable branch never leaves the neighbourhood of the origin"""
    pass


class OrbitMissing(FlipscopeError):
    """Error when the target periodic orbit is unavailable at the requested parameters"""
    pass


class NeverNearOrbit(FlipscopeError):
    """Error when the unstable branch never comes within reach of the target orbit"""
    pass


class DetectorFailure(FlipscopeError):
    """Error when a detector cannot be evaluated inside a bisection"""

    def __init__(self, message: str, mu: float, **kwargs):
        super().__init__(message, **kwargs)
        self.mu = mu


class NotOnHomoclinicLocus(FlipscopeError):
    """Error when the orientation index is requested away from a homoclinic orbit"""
    pass


class TruncationTooShort(FlipscopeError):
    """Error when the reconstructed homoclinic orbit does not end near the origin"""
    pass


class EmptyTrace(FlipscopeError):
    """Error when a manifold patch leaves no trace in the section"""
    pass


class GapKind(str, Enum):
    HOMOCLINIC = "homoclinic-to-0"
    HETEROCLINIC = "heteroclinic-to-orbit"
    TANGENCY = "tangency-count"


class DetectorKind(str, Enum):
    SPLIT = "split"
    GAP = "gap"
    ZETA_CHANGE = "zeta-change"
    MULTIPLIER = "multiplier"
    TANGENCY = "tangency-count"

    @property
    def integer(self) -> bool:
        return self in (DetectorKind.ZETA_CHANGE, DetectorKind.TANGENCY)

    @property
    def default_tol(self) -> float:
        return INTEGER_TOL if self.integer else SPLIT_TOL


@dataclass
class GapMeasurement:
    kind: GapKind
    alpha: float
    mu: float
    value: float
    count: Optional[int] = None
    closest_distance: Optional[float] = None
    time: Optional[float] = None
    proxy: bool = False

    def to_row(self) -> list:
        return [self.kind.value, self.alpha, self.mu, self.count if self.count is not None else self.value]


@dataclass
class BifurcationPoint:
    kind: str
    alpha: float
    mu: float
    bracket_width: float
    detector: Optional[DetectorKind] = None
    loops_gamma_o: Optional[int] = None
    loops_gamma_t: Optional[int] = None
    case_report: Optional[CaseReport] = field(default=None, repr=False)
    reference: Optional[str] = None

    def to_row(self) -> list:
        return [self.kind, self.alpha, self.mu, self.bracket_width, self.loops_gamma_o, self.loops_gamma_t]


def nearest_reference(mu: float, alpha: float = REFERENCE_ALPHA, tol: float = 2e-5) -> Optional[tuple[str, float]]:
    """Closest catalogued point of the reference slice, or None when farther than tol."""
    if abs(alpha - REFERENCE_ALPHA) > 1e-12:
        return None
    label, ref = min(REFERENCE_SLICE, key=lambda item: abs(item[1] - mu))
    return (label, ref) if abs(ref - mu) <= tol else None
@dataclass
class _DeepReturn:
    eigen: EigenData
    approach: Trajectory
    closest_time: float
    entry_time: float
    closest_state: np.ndarray
    sign: int

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.closest_state))


def _deepest_return(p: Params, r_loc: float) -> _DeepReturn:
    """
    Follow the unstable branch until it enters V, diverges or runs out of time,
    and pick its closest approach to the origin after the first excursion.

    sign is (-1)^zeta when the branch reaches V after zeta loops around
    x = q_x. Otherwise it is +1 when another excursion follows the approach
    and 0 when nothing decides it.

    Raises:
        NoCloseApproach: the branch never leaves the neighbourhood of the origin
    """
    eig = origin_eigens(p)
    events = [EventSpec.half_space_entry(name=ENTER_V_EVENT)]
    try:
        q_x = float(find_q(p).location[0])
        events.append(EventSpec.plane((1.0, 0.0, 0.0), q_x, name=SIGMA_EVENT))
    except FlipscopeError:
        pass
    try:
        approach = integrate(p, unstable_seed(p, eig), SPLIT_INTEGRATOR, events)
    except Divergence as e:
        approach = e.trajectory

    times, states = approach.dense_samples(per_step=8)
    norms = np.linalg.norm(states, axis=1)
    away = np.nonzero(norms > EXCURSION_RADIUS)[0]
    if not away.size:
        raise NoCloseApproach(
            f"the unstable branch stays within {EXCURSION_RADIUS} of the origin",
            operation="homoclinic_split",
            params=p.as_dict(),
        )

    start = int(away[0])
    k = start + int(np.argmin(norms[start:]))
    t_c = float(times[k])
    lo, hi = times[max(k - 1, start)], times[min(k + 1, len(times) - 1)]
    if hi > lo and approach.solution is not None:
        best = minimize_scalar(lambda t: float(np.linalg.norm(approach.state_at(t))), bounds=(lo, hi),
                               method="bounded", options={"xatol": 1e-12})
        if best.fun < norms[k]:
            t_c = float(best.x)
    closest = approach.state_at(t_c) if approach.solution is not None else states[k]

    # last inward crossing of the r_loc sphere before the closest approach
    t_entry = t_c
    if np.linalg.norm(closest) < r_loc and approach.solution is not None:
        outside = np.nonzero(norms[start:k + 1] >= r_loc)[0]
        if outside.size:
            j = start + int(outside[-1])
            a = float(times[j])
            def gap(t: float) -> float:
                return float(np.linalg.norm(approach.state_at(t))) - r_loc

            if a < t_c and gap(a) >= 0.0 > gap(t_c):
                t_entry = float(brentq(gap, a, t_c, xtol=1e-13))

    crossings = sum(1 for e in approach.events_named(SIGMA_EVENT) if e.direction != 0)
    if approach.events_named(ENTER_V_EVENT) and len(events) > 1 and crossings % 2 == 0:
        sign = -1 if (crossings // 2) % 2 else 1
    elif np.any(norms[k:] > EXCURSION_RADIUS):
        sign = 1
    else:
        sign = 0
    return _DeepReturn(eigen=eig, approach=approach, closest_time=t_c, entry_time=t_entry,
                       closest_state=np.asarray(closest, dtype=float), sign=sign)


def homoclinic_split(p: Params, r_loc: float = CLOSE_RETURN_RADIUS) -> GapMeasurement:
    """
    Signed distance of the unstable branch from the stable manifold of the origin.

    The deepest return to the origin after the first excursion decides the
    value: its e_u-coordinate carried back to the r_loc sphere by
    exp(-lambda_u (t_c - t_entry)). The sign is the parity of the winding
    number: each homoclinic orbit of the origin separates zeta = n from
    zeta = n + 1, so the value changes sign across it. Returns that stay
    outside the r_loc sphere keep the unscaled coordinate and are flagged as
    proxies.

    Raises:
        NoCloseApproach: the branch never leaves the neighbourhood of the origin
    """
    return _split_measurement(p, _deepest_return(p, r_loc), r_loc)


def _split_measurement(p: Params, ret: _DeepReturn, r_loc: float) -> GapMeasurement:
    u = float(ret.eigen.coordinates(ret.closest_state)[2])
    magnitude = abs(u) * math.exp(-ret.eigen.lambda_u * (ret.closest_time - ret.entry_time))
    sign = ret.sign or (1.0 if u >= 0.0 else -1.0)
    value = math.copysign(magnitude, sign)
    logger.debug(f"split(alpha={p.alpha}, mu={p.mu:.10g}) = {value:.6e} at distance {ret.distance:.3e}")
    return GapMeasurement(
        kind=GapKind.HOMOCLINIC, alpha=p.alpha, mu=p.mu, value=value,
        closest_distance=ret.distance,
        time=ret.closest_time,
        proxy=ret.distance >= r_loc,
    )


def _branch(p: Params, events) -> Trajectory:
    try:
        return integrate(p, unstable_seed(p), IntegratorConfig(t_max=APPROACH_T_MAX), events)
    except Divergence as e:
        return e.trajectory


def hetero_gap(p: Params, target: Optional[PeriodicOrbit], max_returns: int = GAP_RETURNS) -> GapMeasurement:
    """
    Signed unstable component of the unstable branch of 0 relative to a saddle orbit.

    The section iterate closest to the orbit's fixed point is expressed in the
    eigenbasis of the return map; its unstable component is scaled back by
    Lambda_2^-m to the first iterate within NEAR_ORBIT, m being the number of
    near passes in between.

    Raises:
        OrbitMissing: no saddle orbit given
        NeverNearOrbit: the branch stays farther than NEAR_ORBIT from the fixed point
    """
    if target is None or not target.is_saddle:
        raise OrbitMissing("heteroclinic gap needs a saddle periodic orbit", operation="hetero_gap",
                           params=p.as_dict())

    section = target.section
    events = [section.event(max_count=max_returns), EventSpec.half_space_entry(name=ENTER_V_EVENT)]
    branch = _branch(p, events)
    star = section.to_coords(target.fixed_point)
    coords = [section.to_coords(e.state) for e in branch.events_named("section")]
    if not coords:
        raise NeverNearOrbit("the unstable branch never reaches the section", operation="hetero_gap",
                             params=p.as_dict())

    distances = np.array([np.linalg.norm(c - star) for c in coords])
    closest = int(np.argmin(distances))
    if distances[closest] > NEAR_ORBIT:
        raise NeverNearOrbit(
            f"closest section iterate at distance {distances[closest]:.3g}",
            operation="hetero_gap",
            params=p.as_dict(),
        )

    near = np.nonzero(distances <= NEAR_ORBIT)[0]
    passes = int(np.count_nonzero(near < closest))

    values, vectors = np.linalg.eig(target.return_jacobian)
    order = np.argsort(np.abs(values))
    basis = np.column_stack([canonical_sign(unit(vectors[:, k].real)) for k in order])
    unstable = float(np.linalg.solve(basis, coords[closest] - star)[1])
    lam = float(values[order[1]].real)
    value = unstable * lam ** (-passes)
    logger.debug(f"gap(alpha={p.alpha}, mu={p.mu:.10g}, {target.label}) = {value:.6e} after {passes} passes")
    return GapMeasurement(
        kind=GapKind.HETEROCLINIC, alpha=p.alpha, mu=p.mu, value=value,
        closest_distance=float(distances[closest]),
    )


def _section_polylines(trace, section: SectionMap) -> list[np.ndarray]:
    lines = []
    for curve, closed in zip(trace.curves, trace.closed):
        planar = np.array([section.to_coords(pt) for pt in curve])
        if closed and len(planar) > 2:
            planar = np.vstack([planar, planar[:1]])
        lines.append(planar)
    return lines


def tangency_count(p: Params, a: ManifoldPatch, b: ManifoldPatch, section: SectionMap) -> GapMeasurement:
    """
    Transverse crossings of the section traces of two manifold patches.

    Raises:
        EmptyTrace: either patch has no section crossings
    """
    if a is b:
        raise ValueError("tangency_count compares two different patches")
    lines_a = _section_polylines(section_trace(a, section), section)
    lines_b = _section_polylines(section_trace(b, section), section)
    if not lines_a or not lines_b:
        raise EmptyTrace(f"{a.label if not lines_a else b.label} has no trace in the section",
                         operation="tangency_count", params=p.as_dict())
    count = sum(count_crossings(la, lb) for la in lines_a for lb in lines_b)
    logger.debug(f"tangency count at mu={p.mu:.10g}: {count}")
    return GapMeasurement(kind=GapKind.TANGENCY, alpha=p.alpha, mu=p.mu, value=float(count), count=count)


def rotation_counts(p: Params, gamma_o: Optional[np.ndarray], gamma_t: Optional[np.ndarray],
                    radius: float = PROXIMITY_RADIUS) -> tuple[Optional[int], Optional[int]]:
    """Passes of the unstable branch within radius of the section points of Gamma_o and Gamma_t."""
    events = [EventSpec.half_space_entry(name=ENTER_V_EVENT)]
    names = []
    for name, point in (("gamma_o", gamma_o), ("gamma_t", gamma_t)):
        if point is not None:
            events.append(EventSpec.proximity(point, radius, name=name))
            names.append(name)
    if len(events) == 1:
        return None, None
    branch = _branch(p, events)
    counts = {name: len(branch.events_named(name)) for name in names}
    return counts.get("gamma_o"), counts.get("gamma_t")


def orientation_index(p: Params, r_loc: float = CLOSE_RETURN_RADIUS, dwell_fraction: float = 1.0) -> float:
    """
    Signed orientation of the stable manifold of 0 along the primary homoclinic orbit.

    The adjoint vector normal to E^s at the close return is carried backward to
    the departure point; its normalized component along the adjoint eigenvector
    of lambda_s changes sign at an inclination flip.

    Args:
        p: parameters on the homoclinic locus
        r_loc: close-return ball radius
        dwell_fraction: fraction of the time from the sphere entry to the closest approach kept in the truncation

    Raises:
        NotOnHomoclinicLocus: the split exceeds HOMOCLINIC_LOCUS_TOL
        TruncationTooShort: the truncated orbit ends outside the close-return ball
    """
    ret = _deepest_return(p, r_loc)
    split = _split_measurement(p, ret, r_loc)
    if split.proxy or abs(split.value) > HOMOCLINIC_LOCUS_TOL:
        raise NotOnHomoclinicLocus(f"split {split.value:.3e} at mu={p.mu}", operation="orientation_index",
                                   params=p.as_dict())
    t_h = ret.entry_time + dwell_fraction * (ret.closest_time - ret.entry_time)
    orbit = integrate(p, unstable_seed(p, ret.eigen), SPLIT_INTEGRATOR.with_(t_max=t_h))
    end = orbit.final_state
    if np.linalg.norm(end) > r_loc:
        raise TruncationTooShort(
            f"truncated orbit ends at distance {np.linalg.norm(end):.3g} from the origin",
            operation="orientation_index",
            params=p.as_dict(),
        )

    left = ret.eigen.left_vectors()
    w = transport_adjoint(p, orbit, left[2], reverse=True).final
    f0 = unit(eval_field(p, orbit.states[0]))
    w = w - np.dot(w, f0) * f0
    index = float(np.dot(unit(w), unit(left[1])))
    arrival = float(np.sign(ret.eigen.coordinates(end)[1])) or 1.0
    logger.debug(f"orientation index at alpha={p.alpha}: {index * arrival:.6f}")
    return index * arrival


def locate_inclination_flip(
    alpha_lo: float = 0.2,
    alpha_hi: float = 0.5,
    mu: float = 0.0,
    tol: float = FLIP_TOL,
    base: Optional[dict] = None,
) -> BifurcationPoint:
    """
    Bisect the orientation index in alpha along the homoclinic locus.

    Raises:
        NoSignChange: the index has the same sign at both ends
    """
    base = {k: v for k, v in (base or {}).items() if k not in ("alpha", "mu")}
    lo, hi = sorted((alpha_lo, alpha_hi))
    bracket = bisect_sign(lambda a: orientation_index(Params(alpha=a, mu=mu, **base)), lo, hi, tol)
    alpha_star = bracket.mid
    point = BifurcationPoint(
        kind="inclination-flip",
        alpha=alpha_star,
        mu=mu,
        bracket_width=bracket.width,
        case_report=classify_case(Params(alpha=alpha_star, mu=mu, **base)),
    )
    logger.info(f"Inclination flip at alpha={alpha_star:.8f} ({point.case_report.to_text()})")
    return point


@dataclass
class OrbitTracker:
    """Re-solves one saddle orbit at nearby mu, seeding Newton from the closest solved mu."""
    base: Params
    orientability: Orientability
    loop_count: int = 1
    section: SectionMap = field(default_factory=SectionMap)
    label: str = ""
    solved: dict = field(default_factory=dict)

    def remember(self, orbit: PeriodicOrbit) -> None:
        self.solved[orbit.mu] = orbit.fixed_point

    def at(self, mu: float) -> PeriodicOrbit:
        """
        Orbit at mu, continued from the nearest solved mu or harvested afresh.

        Raises:
            OrbitMissing: neither route converges
        """
        p = self.base.with_mu(mu)
        if self.solved:
            nearest = min(self.solved, key=lambda m: abs(m - mu))
            try:
                orbit = find_periodic_orbit(p, self.section, self.solved[nearest], self.loop_count, label=self.label)
                self.remember(orbit)
                return orbit
            except (NoReturn, NewtonDiverged, SectionNotTransverse) as e:
                logger.warning(f"{self.label or 'orbit'} lost at mu={mu:.10g} ({e}); harvesting guesses")
        try:
            orbit = find_saddle_orbit(p, self.orientability, self.loop_count, self.section, self.label)
        except NewtonDiverged as e:
            raise OrbitMissing(f"{self.label or 'orbit'} not found at mu={mu:.10g}", operation="OrbitTracker.at",
                               params=p.as_dict()) from e
        self.remember(orbit)
        return orbit


@dataclass
class SliceDetector:
    """
    Scalar or integer function of mu along a fixed-alpha slice.

    split and gap are signed; zeta-change and tangency-count are integers.
    gap, multiplier and tangency-count follow a periodic orbit via tracker;
    tangency-count compares W^u of that orbit with W^s of the orbit
    (partner "orbit") or of the origin (partner "origin").
    """
    kind: DetectorKind
    base: Params
    tracker: Optional[OrbitTracker] = None
    multiplier: MultiplierTarget = MultiplierTarget.MINUS_ONE
    partner: str = "orbit"
    n_seeds: int = 60
    cap: float = 25.0
    loop_trackers: tuple = (None, None)

    def __post_init__(self):
        self.kind = DetectorKind(self.kind)
        needs_orbit = (DetectorKind.GAP, DetectorKind.MULTIPLIER, DetectorKind.TANGENCY)
        if self.kind in needs_orbit and self.tracker is None:
            raise ValueError(f"{self.kind.value} detector needs an orbit tracker")

    @property
    def alpha(self) -> float:
        return self.base.alpha

    def evaluate(self, mu: float) -> Optional[Union[float, int]]:
        """
        Detector value at mu; None when the split has no close return.

        Raises:
            DetectorFailure: any other numerical failure, tagged with mu
        """
        p = self.base.with_mu(mu)
        try:
            return self._evaluate(p)
        except NoCloseApproach:
            if self.kind is DetectorKind.SPLIT:
                return None
            raise
        except FlipscopeError as e:
            raise DetectorFailure(f"{self.kind.value} failed at mu={mu:.10g}: {e}", mu=mu,
                                  operation="SliceDetector.evaluate", params=p.as_dict()) from e

    def _evaluate(self, p: Params) -> Union[float, int]:
        if self.kind is DetectorKind.SPLIT:
            return homoclinic_split(p).value
        if self.kind is DetectorKind.ZETA_CHANGE:
            return compute_zeta(p).zeta
        orbit = self.tracker.at(p.mu)
        if self.kind is DetectorKind.GAP:
            return hetero_gap(p, orbit).value
        if self.kind is DetectorKind.MULTIPLIER:
            if self.multiplier is MultiplierTarget.MINUS_ONE:
                return orbit.flip_test()
            if self.multiplier is MultiplierTarget.PLUS_ONE:
                return orbit.fold_test()
            return orbit.discriminant()

        unstable = grow_orbit_manifold(p, orbit, ManifoldKind.UNSTABLE, cap=self.cap, n_seeds=self.n_seeds)
        if self.partner == "origin":
            origin = describe_equilibrium(p, np.zeros(3))
            stable = grow_equilibrium_manifold(p, origin, ManifoldKind.STABLE_2D, cap=self.cap, n_seeds=self.n_seeds)
        else:
            stable = grow_orbit_manifold(p, orbit, ManifoldKind.STABLE, cap=self.cap, n_seeds=self.n_seeds)
        return tangency_count(p, unstable, stable, orbit.section).count

    def loop_points(self, mu: float) -> tuple[Optional[np.ndarray], Optional[np.ndarray]]:
        points = []
        for tracker in self.loop_trackers:
            try:
                points.append(tracker.at(mu).fixed_point if tracker is not None else None)
            except FlipscopeError:
                points.append(None)
        return points[0], points[1]


def _with_zeta_fallback(detector: SliceDetector, lo: float, hi: float, v_lo: float, v_hi: float) -> Callable:
    """Sign function that classifies mu by winding number where the split is undefined."""
    zeta_lo = compute_zeta(detector.base.with_mu(lo)).zeta
    tiny = np.finfo(float).tiny

    def fn(mu: float) -> float:
        value = detector.evaluate(mu)
        if value is not None:
            return value
        zeta = compute_zeta(detector.base.with_mu(mu)).zeta
        logger.warning(f"split undefined at mu={mu:.10g}; winding number {zeta} decides the side")
        return math.copysign(tiny, v_lo if zeta == zeta_lo else v_hi)

    return fn


MULTIPLIER_PREFIX = {
    MultiplierTarget.MINUS_ONE: "PD",
    MultiplierTarget.PLUS_ONE: "SNP",
    MultiplierTarget.COMPLEX: "CC",
}


def _loop_suffix(loops_o: Optional[int], loops_t: Optional[int]) -> str:
    parts = [f"{n}{name}" for n, name in ((loops_o, "Go"), (loops_t, "Gt")) if n]
    return f"[{','.join(parts)}]" if parts else ""


def point_label(detector: SliceDetector, loops_o: Optional[int] = None, loops_t: Optional[int] = None,
                transition: Optional[tuple[int, int]] = None) -> str:
    """
    Name a located point after what was computed: the detector kind, the orbit
    it follows and the loop counts of the connecting orbit.
    """
    suffix = _loop_suffix(loops_o, loops_t)
    kind = detector.kind
    if kind is DetectorKind.SPLIT:
        return f"H{suffix}"
    if kind is DetectorKind.ZETA_CHANGE:
        return f"zeta {transition[0]}->{transition[1]}" if transition else kind.value

    tracker = detector.tracker
    orbit = getattr(tracker, "label", "") or "orbit"
    loop_count = getattr(tracker, "loop_count", 1)
    if loop_count > 1:
        orbit = f"{loop_count}{orbit}"
    if kind is DetectorKind.GAP:
        return f"Q0^{orbit}{suffix}"
    if kind is DetectorKind.MULTIPLIER:
        return f"{MULTIPLIER_PREFIX[detector.multiplier]}_{orbit}"
    return f"Tan_{orbit}^0" if detector.partner == "origin" else f"Tan_{orbit}"


def _winds_past(zeta: int, upper: int) -> bool:
    return zeta == ZETA_SATURATED or zeta >= upper


def _bisect_winding(detector: SliceDetector, lo: float, hi: float, tol: float,
                    transition: Optional[tuple[int, int]], value_lo=None, value_hi=None):
    """
    Bisect one change of the winding number.

    Without a transition the first change below hi is taken, from zeta(hi) to
    zeta(hi) + 1.

    Returns:
        (bracket, transition)
    """
    if transition is None:
        v_hi = detector.evaluate(hi) if value_hi is None else value_hi
        if v_hi == ZETA_SATURATED:
            return bisect_change(detector.evaluate, lo, hi, tol, value_lo=value_lo, value_hi=v_hi), None
        transition = (v_hi, v_hi + 1)
        value_hi = v_hi
    lower, upper = sorted(transition)

    def past(mu: float) -> bool:
        return _winds_past(detector.evaluate(mu), upper)

    bracket = bisect_change(
        past, lo, hi, tol,
        value_lo=None if value_lo is None else _winds_past(value_lo, upper),
        value_hi=None if value_hi is None else _winds_past(value_hi, upper),
    )
    return bracket, (lower, upper)


def locate_bifurcation(
    detector: SliceDetector,
    mu_lo: float,
    mu_hi: float,
    tol: Optional[float] = None,
    label: Optional[str] = None,
    value_lo=None,
    value_hi=None,
    transition: Optional[tuple[int, int]] = None,
) -> BifurcationPoint:
    """
    Bisect a detector along its slice.

    Args:
        detector: slice detector (alpha is fixed by its base parameters)
        mu_lo, mu_hi: bracket in mu
        tol: final bracket width; 1e-8 for signed, 1e-6 for integer detectors
        label: point label; defaults to one built from the detector, its orbit and the loop counts
        value_lo, value_hi: detector values at the bracket ends when already known
        transition: pair of winding numbers whose change a zeta-change detector bisects;
            defaults to the first change below mu_hi

    Raises:
        NoSignChange: the detector does not change across the bracket
        DetectorFailure: an evaluation failed (carries the failing mu)
    """
    kind = detector.kind
    tol = tol or kind.default_tol
    lo, hi = sorted((mu_lo, mu_hi))
    if lo != mu_lo:
        value_lo, value_hi = value_hi, value_lo

    if kind is DetectorKind.ZETA_CHANGE:
        bracket, transition = _bisect_winding(detector, lo, hi, tol, transition, value_lo, value_hi)
    elif kind.integer:
        bracket = bisect_change(detector.evaluate, lo, hi, tol, value_lo=value_lo, value_hi=value_hi)
    else:
        v_lo = detector.evaluate(lo) if value_lo is None else value_lo
        v_hi = detector.evaluate(hi) if value_hi is None else value_hi
        if v_lo is None or v_hi is None:
            logger.warning("split undefined at a bracket end; bisecting the winding number instead")
            zeta = SliceDetector(DetectorKind.ZETA_CHANGE, detector.base)
            bracket, _ = _bisect_winding(zeta, lo, hi, INTEGER_TOL, transition)
        else:
            fn = _with_zeta_fallback(detector, lo, hi, v_lo, v_hi) if kind is DetectorKind.SPLIT else detector.evaluate
            bracket = bisect_sign(fn, lo, hi, tol, value_lo=v_lo, value_hi=v_hi)

    mu = bracket.mid
    reference = nearest_reference(mu, detector.alpha)
    loops_o, loops_t = None, None
    gamma_o, gamma_t = detector.loop_points(mu)
    if gamma_o is not None or gamma_t is not None:
        loops_o, loops_t = rotation_counts(detector.base.with_mu(mu), gamma_o, gamma_t)

    point = BifurcationPoint(
        kind=label or point_label(detector, loops_o, loops_t, transition),
        alpha=detector.alpha,
        mu=mu,
        bracket_width=bracket.width,
        detector=kind,
        loops_gamma_o=loops_o,
        loops_gamma_t=loops_t,
        reference=reference[0] if reference else None,
    )
    logger.info(f"Located {point.kind} at alpha={point.alpha}, mu={mu:.10g} (width {bracket.width:.1e})"
                + (f", closest catalogued point {point.reference}" if point.reference else ""))
    return point


def _changes(a, b, integer: bool) -> bool:
    if a is None or b is None:
        return False
    return a != b if integer else bool(np.sign(a) != np.sign(b))


def scan_slice(
    detector: SliceDetector,
    mu_min: float,
    mu_max: float,
    samples: int = 41,
    tol: Optional[float] = None,
) -> list[BifurcationPoint]:
    """
    Sample a detector on [mu_min, mu_max] and bisect every bracket it changes across.

    Samples that fail are skipped; brackets never span a failed sample.

    Returns:
        located points ordered from mu_max down to mu_min
    """
    if samples < 2:
        raise ValueError("scan_slice needs at least two samples")
    mus = np.linspace(mu_max, mu_min, samples)
    values = []
    for mu in mus:
        try:
            values.append(detector.evaluate(float(mu)))
        except DetectorFailure as e:
            logger.warning(f"sample skipped: {e}")
            values.append(None)

    points = []
    for k in range(samples - 1):
        if not _changes(values[k], values[k + 1], detector.kind.integer):
            continue
        try:
            points.append(locate_bifurcation(detector, float(mus[k + 1]), float(mus[k]), tol,
                                             value_lo=values[k + 1], value_hi=values[k]))
        except (NoSignChange, DetectorFailure) as e:
            logger.warning(f"bracket [{mus[k + 1]:.10g}, {mus[k]:.10g}] abandoned: {e}")
    logger.info(f"Slice alpha={detector.alpha}: {len(points)} point(s) from {samples} samples")
    return points
