"""
Invariant Manifold Service
Grows one- and two-dimensional stable and unstable manifolds of equilibria and
periodic orbits as trajectory families, and cuts them with the reference sphere
or a plane section.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from services.errors import FlipscopeError
from services.flow import Divergence, IntegratorConfig, Trajectory, integrate, transport_tangent
from services.model import Equilibrium, Params
from services.orbits import Orientability, PeriodicOrbit, SectionMap
from services.pool import run_ordered
from utils.geometry_utils import REFERENCE_SPHERE, Sphere, string_polylines
from utils.linalg_utils import kernel_basis, unit

logger = logging.getLogger(__name__)

SEED_OFFSET_1D = 1e-7
SEED_OFFSET_2D = 1e-5
DEFAULT_SEEDS_2D = 200
DEFAULT_SEEDS_ORBIT = 100
DEFAULT_CAP_EQUILIBRIUM = 4.0
DEFAULT_CAP_ORBIT = 25.0
# Clustering of 2D seed angles toward the strong stable direction, in [0, 1)
ANGLE_CLUSTERING = 0.8
CONVERGENCE_HORIZON = 30.0
CONVERGENCE_LIMIT = 1e-4
MAX_CONVERGENCE_PERIODS = 20
REPLAY_MARGIN = 1e-2


class EigenstructureMissing(FlipscopeError):
    """Error when the owner lacks the eigen-directions the manifold needs"""
    pass


class ComplexMultipliers(FlipscopeError):
    """Error when an orbit has no real Floquet bundle"""
    pass


class ManifoldKind(str, Enum):
    STABLE_2D = "stable-2d"
    UNSTABLE_1D = "unstable-1d"
    STRONG_STABLE_1D = "strong-stable-1d"
    STABLE = "stable"
    UNSTABLE = "unstable"

    @property
    def is_stable(self) -> bool:
        return self in (ManifoldKind.STABLE_2D, ManifoldKind.STRONG_STABLE_1D, ManifoldKind.STABLE)


@dataclass
class SeedDescriptor:
    offset: float
    arclength_cap: float
    angles: Optional[np.ndarray] = None
    phases: Optional[np.ndarray] = None


@dataclass
class ManifoldPatch:
    """
    Trajectory family of one manifold.

    seeds[i] starts trajectories[i]; anchors[i] is the point of the owner the
    seed is attached to. seed_loops lists trajectory indices that form closed
    seed curves (one for an equilibrium surface, two for a cylinder, one
    doubled loop for a Moebius band).
    """
    owner: Union[Equilibrium, PeriodicOrbit]
    kind: ManifoldKind
    dimension: int
    trajectories: list[Trajectory]
    seeds: np.ndarray
    anchors: np.ndarray
    descriptor: SeedDescriptor
    seed_loops: list[list[int]] = field(default_factory=list)
    bundle_orientable: Optional[bool] = None
    bundle_residual: Optional[float] = None

    @property
    def boundary_circles(self) -> int:
        return len(self.seed_loops)

    @property
    def label(self) -> str:
        if isinstance(self.owner, PeriodicOrbit):
            return f"W^{self.kind.value}({self.owner.label or 'orbit'})"
        return f"W^{self.kind.value}({np.round(self.owner.location, 6).tolist()})"


@dataclass
class Surface:
    """Either a sphere or a plane n.s = offset."""
    sphere: Optional[Sphere] = None
    section: Optional[SectionMap] = None

    def value(self, s: np.ndarray) -> float:
        if self.sphere is not None:
            return self.sphere.value(s)
        return float(np.dot(self.section.unit_normal, s) - np.dot(self.section.unit_normal, self.section.anchor))


@dataclass
class CurveSet:
    owner_label: str
    surface: Surface
    curves: list[np.ndarray] = field(default_factory=list)
    closed: list[bool] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.curves)

    def points(self) -> np.ndarray:
        return np.vstack(self.curves) if self.curves else np.empty((0, 3))

    def rows(self):
        for curve_id, curve in enumerate(self.curves):
            for seq, pt in enumerate(curve):
                yield [curve_id, seq, float(pt[0]), float(pt[1]), float(pt[2])]


def clustered_angles(n: int, clustering: float = ANGLE_CLUSTERING) -> np.ndarray:
    """n increasing angles on [0, 2 pi), denser near pi/2 and 3 pi/2."""
    phi = 2.0 * np.pi * np.arange(n) / n
    return phi + 0.5 * clustering * np.sin(2.0 * phi)


def _grow_one(job: tuple) -> Trajectory:
    p, seed, cfg = job
    try:
        return integrate(p, seed, cfg)
    except Divergence as e:
        return e.trajectory


def _grow_family(p, seeds: Sequence[np.ndarray], cfg: IntegratorConfig, workers: int) -> list[Trajectory]:
    jobs = [(p, seed, cfg) for seed in seeds]
    return run_ordered(_grow_one, jobs, workers=workers, desc="manifold", progress=workers > 1)


def _family_config(cap: float, stable: bool) -> IntegratorConfig:
    # t_max is a safety net; the arclength cap ends every run
    cfg = IntegratorConfig(t_max=1000.0, arclength_cap=cap)
    return cfg.backward() if stable else cfg


def _one_dimensional_direction(eq: Equilibrium, kind: ManifoldKind) -> np.ndarray:
    if kind is ManifoldKind.UNSTABLE_1D:
        if eq.eigen is None:
            raise EigenstructureMissing("no unstable eigenvector", operation="grow_equilibrium_manifold")
        return eq.eigen.e_u
    if eq.eigen is not None:
        return eq.eigen.e_ss
    if eq.pair is not None and eq.pair.real_eigenvalue < 0.0:
        return eq.pair.real_vector
    raise EigenstructureMissing("no strong stable direction", operation="grow_equilibrium_manifold")


def grow_equilibrium_manifold(
    p: Params,
    eq: Equilibrium,
    which: ManifoldKind,
    cap: float = DEFAULT_CAP_EQUILIBRIUM,
    n_seeds: int = DEFAULT_SEEDS_2D,
    workers: int = 1,
) -> ManifoldPatch:
    """
    Trajectory family of W^u, W^ss or the two-dimensional W^s of an equilibrium.

    One-dimensional manifolds use the two seeds eq +- SEED_OFFSET_1D along the
    eigenvector; for a focus the strong stable direction is the real
    eigenvector. The stable surface uses n_seeds points on a SEED_OFFSET_2D
    circle in span{e_s, e_ss}, ordered by angle. Stable families run backward.

    Raises:
        EigenstructureMissing: the equilibrium lacks the required directions
    """
    which = ManifoldKind(which)
    stable = which.is_stable
    cfg = _family_config(cap, stable)
    base = np.asarray(eq.location, dtype=float)

    if which is ManifoldKind.STABLE_2D:
        if eq.eigen is None:
            raise EigenstructureMissing("stable surface needs a real saddle", operation="grow_equilibrium_manifold")
        angles = clustered_angles(n_seeds)
        seeds = np.array([
            base + SEED_OFFSET_2D * (math.cos(theta) * eq.eigen.e_s + math.sin(theta) * eq.eigen.e_ss)
            for theta in angles
        ])
        descriptor = SeedDescriptor(offset=SEED_OFFSET_2D, arclength_cap=cap, angles=angles)
        loops, dimension = [list(range(n_seeds))], 2
    elif which in (ManifoldKind.UNSTABLE_1D, ManifoldKind.STRONG_STABLE_1D):
        direction = _one_dimensional_direction(eq, which)
        seeds = np.array([base + SEED_OFFSET_1D * direction, base - SEED_OFFSET_1D * direction])
        descriptor = SeedDescriptor(offset=SEED_OFFSET_1D, arclength_cap=cap)
        loops, dimension = [], 1
    else:
        raise ValueError(f"{which.value} is an orbit manifold")

    trajectories = _grow_family(p, seeds, cfg, workers)
    logger.info(f"Grew {which.value} manifold of {np.round(base, 6).tolist()}: {len(trajectories)} trajectories")
    return ManifoldPatch(
        owner=eq,
        kind=which,
        dimension=dimension,
        trajectories=trajectories,
        seeds=seeds,
        anchors=np.tile(base, (len(seeds), 1)),
        descriptor=descriptor,
        seed_loops=loops,
    )


def _floquet_vector(orbit: PeriodicOrbit, stable: bool) -> tuple[float, np.ndarray]:
    multiplier = orbit.multipliers[0] if stable else orbit.multipliers[1]
    values, vectors = np.linalg.eig(orbit.monodromy)
    k = int(np.argmin(np.abs(values - multiplier)))
    return float(multiplier.real), unit(vectors[:, k].real)


def grow_orbit_manifold(
    p: Params,
    orbit: PeriodicOrbit,
    which: ManifoldKind,
    cap: float = DEFAULT_CAP_ORBIT,
    n_seeds: int = DEFAULT_SEEDS_ORBIT,
    offset: float = SEED_OFFSET_2D,
    workers: int = 1,
) -> ManifoldPatch:
    """
    Trajectory family of W^s or W^u of a saddle periodic orbit.

    The monodromy eigenvector is transported around the orbit to n_seeds
    phase points; seeds sit at offset on both sides of the orbit along the
    normalized bundle direction.

    Raises:
        ComplexMultipliers: the orbit has a complex multiplier pair
    """
    which = ManifoldKind(which)
    if which not in (ManifoldKind.STABLE, ManifoldKind.UNSTABLE):
        raise ValueError(f"{which.value} is an equilibrium manifold")
    if orbit.orientability is Orientability.COMPLEX:
        raise ComplexMultipliers(f"multipliers {orbit.multipliers} are complex", operation="grow_orbit_manifold")
    if orbit.trajectory is None:
        raise ValueError("orbit carries no trajectory")

    stable = which.is_stable
    multiplier, v0 = _floquet_vector(orbit, stable)
    residual = float(np.linalg.norm(orbit.monodromy @ v0 - multiplier * v0) / abs(multiplier))

    traj = orbit.trajectory
    # last phase pinned to the stored end time so t_eval stays inside the span
    phases = np.append(traj.t[0] + orbit.period * np.arange(n_seeds) / n_seeds, traj.t[-1])
    path = transport_tangent(p, traj, v0, t_eval=phases)
    v_end = path.values[-1]
    orientable = bool(np.dot(v_end, v0) > 0.0)

    points = np.array([traj.state_at(t) for t in phases[:-1]])
    directions = np.array([unit(v) for v in path.values[:-1]])
    plus = points + offset * directions
    minus = points - offset * directions
    seeds = np.vstack([plus, minus])
    anchors = np.vstack([points, points])

    n = n_seeds
    if orientable:
        loops = [list(range(n)), list(range(n, 2 * n))]
    else:
        loops = [list(range(2 * n))]

    trajectories = _grow_family(p, seeds, _family_config(cap, stable), workers)
    logger.info(
        f"Grew W^{which.value}({orbit.label or 'orbit'}): {len(trajectories)} trajectories, "
        f"bundle {'orientable' if orientable else 'nonorientable'}"
    )
    return ManifoldPatch(
        owner=orbit,
        kind=which,
        dimension=2,
        trajectories=trajectories,
        seeds=seeds,
        anchors=anchors,
        descriptor=SeedDescriptor(offset=offset, arclength_cap=cap, phases=phases[:-1]),
        seed_loops=loops,
        bundle_orientable=orientable,
        bundle_residual=residual,
    )


def surface_crossings(traj: Trajectory, g, max_count: Optional[int] = None) -> list[np.ndarray]:
    """Points where g changes sign along traj, polished on the dense output."""
    if traj.solution is None:
        return []
    times, states = traj.dense_samples()
    values = np.array([g(s) for s in states])
    hits = []
    for k in np.nonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)[0]:
        lo, hi = sorted((times[k], times[k + 1]))
        t_hit = brentq(lambda t: g(traj.state_at(t)), lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        hits.append(traj.state_at(t_hit))
        if max_count is not None and len(hits) >= max_count:
            break
    return hits


def _string_by_index(patch: ManifoldPatch, crossings: list[list[np.ndarray]], label: str,
                     surface: Surface) -> CurveSet:
    result = CurveSet(owner_label=label, surface=surface)
    if patch.dimension == 1:
        for hits in crossings:
            for pt in hits:
                result.curves.append(np.array([pt]))
                result.closed.append(False)
        return result

    depth = max((len(h) for h in crossings), default=0)
    loops = patch.seed_loops or [list(range(len(crossings)))]
    for index in range(depth):
        for loop in loops:
            ordered = [crossings[i][index] if len(crossings[i]) > index else None for i in loop]
            for curve, closed in string_polylines(ordered, cyclic=True):
                result.curves.append(curve)
                result.closed.append(closed)
    return result


def intersect_with_sphere(patch: ManifoldPatch, sphere: Sphere = REFERENCE_SPHERE) -> CurveSet:
    """
    Crossings of every trajectory with the sphere, strung into curves.

    Crossings with the same index on adjacent seeds join one curve; a
    one-dimensional manifold yields single points.
    """
    crossings = [surface_crossings(traj, sphere.value) for traj in patch.trajectories]
    result = _string_by_index(patch, crossings, patch.label, Surface(sphere=sphere))
    logger.debug(f"{patch.label} meets the sphere in {len(result)} curve(s)")
    return result


def section_trace(patch: ManifoldPatch, section: SectionMap, max_crossings: int = 1) -> CurveSet:
    """First max_crossings crossings of each trajectory with a plane, strung by crossing index."""
    surface = Surface(section=section)
    crossings = [surface_crossings(traj, surface.value, max_crossings) for traj in patch.trajectories]
    return _string_by_index(patch, crossings, patch.label, surface)


def seed_subspace_residuals(patch: ManifoldPatch) -> np.ndarray:
    """Distance of each stable-surface seed offset from span{e_s, e_ss}."""
    eig = patch.owner.eigen
    normal = kernel_basis(np.vstack([eig.e_s, eig.e_ss]))[:, 0]
    return np.abs((patch.seeds - patch.anchors) @ normal)


def _unstable_rate(owner) -> float:
    if isinstance(owner, PeriodicOrbit):
        return math.log(abs(owner.multipliers[1])) / owner.period
    if owner.eigen is not None:
        return owner.eigen.lambda_u
    return float(max(np.max(np.real(owner.eigenvalues)), 0.0))


def _replay_start(patch: ManifoldPatch, traj: Trajectory, index: int) -> tuple[np.ndarray, float]:
    """
    Point on a stable trajectory far from its seed and the backward time to reach it.

    The window is as long as the unstable rate allows: a forward replay
    amplifies the integration error by exp(rate * window), which must stay
    below REPLAY_MARGIN times the seed offset.
    """
    if traj.solution is None or len(traj.t) < 2:
        return patch.seeds[index], 0.0
    rate = _unstable_rate(patch.owner)
    window = traj.duration
    if rate > 0.0:
        window = min(window, math.log(REPLAY_MARGIN * patch.descriptor.offset / traj.config.rel_tol) / rate)
    window = max(window, 0.0)
    t_start = traj.t[0] + math.copysign(window, traj.t[-1] - traj.t[0])
    return traj.state_at(t_start), window


def owner_distances(p: Params, patch: ManifoldPatch, horizon: Optional[float] = None) -> np.ndarray:
    """
    Distance to the owner after replaying each stable trajectory forward.

    Each run starts on the grown trajectory as far from its seed as the
    unstable rate of the owner allows and is extended past the seed.
    Equilibria: the smallest distance to the equilibrium along the replay.
    Orbits: the distance of the final state to the orbit, after enough whole
    periods for the stable multiplier to halve the offset.
    """
    if not patch.kind.is_stable:
        raise ValueError("only stable families approach their owner forward in time")

    if isinstance(patch.owner, PeriodicOrbit):
        orbit = patch.owner
        lam = abs(orbit.multipliers[0])
        periods = MAX_CONVERGENCE_PERIODS if lam <= 0.0 else min(
            MAX_CONVERGENCE_PERIODS, max(1, math.ceil(math.log(0.5) / math.log(lam)))
        )
        extra = horizon or periods * orbit.period
        _, loop = orbit.trajectory.dense_samples(per_step=8)
    else:
        extra = horizon or CONVERGENCE_HORIZON
        loop = None

    distances = []
    for index, traj in enumerate(patch.trajectories):
        start, window = _replay_start(patch, traj, index)
        replay = _grow_one((p, start, IntegratorConfig(t_max=window + extra)))
        if loop is None:
            distances.append(float(np.min(np.linalg.norm(replay.states - patch.owner.location, axis=1))))
        else:
            distances.append(float(np.min(np.linalg.norm(loop - replay.final_state, axis=1))))
    logger.debug(f"{patch.label}: replayed {len(distances)} stable trajectories")
    return np.array(distances)


def approaches_owner(p: Params, patch: ManifoldPatch, horizon: Optional[float] = None) -> np.ndarray:
    """Per-seed check that the forward run halves the seed offset (and, for equilibria, gets within 1e-4)."""
    distances = owner_distances(p, patch, horizon)
    ok = distances <= 0.5 * patch.descriptor.offset
    if not isinstance(patch.owner, PeriodicOrbit):
        ok &= distances <= CONVERGENCE_LIMIT
    return ok
