"""
Bifurcation Commands
flipscope slice --alpha A --mu-min M --mu-max M [--detectors split,gap,...]
flipscope connect --alpha A --mu M [--kind split|gap|tangency-count]
flipscope flip --alpha-min A --alpha-max A [--mu M]
"""

import logging

import numpy as np

from commands.shared.options import choice
from services.config import RunConfig
from services.connections import (
    FLIP_TOL,
    DetectorKind,
    OrbitTracker,
    SliceDetector,
    hetero_gap,
    homoclinic_split,
    locate_inclination_flip,
    scan_slice,
    tangency_count,
)
from services.errors import ConfigError
from services.manifolds import ManifoldKind, grow_equilibrium_manifold, grow_orbit_manifold
from services.model import describe_equilibrium
from services.orbits import MultiplierTarget, Orientability, find_saddle_orbit
from services.storage import resolve_output, write_bifurcations, write_measurement

logger = logging.getLogger(__name__)

TARGET_ORIENTABILITY = {
    "gamma_o": Orientability.ORIENTABLE,
    "gamma_t": Orientability.NONORIENTABLE,
}
DEFAULT_TANGENCY_SEEDS = 60
DEFAULT_TANGENCY_CAP = 25.0


def _target(config: RunConfig) -> Orientability:
    if config.target not in TARGET_ORIENTABILITY:
        raise ConfigError(f"target={config.target!r} is not one of: {', '.join(TARGET_ORIENTABILITY)}")
    return TARGET_ORIENTABILITY[config.target]


def _partner(config: RunConfig) -> str:
    if config.partner not in ("orbit", "origin"):
        raise ConfigError(f"partner={config.partner!r} is not one of: orbit, origin")
    return config.partner


def _tracker(config: RunConfig, base, orientability: Orientability, label: str) -> OrbitTracker:
    return OrbitTracker(base=base, orientability=orientability, loop_count=config.loops, label=label)


def slice_(config: RunConfig) -> int:
    config.require("alpha", "mu_min", "mu_max")
    base = config.params(mu=config.mu_max)
    kinds = [choice(DetectorKind, name, "detectors") for name in config.detectors]
    if not kinds:
        raise ConfigError("detectors must name at least one detector")

    loop_trackers = (None, None)
    if config.count_loops:
        loop_trackers = (
            _tracker(config, base, Orientability.ORIENTABLE, "gamma_o"),
            _tracker(config, base, Orientability.NONORIENTABLE, "gamma_t"),
        )

    points = []
    for kind in kinds:
        tracker = None
        if kind in (DetectorKind.GAP, DetectorKind.MULTIPLIER, DetectorKind.TANGENCY):
            tracker = _tracker(config, base, _target(config), config.target)
        detector = SliceDetector(
            kind=kind,
            base=base,
            tracker=tracker,
            multiplier=choice(MultiplierTarget, config.multiplier, "multiplier"),
            partner=_partner(config),
            n_seeds=config.n_seeds or DEFAULT_TANGENCY_SEEDS,
            cap=config.cap or DEFAULT_TANGENCY_CAP,
            loop_trackers=loop_trackers,
        )
        points.extend(scan_slice(detector, config.mu_min, config.mu_max, config.samples, config.tol))

    points.sort(key=lambda point: point.mu, reverse=True)
    for point in points:
        near = f"  near {point.reference}" if point.reference else ""
        print(f"{point.kind:<14} mu={point.mu:.9e}  ({point.detector.value}){near}")
    path = write_bifurcations(resolve_output(config.out, "slice.csv"), points)
    print(f"{len(points)} point(s) -> {path}")
    return 0


def connect(config: RunConfig) -> int:
    config.require("alpha", "mu")
    p = config.params()
    kind = choice(DetectorKind, config.kind, "kind")

    if kind is DetectorKind.SPLIT:
        measurement = homoclinic_split(p)
    elif kind in (DetectorKind.GAP, DetectorKind.TANGENCY):
        orbit = find_saddle_orbit(p, _target(config), config.loops, label=config.target)
        if kind is DetectorKind.GAP:
            measurement = hetero_gap(p, orbit)
        else:
            n_seeds = config.n_seeds or DEFAULT_TANGENCY_SEEDS
            cap = config.cap or DEFAULT_TANGENCY_CAP
            unstable = grow_orbit_manifold(p, orbit, ManifoldKind.UNSTABLE, cap, n_seeds, workers=config.workers)
            if _partner(config) == "origin":
                origin = describe_equilibrium(p, np.zeros(3))
                stable = grow_equilibrium_manifold(p, origin, ManifoldKind.STABLE_2D, cap, n_seeds, config.workers)
            else:
                stable = grow_orbit_manifold(p, orbit, ManifoldKind.STABLE, cap, n_seeds, workers=config.workers)
            measurement = tangency_count(p, unstable, stable, orbit.section)
    else:
        raise ConfigError(f"connect measures split, gap or tangency-count, not {kind.value}")

    value = measurement.count if measurement.count is not None else f"{measurement.value:.9e}"
    print(f"{measurement.kind.value} at alpha={p.alpha}, mu={p.mu}: {value}"
          + (" (proxy)" if measurement.proxy else ""))
    write_measurement(resolve_output(config.out, "connect.csv"), measurement)
    return 0


def flip(config: RunConfig) -> int:
    config.require("alpha_min", "alpha_max")
    point = locate_inclination_flip(
        alpha_lo=config.alpha_min,
        alpha_hi=config.alpha_max,
        mu=config.mu if config.mu is not None else 0.0,
        tol=config.tol or FLIP_TOL,
        base=config.fixed_params(),
    )
    print(f"alpha* = {point.alpha:.7f} (bracket width {point.bracket_width:.1e})")
    print(point.case_report.to_text())
    write_bifurcations(resolve_output(config.out, "flip.csv"), [point])
    return 0
