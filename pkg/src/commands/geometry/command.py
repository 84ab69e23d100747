"""
Geometry Commands
flipscope manifold --alpha A --mu M --owner O --which W [--surface patch|sphere|section]
flipscope project --alpha A --mu M --owner O --which W
"""

import logging

import numpy as np

from commands.shared.options import choice
from services.config import RunConfig
from services.errors import ConfigError
from services.manifolds import (
    DEFAULT_CAP_EQUILIBRIUM,
    DEFAULT_CAP_ORBIT,
    DEFAULT_SEEDS_2D,
    DEFAULT_SEEDS_ORBIT,
    ManifoldKind,
    ManifoldPatch,
    grow_equilibrium_manifold,
    grow_orbit_manifold,
    intersect_with_sphere,
    section_trace,
)
from services.model import describe_equilibrium, find_q
from services.orbits import Orientability, SectionMap, find_saddle_orbit
from services.projection import project_set
from services.storage import resolve_output, write_curve_set, write_patch, write_projected_set

logger = logging.getLogger(__name__)

ORBIT_OWNERS = {
    "gamma_o": Orientability.ORIENTABLE,
    "gamma_t": Orientability.NONORIENTABLE,
}


def grow_patch(config: RunConfig) -> ManifoldPatch:
    """Locate the configured owner and grow the requested manifold."""
    config.require("alpha", "mu")
    p = config.params()
    which = choice(ManifoldKind, config.which, "which")

    if config.owner in ORBIT_OWNERS:
        if which not in (ManifoldKind.STABLE, ManifoldKind.UNSTABLE):
            raise ConfigError(f"a periodic orbit has stable and unstable manifolds, not {which.value}")
        orbit = find_saddle_orbit(p, ORBIT_OWNERS[config.owner], config.loops, label=config.owner)
        return grow_orbit_manifold(
            p, orbit, which,
            cap=config.cap or DEFAULT_CAP_ORBIT,
            n_seeds=config.n_seeds or DEFAULT_SEEDS_ORBIT,
            workers=config.workers,
        )

    if config.owner == "origin":
        eq = describe_equilibrium(p, np.zeros(3))
    elif config.owner == "q":
        eq = find_q(p)
    else:
        raise ConfigError(f"owner={config.owner!r} is not one of: origin, q, {', '.join(ORBIT_OWNERS)}")
    if which in (ManifoldKind.STABLE, ManifoldKind.UNSTABLE):
        raise ConfigError(f"{which.value} names an orbit manifold; use stable-2d, unstable-1d or strong-stable-1d")
    return grow_equilibrium_manifold(
        p, eq, which,
        cap=config.cap or DEFAULT_CAP_EQUILIBRIUM,
        n_seeds=config.n_seeds or DEFAULT_SEEDS_2D,
        workers=config.workers,
    )


def manifold(config: RunConfig) -> int:
    patch = grow_patch(config)
    if config.surface == "patch":
        path = write_patch(resolve_output(config.out, "manifold.csv"), patch)
    elif config.surface == "sphere":
        path = write_curve_set(resolve_output(config.out, "manifold.csv"), intersect_with_sphere(patch))
    elif config.surface == "section":
        path = write_curve_set(resolve_output(config.out, "manifold.csv"), section_trace(patch, SectionMap()))
    else:
        raise ConfigError(f"surface={config.surface!r} is not one of: patch, sphere, section")

    orientation = ""
    if patch.bundle_orientable is not None:
        orientation = ", cylinder" if patch.bundle_orientable else ", Moebius band"
    print(f"{patch.label}: {len(patch.trajectories)} trajectories{orientation} -> {path}")
    return 0


def project(config: RunConfig) -> int:
    patch = grow_patch(config)
    projected = project_set(intersect_with_sphere(patch))
    path = write_projected_set(resolve_output(config.out, "project.csv"), projected)
    print(f"{patch.label}: {len(projected)} planar curve(s), {projected.pole_splits} pole split(s) -> {path}")
    return 0
