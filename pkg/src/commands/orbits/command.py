"""
Orbit Commands
flipscope orbit --alpha A --mu M [--orientability O] [--loops K] [--mu-target M]
flipscope returnmap --alpha A --mu M [--n N] [--replicates R]
"""

import logging

from commands.shared.options import choice
from services.config import RunConfig
from services.orbits import (
    MultiplierTarget,
    NewtonDiverged,
    NoBracket,
    Orientability,
    StepFloorReached,
    attractor_seed,
    collect_returns,
    collect_returns_replicated,
    continue_orbit,
    detect_multiplier_event,
    envelope_distance,
    find_saddle_orbit,
    refine_fold,
    unimodal_envelope,
)
from services.storage import resolve_output, write_branch, write_return_map
from services.winding import unstable_seed

logger = logging.getLogger(__name__)


def _describe(orbit) -> str:
    l1, l2 = orbit.multipliers
    return (
        f"{orbit.label or 'orbit'} at mu={orbit.mu:.10g}: T={orbit.period:.10g}, "
        f"multipliers ({l1:.6g}, {l2:.6g}), {orbit.orientability.value}"
    )


def orbit(config: RunConfig) -> int:
    config.require("alpha", "mu")
    p = config.params()
    orientability = choice(Orientability, config.orientability, "orientability")
    label = config.label or ("gamma_o" if orientability is Orientability.ORIENTABLE else "gamma_t")

    found = find_saddle_orbit(p, orientability, config.loops, label=label)
    print(_describe(found))
    branch = [(p.mu, found)]

    if config.mu_target is not None:
        try:
            branch = continue_orbit(p, found, config.mu_target)
        except StepFloorReached as e:
            branch = e.branch
            print(f"fold of {label} at mu={refine_fold(e):.10g}")
        for target in MultiplierTarget:
            try:
                print(f"multiplier {target.value} event at mu={detect_multiplier_event(branch, target):.10g}")
            except NoBracket:
                logger.debug(f"no {target.value} event along the branch")
        print(_describe(branch[-1][1]))

    write_branch(resolve_output(config.out, "orbit.csv"), branch)
    return 0


def _return_map_start(p):
    try:
        return attractor_seed(p)
    except (NewtonDiverged, NoBracket) as e:
        logger.warning(f"no start beside the orientable orbit ({e}); following the unstable branch")
        return unstable_seed(p)


def returnmap(config: RunConfig) -> int:
    config.require("alpha", "mu")
    p = config.params()
    start = _return_map_start(p)
    if config.replicates > 1:
        runs = collect_returns_replicated(p, start, n=config.n, replicates=config.replicates)
    else:
        runs = [collect_returns(p, start, n=config.n)]
    seq = runs[0]
    envelope = unimodal_envelope(seq)
    for k, other in enumerate(runs[1:], start=1):
        print(f"replicate {k}: envelope distance {envelope_distance(envelope, unimodal_envelope(other)):.3e}")
    path = write_return_map(resolve_output(config.out, "returnmap.csv"), seq)
    print(f"{len(seq.raw)} returns -> {path} (envelope slope sign changes: {envelope.slope_sign_changes})")
    return 0
