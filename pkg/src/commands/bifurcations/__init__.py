"""Bifurcation and connection commands"""

from commands.shared.options import add_range_options, register
from commands.bifurcations.command import connect, flip, slice_

PARTNERS = ["orbit", "origin"]
TARGETS = ["gamma_o", "gamma_t"]


def _add_orbit_options(parser):
    parser.add_argument("--target", choices=TARGETS, help="periodic orbit followed by orbit-based detectors")
    parser.add_argument("--partner", choices=PARTNERS, help="owner of the stable manifold for tangency-count")
    parser.add_argument("--loops", type=int)
    parser.add_argument("--n-seeds", dest="n_seeds", type=int)
    parser.add_argument("--cap", type=float)


def setup(subparsers):
    parser = register(subparsers, "slice", "locate bifurcations along a fixed-alpha slice", slice_)
    add_range_options(parser, "mu_min", "mu_max", "tol")
    parser.add_argument("--detectors", help="comma-separated: split, gap, zeta-change, multiplier, tangency-count")
    parser.add_argument("--samples", type=int)
    parser.add_argument("--multiplier", choices=["+1", "-1", "complex"])
    parser.add_argument("--count-loops", dest="count_loops", action="store_true", default=None,
                        help="count passes near both periodic orbits at every located point")
    _add_orbit_options(parser)

    parser = register(subparsers, "connect", "measure one connection at fixed parameters", connect, workers=True)
    parser.add_argument("--kind", choices=["split", "gap", "tangency-count"])
    _add_orbit_options(parser)

    parser = register(subparsers, "flip", "locate the inclination flip along the homoclinic locus", flip)
    add_range_options(parser, "alpha_min", "alpha_max", "tol")
