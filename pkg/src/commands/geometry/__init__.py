"""Manifold geometry commands"""

from commands.shared.options import register
from commands.geometry.command import manifold, project

OWNERS = ["origin", "q", "gamma_o", "gamma_t"]
KINDS = ["stable-2d", "unstable-1d", "strong-stable-1d", "stable", "unstable"]


def _add_manifold_options(parser):
    parser.add_argument("--owner", choices=OWNERS)
    parser.add_argument("--which", choices=KINDS)
    parser.add_argument("--cap", type=float, help="arclength cap per trajectory")
    parser.add_argument("--n-seeds", dest="n_seeds", type=int)
    parser.add_argument("--loops", type=int, help="loops of a periodic owner")


def setup(subparsers):
    parser = register(subparsers, "manifold", "grow a stable or unstable manifold", manifold, workers=True)
    _add_manifold_options(parser)
    parser.add_argument("--surface", choices=["patch", "sphere", "section"],
                        help="write the trajectories, or their trace on the sphere or the section")

    parser = register(subparsers, "project", "stereographic image of a manifold's sphere trace", project,
                      workers=True)
    _add_manifold_options(parser)
