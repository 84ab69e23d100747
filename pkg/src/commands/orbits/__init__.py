"""Periodic-orbit and return-map commands"""

from commands.shared.options import register
from commands.orbits.command import orbit, returnmap


def setup(subparsers):
    parser = register(subparsers, "orbit", "locate a saddle periodic orbit and optionally continue it in mu", orbit)
    parser.add_argument("--orientability", choices=["orientable", "nonorientable"])
    parser.add_argument("--loops", type=int, help="loops of the orbit around the section")
    parser.add_argument("--label")
    parser.add_argument("--mu-target", dest="mu_target", type=float, help="continue the orbit to this mu")

    parser = register(subparsers, "returnmap", "successive section returns of the attractor", returnmap)
    parser.add_argument("--n", type=int, help="returns recorded after the transient")
    parser.add_argument("--replicates", type=int, help="extra runs from nearby starts to compare envelopes")
