"""Winding-number commands"""

from commands.shared.options import add_range_options, register
from commands.winding.command import sweep


def setup(subparsers):
    parser = register(subparsers, "sweep", "winding-number raster over an (alpha, mu) rectangle", sweep, workers=True)
    add_range_options(parser, "alpha_min", "alpha_max", "mu_min", "mu_max")
    parser.add_argument("--n-alpha", dest="n_alpha", type=int)
    parser.add_argument("--n-mu", dest="n_mu", type=int)
