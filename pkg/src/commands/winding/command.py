"""
Sweep Command
flipscope sweep --alpha-min A --alpha-max A --mu-min M --mu-max M [--n-alpha N] [--n-mu N]
"""

import logging
from collections import Counter

from services.config import RunConfig
from services.storage import resolve_output, write_raster
from services.winding import GridSpec, ZETA_SATURATED, sweep_zeta

logger = logging.getLogger(__name__)


def sweep(config: RunConfig) -> int:
    config.require("alpha_min", "alpha_max", "mu_min", "mu_max")
    spec = GridSpec(
        alpha_min=config.alpha_min,
        alpha_max=config.alpha_max,
        mu_min=config.mu_min,
        mu_max=config.mu_max,
        n_alpha=config.n_alpha,
        n_mu=config.n_mu,
    )
    grid = sweep_zeta(spec, base=config.fixed_params(), workers=config.workers, cfg=config.integrator())
    path = write_raster(resolve_output(config.out, "sweep.csv"), grid)

    counts = Counter(int(z) for z in grid.zeta_raster().ravel())
    summary = ", ".join(
        f"{'saturated' if zeta == ZETA_SATURATED else f'zeta={zeta}'}: {n}" for zeta, n in sorted(counts.items())
    )
    print(f"{spec.n_alpha}x{spec.n_mu} cells -> {path} ({summary})")
    return 0
