"""
Winding Number Service
Counts how often the unstable branch of the origin winds around the strong
stable manifold of q, and sweeps that count over (alpha, mu) rectangles.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from services.errors import ConfigError, FlipscopeError
from services.flow import Divergence, EventSpec, IntegratorConfig, Termination, integrate
from services.model import (
    ConvergedToOrigin,
    EigenData,
    NoConvergence,
    Params,
    eval_field,
    find_q,
    origin_eigens,
)
from services.pool import run_ordered

logger = logging.getLogger(__name__)

ZETA_SATURATED = -1
SEED_OFFSET = 1e-7
MAX_CROSSINGS = 200
WINDING_T_MAX = 5000.0
V_TOLERANCE = 1e-9

SIGMA_EVENT = "sigma"
ENTER_V_EVENT = "enter-V"


class QNotFound(FlipscopeError):
    """Error when the secondary equilibrium q cannot be located"""
    pass


class OddCrossingCount(FlipscopeError):
    """Error when the branch reaches V after an odd number of section crossings"""
    pass


class WindingTermination(str, Enum):
    REACHED_V = "reached-dV"
    TIME_LIMIT = "time-limit"
    CROSSING_CAP = "crossing-cap"
    DIVERGED = "diverged"
    ERROR = "error"


@dataclass
class WindingResult:
    alpha: float
    mu: float
    zeta: int
    crossing_count: int
    termination: WindingTermination
    final_state: Optional[np.ndarray] = None
    total_time: float = 0.0
    error: Optional[str] = None

    @property
    def saturated(self) -> bool:
        return self.zeta == ZETA_SATURATED

    def to_row(self) -> list:
        return [self.alpha, self.mu, self.zeta, self.crossing_count, self.termination.value]


@dataclass(frozen=True)
class GridSpec:
    """Rectangle in the (alpha, mu) plane and its raster size."""
    alpha_min: float
    alpha_max: float
    mu_min: float
    mu_max: float
    n_alpha: int
    n_mu: int

    def __post_init__(self):
        if self.alpha_min > self.alpha_max:
            raise ConfigError(f"alpha range inverted: {self.alpha_min} > {self.alpha_max}")
        if self.mu_min > self.mu_max:
            raise ConfigError(f"mu range inverted: {self.mu_min} > {self.mu_max}")
        if self.n_alpha < 1 or self.n_mu < 1:
            raise ConfigError(f"grid sizes must be positive, got {self.n_alpha}x{self.n_mu}")

    def alphas(self) -> np.ndarray:
        return np.linspace(self.alpha_min, self.alpha_max, self.n_alpha)

    def mus(self) -> np.ndarray:
        return np.linspace(self.mu_min, self.mu_max, self.n_mu)


@dataclass
class SweepGrid:
    spec: GridSpec
    cells: list[list[WindingResult]] = field(default_factory=list)

    def zeta_raster(self) -> np.ndarray:
        """Integer raster indexed [alpha, mu]; saturated cells hold ZETA_SATURATED."""
        return np.array([[cell.zeta for cell in row] for row in self.cells], dtype=int)

    def rows(self):
        for row in self.cells:
            for cell in row:
                yield cell.to_row()


def unstable_seed(p: Params, eigen: Optional[EigenData] = None, offset: float = SEED_OFFSET) -> np.ndarray:
    """Point offset along e_u on the branch whose initial velocity has positive x."""
    eigen = eigen or origin_eigens(p)
    seed = offset * eigen.e_u
    if eval_field(p, seed)[0] < 0.0:
        seed = -seed
    return seed


def compute_zeta(p: Params, cfg: Optional[IntegratorConfig] = None) -> WindingResult:
    """
    Winding number of the positive unstable branch of the origin.

    Args:
        p: model parameters
        cfg: integrator settings; t_max defaults to the winding horizon

    Returns:
        WindingResult; zeta is ZETA_SATURATED when the branch never reaches V

    Raises:
        QNotFound: q could not be located
        OddCrossingCount: event detection missed a crossing
    """
    try:
        q = find_q(p)
    except (NoConvergence, ConvergedToOrigin) as e:
        raise QNotFound(f"q not found: {e}", operation="compute_zeta", params=p.as_dict()) from e

    cfg = cfg or IntegratorConfig(t_max=WINDING_T_MAX)
    q_x = float(q.location[0])
    events = [
        EventSpec.plane((1.0, 0.0, 0.0), q_x, name=SIGMA_EVENT, terminal=True, max_count=MAX_CROSSINGS),
        EventSpec.half_space_entry(name=ENTER_V_EVENT),
    ]
    try:
        traj = integrate(p, unstable_seed(p), cfg, events)
    except Divergence as e:
        count = sum(1 for hit in e.trajectory.events_named(SIGMA_EVENT) if hit.direction != 0)
        logger.warning(f"branch diverged at alpha={p.alpha}, mu={p.mu} after {count} crossings; zeta undefined")
        return WindingResult(
            alpha=p.alpha,
            mu=p.mu,
            zeta=ZETA_SATURATED,
            crossing_count=count,
            termination=WindingTermination.DIVERGED,
            final_state=e.last_state.copy(),
            total_time=e.trajectory.duration,
            error=type(e).__name__,
        )

    crossings = [e for e in traj.events_named(SIGMA_EVENT) if e.direction != 0]
    count = len(crossings)
    entered_v = bool(traj.events_named(ENTER_V_EVENT))

    if traj.termination is Termination.EVENT and entered_v:
        if count % 2:
            raise OddCrossingCount(
                f"{count} crossings of x={q_x:.6g} before entering V",
                operation="compute_zeta",
                params=p.as_dict(),
            )
        zeta, termination = count // 2, WindingTermination.REACHED_V
    elif traj.termination is Termination.EVENT:
        zeta, termination = ZETA_SATURATED, WindingTermination.CROSSING_CAP
    else:
        zeta, termination = ZETA_SATURATED, WindingTermination.TIME_LIMIT

    logger.debug(f"zeta(alpha={p.alpha}, mu={p.mu}) = {zeta} ({termination.value}, {count} crossings)")
    return WindingResult(
        alpha=p.alpha,
        mu=p.mu,
        zeta=zeta,
        crossing_count=count,
        termination=termination,
        final_state=traj.final_state.copy(),
        total_time=traj.duration,
    )


def stays_in_v(p: Params, state: np.ndarray, duration: float = 10.0, tol: float = V_TOLERANCE) -> bool:
    """Continue from a state on the boundary of V and check x, y stay non-positive."""
    traj = integrate(p, state, IntegratorConfig(t_max=duration))
    return bool(np.max(traj.states[:, :2]) <= tol)


def _zeta_cell(p: Params, cfg: Optional[IntegratorConfig]) -> WindingResult:
    try:
        return compute_zeta(p, cfg)
    except FlipscopeError as e:
        logger.error(f"zeta failed at alpha={p.alpha}, mu={p.mu}: {e}")
        return WindingResult(
            alpha=p.alpha, mu=p.mu, zeta=ZETA_SATURATED, crossing_count=0,
            termination=WindingTermination.ERROR, error=type(e).__name__,
        )


def _sweep_row(job: tuple) -> list[WindingResult]:
    base, alpha, mus, cfg = job
    return [_zeta_cell(Params(**{**base, "alpha": float(alpha), "mu": float(mu)}), cfg) for mu in mus]


def sweep_zeta(
    spec: GridSpec,
    base: Optional[dict] = None,
    workers: int = 1,
    cfg: Optional[IntegratorConfig] = None,
    order: Optional[Sequence[int]] = None,
    progress: bool = True,
) -> SweepGrid:
    """
    Evaluate compute_zeta on every grid cell.

    Args:
        spec: grid rectangle and raster size
        base: fixed model parameters other than alpha and mu
        workers: worker processes (one job per alpha row)
        cfg: integrator settings
        order: evaluation order of the alpha rows; the raster is assembled by index
        progress: show a progress bar

    Returns:
        SweepGrid with cells[i][j] at (alphas[i], mus[j])
    """
    base = {k: v for k, v in (base or {}).items() if k not in ("alpha", "mu")}
    alphas, mus = spec.alphas(), spec.mus()
    order = list(range(len(alphas))) if order is None else list(order)
    if sorted(order) != list(range(len(alphas))):
        raise ConfigError("row order must be a permutation of the alpha indices")

    jobs = [(base, alphas[i], mus, cfg) for i in order]
    results = run_ordered(_sweep_row, jobs, workers=workers, desc="sweep", progress=progress)

    cells: list[Optional[list[WindingResult]]] = [None] * len(alphas)
    for i, row in zip(order, results):
        cells[i] = row
    grid = SweepGrid(spec=spec, cells=cells)
    logger.info(f"Sweep finished: {spec.n_alpha}x{spec.n_mu} cells")
    return grid
