"""
CSV Storage Service
Writes run artifacts as CSV: header row first, floats with 17 significant
digits, rows in deterministic order.
"""
import csv
import logging
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

# Default artifact directory
OUTPUT_DIR = Path("data")

TRAJECTORY_HEADER = ["t", "x", "y", "z", "arclength"]
EVENT_HEADER = ["event_id", "t", "x", "y", "z", "direction"]
RASTER_HEADER = ["alpha", "mu", "zeta", "crossings", "termination"]
BRANCH_HEADER = ["mu", "period", "fixed_x", "fixed_z", "re_L1", "im_L1", "re_L2", "im_L2", "orientability"]
RETURN_MAP_HEADER = ["x_i", "x_ip1"]
PATCH_HEADER = ["traj_id", "t", "x", "y", "z", "arclength"]
CURVE_HEADER = ["curve_id", "seq", "x", "y", "z"]
PROJECTED_HEADER = ["curve_id", "seq", "px", "py"]
BIFURCATION_HEADER = ["kind", "alpha", "mu", "bracket", "loops_gamma_o", "loops_gamma_t"]
MEASUREMENT_HEADER = ["kind", "alpha", "mu", "value"]


def format_value(value) -> str:
    """Integers verbatim, floats as %.17g, None as an empty field."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def resolve_output(out: Optional[Path], default_name: str) -> Path:
    """Use out when given, else OUTPUT_DIR/default_name."""
    return Path(out) if out is not None else OUTPUT_DIR / default_name


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """
    Write one CSV file.

    Args:
        path: destination (parent directories are created)
        header: column names
        rows: row sequences, written in the given order

    Returns:
        the path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
            count += 1
    logger.info(f"Wrote {count} row(s) to {path}")
    return path


def write_trajectory(path: Path, traj) -> Path:
    rows = ([t, *s, arc] for t, s, arc in zip(traj.t, traj.states, traj.arclength))
    return write_csv(path, TRAJECTORY_HEADER, rows)


def write_events(path: Path, traj) -> Path:
    rows = ([e.event_id, e.t, *e.state, e.direction] for e in traj.events)
    return write_csv(path, EVENT_HEADER, rows)


def write_raster(path: Path, grid) -> Path:
    return write_csv(path, RASTER_HEADER, grid.rows())


def write_branch(path: Path, branch) -> Path:
    return write_csv(path, BRANCH_HEADER, (orbit.to_row() for _, orbit in branch))


def write_return_map(path: Path, seq) -> Path:
    return write_csv(path, RETURN_MAP_HEADER, seq.pairs())


def write_patch(path: Path, patch) -> Path:
    def rows():
        for traj_id, traj in enumerate(patch.trajectories):
            for t, s, arc in zip(traj.t, traj.states, traj.arclength):
                yield [traj_id, t, *s, arc]

    return write_csv(path, PATCH_HEADER, rows())


def write_curve_set(path: Path, curves) -> Path:
    return write_csv(path, CURVE_HEADER, curves.rows())


def write_projected_set(path: Path, projected) -> Path:
    return write_csv(path, PROJECTED_HEADER, projected.rows())


def write_bifurcations(path: Path, points) -> Path:
    return write_csv(path, BIFURCATION_HEADER, (point.to_row() for point in points))


def write_measurement(path: Path, measurement) -> Path:
    return write_csv(path, MEASUREMENT_HEADER, [measurement.to_row()])
