"""
Geometry helpers: the reference sphere, stringing of crossing points into
polylines and counting of polyline intersections.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

SPLIT_FACTOR = 10.0
COLLINEAR_TOL = 1e-9


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def value(self, s: np.ndarray) -> float:
        """Signed distance to the sphere, positive outside."""
        return float(np.linalg.norm(np.asarray(s) - np.asarray(self.center)) - self.radius)


# Sphere used for all intersection pictures
REFERENCE_SPHERE = Sphere(center=(0.5, 0.0, 0.0), radius=0.6)


def _runs(points: Sequence[Optional[np.ndarray]]) -> list[list[int]]:
    runs, current = [], []
    for i, pt in enumerate(points):
        if pt is None:
            if current:
                runs.append(current)
            current = []
        else:
            current.append(i)
    if current:
        runs.append(current)
    return runs


def string_polylines(
    points: Sequence[Optional[np.ndarray]],
    cyclic: bool = False,
    split_factor: float = SPLIT_FACTOR,
) -> list[tuple[np.ndarray, bool]]:
    """
    Join points given in seed order into polylines.

    A missing point (None) breaks the line, and so does a gap larger than
    split_factor times the median gap. With cyclic seeds, a line running
    through the last seed continues with the first one; a single unbroken
    run closes.

    Returns:
        list of (curve as N x d array, closed flag)
    """
    runs = _runs(points)
    if not runs:
        return []

    gaps = [float(np.linalg.norm(points[i + 1] - points[i])) for run in runs for i in run[:-1]]
    n = len(points)
    wrap_gap = None
    if cyclic and points[0] is not None and points[-1] is not None and n > 2:
        wrap_gap = float(np.linalg.norm(points[0] - points[-1]))
        gaps.append(wrap_gap)
    median = float(np.median(gaps)) if gaps else 0.0
    threshold = split_factor * median if median > 0.0 else np.inf

    pieces = []
    for run in runs:
        piece = [run[0]]
        for i in run[1:]:
            if np.linalg.norm(points[i] - points[piece[-1]]) > threshold:
                pieces.append(piece)
                piece = []
            piece.append(i)
        pieces.append(piece)

    closed_loop = False
    if wrap_gap is not None and wrap_gap <= threshold:
        if len(pieces) == 1:
            closed_loop = True
        elif pieces[0][0] == 0 and pieces[-1][-1] == n - 1:
            pieces[0] = pieces.pop() + pieces[0]

    return [(np.array([points[i] for i in piece]), closed_loop) for piece in pieces]


def _orientation(p: np.ndarray, q: np.ndarray, r: np.ndarray) -> np.ndarray:
    return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])


def count_crossings(a: np.ndarray, b: np.ndarray, tol: float = COLLINEAR_TOL) -> int:
    """
    Number of proper crossings between two planar polylines.

    Touching or collinear configurations (orientation within tol) are not counted.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        return 0
    a0, a1 = a[:-1, None, :], a[1:, None, :]
    b0, b1 = b[None, :-1, :], b[None, 1:, :]

    o1 = _orientation(a0, a1, b0)
    o2 = _orientation(a0, a1, b1)
    o3 = _orientation(b0, b1, a0)
    o4 = _orientation(b0, b1, a1)
    proper = (o1 * o2 < 0) & (o3 * o4 < 0)
    proper &= (np.abs(o1) > tol) & (np.abs(o2) > tol) & (np.abs(o3) > tol) & (np.abs(o4) > tol)
    return int(np.count_nonzero(proper))


def closure_gap(curve: np.ndarray) -> float:
    """Distance between the first and last point of a polyline."""
    curve = np.asarray(curve)
    return float(np.linalg.norm(curve[-1] - curve[0])) if len(curve) else 0.0
