"""
Projection Service
Rotation of the reference sphere into canonical position followed by
stereographic projection from its south pole.
"""
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from services.errors import FlipscopeError
from services.manifolds import CurveSet
from utils.geometry_utils import REFERENCE_SPHERE, Sphere
from utils.linalg_utils import unit

logger = logging.getLogger(__name__)

# First axis of the canonical frame
U_AXIS = (0.5706, 0.1854, 0.0)
SPHERE_TOL = 1e-8
POLE_GUARD = 1e-9
POLE_SPLIT = 1e-6


class NotOnSphere(FlipscopeError):
    """Error when a point handed to the rotation is off the sphere"""
    pass


class AtPole(FlipscopeError):
    """Error when a point coincides with the projection pole"""
    pass


def rotation_matrix() -> np.ndarray:
    """
    Orthonormal rows u, v, w of the rotation.

    v = (1, -(u_x + u_z)/u_y, 1) is already orthogonal to u; Gram-Schmidt keeps
    the rows orthonormal to machine precision anyway.
    """
    u = np.asarray(U_AXIS, dtype=float)
    v = np.array([1.0, -(u[0] + u[2]) / u[1], 1.0])
    u_hat = unit(u)
    v_hat = unit(v - v.dot(u_hat) * u_hat)
    w_hat = np.cross(u_hat, v_hat)
    return np.vstack([u_hat, v_hat, w_hat])


ROTATION = rotation_matrix()


def rotate_to_canonical(point: Sequence[float], sphere: Sphere = REFERENCE_SPHERE) -> np.ndarray:
    """
    Move a sphere point to the origin-centred sphere in canonical orientation.

    Raises:
        NotOnSphere: the point is farther than SPHERE_TOL from the sphere
    """
    offset = np.asarray(point, dtype=float) - np.asarray(sphere.center)
    residual = abs(float(np.linalg.norm(offset)) - sphere.radius)
    if residual > SPHERE_TOL:
        raise NotOnSphere(f"point {np.round(point, 10).tolist()} is {residual:.3e} off the sphere",
                          operation="rotate_to_canonical")
    return ROTATION @ offset


def stereo_project(rotated: Sequence[float], radius: float = REFERENCE_SPHERE.radius) -> np.ndarray:
    """
    Stereographic projection from the south pole (0, 0, -R).

    Raises:
        AtPole: z' within POLE_GUARD of -R
    """
    x, y, z = rotated
    denom = radius + z
    if denom <= POLE_GUARD:
        raise AtPole(f"z'={z:.12g} is at the projection pole", operation="stereo_project")
    return np.array([radius * x / denom, radius * y / denom])


def inverse_stereo(planar: Sequence[float], radius: float = REFERENCE_SPHERE.radius) -> np.ndarray:
    """Point of the origin-centred sphere projecting to planar."""
    x, y = planar
    rho2 = x * x + y * y
    scale = radius * radius + rho2
    return np.array([
        2.0 * radius**2 * x / scale,
        2.0 * radius**2 * y / scale,
        radius * (radius**2 - rho2) / scale,
    ])


def inverse_rotate(rotated: Sequence[float], sphere: Sphere = REFERENCE_SPHERE) -> np.ndarray:
    return np.asarray(sphere.center) + ROTATION.T @ np.asarray(rotated, dtype=float)


def projection_pole(sphere: Sphere = REFERENCE_SPHERE) -> np.ndarray:
    """Point of the sphere sent to the south pole by the rotation."""
    return inverse_rotate(np.array([0.0, 0.0, -sphere.radius]), sphere)


@dataclass
class ProjectedSet:
    source: str
    curves: list[np.ndarray] = field(default_factory=list)
    pole_splits: int = 0

    def __len__(self) -> int:
        return len(self.curves)

    def rows(self):
        for curve_id, curve in enumerate(self.curves):
            for seq, pt in enumerate(curve):
                yield [curve_id, seq, float(pt[0]), float(pt[1])]


def project_set(cs: CurveSet, sphere: Sphere = REFERENCE_SPHERE) -> ProjectedSet:
    """
    Rotate and project every curve of a sphere curve set.

    Points within POLE_SPLIT of the pole are dropped and the curve is split there.
    """
    result = ProjectedSet(source=cs.owner_label)
    south = np.array([0.0, 0.0, -sphere.radius])
    for curve in cs.curves:
        piece = []
        for point in curve:
            rotated = rotate_to_canonical(point, sphere)
            if np.linalg.norm(rotated - south) <= POLE_SPLIT or rotated[2] + sphere.radius <= POLE_GUARD:
                if piece:
                    result.curves.append(np.array(piece))
                    piece = []
                result.pole_splits += 1
                continue
            piece.append(stereo_project(rotated, sphere.radius))
        if piece:
            result.curves.append(np.array(piece))
    if result.pole_splits:
        logger.info(f"{cs.owner_label}: {result.pole_splits} point(s) dropped at the projection pole")
    return result
