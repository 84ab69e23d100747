"""
Tests for the sphere rotation and stereographic projection.
"""
import numpy as np
import pytest

from services.manifolds import CurveSet, Surface
from services.projection import (
    ROTATION,
    U_AXIS,
    AtPole,
    NotOnSphere,
    inverse_rotate,
    inverse_stereo,
    project_set,
    projection_pole,
    rotate_to_canonical,
    stereo_project,
)
from utils.geometry_utils import REFERENCE_SPHERE


def _sphere_point(theta: float, phi: float) -> np.ndarray:
    center = np.asarray(REFERENCE_SPHERE.center)
    r = REFERENCE_SPHERE.radius
    return center + r * np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


class TestRotation:
    """Tests for the rotation matrix."""

    def test_orthonormal(self):
        """Rows should be orthonormal with determinant one."""
        assert np.allclose(ROTATION @ ROTATION.T, np.eye(3), atol=1e-14)
        assert np.linalg.det(ROTATION) == pytest.approx(1.0)

    def test_first_row_along_axis(self):
        """The first row should be the normalized u axis."""
        u = np.asarray(U_AXIS)
        assert np.allclose(ROTATION[0], u / np.linalg.norm(u))

    @pytest.mark.parametrize("theta,phi", [(0.3, 0.1), (1.2, 2.5), (2.8, -1.0)])
    def test_round_trip(self, theta, phi):
        """Rotating then projecting should invert exactly."""
        point = _sphere_point(theta, phi)
        rotated = rotate_to_canonical(point)
        assert np.linalg.norm(rotated) == pytest.approx(REFERENCE_SPHERE.radius)
        planar = stereo_project(rotated)
        assert np.allclose(inverse_rotate(inverse_stereo(planar)), point, atol=1e-12)

    def test_off_sphere(self):
        """Points off the sphere should be rejected."""
        with pytest.raises(NotOnSphere):
            rotate_to_canonical((0.5, 0.0, 0.0))


class TestStereographic:
    """Tests for the projection itself."""

    def test_north_pole_to_origin(self):
        """The north pole should project to the plane origin."""
        assert np.allclose(stereo_project((0.0, 0.0, 0.6)), (0.0, 0.0))

    def test_equator_to_circle_of_radius_r(self):
        """Equator points should land on the circle of radius R."""
        assert np.allclose(stereo_project((0.6, 0.0, 0.0)), (0.6, 0.0))

    def test_south_pole_rejected(self):
        """The projection pole has no image."""
        with pytest.raises(AtPole):
            stereo_project((0.0, 0.0, -0.6))

    def test_pole_maps_to_south(self):
        """projection_pole should rotate onto the south pole."""
        assert np.allclose(rotate_to_canonical(projection_pole()), (0.0, 0.0, -0.6), atol=1e-12)


class TestProjectSet:
    """Tests for projection of curve sets."""

    def test_curve_split_at_pole(self):
        """A curve passing through the pole should be split into two pieces."""
        points = [_sphere_point(1.0, 0.2), projection_pole(), _sphere_point(1.1, 0.3)]
        cs = CurveSet(owner_label="W", surface=Surface(sphere=REFERENCE_SPHERE), curves=[np.array(points)],
                      closed=[False])
        projected = project_set(cs)
        assert projected.pole_splits == 1
        assert len(projected) == 2
        assert projected.source == "W"

    def test_rows(self):
        """rows should enumerate curve ids and sequence numbers."""
        cs = CurveSet(owner_label="W", surface=Surface(sphere=REFERENCE_SPHERE),
                      curves=[np.array([_sphere_point(0.4, 0.0), _sphere_point(0.5, 0.0)])], closed=[False])
        rows = list(project_set(cs).rows())
        assert [row[:2] for row in rows] == [[0, 0], [0, 1]]
