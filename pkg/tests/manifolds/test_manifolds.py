"""
Tests for manifold growth and surface intersections.
"""
import math

import numpy as np
import pytest

from services.flow import IntegratorConfig, integrate
from services.manifolds import (
    SEED_OFFSET_1D,
    SEED_OFFSET_2D,
    ComplexMultipliers,
    EigenstructureMissing,
    ManifoldKind,
    approaches_owner,
    clustered_angles,
    grow_equilibrium_manifold,
    grow_orbit_manifold,
    intersect_with_sphere,
    section_trace,
    seed_subspace_residuals,
    surface_crossings,
)
from services.model import Params, describe_equilibrium, find_q
from services.orbits import Orientability, SectionMap, find_periodic_orbit, find_saddle_orbit
from utils.geometry_utils import REFERENCE_SPHERE


@pytest.fixture
def origin(flip_params):
    return describe_equilibrium(flip_params, np.zeros(3))


@pytest.fixture
def hopf_cycle(hopf):
    return find_periodic_orbit(hopf, SectionMap(), (1.0, 0.0, 0.0), label="cycle")


class TestClusteredAngles:
    """Tests for the angular seed distribution."""

    def test_increasing_in_range(self):
        """Angles should increase strictly inside [0, 2 pi)."""
        angles = clustered_angles(64)
        assert angles[0] == 0.0
        assert np.all(np.diff(angles) > 0)
        assert angles[-1] < 2.0 * math.pi

    def test_denser_near_quarter_turn(self):
        """Spacing near pi/2 should be smaller than near 0."""
        angles = clustered_angles(64)
        gaps = np.diff(angles)
        assert gaps[16] < gaps[0]


class TestEquilibriumManifolds:
    """Manifolds of the origin at the inclination-flip parameters."""

    def test_stable_surface_seeds(self, flip_params, origin):
        """Seeds should lie on the SEED_OFFSET_2D circle inside span{e_s, e_ss}."""
        patch = grow_equilibrium_manifold(flip_params, origin, ManifoldKind.STABLE_2D, cap=0.5, n_seeds=12)
        assert patch.dimension == 2
        assert len(patch.trajectories) == 12
        assert np.allclose(np.linalg.norm(patch.seeds, axis=1), SEED_OFFSET_2D)
        assert np.max(seed_subspace_residuals(patch)) < 1e-15
        assert patch.boundary_circles == 1

    def test_stable_surface_runs_backward_to_cap(self, flip_params, origin):
        """Stable trajectories should run in negative time up to the arclength cap."""
        patch = grow_equilibrium_manifold(flip_params, origin, "stable-2d", cap=0.5, n_seeds=8)
        for traj in patch.trajectories:
            assert traj.final_time < 0.0
            assert traj.total_arclength == pytest.approx(0.5, abs=1e-9)

    def test_stable_seeds_approach_origin(self, flip_params, origin):
        """Forward runs from stable seeds should get close to the origin."""
        patch = grow_equilibrium_manifold(flip_params, origin, ManifoldKind.STABLE_2D, cap=0.2, n_seeds=8)
        assert approaches_owner(flip_params, patch).all()

    def test_off_manifold_trajectories_fail_replay(self, flip_params, origin):
        """Trajectories grown from points pushed along e_u should not replay back to the origin."""
        patch = grow_equilibrium_manifold(flip_params, origin, ManifoldKind.STABLE_2D, cap=0.2, n_seeds=4)
        cfg = IntegratorConfig(t_max=1000.0, arclength_cap=0.2).backward()
        patch.trajectories = [integrate(flip_params, seed + 1e-4 * origin.eigen.e_u, cfg) for seed in patch.seeds]
        assert not approaches_owner(flip_params, patch).any()

    def test_unstable_branches(self, flip_params, origin):
        """W^u should have two one-dimensional branches on either side of the origin."""
        patch = grow_equilibrium_manifold(flip_params, origin, ManifoldKind.UNSTABLE_1D, cap=1.0)
        assert patch.dimension == 1
        assert len(patch.trajectories) == 2
        assert np.allclose(patch.seeds[0], -patch.seeds[1])
        assert np.linalg.norm(patch.seeds[0]) == pytest.approx(SEED_OFFSET_1D)
        assert patch.boundary_circles == 0

    def test_strong_stable_meets_sphere_on_z_axis(self, flip_params, origin):
        """W^ss(0) is the z-axis and should cut the sphere at z = +-sqrt(0.11)."""
        patch = grow_equilibrium_manifold(flip_params, origin, ManifoldKind.STRONG_STABLE_1D, cap=1.0)
        points = intersect_with_sphere(patch).points()
        assert len(points) == 2
        assert np.allclose(np.sort(points[:, 2]), [-math.sqrt(0.11), math.sqrt(0.11)], atol=1e-9)
        assert np.allclose(points[:, :2], 0.0, atol=1e-12)

    def test_orbit_kind_rejected(self, flip_params, origin):
        """Orbit manifold kinds should not be accepted for an equilibrium."""
        with pytest.raises(ValueError):
            grow_equilibrium_manifold(flip_params, origin, ManifoldKind.STABLE)

    def test_focus_has_no_stable_surface(self):
        """A saddle-focus q has no real stable pair to seed a surface from."""
        p = Params(alpha=0.5, mu=0.001)
        q = find_q(p)
        if q.eigen is not None:
            pytest.skip("q is a real saddle at these parameters")
        with pytest.raises(EigenstructureMissing):
            grow_equilibrium_manifold(p, q, ManifoldKind.STABLE_2D)

    def test_focus_strong_stable_along_real_eigenvector(self):
        """W^ss of a stable focus should be seeded along its real eigenvector."""
        p = Params(alpha=0.5, mu=0.001)
        q = find_q(p)
        if q.pair is None or q.pair.real_eigenvalue >= 0.0:
            pytest.skip("q is not a focus with a contracting real direction here")
        patch = grow_equilibrium_manifold(p, q, ManifoldKind.STRONG_STABLE_1D, cap=0.05)
        offsets = patch.seeds - q.location
        assert np.allclose(offsets[0], SEED_OFFSET_1D * q.pair.real_vector)
        assert np.allclose(offsets[1], -offsets[0])


class TestOrbitManifolds:
    """Orbit manifolds on the Hopf normal form."""

    def test_orientable_bundle_gives_two_seed_loops(self, hopf, hopf_cycle):
        """Positive multipliers should give a cylinder: two seed loops."""
        patch = grow_orbit_manifold(hopf, hopf_cycle, ManifoldKind.STABLE, cap=0.3, n_seeds=12)
        assert patch.bundle_orientable
        assert patch.boundary_circles == 2
        assert len(patch.trajectories) == 24
        assert patch.bundle_residual < 1e-4
        offsets = np.linalg.norm(patch.seeds - patch.anchors, axis=1)
        assert np.allclose(offsets, SEED_OFFSET_2D)

    def test_seeds_follow_phases(self, hopf, hopf_cycle):
        """Anchors should lie on the cycle at equally spaced phases."""
        patch = grow_orbit_manifold(hopf, hopf_cycle, ManifoldKind.STABLE, cap=0.3, n_seeds=8)
        angles = np.arctan2(patch.anchors[:8, 1], patch.anchors[:8, 0]) % (2 * math.pi)
        assert np.allclose(angles, 2 * math.pi * np.arange(8) / 8, atol=1e-6)

    def test_equilibrium_kind_rejected(self, hopf, hopf_cycle):
        """Equilibrium manifold kinds should not be accepted for an orbit."""
        with pytest.raises(ValueError):
            grow_orbit_manifold(hopf, hopf_cycle, ManifoldKind.STABLE_2D)

    def test_complex_multipliers_rejected(self, hopf, hopf_cycle):
        """Orbits with complex multipliers have no real bundle."""
        hopf_cycle.orientability = Orientability.COMPLEX
        with pytest.raises(ComplexMultipliers):
            grow_orbit_manifold(hopf, hopf_cycle, ManifoldKind.STABLE)

    def test_section_trace_empty_for_invariant_plane(self, hopf, hopf_cycle):
        """A patch lying inside an invariant plane should leave no trace on it."""
        patch = grow_orbit_manifold(hopf, hopf_cycle, ManifoldKind.STABLE, cap=0.3, n_seeds=12)
        trace = section_trace(patch, SectionMap(normal=(0.0, 0.0, 1.0), offset=0.0))
        # seeds sit in z = 0 with radial offsets; nothing crosses z = 0
        assert len(trace) == 0


class TestSurfaceCrossings:
    """Tests for crossing search on dense output."""

    def test_circle_meets_plane_twice_per_turn(self, hopf, hopf_cycle):
        """The unit cycle should cross x = 0.5 twice per period."""
        hits = surface_crossings(hopf_cycle.trajectory, lambda s: s[0] - 0.5)
        assert len(hits) == 2
        assert np.allclose([h[0] for h in hits], 0.5, atol=1e-10)
        assert np.allclose(sorted(h[1] for h in hits), [-math.sqrt(0.75), math.sqrt(0.75)], atol=1e-8)

    def test_max_count(self, hopf_cycle):
        """max_count should stop the search early."""
        assert len(surface_crossings(hopf_cycle.trajectory, lambda s: s[0] - 0.5, max_count=1)) == 1


class TestModelOrbitManifolds:
    """Manifolds of the saddle orbits of the model."""

    @pytest.mark.slow
    def test_twisted_orbit_bundle_is_moebius(self):
        """W^u(Gamma_t) should be nonorientable with one doubled seed loop."""
        p = Params(alpha=0.5, mu=-0.002)
        orbit = find_saddle_orbit(p, Orientability.NONORIENTABLE, label="gamma_t")
        patch = grow_orbit_manifold(p, orbit, ManifoldKind.UNSTABLE, cap=1.0, n_seeds=20)
        assert patch.bundle_orientable is False
        assert patch.boundary_circles == 1
        assert len(patch.seed_loops[0]) == 40

    @pytest.mark.slow
    def test_sphere_intersection_lies_on_sphere(self):
        """Every point of W^s(0) cut with the sphere should satisfy the sphere equation."""
        p = Params(alpha=0.5, mu=0.0)
        patch = grow_equilibrium_manifold(p, describe_equilibrium(p, np.zeros(3)), ManifoldKind.STABLE_2D,
                                          cap=4.0, n_seeds=60)
        points = intersect_with_sphere(patch).points()
        assert len(points) > 0
        assert np.max(np.abs([REFERENCE_SPHERE.value(pt) for pt in points])) < 1e-9
