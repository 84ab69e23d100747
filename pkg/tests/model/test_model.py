"""
Tests for the vector field, equilibria and eigen-structure.
"""
import math

import numpy as np
import pytest

from services.errors import NoSignChange
from services.model import (
    NotASaddle,
    Params,
    StabilityTag,
    classify_case,
    describe_equilibrium,
    detect_hopf_at_q,
    eval_field,
    eval_jacobian,
    find_equilibrium,
    find_q,
    origin_eigens,
    q_complex_pair,
)

SAMPLE_POINTS = [
    (0.3, -0.2, 0.1),
    (1.1, 0.4, -0.5),
    (-0.7, 0.9, 0.25),
]


def _random_params(rng, **fixed) -> Params:
    """Parameters drawn around the inclination-flip configuration."""
    values = {
        "alpha": rng.uniform(0.0, 1.0),
        "mu": rng.uniform(-0.01, 0.01),
        "a": rng.uniform(0.1, 1.0),
        "b": rng.uniform(0.5, 1.5),
        "c": rng.uniform(-3.0, -0.5),
        "beta": rng.uniform(0.5, 1.5),
        "gamma": rng.uniform(0.0, 3.0),
        "mu_tilde": rng.uniform(-0.1, 0.1),
        "delta": rng.uniform(-0.1, 0.1),
    }
    values.update(fixed)
    return Params(**values)


class TestParams:
    """Tests for the parameter record."""

    def test_defaults(self):
        """Should carry the inclination-flip configuration."""
        p = Params(alpha=0.5, mu=0.0)
        assert (p.a, p.b, p.c, p.beta, p.gamma, p.mu_tilde, p.delta) == (0.7, 1.0, -2.0, 1.0, 2.0, 0.0, 0.0)

    def test_rejects_non_finite(self):
        """Should reject NaN and infinite values."""
        with pytest.raises(ValueError):
            Params(alpha=math.nan, mu=0.0)
        with pytest.raises(ValueError):
            Params(alpha=0.5, mu=math.inf)

    def test_with_mu_keeps_other_values(self):
        """with_mu should replace mu only."""
        p = Params(alpha=0.3, mu=0.0, gamma=1.5).with_mu(-0.002)
        assert p.mu == -0.002
        assert p.alpha == 0.3 and p.gamma == 1.5


class TestVectorField:
    """Tests for eval_field and eval_jacobian."""

    @pytest.mark.parametrize("point", SAMPLE_POINTS)
    def test_jacobian_matches_central_differences(self, point):
        """The analytic Jacobian should agree with central differences."""
        p = Params(alpha=0.4, mu=0.003, mu_tilde=0.1, delta=0.05)
        s = np.array(point)
        h = 1e-6
        numeric = np.column_stack([
            (eval_field(p, s + h * e) - eval_field(p, s - h * e)) / (2 * h) for e in np.eye(3)
        ])
        assert np.allclose(eval_jacobian(p, s), numeric, atol=1e-8)

    def test_origin_is_equilibrium(self, flip_params):
        """The origin should be an equilibrium for every parameter value."""
        assert np.allclose(eval_field(flip_params, (0.0, 0.0, 0.0)), 0.0)
        assert np.allclose(eval_field(Params(alpha=0.2, mu=0.01, delta=0.3), (0.0, 0.0, 0.0)), 0.0)

    @pytest.mark.parametrize("z", [-1.0, 0.3, 2.0])
    def test_z_axis_invariant(self, z):
        """With delta = 0 the field should be tangent to the z-axis."""
        f = eval_field(Params(alpha=0.5, mu=0.004), (0.0, 0.0, z))
        assert f[0] == 0.0 and f[1] == 0.0

    @pytest.mark.parametrize("alpha", [0.2, 0.5])
    @pytest.mark.parametrize("x", [0.1, 0.4, 0.8, 0.99])
    def test_homoclinic_curve_invariant_at_mu_zero(self, alpha, x):
        """At mu = 0 the field should be tangent to y^2 = x^2 (1 - x) in z = 0."""
        p = Params(alpha=alpha, mu=0.0)
        y = x * math.sqrt(1.0 - x)
        f = eval_field(p, (x, y, 0.0))
        grad = np.array([3 * x * x - 2 * x, 2 * y, 0.0])
        assert abs(f[2]) < 1e-14
        assert abs(grad @ f) < 1e-13

    def test_random_draws(self):
        """Over 1000 random parameter draws the origin stays an equilibrium and the z-axis stays invariant."""
        rng = np.random.default_rng(7)
        for _ in range(1000):
            p = _random_params(rng)
            assert np.allclose(eval_field(p, (0.0, 0.0, 0.0)), 0.0, atol=0.0)
            z = rng.uniform(-10.0, 10.0)
            flat = _random_params(rng, delta=0.0)
            f = eval_field(flat, (0.0, 0.0, z))
            assert f[0] == 0.0 and f[1] == 0.0
            assert f[2] == pytest.approx(flat.c * z)

    def test_plane_z_zero_carries_the_energy_identity(self):
        """On z = 0 (mu_tilde = delta = 0) H = y^2 - x^2 (1 - x) obeys H' = a (2 - 3x) H and z' = mu x - alpha beta H."""
        rng = np.random.default_rng(11)
        for _ in range(1000):
            p = _random_params(rng, mu_tilde=0.0, delta=0.0)
            x, y = rng.uniform(-1.5, 1.5, size=2)
            f = eval_field(p, (x, y, 0.0))
            h = y * y - x * x * (1.0 - x)
            dh = (3.0 * x * x - 2.0 * x) * f[0] + 2.0 * y * f[1]
            assert dh == pytest.approx(p.a * (2.0 - 3.0 * x) * h, abs=1e-11)
            assert f[2] == pytest.approx(p.mu * x - p.alpha * p.beta * h, abs=1e-12)

    def test_jacobian_on_random_states(self):
        """Central differences should match the Jacobian to 1e-6 relative error on 100 random states."""
        rng = np.random.default_rng(3)
        h = 1e-6
        for _ in range(100):
            p = _random_params(rng)
            s = rng.uniform(-1.5, 1.5, size=3)
            numeric = np.column_stack([
                (eval_field(p, s + h * e) - eval_field(p, s - h * e)) / (2 * h) for e in np.eye(3)
            ])
            exact = eval_jacobian(p, s)
            assert np.linalg.norm(exact - numeric) <= 1e-6 * max(1.0, np.linalg.norm(exact))


class TestOriginEigens:
    """Tests for origin_eigens and classify_case."""

    def test_eigenvalues_at_defaults(self, flip_params):
        """Should return lambda = (-2, -0.3, 1.7)."""
        eig = origin_eigens(flip_params)
        assert eig.lambda_ss == pytest.approx(-2.0, abs=1e-12)
        assert eig.lambda_s == pytest.approx(-0.3, abs=1e-12)
        assert eig.lambda_u == pytest.approx(1.7, abs=1e-12)

    def test_strong_stable_direction_is_z_axis(self, flip_params):
        """e_ss should be exactly (0, 0, 1)."""
        assert np.array_equal(origin_eigens(flip_params).e_ss, np.array([0.0, 0.0, 1.0]))

    def test_eigenvectors_satisfy_eigen_equation(self, flip_params):
        """J e = lambda e for all three pairs."""
        j = eval_jacobian(flip_params, np.zeros(3))
        eig = origin_eigens(flip_params)
        for lam, vec in ((eig.lambda_ss, eig.e_ss), (eig.lambda_s, eig.e_s), (eig.lambda_u, eig.e_u)):
            assert np.allclose(j @ vec, lam * vec, atol=1e-12)
            assert np.linalg.norm(vec) == pytest.approx(1.0)

    def test_stable_direction_along_homoclinic_return(self, flip_params):
        """e_s should be parallel to (1, -1, 0)."""
        e_s = origin_eigens(flip_params).e_s
        assert abs(abs(e_s @ np.array([1.0, -1.0, 0.0])) / math.sqrt(2.0) - 1.0) < 1e-12

    def test_coordinates_invert_basis(self, flip_params):
        """coordinates and left_vectors should be consistent with the basis."""
        eig = origin_eigens(flip_params)
        v = np.array([0.2, -0.1, 0.7])
        assert np.allclose(eig.basis() @ eig.coordinates(v), v)
        assert np.allclose(eig.left_vectors() @ eig.basis(), np.eye(3), atol=1e-12)

    def test_not_a_saddle(self):
        """Should raise NotASaddle when no eigenvalue is positive."""
        with pytest.raises(NotASaddle):
            origin_eigens(Params(alpha=0.5, mu=0.0, a=-2.0))

    def test_case_report(self, flip_params):
        """Default eigenvalues should satisfy the case-C conditions without resonance."""
        report = classify_case(flip_params)
        assert report.case_c
        assert report.double_weak_below_unstable
        assert not report.strong_faster_than_unstable
        assert not report.resonance
        assert report.weak_below_half_strong
        assert "case_c=True" in report.to_text()


class TestEquilibria:
    """Tests for equilibrium location and classification."""

    def test_origin_described_as_saddle(self, flip_params):
        """The origin should be tagged a saddle with its eigen-structure attached."""
        eq = describe_equilibrium(flip_params, np.zeros(3))
        assert eq.tag is StabilityTag.SADDLE
        assert eq.is_origin()
        assert eq.eigen.lambda_u == pytest.approx(1.7)

    def test_newton_from_near_origin(self, flip_params):
        """Plain Newton near the origin should converge to it."""
        eq = find_equilibrium(flip_params, (0.01, -0.01, 0.005))
        assert eq.is_origin()

    @pytest.mark.parametrize("mu", [0.001, -0.001])
    def test_secondary_equilibrium(self, mu):
        """find_q should return a nonzero root of the field."""
        p = Params(alpha=0.5, mu=mu)
        q = find_q(p)
        assert not q.is_origin()
        assert np.linalg.norm(eval_field(p, q.location)) < 1e-10


class TestHopfAtQ:
    """Tests for the complex pair of q and Hopf detection."""

    def test_q_is_stable_focus(self):
        """Above the homoclinic locus q should be a focus with decaying oscillation."""
        p = Params(alpha=0.5, mu=0.001)
        pair = q_complex_pair(p, find_q(p))
        assert pair is not None
        assert pair.imag > 0.0
        assert pair.real < 0.0

    def test_no_crossing_in_tiny_interval(self):
        """A bracket without a real-part sign change should raise NoSignChange."""
        with pytest.raises(NoSignChange):
            detect_hopf_at_q(Params(alpha=0.5, mu=0.001), (0.001, 0.001 + 1e-6))

    def test_crossing_on_slice(self):
        """On alpha = 0.5 the complex pair of q should cross the imaginary axis near mu = 5.0066e-3."""
        p = Params(alpha=0.5, mu=0.0)
        mu = detect_hopf_at_q(p, (0.0, 0.01))
        assert mu == pytest.approx(5.0066e-3, abs=2e-6)
        q = find_q(p.with_mu(mu))
        assert abs(q_complex_pair(p.with_mu(mu), q).real) <= 1e-6

    def test_shrunk_bracket_gives_same_root(self):
        """Shrinking the bracket tenfold should move the root by at most 1e-8."""
        p = Params(alpha=0.5, mu=0.0)
        wide = detect_hopf_at_q(p, (0.0, 0.01))
        narrow = detect_hopf_at_q(p, (wide - 5e-4, wide + 5e-4))
        assert abs(wide - narrow) <= 1e-8

    def test_unstable_focus_beyond_hopf(self):
        """Past the Hopf crossing q should be tagged an unstable focus."""
        q = find_q(Params(alpha=0.5, mu=0.008))
        assert q.tag is StabilityTag.UNSTABLE_FOCUS
