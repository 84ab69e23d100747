"""
Tests for the winding number and the parameter sweep.
"""
import numpy as np
import pytest

from services import winding
from services.errors import ConfigError
from services.flow import IntegratorConfig
from services.model import Params, eval_field
from services.winding import (
    SEED_OFFSET,
    ZETA_SATURATED,
    GridSpec,
    WindingResult,
    WindingTermination,
    compute_zeta,
    stays_in_v,
    sweep_zeta,
    unstable_seed,
)


def _fake_cell(p, cfg):
    """Deterministic stand-in encoding the cell position."""
    return WindingResult(alpha=p.alpha, mu=p.mu, zeta=int(round(10 * p.alpha)) + int(round(1000 * p.mu)),
                         crossing_count=0, termination=WindingTermination.REACHED_V)


class TestUnstableSeed:
    """Tests for the seed of the unstable branch."""

    def test_seed_offset_and_direction(self, flip_params):
        """The seed should sit SEED_OFFSET from the origin with positive x velocity."""
        seed = unstable_seed(flip_params)
        assert np.linalg.norm(seed) == pytest.approx(SEED_OFFSET)
        assert eval_field(flip_params, seed)[0] > 0.0


class TestGridSpec:
    """Tests for sweep grid validation."""

    def test_inverted_alpha_range(self):
        """An inverted alpha range should be a configuration error."""
        with pytest.raises(ConfigError):
            GridSpec(alpha_min=0.7, alpha_max=0.3, mu_min=-0.006, mu_max=0.0005, n_alpha=10, n_mu=10)

    def test_inverted_mu_range(self):
        """An inverted mu range should be a configuration error."""
        with pytest.raises(ConfigError):
            GridSpec(alpha_min=0.3, alpha_max=0.7, mu_min=0.001, mu_max=-0.001, n_alpha=10, n_mu=10)

    def test_non_positive_size(self):
        """Empty rasters should be rejected."""
        with pytest.raises(ConfigError):
            GridSpec(alpha_min=0.3, alpha_max=0.7, mu_min=-0.006, mu_max=0.0005, n_alpha=0, n_mu=10)

    def test_axes(self):
        """alphas and mus should span the rectangle inclusively."""
        spec = GridSpec(alpha_min=0.3, alpha_max=0.7, mu_min=-0.006, mu_max=0.0005, n_alpha=5, n_mu=3)
        assert spec.alphas() == pytest.approx([0.3, 0.4, 0.5, 0.6, 0.7])
        assert spec.mus() == pytest.approx([-0.006, -0.00275, 0.0005])


class TestSweepAssembly:
    """Tests for raster assembly independent of the winding computation."""

    @pytest.fixture(autouse=True)
    def fake_cells(self, monkeypatch):
        monkeypatch.setattr(winding, "_zeta_cell", _fake_cell)

    def test_raster_indexed_by_alpha_then_mu(self):
        """cells[i][j] should hold (alphas[i], mus[j])."""
        spec = GridSpec(alpha_min=0.1, alpha_max=0.3, mu_min=0.0, mu_max=0.002, n_alpha=3, n_mu=3)
        grid = sweep_zeta(spec, progress=False)
        assert grid.zeta_raster().tolist() == [[1, 2, 3], [2, 3, 4], [3, 4, 5]]

    def test_evaluation_order_does_not_change_raster(self):
        """Permuting the row order should give the same raster."""
        spec = GridSpec(alpha_min=0.1, alpha_max=0.4, mu_min=0.0, mu_max=0.003, n_alpha=4, n_mu=4)
        reference = sweep_zeta(spec, progress=False).zeta_raster()
        shuffled = sweep_zeta(spec, order=[2, 0, 3, 1], progress=False).zeta_raster()
        assert np.array_equal(reference, shuffled)

    def test_rows_follow_raster(self):
        """rows() should list cells alpha-major with the termination tag."""
        spec = GridSpec(alpha_min=0.1, alpha_max=0.2, mu_min=0.0, mu_max=0.001, n_alpha=2, n_mu=2)
        rows = list(sweep_zeta(spec, progress=False).rows())
        assert [row[:2] for row in rows] == pytest.approx([[0.1, 0.0], [0.1, 0.001], [0.2, 0.0], [0.2, 0.001]])
        assert rows[0][4] == "reached-dV"

    def test_rejects_bad_order(self):
        """An order that is not a permutation should be rejected."""
        spec = GridSpec(alpha_min=0.1, alpha_max=0.2, mu_min=0.0, mu_max=0.001, n_alpha=2, n_mu=2)
        with pytest.raises(ConfigError):
            sweep_zeta(spec, order=[0, 0], progress=False)

    def test_fixed_parameters_forwarded(self, monkeypatch):
        """Base parameters other than alpha and mu should reach every cell."""
        seen = []
        monkeypatch.setattr(winding, "_zeta_cell", lambda p, cfg: seen.append(p.gamma) or _fake_cell(p, cfg))
        spec = GridSpec(alpha_min=0.1, alpha_max=0.2, mu_min=0.0, mu_max=0.001, n_alpha=2, n_mu=2)
        sweep_zeta(spec, base={"gamma": 1.5, "alpha": 9.0}, progress=False)
        assert seen == [1.5] * 4


class TestComputeZeta:
    """Winding numbers in the regions next to the primary homoclinic locus."""

    def test_one_loop_above_locus(self):
        """Above the locus the branch should wind once."""
        result = compute_zeta(Params(alpha=0.5, mu=0.001))
        assert result.zeta == 1
        assert result.termination is WindingTermination.REACHED_V
        assert result.crossing_count == 2

    def test_two_loops_below_locus(self):
        """Just below the locus at alpha = 0.5 the branch should wind twice."""
        result = compute_zeta(Params(alpha=0.5, mu=-0.001))
        assert result.zeta == 2
        assert result.crossing_count % 2 == 0

    def test_endpoint_stays_in_v(self):
        """The state where the branch enters V should stay there."""
        p = Params(alpha=0.5, mu=0.001)
        result = compute_zeta(p)
        assert stays_in_v(p, result.final_state)

    @pytest.mark.slow
    def test_saturated_without_flip(self):
        """At alpha = 0.2 below the locus the branch should never reach V."""
        result = compute_zeta(Params(alpha=0.2, mu=-0.001))
        assert result.zeta == ZETA_SATURATED
        assert result.saturated

    @pytest.mark.slow
    def test_plateau_sequence(self):
        """Moving down the alpha = 0.5 slice should step zeta through 1, 2, 3, 4."""
        zetas = [compute_zeta(Params(alpha=0.5, mu=mu)).zeta for mu in (0.0003, -0.002, -0.0035, -0.004)]
        assert zetas == [1, 2, 3, 4]

    def test_divergence_recorded_as_undefined(self):
        """A branch leaving the escape ball should give an undefined row instead of an error."""
        cfg = IntegratorConfig(t_max=100.0, escape_radius=0.5)
        result = compute_zeta(Params(alpha=0.5, mu=0.001), cfg)
        assert result.termination is WindingTermination.DIVERGED
        assert result.zeta == ZETA_SATURATED
        assert result.error == "Divergence"
        assert np.linalg.norm(result.final_state) == pytest.approx(0.5, rel=1e-8)

    @pytest.mark.slow
    def test_sweep_plateaus_along_slice(self):
        """A sweep down the alpha = 0.5 slice should give nested plateaus 1, 2, 3, 4."""
        spec = GridSpec(alpha_min=0.5, alpha_max=0.5, mu_min=-0.004, mu_max=0.0004, n_alpha=1, n_mu=9)
        row = sweep_zeta(spec, progress=False).zeta_raster()[0].tolist()
        assert row == sorted(row, reverse=True)
        assert row[0] == 4
        assert row[-1] == 1
        assert set(row) == {1, 2, 3, 4}
