"""
Tests for the bisection drivers.
"""
import pytest

from services.errors import NoSignChange
from utils.bisection_utils import bisect_change, bisect_sign


class TestBisectSign:
    """Tests for signed bisection."""

    def test_root(self):
        """The bracket should shrink to tol around the root."""
        bracket = bisect_sign(lambda x: x * x - 2.0, 0.0, 2.0, 1e-10)
        assert bracket.width <= 1e-10
        assert bracket.mid == pytest.approx(2.0 ** 0.5, abs=1e-10)
        assert bracket.value_lo < 0.0 < bracket.value_hi

    def test_known_end_values_not_recomputed(self):
        """Given end values should be used instead of evaluating fn there."""
        calls = []

        def fn(x):
            calls.append(x)
            return x - 0.3

        bisect_sign(fn, 0.0, 1.0, 1e-3, value_lo=-0.3, value_hi=0.7)
        assert 0.0 not in calls and 1.0 not in calls

    def test_exact_zero(self):
        """A midpoint hitting zero should end the search there."""
        bracket = bisect_sign(lambda x: x - 0.5, 0.0, 1.0, 1e-12)
        assert bracket.lo == bracket.hi == 0.5

    def test_same_sign(self):
        """Ends of equal sign should raise NoSignChange."""
        with pytest.raises(NoSignChange):
            bisect_sign(lambda x: 1.0 + x * x, -1.0, 1.0, 1e-6)


class TestBisectChange:
    """Tests for integer bisection."""

    def test_step(self):
        """The jump of a step function should be bracketed."""
        bracket = bisect_change(lambda x: 1 if x < 0.3 else 2, 0.0, 1.0, 1e-6)
        assert bracket.lo < 0.3 <= bracket.hi
        assert bracket.width <= 1e-6
        assert (bracket.value_lo, bracket.value_hi) == (1, 2)

    def test_constant(self):
        """A constant function should raise NoSignChange."""
        with pytest.raises(NoSignChange):
            bisect_change(lambda x: 3, 0.0, 1.0, 1e-6)
