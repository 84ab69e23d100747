"""
Bisection drivers for sign-changing and integer-valued detectors.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from services.errors import NoSignChange

logger = logging.getLogger(__name__)

MAX_BISECTIONS = 200


@dataclass
class Bracket:
    """Final bracket of a bisection with the detector values at its ends."""
    lo: float
    hi: float
    value_lo: float
    value_hi: float

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return abs(self.hi - self.lo)


def bisect_sign(
    fn: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float,
    value_lo: Optional[float] = None,
    value_hi: Optional[float] = None,
) -> Bracket:
    """
    Shrink [lo, hi] around a sign change of fn until its width is at most tol.

    Raises:
        NoSignChange: fn has the same sign at both ends
    """
    f_lo = fn(lo) if value_lo is None else value_lo
    f_hi = fn(hi) if value_hi is None else value_hi
    if np.sign(f_lo) == np.sign(f_hi) and f_lo != 0.0 and f_hi != 0.0:
        raise NoSignChange(
            f"no sign change on [{lo:.10g}, {hi:.10g}]: values {f_lo:.3e}, {f_hi:.3e}",
            operation="bisect_sign",
        )

    for _ in range(MAX_BISECTIONS):
        if abs(hi - lo) <= tol or f_lo == 0.0 or f_hi == 0.0:
            break
        mid = 0.5 * (lo + hi)
        f_mid = fn(mid)
        logger.debug(f"bisect_sign mid={mid:.12g} value={f_mid:.6e}")
        if f_mid == 0.0:
            return Bracket(mid, mid, f_mid, f_mid)
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return Bracket(lo, hi, f_lo, f_hi)


def bisect_change(
    fn: Callable[[float], int],
    lo: float,
    hi: float,
    tol: float,
    value_lo: Optional[int] = None,
    value_hi: Optional[int] = None,
) -> Bracket:
    """
    Shrink [lo, hi] around a change of an integer-valued fn.

    The left value is carried along: a midpoint equal to it moves the left end,
    anything else moves the right end.

    Raises:
        NoSignChange: fn takes the same value at both ends
    """
    v_lo = fn(lo) if value_lo is None else value_lo
    v_hi = fn(hi) if value_hi is None else value_hi
    if v_lo == v_hi:
        raise NoSignChange(
            f"detector constant ({v_lo}) on [{lo:.10g}, {hi:.10g}]",
            operation="bisect_change",
        )

    for _ in range(MAX_BISECTIONS):
        if abs(hi - lo) <= tol:
            break
        mid = 0.5 * (lo + hi)
        v_mid = fn(mid)
        logger.debug(f"bisect_change mid={mid:.12g} value={v_mid}")
        if v_mid == v_lo:
            lo = mid
        else:
            hi, v_hi = mid, v_mid
    return Bracket(lo, hi, v_lo, v_hi)
