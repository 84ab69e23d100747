"""
Model Service
Vector field, Jacobian, equilibria and eigen-structure of the three-dimensional
model with an inclination flip at the origin.
"""
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from itertools import product
from typing import Optional, Protocol, Sequence

import numpy as np

from services.errors import FlipscopeError, NoSignChange
from utils.bisection_utils import bisect_sign
from utils.linalg_utils import canonical_sign, complex_pair, null_vector, unit

logger = logging.getLogger(__name__)

# Newton stopping rules
NEWTON_MAX_ITER = 50
NEWTON_RESIDUAL_TOL = 1e-12
NEWTON_STEP_TOL = 1e-13
ORIGIN_GUARD = 1e-6

RESONANCE_TOL = 1e-9
IMAG_TOL = 1e-12
HOPF_TOL = 1e-8

DEFAULT_Q_GUESS = (0.7, 0.2, 0.1)

# Fallback Newton starts for q when the default guess fails
_MULTISTART_GRID = (
    np.linspace(0.2, 1.4, 4),
    np.linspace(-0.6, 0.6, 4),
    np.linspace(-0.6, 0.6, 4),
)


class NotASaddle(FlipscopeError):
    """Error when the origin does not have the ordering lambda_ss < lambda_s < 0 < lambda_u"""
    pass


class NoConvergence(FlipscopeError):
    """Error when Newton iteration for an equilibrium fails"""
    pass


class ConvergedToOrigin(FlipscopeError):
    """Error when the secondary equilibrium was requested but Newton found the origin"""
    pass


@dataclass(frozen=True)
class Params:
    """Parameters of the vector field. Defaults are the inclination-flip configuration."""
    alpha: float
    mu: float
    a: float = 0.7
    b: float = 1.0
    c: float = -2.0
    beta: float = 1.0
    gamma: float = 2.0
    mu_tilde: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if not math.isfinite(value):
                raise ValueError(f"parameter {name} must be finite, got {value}")

    def as_dict(self) -> dict[str, float]:
        return {
            "a": self.a, "b": self.b, "c": self.c,
            "alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
            "mu": self.mu, "mu_tilde": self.mu_tilde, "delta": self.delta,
        }

    def with_mu(self, mu: float) -> "Params":
        return replace(self, mu=mu)

    def with_alpha(self, alpha: float) -> "Params":
        return replace(self, alpha=alpha)


class VectorField(Protocol):
    """Anything the integrator can follow."""

    def rhs(self, s: np.ndarray) -> np.ndarray: ...

    def jacobian(self, s: np.ndarray) -> np.ndarray: ...


def eval_field(p: Params, s: Sequence[float]) -> np.ndarray:
    """Evaluate (P1, P2, P3) at s."""
    x, y, z = s
    shift = p.mu_tilde - p.alpha * z
    return np.array([
        p.a * x + p.b * y - p.a * x**2 + shift * x * (2.0 - 3.0 * x) + p.delta * z,
        p.b * x + p.a * y - 1.5 * p.b * x**2 - 1.5 * p.a * x * y - 2.0 * y * shift - p.delta * z,
        p.c * z + p.mu * x + p.gamma * x * z + p.alpha * p.beta * (x**2 * (1.0 - x) - y**2),
    ])


def eval_jacobian(p: Params, s: Sequence[float]) -> np.ndarray:
    """Analytic Jacobian of eval_field."""
    x, y, z = s
    shift = p.mu_tilde - p.alpha * z
    return np.array([
        [
            p.a - 2.0 * p.a * x + shift * (2.0 - 6.0 * x),
            p.b,
            -p.alpha * x * (2.0 - 3.0 * x) + p.delta,
        ],
        [
            p.b - 3.0 * p.b * x - 1.5 * p.a * y,
            p.a - 1.5 * p.a * x - 2.0 * shift,
            2.0 * p.alpha * y - p.delta,
        ],
        [
            p.mu + p.gamma * z + p.alpha * p.beta * (2.0 * x - 3.0 * x**2),
            -2.0 * p.alpha * p.beta * y,
            p.c + p.gamma * x,
        ],
    ])


@dataclass(frozen=True)
class ModelField:
    """VectorField adapter binding a parameter set."""
    params: Params

    def rhs(self, s: np.ndarray) -> np.ndarray:
        return eval_field(self.params, s)

    def jacobian(self, s: np.ndarray) -> np.ndarray:
        return eval_jacobian(self.params, s)


def as_field(p) -> VectorField:
    """Wrap Params into a VectorField; other vector fields pass through."""
    if isinstance(p, Params):
        return ModelField(p)
    return p


class StabilityTag(str, Enum):
    SADDLE = "saddle"
    SADDLE_FOCUS = "saddle-focus"
    STABLE_FOCUS = "stable focus"
    UNSTABLE_FOCUS = "unstable focus"
    STABLE_NODE = "stable node"
    UNSTABLE_NODE = "unstable node"


@dataclass
class EigenData:
    """Real eigen-structure of a saddle with one unstable and two stable directions."""
    lambda_ss: float
    lambda_s: float
    lambda_u: float
    e_ss: np.ndarray
    e_s: np.ndarray
    e_u: np.ndarray

    def basis(self) -> np.ndarray:
        """Columns e_ss, e_s, e_u."""
        return np.column_stack([self.e_ss, self.e_s, self.e_u])

    def coordinates(self, v: np.ndarray) -> np.ndarray:
        """Components of v in the eigenbasis, ordered (ss, s, u)."""
        return np.linalg.solve(self.basis(), v)

    def left_vectors(self) -> np.ndarray:
        """Rows are the adjoint eigenvectors dual to (e_ss, e_s, e_u)."""
        return np.linalg.inv(self.basis())


@dataclass
class ComplexPair:
    """Complex-conjugate eigenvalue pair with the remaining real eigenvalue."""
    real_part: float
    imag_part: float
    real_eigenvalue: float
    real_vector: np.ndarray


@dataclass
class Equilibrium:
    location: np.ndarray
    eigenvalues: np.ndarray
    tag: StabilityTag
    eigen: Optional[EigenData] = None
    pair: Optional[ComplexPair] = None

    def is_origin(self) -> bool:
        return float(np.linalg.norm(self.location)) <= ORIGIN_GUARD


@dataclass
class CaseReport:
    """Eigenvalue conditions of the saddle at the origin."""
    eigen: EigenData
    resonance: bool
    strong_faster_than_unstable: bool
    double_weak_below_unstable: bool
    weak_below_half_strong: bool

    @property
    def case_c(self) -> bool:
        return self.strong_faster_than_unstable or self.double_weak_below_unstable

    def to_text(self) -> str:
        return (
            f"lambda=({self.eigen.lambda_ss:.6g}, {self.eigen.lambda_s:.6g}, {self.eigen.lambda_u:.6g}) "
            f"resonance={self.resonance} case_c={self.case_c} "
            f"|ls|<|lss|/2={self.weak_below_half_strong}"
        )


def _real_eigenpair(j: np.ndarray, lam: float) -> np.ndarray:
    return null_vector(j - lam * np.eye(3))


def origin_eigens(p: Params) -> EigenData:
    """
    Sorted eigen-structure of the origin.

    Args:
        p: model parameters

    Returns:
        EigenData with lambda_ss < lambda_s < 0 < lambda_u

    Raises:
        NotASaddle: eigenvalues complex or not in saddle order
    """
    j = eval_jacobian(p, np.zeros(3))
    if p.delta == 0.0:
        root = math.sqrt(p.b**2 + 4.0 * p.mu_tilde**2)
        values = [p.a - root, p.a + root, p.c]
    else:
        raw = np.linalg.eigvals(j)
        if np.max(np.abs(raw.imag)) > IMAG_TOL:
            raise NotASaddle(f"complex eigenvalues at the origin: {raw}", operation="origin_eigens",
                             params=p.as_dict())
        values = list(raw.real)

    lambda_ss, lambda_s, lambda_u = sorted(values)
    if not (lambda_ss < lambda_s < 0.0 < lambda_u):
        raise NotASaddle(
            f"eigenvalues {lambda_ss:.6g}, {lambda_s:.6g}, {lambda_u:.6g} are not in saddle order",
            operation="origin_eigens",
            params=p.as_dict(),
        )

    e_ss = _real_eigenpair(j, lambda_ss)
    if p.delta == 0.0 and lambda_ss == p.c:
        # z-axis is invariant: strong stable direction exact
        e_ss = np.array([0.0, 0.0, 1.0])
    return EigenData(
        lambda_ss=lambda_ss,
        lambda_s=lambda_s,
        lambda_u=lambda_u,
        e_ss=e_ss,
        e_s=_real_eigenpair(j, lambda_s),
        e_u=_real_eigenpair(j, lambda_u),
    )


def _stability(eigvals: np.ndarray) -> StabilityTag:
    complex_mask = np.abs(eigvals.imag) > IMAG_TOL
    if complex_mask.any():
        pair_re = float(eigvals[complex_mask][0].real)
        real_re = float(eigvals[~complex_mask][0].real)
        if pair_re > 0.0:
            return StabilityTag.UNSTABLE_FOCUS
        if real_re < 0.0:
            return StabilityTag.STABLE_FOCUS
        return StabilityTag.SADDLE_FOCUS
    re = eigvals.real
    if (re < 0.0).all():
        return StabilityTag.STABLE_NODE
    if (re > 0.0).all():
        return StabilityTag.UNSTABLE_NODE
    return StabilityTag.SADDLE


def describe_equilibrium(p: Params, location: np.ndarray) -> Equilibrium:
    """Attach eigenvalues, tag and eigen-structure to a known equilibrium."""
    j = eval_jacobian(p, location)
    eigvals, eigvecs = np.linalg.eig(j)
    tag = _stability(eigvals)
    eq = Equilibrium(location=np.asarray(location, dtype=float), eigenvalues=eigvals, tag=tag)

    if tag in (StabilityTag.STABLE_FOCUS, StabilityTag.UNSTABLE_FOCUS, StabilityTag.SADDLE_FOCUS):
        k_real = int(np.argmin(np.abs(eigvals.imag)))
        k_pair = int(np.argmax(eigvals.imag))
        eq.pair = ComplexPair(
            real_part=float(eigvals[k_pair].real),
            imag_part=float(eigvals[k_pair].imag),
            real_eigenvalue=float(eigvals[k_real].real),
            real_vector=canonical_sign(unit(eigvecs[:, k_real].real)),
        )
    elif tag == StabilityTag.SADDLE:
        lam = np.sort(eigvals.real)
        if lam[0] < lam[1] < 0.0 < lam[2]:
            eq.eigen = EigenData(
                lambda_ss=float(lam[0]),
                lambda_s=float(lam[1]),
                lambda_u=float(lam[2]),
                e_ss=_real_eigenpair(j, lam[0]),
                e_s=_real_eigenpair(j, lam[1]),
                e_u=_real_eigenpair(j, lam[2]),
            )
    if eq.is_origin():
        try:
            eq.eigen = origin_eigens(p)
        except NotASaddle:
            pass
    return eq


def _newton(p: Params, guess: np.ndarray) -> Optional[np.ndarray]:
    s = np.asarray(guess, dtype=float).copy()
    for iteration in range(NEWTON_MAX_ITER):
        residual = eval_field(p, s)
        if np.linalg.norm(residual) <= NEWTON_RESIDUAL_TOL:
            return s
        try:
            step = np.linalg.solve(eval_jacobian(p, s), -residual)
        except np.linalg.LinAlgError:
            return None
        s = s + step
        if not np.all(np.isfinite(s)) or np.linalg.norm(s) > 1e6:
            return None
        if np.linalg.norm(step) <= NEWTON_STEP_TOL:
            return s if np.linalg.norm(eval_field(p, s)) <= 1e3 * NEWTON_RESIDUAL_TOL else None
        logger.debug(f"newton iteration {iteration}: |f|={np.linalg.norm(residual):.3e}")
    return None


def find_equilibrium(
    p: Params,
    guess: Optional[Sequence[float]] = None,
    seek_secondary: bool = False,
) -> Equilibrium:
    """
    Newton solve for an equilibrium near guess.

    With seek_secondary the origin is refused and a multistart scan is tried
    when the guess fails; the root closest to the guess wins.

    Raises:
        NoConvergence: no root found
        ConvergedToOrigin: seek_secondary and only the origin was found
    """
    start = np.asarray(DEFAULT_Q_GUESS if guess is None else guess, dtype=float)
    root = _newton(p, start)

    if seek_secondary and (root is None or np.linalg.norm(root) <= ORIGIN_GUARD):
        hit_origin = root is not None
        candidates = []
        for x0 in product(*_MULTISTART_GRID):
            r = _newton(p, np.array(x0))
            if r is None:
                continue
            if np.linalg.norm(r) <= ORIGIN_GUARD:
                hit_origin = True
                continue
            candidates.append(r)
        if candidates:
            root = min(candidates, key=lambda r: float(np.linalg.norm(r - start)))
            logger.info(f"Secondary equilibrium found by multistart at {np.round(root, 6)}")
        elif hit_origin:
            raise ConvergedToOrigin("Newton converged to the origin", operation="find_equilibrium",
                                    params=p.as_dict())
        else:
            root = None

    if root is None:
        raise NoConvergence(
            f"Newton failed from guess {tuple(start)} after {NEWTON_MAX_ITER} iterations",
            operation="find_equilibrium",
            params=p.as_dict(),
        )
    return describe_equilibrium(p, root)


def find_q(p: Params, guess: Optional[Sequence[float]] = None) -> Equilibrium:
    """Secondary equilibrium q."""
    return find_equilibrium(p, guess, seek_secondary=True)


def classify_case(p: Params) -> CaseReport:
    """Resonance and case-C eigenvalue tests at the origin."""
    eig = origin_eigens(p)
    weak, strong, unstable = abs(eig.lambda_s), abs(eig.lambda_ss), eig.lambda_u
    return CaseReport(
        eigen=eig,
        resonance=abs(weak - unstable) <= RESONANCE_TOL,
        strong_faster_than_unstable=strong < unstable,
        double_weak_below_unstable=2.0 * weak < unstable,
        weak_below_half_strong=weak < 0.5 * strong,
    )


def q_complex_pair(p: Params, q: Equilibrium) -> Optional[complex]:
    """Complex eigenvalue (positive imaginary part) of the Jacobian at q, if any."""
    return complex_pair(eval_jacobian(p, q.location))


def detect_hopf_at_q(
    p: Params,
    mu_range: tuple[float, float],
    alpha: Optional[float] = None,
    tol: float = HOPF_TOL,
) -> float:
    """
    Locate the Hopf bifurcation of q along a mu interval.

    Args:
        p: base parameters (mu is overridden)
        mu_range: (mu_lo, mu_hi) bracket
        alpha: optional alpha override
        tol: final bracket width

    Returns:
        mu at which the real part of q's complex pair vanishes

    Raises:
        NoSignChange: the real part keeps its sign or q loses its complex pair
    """
    if alpha is not None:
        p = p.with_alpha(alpha)
    state = {"guess": np.array(DEFAULT_Q_GUESS)}

    def real_part(mu: float) -> float:
        pm = p.with_mu(mu)
        q = find_q(pm, state["guess"])
        state["guess"] = q.location
        lam = q_complex_pair(pm, q)
        if lam is None:
            raise NoSignChange(f"q has real eigenvalues at mu={mu:.10g}", operation="detect_hopf_at_q",
                               params=pm.as_dict())
        return lam.real

    lo, hi = sorted(mu_range)
    bracket = bisect_sign(real_part, lo, hi, tol)
    logger.info(f"Hopf of q at mu={bracket.mid:.10g} (alpha={p.alpha})")
    return bracket.mid
