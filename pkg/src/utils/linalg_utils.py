"""
Linear algebra helpers: eigenvector sign conventions, section bases,
characteristic polynomial of 3x3 Jacobians.
"""
from typing import Optional

import numpy as np
from scipy.linalg import null_space


def unit(v: np.ndarray) -> np.ndarray:
    """Return v scaled to unit Euclidean norm."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return v / norm


def canonical_sign(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Flip v so its first non-negligible component is positive."""
    for comp in v:
        if abs(comp) > tol:
            return v if comp > 0 else -v
    return v


def null_vector(m: np.ndarray) -> np.ndarray:
    """Unit vector spanning the (numerical) kernel of a rank-deficient matrix."""
    _, _, vh = np.linalg.svd(m)
    return canonical_sign(unit(vh[-1]))


def characteristic_coefficients(j: np.ndarray) -> tuple[float, float, float]:
    """
    Coefficients (a2, a1, a0) of det(lambda*I - J) = lambda^3 + a2 lambda^2 + a1 lambda + a0.
    """
    trace = float(np.trace(j))
    minors = (
        j[0, 0] * j[1, 1] - j[0, 1] * j[1, 0]
        + j[0, 0] * j[2, 2] - j[0, 2] * j[2, 0]
        + j[1, 1] * j[2, 2] - j[1, 2] * j[2, 1]
    )
    return -trace, float(minors), -float(np.linalg.det(j))


def cubic_discriminant(j: np.ndarray) -> float:
    """
    Discriminant of the characteristic cubic of a 3x3 matrix.

    Negative means one real root and a complex-conjugate pair; positive means
    three distinct real roots.
    """
    b, c, d = characteristic_coefficients(j)
    return 18 * b * c * d - 4 * b**3 * d + b**2 * c**2 - 4 * c**3 - 27 * d**2


def complex_pair(j: np.ndarray) -> Optional[complex]:
    """Eigenvalue with positive imaginary part, or None when all eigenvalues are real."""
    if cubic_discriminant(j) >= 0.0:
        return None
    eigvals = np.linalg.eigvals(j)
    return complex(eigvals[np.argmax(eigvals.imag)])


def section_basis(normal: np.ndarray) -> np.ndarray:
    """
    Orthonormal 3x2 basis of the plane orthogonal to normal.

    b1 is the coordinate axis least aligned with the normal, projected into the
    plane; (b1, b2, n_hat) is right-handed. For y = 0 this gives (x, -z).
    """
    n = unit(normal)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(n)))] = 1.0
    b1 = unit(axis - axis.dot(n) * n)
    b2 = np.cross(n, b1)
    return np.column_stack([b1, b2])


def kernel_basis(m: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical kernel of m."""
    return null_space(m)
