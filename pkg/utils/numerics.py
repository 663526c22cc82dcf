"""
Dense real linear-algebra kernels for the Gramian stabilizer.

Every routine here is a pure function of its inputs. Matrices are plain
``numpy.ndarray`` objects of dtype float64; ``as_matrix`` enforces the
finiteness and shape invariants the rest of the package relies on.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import integrate, linalg, special

from exceptions import DimensionError, DomainError, IllConditionedError

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-10
PSD_TOLERANCE = 1e-10


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """
    Convert input to a finite two-dimensional float array.

    Args:
        data: Nested sequence, scalar or array
        name: Label used in error messages

    Returns:
        Two-dimensional float64 array

    Raises:
        DomainError: If any entry is NaN or infinite
        DimensionError: If the input has more than two dimensions or no entries
    """
    matrix = np.array(data, dtype=float)
    if matrix.ndim == 0:
        matrix = matrix.reshape(1, 1)
    elif matrix.ndim == 1:
        matrix = matrix.reshape(-1, 1)
    elif matrix.ndim > 2:
        raise DimensionError(f"{name} must be two-dimensional, got {matrix.ndim} axes")

    if matrix.size == 0:
        raise DimensionError(f"{name} has no entries")
    if not np.all(np.isfinite(matrix)):
        raise DomainError(f"{name} contains non-finite entries")
    return matrix


def as_vector(data, size: int = None, name: str = "vector") -> np.ndarray:
    """Convert input to a finite one-dimensional float array of optional length."""
    vector = np.array(data, dtype=float).reshape(-1)
    if size is not None and vector.shape[0] != size:
        raise DimensionError(f"{name} has length {vector.shape[0]}, expected {size}")
    if not np.all(np.isfinite(vector)):
        raise DomainError(f"{name} contains non-finite entries")
    return vector


def require_square(matrix: np.ndarray, name: str = "matrix") -> None:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {matrix.shape}")


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def _require_symmetric(matrix: np.ndarray, name: str) -> None:
    require_square(matrix, name)
    scale = max(1.0, np.linalg.norm(matrix))
    asymmetry = np.linalg.norm(matrix - matrix.T)
    if asymmetry > SYMMETRY_TOLERANCE * scale:
        raise DomainError(f"{name} is not symmetric (asymmetry {asymmetry:.3e})")


def transition_matrix(generator, t: float) -> np.ndarray:
    """
    Evaluate e^{tM} by scaling-and-squaring with a Pade approximant.

    Args:
        generator: Square real matrix M
        t: Time, may be negative since finite-dimensional generators give groups

    Returns:
        The transition matrix e^{tM}
    """
    generator = np.asarray(generator, dtype=float)
    require_square(generator, "generator")
    if t == 0.0:
        return np.eye(generator.shape[0])
    return linalg.expm(t * generator)


def sym_sqrt(matrix) -> np.ndarray:
    """
    Symmetric square root of a positive-semidefinite matrix.

    Small negative eigenvalues from quadrature noise are clamped to zero.

    Args:
        matrix: Symmetric PSD matrix S

    Returns:
        Symmetric PSD matrix R with R @ R ~= S

    Raises:
        DomainError: If S is asymmetric or has a significantly negative eigenvalue
    """
    matrix = np.asarray(matrix, dtype=float)
    _require_symmetric(matrix, "matrix")
    eigenvalues, eigenvectors = linalg.eigh(symmetrize(matrix))

    floor = -PSD_TOLERANCE * max(1.0, float(np.max(np.abs(eigenvalues))))
    if eigenvalues[0] < floor:
        raise DomainError(
            f"matrix is indefinite: eigenvalue {eigenvalues[0]:.6e} below zero"
        )
    if eigenvalues[0] < 0.0:
        logger.debug(f"Clamping eigenvalue {eigenvalues[0]:.3e} to zero in sym_sqrt")

    roots = np.sqrt(np.clip(eigenvalues, 0.0, None))
    return symmetrize((eigenvectors * roots) @ eigenvectors.T)


def sym_eig_extremes(matrix) -> Tuple[float, float]:
    """
    Return (smallest, largest) eigenvalue of a symmetric matrix.

    Raises:
        DomainError: If the matrix is not symmetric
    """
    matrix = np.asarray(matrix, dtype=float)
    _require_symmetric(matrix, "matrix")
    eigenvalues = linalg.eigvalsh(symmetrize(matrix))
    return float(eigenvalues[0]), float(eigenvalues[-1])


class SpdFactor:
    """
    Cholesky factorization of a symmetric positive-definite matrix.

    Keeps the extreme eigenvalues so callers can report the condition number
    and reject matrices whose inverse would amplify noise past the guard.
    """

    def __init__(self, matrix, cond_guard: float = 1e12):
        matrix = symmetrize(np.asarray(matrix, dtype=float))
        self.matrix = matrix
        self.lambda_min, self.lambda_max = sym_eig_extremes(matrix)

        if self.lambda_min <= 0.0:
            raise IllConditionedError(
                f"matrix is not positive-definite (min eigenvalue {self.lambda_min:.3e})"
            )

        self.cond = self.lambda_max / self.lambda_min
        if self.cond > cond_guard:
            raise IllConditionedError(
                f"condition number {self.cond:.3e} exceeds guard {cond_guard:.1e}"
            )

        self._factor = linalg.cho_factor(matrix, lower=True, check_finite=False)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def solve(self, rhs) -> np.ndarray:
        """Apply the inverse to a vector or to the columns of a matrix."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.size:
            raise DimensionError(
                f"right-hand side has {rhs.shape[0]} rows, expected {self.size}"
            )
        return linalg.cho_solve(self._factor, rhs, check_finite=False)

    def inverse_quadratic(self, x) -> float:
        """Evaluate x^T S^{-1} x, clamped at zero."""
        x = np.asarray(x, dtype=float)
        return max(0.0, float(x @ self.solve(x)))


def spd_solve(matrix, rhs, cond_guard: float = 1e12) -> np.ndarray:
    """
    Solve S x = b for symmetric positive-definite S without forming S^{-1}.

    Raises:
        IllConditionedError: If cond(S) exceeds the guard
    """
    return SpdFactor(matrix, cond_guard=cond_guard).solve(rhs)


def spectral_abscissa(matrix) -> float:
    """Largest real part over the eigenvalues of a square matrix."""
    matrix = np.asarray(matrix, dtype=float)
    require_square(matrix, "matrix")
    return float(np.max(linalg.eigvals(matrix).real))


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and positive weights of a quadrature rule on [a, b]."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int
    a: float
    b: float

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape:
            raise DimensionError("quadrature nodes and weights differ in length")
        if np.any(np.diff(self.nodes) <= 0.0):
            raise DomainError("quadrature nodes must be strictly increasing")
        if np.any(self.weights <= 0.0):
            raise DomainError("quadrature weights must be positive")

    def __len__(self):
        return self.nodes.shape[0]

    @property
    def panels(self) -> int:
        """Number of equal panels, each carrying ``order`` nodes."""
        return len(self) // self.order

    def integrate(self, values) -> np.ndarray:
        """
        Weighted sum of sampled values.

        Args:
            values: Array whose first axis runs over the nodes

        Returns:
            Approximation of the integral, same trailing shape as values
        """
        values = np.asarray(values, dtype=float)
        return np.tensordot(self.weights, values, axes=(0, 0))

    def __call__(self, func) -> np.ndarray:
        return self.integrate([func(node) for node in self.nodes])


def gauss_legendre(a: float, b: float, n: int) -> QuadratureRule:
    """
    Gauss-Legendre rule with n nodes mapped to [a, b].

    Exact for polynomials of degree up to 2n - 1.

    Raises:
        DomainError: If a >= b or n < 1
    """
    if not a < b:
        raise DomainError(f"quadrature interval is empty: a={a}, b={b}")
    if n < 1:
        raise DomainError(f"quadrature order must be positive, got {n}")

    reference_nodes, reference_weights = special.roots_legendre(n)
    half_width = 0.5 * (b - a)
    midpoint = 0.5 * (a + b)
    return QuadratureRule(
        nodes=half_width * reference_nodes + midpoint,
        weights=half_width * reference_weights,
        order=n,
        a=float(a),
        b=float(b),
    )


def composite_gauss_legendre(a: float, b: float, n: int, panels: int = 1) -> QuadratureRule:
    """Concatenate n-point Gauss-Legendre rules over equal panels of [a, b]."""
    if panels < 1:
        raise DomainError(f"panel count must be positive, got {panels}")
    if panels == 1:
        return gauss_legendre(a, b, n)

    edges = np.linspace(a, b, panels + 1)
    rules = [gauss_legendre(left, right, n) for left, right in zip(edges[:-1], edges[1:])]
    return QuadratureRule(
        nodes=np.concatenate([rule.nodes for rule in rules]),
        weights=np.concatenate([rule.weights for rule in rules]),
        order=n,
        a=float(a),
        b=float(b),
    )


def propagate(generator, x0, t_end: float, max_step: float):
    """
    Sample x(t) = e^{tM} x0 on a uniform grid from 0 to t_end.

    The grid has an even number of intervals no longer than max_step, so it
    suits composite Simpson. t_end may be negative. x0 may be a vector or a
    matrix whose columns are propagated together.

    Returns:
        Tuple of (times, states) with states stacked along the first axis
    """
    x0 = np.asarray(x0, dtype=float)
    if t_end == 0.0:
        return np.zeros(1), x0[np.newaxis].copy()

    intervals = max(2, int(np.ceil(abs(t_end) / max_step - 1e-9)))
    intervals += intervals % 2
    times = np.linspace(0.0, t_end, intervals + 1)
    step_matrix = transition_matrix(generator, t_end / intervals)

    states = np.empty((intervals + 1,) + x0.shape)
    states[0] = x0
    for k in range(intervals):
        states[k + 1] = step_matrix @ states[k]
    return times, states


def simpson_integral(values, times) -> np.ndarray:
    """
    Composite Simpson integral of samples on a (possibly decreasing) grid.

    A single sample integrates to zero.
    """
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    if times.shape[0] < 2:
        return np.zeros(values.shape[1:]) if values.ndim > 1 else 0.0
    return integrate.simpson(values, x=times, axis=0)
