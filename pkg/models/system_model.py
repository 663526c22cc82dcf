from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from exceptions import DimensionError
from utils.numerics import as_matrix, require_square, transition_matrix


@dataclass(frozen=True, eq=False)
class SystemModel:
    """
    Linear control system x' = Ax + Bu on a real Euclidean state space.

    A always generates a group at finite dimension. When ``energy_weight`` is
    set, it is the SPD Gram matrix of the inner product in which A is skew
    (oscillators and semi-discretized waves).
    """

    a_matrix: np.ndarray
    b_matrix: np.ndarray
    name: str = "system"
    energy_weight: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        a_matrix = as_matrix(self.a_matrix, "A")
        b_matrix = as_matrix(self.b_matrix, "B")
        require_square(a_matrix, "A")
        if b_matrix.shape[0] != a_matrix.shape[0]:
            raise DimensionError(
                f"B has {b_matrix.shape[0]} rows but A is {a_matrix.shape[0]}x{a_matrix.shape[0]}"
            )
        object.__setattr__(self, "a_matrix", a_matrix)
        object.__setattr__(self, "b_matrix", b_matrix)

        if self.energy_weight is not None:
            weight = as_matrix(self.energy_weight, "energy weight")
            if weight.shape != a_matrix.shape:
                raise DimensionError("energy weight must match the shape of A")
            object.__setattr__(self, "energy_weight", weight)

    @property
    def state_dim(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def input_dim(self) -> int:
        return self.b_matrix.shape[1]

    @property
    def control_gram(self) -> np.ndarray:
        """B B^T, the term the Riccati equation balances."""
        return self.b_matrix @ self.b_matrix.T

    def energy_isometry_defect(self, t: float) -> float:
        """
        Largest deviation of e^{tA} from an isometry in the energy inner product.

        Returns max |sigma - 1| over the singular values of W^{1/2} e^{tA} W^{-1/2}.
        """
        weight = self.energy_weight if self.energy_weight is not None else np.eye(self.state_dim)
        eigenvalues, eigenvectors = np.linalg.eigh(weight)
        root = (eigenvectors * np.sqrt(eigenvalues)) @ eigenvectors.T
        inverse_root = (eigenvectors / np.sqrt(eigenvalues)) @ eigenvectors.T
        propagated = root @ transition_matrix(self.a_matrix, t) @ inverse_root
        singular_values = np.linalg.svd(propagated, compute_uv=False)
        return float(np.max(np.abs(singular_values - 1.0)))

    def to_dict(self):
        """Convert to dictionary."""
        return {
            "name": self.name,
            "state_dim": self.state_dim,
            "input_dim": self.input_dim,
            "a_matrix": self.a_matrix.tolist(),
            "b_matrix": self.b_matrix.tolist(),
        }
