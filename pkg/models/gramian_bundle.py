import math
from dataclasses import dataclass, field

import numpy as np

from exceptions import DomainError, KinkError
from utils.numerics import SpdFactor


@dataclass(frozen=True)
class WeightFunction:
    """
    Weight e_omega on [0, T_omega].

    e_omega(s) = exp(-2 omega s) on [0, T], then a linear ramp
    2 omega exp(-2 omega T) (T_omega - s) down to zero at T_omega = T + 1/(2 omega).
    The ramp keeps -e_omega' >= 2 omega e_omega on the whole interval.
    """

    omega: float
    T: float

    def __post_init__(self):
        if not self.omega > 0 or not self.T > 0:
            raise DomainError(f"weight needs omega > 0 and T > 0, got {self.omega}, {self.T}")

    @property
    def T_omega(self) -> float:
        return self.T + 1.0 / (2.0 * self.omega)

    @property
    def junction_value(self) -> float:
        return math.exp(-2.0 * self.omega * self.T)

    def _check_domain(self, s: float) -> None:
        if s < 0.0 or s > self.T_omega:
            raise DomainError(f"s={s} outside [0, {self.T_omega}]")

    def value(self, s: float) -> float:
        """Evaluate e_omega(s)."""
        self._check_domain(s)
        if s <= self.T:
            return math.exp(-2.0 * self.omega * s)
        return 2.0 * self.omega * self.junction_value * (self.T_omega - s)

    def derivative(self, s: float) -> float:
        """
        Evaluate e_omega'(s) away from the kink.

        Raises:
            KinkError: At s = T, where integrals must be split instead
        """
        self._check_domain(s)
        if s == self.T:
            raise KinkError(f"weight derivative is undefined at the junction s = T = {self.T}")
        if s < self.T:
            return -2.0 * self.omega * math.exp(-2.0 * self.omega * s)
        return -2.0 * self.omega * self.junction_value

    def values(self, nodes) -> np.ndarray:
        return np.array([self.value(float(s)) for s in nodes])

    def derivatives(self, nodes) -> np.ndarray:
        return np.array([self.derivative(float(s)) for s in nodes])

    def to_dict(self):
        """Convert to dictionary."""
        return {"omega": self.omega, "T": self.T, "T_omega": self.T_omega}


@dataclass(frozen=True, eq=False)
class GramianBundle:
    """
    Weighted Gramian and the operators derived from it.

    State and control spaces are real Euclidean with the standard inner
    product, so the duality maps between a space and its dual are identities
    and adjoints are transposes.

    Attributes:
        lambda_matrix: Weighted Gramian Lambda_omega (SPD)
        lambda_factor: Cholesky factor of lambda_matrix
        m_matrix: Gramian weighted by -e_omega'
        l_matrix: Lambda^{-1} M Lambda^{-1}
        c_matrix: Symmetric square root of l_matrix
        weight: The weight function the integrals used
        cond_lambda: Condition number of lambda_matrix
        c1: Largest eigenvalue of the plain Gramian on [0, T]
        c2: Smallest eigenvalue of the plain Gramian on [0, T]
    """

    lambda_matrix: np.ndarray
    lambda_factor: SpdFactor = field(repr=False)
    m_matrix: np.ndarray
    l_matrix: np.ndarray
    c_matrix: np.ndarray
    weight: WeightFunction
    cond_lambda: float
    c1: float
    c2: float

    @property
    def omega(self) -> float:
        return self.weight.omega

    @property
    def T(self) -> float:
        return self.weight.T

    @property
    def state_dim(self) -> int:
        return self.lambda_matrix.shape[0]

    def lambda_inverse_apply(self, rhs) -> np.ndarray:
        return self.lambda_factor.solve(rhs)

    def omega_norm(self, x) -> float:
        """sqrt(x^T Lambda^{-1} x)."""
        return math.sqrt(self.lambda_factor.inverse_quadratic(x))

    def to_dict(self):
        """Convert to dictionary."""
        return {
            "omega": self.omega,
            "T": self.T,
            "T_omega": self.weight.T_omega,
            "lambda": self.lambda_matrix.tolist(),
            "m_matrix": self.m_matrix.tolist(),
            "l_matrix": self.l_matrix.tolist(),
            "c_matrix": self.c_matrix.tolist(),
            "cond_lambda": self.cond_lambda,
            "c1": self.c1,
            "c2": self.c2,
        }
