import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from exceptions import DimensionError, DomainError
from utils.numerics import SpdFactor


@dataclass(frozen=True, eq=False)
class FeedbackLaw:
    """Feedback u = F x with F = -B^T Lambda^{-1}."""

    f_matrix: np.ndarray
    lambda_factor: SpdFactor = field(repr=False)

    @property
    def input_dim(self) -> int:
        return self.f_matrix.shape[0]

    @property
    def state_dim(self) -> int:
        return self.f_matrix.shape[1]

    def to_dict(self):
        """Convert to dictionary."""
        return {"f_matrix": self.f_matrix.tolist()}


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled closed-loop run: times, states and omega-norms."""

    times: np.ndarray
    states: np.ndarray
    omega_norms: np.ndarray
    route: str = "direct"
    step: float = 0.0
    error_allowance: float = 0.0

    def __post_init__(self):
        if self.times.ndim != 1 or self.states.shape[0] != self.times.shape[0]:
            raise DimensionError("trajectory times and states differ in length")
        if self.omega_norms.shape[0] != self.times.shape[0]:
            raise DimensionError("trajectory times and omega-norms differ in length")
        if self.times.shape[0] and self.times[0] != 0.0:
            raise DomainError("trajectory must start at t = 0")
        if np.any(np.diff(self.times) <= 0.0):
            raise DomainError("trajectory times must be increasing")

    def __len__(self):
        return self.times.shape[0]

    @property
    def initial_state(self) -> np.ndarray:
        return self.states[0]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def bound(self, omega: float) -> np.ndarray:
        """Decay envelope e^{-omega t} ||x0||_omega on the sample grid."""
        return np.exp(-omega * self.times) * self.omega_norms[0]

    def to_rows(self, omega: float) -> List[List[float]]:
        bound = self.bound(omega)
        return [
            [float(t), *map(float, state), float(norm), float(envelope)]
            for t, state, norm, envelope in zip(self.times, self.states, self.omega_norms, bound)
        ]

    def to_dict(self):
        """Convert to dictionary."""
        return {
            "route": self.route,
            "step": self.step,
            "error_allowance": self.error_allowance,
            "samples": len(self),
            "horizon": float(self.times[-1]) if len(self) else 0.0,
            "initial_omega_norm": float(self.omega_norms[0]) if len(self) else 0.0,
            "final_omega_norm": float(self.omega_norms[-1]) if len(self) else 0.0,
        }


@dataclass
class VerificationReport:
    """Named residuals of the verified identities with their tolerances."""

    residuals: Dict[str, float] = field(default_factory=dict)
    tolerances: Dict[str, float] = field(default_factory=dict)
    seed: Optional[int] = None
    details: Dict[str, object] = field(default_factory=dict)

    def add(self, name: str, residual: float, tolerance: float) -> None:
        residual = float(residual)
        self.residuals[name] = residual if math.isnan(residual) else max(0.0, residual)
        self.tolerances[name] = float(tolerance)

    def merge(self, other: "VerificationReport") -> "VerificationReport":
        self.residuals.update(other.residuals)
        self.tolerances.update(other.tolerances)
        self.details.update(other.details)
        return self

    @property
    def failed(self) -> List[str]:
        return [
            name
            for name, residual in self.residuals.items()
            if not residual <= self.tolerances[name]
        ]

    @property
    def passed(self) -> bool:
        return not self.failed

    def to_dict(self):
        """Convert to dictionary."""
        return {
            "passed": self.passed,
            "failed": self.failed,
            "seed": self.seed,
            "residuals": dict(self.residuals),
            "tolerances": dict(self.tolerances),
            "details": dict(self.details),
        }
