from dataclasses import asdict, dataclass, replace
from typing import Optional

from config import Config
from exceptions import ConfigError


@dataclass(frozen=True)
class StabilizerConfig:
    """
    Numerical parameters of one stabilizer construction.

    Attributes:
        omega: Prescribed decay rate (1/time)
        T: Observability horizon (time)
        quadrature_order: Gauss-Legendre nodes per panel
        step: Integrator step; None selects max_step for exact stepping, else
            min(max_step, 0.1 / ||A + BF||)
        panel_width: Upper bound on ||A|| times the length of one quadrature panel
        cond_guard: Largest accepted condition number of the weighted Gramian
        observability_ratio: Smallest accepted c2 / c1
        verify_step: Sample spacing used by the representation checks
        decay_tolerance: Base slack of the decay bound
        fit_floor: Samples below fit_floor * ||x0||_omega are left out of rate fits
        exact_stepping: Step through the transition matrix instead of RK4
        seed: Seed for every random draw of a run
    """

    omega: float = 1.0
    T: float = 1.0
    quadrature_order: int = 32
    step: Optional[float] = None
    max_step: float = 0.01
    panel_width: float = 8.0
    cond_guard: float = 1e12
    observability_ratio: float = 1e-10
    verify_step: float = 1e-3
    decay_tolerance: float = 1e-6
    fit_floor: float = 1e-10
    exact_stepping: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.omega > 0:
            raise ConfigError(f"omega must be positive, got {self.omega}")
        if not self.T > 0:
            raise ConfigError(f"T must be positive, got {self.T}")
        if self.quadrature_order < 1:
            raise ConfigError(
                f"quadrature_order must be positive, got {self.quadrature_order}"
            )
        if self.step is not None and not self.step > 0:
            raise ConfigError(f"step must be positive, got {self.step}")
        for name in ("max_step", "panel_width", "cond_guard", "verify_step", "fit_floor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.observability_ratio < 0 or self.decay_tolerance < 0:
            raise ConfigError("tolerances must be nonnegative")

    @property
    def T_omega(self) -> float:
        return self.T + 1.0 / (2.0 * self.omega)

    @classmethod
    def from_config(cls, config_class=Config, **overrides) -> "StabilizerConfig":
        """
        Build from a config class, letting keyword overrides win.

        Overrides equal to None are ignored so optional CLI values can be
        passed straight through.
        """
        values = {
            "quadrature_order": config_class.QUADRATURE_ORDER,
            "max_step": config_class.MAX_STEP,
            "panel_width": config_class.PANEL_WIDTH,
            "cond_guard": config_class.COND_GUARD,
            "observability_ratio": config_class.OBSERVABILITY_RATIO,
            "verify_step": config_class.VERIFY_STEP,
            "decay_tolerance": config_class.DECAY_TOLERANCE,
            "fit_floor": config_class.FIT_FLOOR,
            "exact_stepping": config_class.EXACT_STEPPING,
            "seed": config_class.SEED,
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)

    def with_omega(self, omega: float) -> "StabilizerConfig":
        return replace(self, omega=omega)

    def to_dict(self):
        """Convert to dictionary."""
        data = asdict(self)
        data["T_omega"] = self.T_omega
        return data
