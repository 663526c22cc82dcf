import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from config import get_config
from exceptions import ConfigError
from models.stabilizer_config import StabilizerConfig

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCES = {
    "riccati": 1e-7,
    "integral_riccati": 1e-6,
    "conjugation": 1e-7,
    "repU": 1e-6,
    "repL1": 1e-6,
    "repL2": 1e-6,
    "repIL": 1e-6,
    "psd_gap": 1e-8,
    "route_equivalence": 1e-6,
    "group_property": 1e-8,
    "energy_balance": 1e-5,
}

SYSTEM_KINDS = ("scalar", "rotation", "oscillator_chain", "wave_1d", "random", "matrices")

# Finite-difference strings and chains need a longer window than T = 1
# before their slow high modes become observable.
DEFAULT_HORIZONS = {"oscillator_chain": 5.0, "wave_1d": 5.0, "random": 5.0}
FALLBACK_HORIZON = 1.0


def default_horizon(kind: str) -> float:
    """Observation horizon T used when a run file gives none."""
    return DEFAULT_HORIZONS.get(kind, FALLBACK_HORIZON)


@dataclass
class RunConfig:
    """
    One run of the command-line driver, parsed from a JSON file.

    See README.md for the schema.
    """

    system_kind: str
    system_params: Dict[str, object] = field(default_factory=dict)
    omega: float = 1.0
    T: Optional[float] = None
    quadrature_order: int = 32
    step: Optional[float] = None
    horizon: Optional[float] = None
    x0: Optional[List[float]] = None
    omegas: List[float] = field(default_factory=list)
    seed: int = 0
    mode: Optional[str] = None
    trials: int = 10
    tolerances: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    out_dir: str = "."
    base_dir: Optional[str] = None

    def __post_init__(self):
        if self.system_kind not in SYSTEM_KINDS:
            raise ConfigError(
                f"unknown system kind '{self.system_kind}', expected one of {list(SYSTEM_KINDS)}"
            )
        if self.T is None:
            self.T = default_horizon(self.system_kind)
        if not self.omega > 0:
            raise ConfigError(f"omega must be positive, got {self.omega}")
        if not self.T > 0:
            raise ConfigError(f"T must be positive, got {self.T}")
        if self.quadrature_order < 4:
            raise ConfigError(f"quadrature_order must be at least 4, got {self.quadrature_order}")
        if self.step is not None and not self.step > 0:
            raise ConfigError(f"step must be positive, got {self.step}")
        if self.horizon is not None and self.horizon < 0:
            raise ConfigError(f"horizon must be nonnegative, got {self.horizon}")
        if any(not omega > 0 for omega in self.omegas):
            raise ConfigError(f"every sweep omega must be positive, got {self.omegas}")
        if self.trials < 1:
            raise ConfigError(f"trials must be positive, got {self.trials}")
        if self.mode is not None and self.mode not in ("default", "verification"):
            raise ConfigError(f"mode must be 'default' or 'verification', got '{self.mode}'")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES) - {"decay"}
        if unknown:
            raise ConfigError(f"unknown tolerance names: {sorted(unknown)}")

    @property
    def run_horizon(self) -> float:
        """Simulation horizon, 10 / omega unless configured."""
        return 10.0 / self.omega if self.horizon is None else self.horizon

    def stabilizer_config(self) -> StabilizerConfig:
        return StabilizerConfig.from_config(
            get_config(self.mode),
            omega=self.omega,
            T=self.T,
            quadrature_order=self.quadrature_order,
            step=self.step,
            seed=self.seed,
            decay_tolerance=self.tolerances.get("decay"),
        )

    @classmethod
    def from_dict(cls, data: dict, base_dir: Optional[str] = None) -> "RunConfig":
        """
        Build from a parsed JSON document.

        Raises:
            ConfigError: On missing or mistyped fields
        """
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")

        system = data.get("system")
        if not isinstance(system, dict) or "kind" not in system:
            raise ConfigError("config needs a 'system' object with a 'kind'")

        params = dict(system.get("params", {}))
        if system["kind"] == "matrices":
            for key in ("a_matrix", "b_matrix"):
                if key not in system:
                    raise ConfigError(f"system kind 'matrices' needs '{key}'")
                params[key] = system[key]
            params["name"] = system.get("name", "matrices")

        tolerances = dict(DEFAULT_TOLERANCES)
        tolerances.update(data.get("tolerances", {}))
        output = data.get("output", {})

        try:
            return cls(
                system_kind=system["kind"],
                system_params=params,
                omega=float(data.get("omega", 1.0)),
                T=None if data.get("T") is None else float(data["T"]),
                quadrature_order=int(data.get("quadrature_order", 32)),
                step=None if data.get("step") is None else float(data["step"]),
                horizon=None if data.get("horizon") is None else float(data["horizon"]),
                x0=None if data.get("x0") is None else [float(v) for v in data["x0"]],
                omegas=sorted(float(v) for v in data.get("omegas", [])),
                seed=int(data.get("seed", 0)),
                mode=data.get("mode"),
                trials=int(data.get("trials", 10)),
                tolerances={key: float(value) for key, value in tolerances.items()},
                out_dir=output.get("dir", "."),
                base_dir=base_dir,
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"invalid config value: {e}") from e

    @classmethod
    def load(cls, path) -> "RunConfig":
        """
        Read and validate a JSON run file.

        Raises:
            ConfigError: If the file is missing, malformed or invalid
        """
        path = Path(path)
        try:
            with path.open(encoding="utf-8") as handle:
                data = json.load(handle)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            logger.error(f"Config parse failed: {e}")
            raise ConfigError(
                f"malformed config {path}: {e.msg} at line {e.lineno}, column {e.colno}"
            ) from e

        return cls.from_dict(data, base_dir=str(path.parent))

    def to_dict(self):
        """Convert to dictionary."""
        return {
            "system": {"kind": self.system_kind, "params": self.system_params},
            "omega": self.omega,
            "T": self.T,
            "quadrature_order": self.quadrature_order,
            "step": self.step,
            "horizon": self.run_horizon,
            "x0": self.x0,
            "omegas": self.omegas,
            "seed": self.seed,
            "mode": self.mode,
            "trials": self.trials,
            "tolerances": dict(self.tolerances),
        }
