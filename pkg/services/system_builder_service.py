import logging
from typing import Iterable, Optional

import numpy as np
from scipy import linalg

from exceptions import DomainError, GenerationError
from models.stabilizer_config import StabilizerConfig
from models.system_model import SystemModel
from services.gramian_service import GramianService

logger = logging.getLogger(__name__)


def _second_order_form(stiffness: np.ndarray, b_velocity: np.ndarray, name: str) -> SystemModel:
    """
    First-order form of q'' = -K q + B_v u on the state (q; q').

    A is skew in the energy inner product diag(K, I).
    """
    n = stiffness.shape[0]
    zero = np.zeros((n, n))
    identity = np.eye(n)
    a_matrix = np.block([[zero, identity], [-stiffness, zero]])
    b_matrix = np.vstack([np.zeros_like(b_velocity), b_velocity])
    return SystemModel(
        a_matrix=a_matrix,
        b_matrix=b_matrix,
        name=name,
        energy_weight=linalg.block_diag(stiffness, identity),
    )


def _dirichlet_second_difference(n: int) -> np.ndarray:
    return 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)


class SystemBuilderService:
    """Benchmark systems satisfying the group and observability hypotheses."""

    def build_system(self, kind: str, **params) -> SystemModel:
        """
        Build a benchmark system by kind.

        Args:
            kind: One of scalar, rotation, oscillator_chain, wave_1d, random
            **params: Kind-specific parameters

        Raises:
            DomainError: On unknown kinds or invalid parameters
        """
        builders = {
            "scalar": self.scalar,
            "rotation": self.rotation,
            "oscillator_chain": self.oscillator_chain,
            "wave_1d": self.wave_1d,
            "random": self.random_observable_system,
        }
        if kind not in builders:
            raise DomainError(f"unknown system kind '{kind}', expected one of {sorted(builders)}")
        try:
            system = builders[kind](**params)
        except TypeError as e:
            raise DomainError(f"invalid parameters for '{kind}': {e}") from e

        logger.info(f"Built system '{system.name}' with state dimension {system.state_dim}")
        return system

    def scalar(self) -> SystemModel:
        return SystemModel(a_matrix=[[0.0]], b_matrix=[[1.0]], name="scalar", energy_weight=[[1.0]])

    def rotation(self) -> SystemModel:
        return SystemModel(
            a_matrix=[[0.0, 1.0], [-1.0, 0.0]],
            b_matrix=[[1.0], [0.0]],
            name="rotation",
            energy_weight=np.eye(2),
        )

    def oscillator_chain(
        self, n: int, stiffness: Optional[float] = None, control_index: int = 1
    ) -> SystemModel:
        """
        Chain of n unit masses between two walls, springs of equal stiffness.

        The control is a force on mass ``control_index`` (1-based). The
        default stiffness (n + 1)^2 gives the chain unit wave speed, so its
        lowest frequency stays near pi for every n.
        """
        if stiffness is None:
            stiffness = float((n + 1) ** 2)
        if n < 1:
            raise DomainError(f"oscillator chain needs n >= 1, got {n}")
        if not stiffness > 0:
            raise DomainError(f"stiffness must be positive, got {stiffness}")
        if not 1 <= control_index <= n:
            raise DomainError(f"control index {control_index} outside 1..{n}")

        b_velocity = np.zeros((n, 1))
        b_velocity[control_index - 1, 0] = 1.0
        return _second_order_form(
            stiffness * _dirichlet_second_difference(n), b_velocity, f"oscillator_chain_{n}"
        )

    def wave_1d(
        self,
        n: int,
        support: Optional[Iterable[int]] = None,
        scale: Optional[float] = None,
    ) -> SystemModel:
        """
        Finite-difference string on [0, 1] with fixed ends and unit speed.

        Interior nodes 1..n carry positions and velocities; each node in
        ``support`` (1-based, default the last node) gets its own force
        input. ``scale`` defaults to 1/h so that control on the last cell
        mimics a boundary control.
        """
        if n < 1:
            raise DomainError(f"wave_1d needs n >= 1, got {n}")
        support = sorted(set(support)) if support is not None else [n]
        if not support:
            raise DomainError("wave_1d control support is empty")
        if support[0] < 1 or support[-1] > n:
            raise DomainError(f"control support {support} outside 1..{n}")

        h = 1.0 / (n + 1)
        scale = 1.0 / h if scale is None else float(scale)
        if not scale > 0:
            raise DomainError(f"control scale must be positive, got {scale}")

        b_velocity = np.zeros((n, len(support)))
        for column, node in enumerate(support):
            b_velocity[node - 1, column] = scale
        return _second_order_form(
            _dirichlet_second_difference(n) / h**2, b_velocity, f"wave_1d_{n}"
        )

    def random_observable_system(
        self,
        n: int,
        m: int,
        seed: int = 0,
        T: float = 5.0,
        ratio: float = 1e-6,
        max_attempts: int = 100,
    ) -> SystemModel:
        """
        Random skew A = S - S^T with a full-column-rank B passing an observability gate.

        Candidates are redrawn from the same seeded generator until
        c2 / c1 >= ratio on [0, T].

        Raises:
            DomainError: Unless 1 <= m <= n
            GenerationError: After max_attempts rejected candidates
        """
        if not 1 <= m <= n:
            raise DomainError(f"random system needs 1 <= m <= n, got n={n}, m={m}")

        rng = np.random.default_rng(seed)
        gramian_service = GramianService(StabilizerConfig(T=T))

        for attempt in range(1, max_attempts + 1):
            s_matrix = rng.standard_normal((n, n))
            b_matrix = rng.standard_normal((n, m))
            if np.linalg.matrix_rank(b_matrix) < m:
                continue

            system = SystemModel(
                a_matrix=s_matrix - s_matrix.T,
                b_matrix=b_matrix,
                name=f"random_{n}x{m}_seed{seed}",
                energy_weight=np.eye(n),
            )
            c1, c2 = gramian_service.observability_constants(system, T)
            if c1 > 0 and c2 / c1 >= ratio:
                if attempt > 1:
                    logger.warning(f"Random system accepted after {attempt} draws (seed={seed})")
                return system
            logger.debug(f"Rejected random draw {attempt}: c2/c1={c2 / c1 if c1 else 0.0:.3e}")

        raise GenerationError(
            f"no observable random system after {max_attempts} draws (n={n}, m={m}, seed={seed})"
        )
