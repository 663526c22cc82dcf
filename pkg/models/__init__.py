from .data_classes import FeedbackLaw, Trajectory, VerificationReport
from .gramian_bundle import GramianBundle, WeightFunction
from .run_config import RunConfig
from .stabilizer_config import StabilizerConfig
from .system_model import SystemModel

__all__ = [
    "FeedbackLaw",
    "GramianBundle",
    "RunConfig",
    "StabilizerConfig",
    "SystemModel",
    "Trajectory",
    "VerificationReport",
    "WeightFunction",
]
