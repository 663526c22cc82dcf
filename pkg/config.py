import os

from dotenv import load_dotenv

load_dotenv()


class Config:
    """Base configuration shared by every command."""

    LOG_LEVEL = os.environ.get("GRAMSTAB_LOG", "info").lower()
    SEED = int(os.environ.get("GRAMSTAB_SEED", "0"))
    QUADRATURE_ORDER = int(os.environ.get("GRAMSTAB_QUADRATURE_ORDER", "32"))
    PANEL_WIDTH = float(os.environ.get("GRAMSTAB_PANEL_WIDTH", "8.0"))
    COND_GUARD = float(os.environ.get("GRAMSTAB_COND_GUARD", "1e12"))
    OBSERVABILITY_RATIO = float(
        os.environ.get("GRAMSTAB_OBSERVABILITY_RATIO", "1e-10")
    )
    VERIFY_STEP = float(os.environ.get("GRAMSTAB_VERIFY_STEP", "1e-3"))
    DECAY_TOLERANCE = float(os.environ.get("GRAMSTAB_DECAY_TOLERANCE", "1e-6"))
    FIT_FLOOR = float(os.environ.get("GRAMSTAB_FIT_FLOOR", "1e-10"))
    MAX_STEP = 0.01
    EXACT_STEPPING = False


class DefaultConfig(Config):
    """Fixed-step RK4 simulation of the closed loop."""

    EXACT_STEPPING = False


class VerificationConfig(Config):
    """Exact stepping through the transition matrix of the closed loop."""

    EXACT_STEPPING = True


config = {
    "default": DefaultConfig,
    "verification": VerificationConfig,
}


def get_config(config_name=None):
    """Resolve a config class by name, falling back to GRAMSTAB_ENV."""
    config_name = config_name or os.environ.get("GRAMSTAB_ENV", "default")
    return config.get(config_name, DefaultConfig)
