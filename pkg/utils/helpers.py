import math
from pathlib import Path
from typing import Optional, Union

import numpy as np

from exceptions import ConfigError, DomainError
from utils.numerics import as_matrix


def load_matrix(value, base_dir: Optional[Union[str, Path]] = None, name: str = "matrix") -> np.ndarray:
    """
    Read a matrix given inline or as a path to a whitespace-delimited text file.

    Args:
        value: Nested list of numbers (row-major) or a file path string
        base_dir: Directory relative paths are resolved against
        name: Label used in error messages

    Returns:
        Two-dimensional float array

    Raises:
        ConfigError: If the file is missing or cannot be parsed
    """
    if isinstance(value, str):
        path = Path(value)
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        try:
            value = np.loadtxt(path, ndmin=2)
        except OSError as e:
            raise ConfigError(f"cannot read {name} file {path}: {e}") from e
        except ValueError as e:
            raise ConfigError(f"cannot parse {name} file {path}: {e}") from e

    try:
        return as_matrix(value, name)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def random_unit_vector(size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a vector uniformly from the unit sphere."""
    vector = rng.standard_normal(size)
    return vector / np.linalg.norm(vector)


def format_float(value: float) -> str:
    """
    Shortest round-trip representation of a finite float.

    Raises:
        DomainError: If the value is NaN or infinite
    """
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(f"non-finite value {value} in numeric output")
    return repr(value)
