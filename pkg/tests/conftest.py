import json
from typing import NamedTuple, Tuple

import pytest

from models.stabilizer_config import StabilizerConfig
from models.system_model import SystemModel
from services.closed_loop_service import ClosedLoopService
from services.gramian_service import GramianService
from services.system_builder_service import SystemBuilderService

ALL_OMEGAS = (0.5, 1.0, 2.0, 4.0)
# cond(Lambda) of the finite-difference systems nears the guard beyond omega = 1.
STIFF_OMEGAS = (0.5, 1.0)
RANDOM_SHAPES = [
    (4, 1, 0),
    (5, 1, 1),
    (6, 2, 2),
    (7, 2, 3),
    (8, 2, 4),
    (9, 3, 5),
    (10, 2, 6),
    (11, 3, 7),
    (12, 2, 1),
    (12, 3, 9),
]


class SuiteCase(NamedTuple):
    system: SystemModel
    T: float
    omegas: Tuple[float, ...]


@pytest.fixture(scope="session")
def acceptance_suite():
    """Benchmark systems at full size, each with its horizon and usable decay rates."""
    builder = SystemBuilderService()
    cases = [
        SuiteCase(builder.scalar(), 1.0, ALL_OMEGAS),
        SuiteCase(builder.rotation(), 2.0, ALL_OMEGAS),
        SuiteCase(builder.oscillator_chain(10), 5.0, STIFF_OMEGAS),
        SuiteCase(builder.wave_1d(20), 5.0, STIFF_OMEGAS),
    ]
    for n, m, seed in RANDOM_SHAPES:
        cases.append(SuiteCase(builder.random_observable_system(n, m, seed=seed), 5.0, ALL_OMEGAS))
    return cases


@pytest.fixture(scope="session")
def random_suite(acceptance_suite):
    return [case for case in acceptance_suite if case.system.name.startswith("random")]


@pytest.fixture()
def builder():
    return SystemBuilderService()


@pytest.fixture()
def scalar_system(builder):
    return builder.scalar()


@pytest.fixture()
def rotation_system(builder):
    return builder.rotation()


@pytest.fixture()
def scalar_config():
    return StabilizerConfig(omega=0.5, T=1.0)


@pytest.fixture()
def exact_config():
    return StabilizerConfig(omega=1.0, T=1.0, exact_stepping=True)


@pytest.fixture()
def scalar_bundle(scalar_system, scalar_config):
    return GramianService(scalar_config).build_bundle(scalar_system)


@pytest.fixture()
def rotation_bundle(rotation_system, exact_config):
    return GramianService(exact_config).build_bundle(rotation_system)


@pytest.fixture()
def closed_loop(exact_config):
    return ClosedLoopService(exact_config)


@pytest.fixture()
def write_config(tmp_path):
    """Write a JSON run file into tmp_path and return its path."""

    def _write(payload, name="run.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path

    return _write
