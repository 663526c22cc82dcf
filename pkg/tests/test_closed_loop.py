import math

import numpy as np
import pytest

from exceptions import DegenerateFitError, DimensionError, DivergenceError, DomainError
from models.data_classes import FeedbackLaw, Trajectory
from models.stabilizer_config import StabilizerConfig
from models.system_model import SystemModel
from services.closed_loop_service import ClosedLoopService, rk4_step
from services.gramian_service import GramianService
from utils.helpers import random_unit_vector
from utils.numerics import SpdFactor

SCALAR_LAMBDA = 1.0 - math.exp(-1.0) / 2.0


def _setup(system, omega=1.0, T=2.0, exact=True):
    config = StabilizerConfig(omega=omega, T=T, exact_stepping=exact)
    bundle = GramianService(config).build_bundle(system)
    service = ClosedLoopService(config)
    return service, bundle, service.feedback_gain(bundle, system)


@pytest.fixture()
def suite(builder):
    return [
        builder.scalar(),
        builder.rotation(),
        builder.oscillator_chain(3, stiffness=1.0),
        builder.random_observable_system(4, 1, seed=11),
    ]


def test_scalar_feedback_and_final_state(scalar_system, scalar_config, scalar_bundle):
    service = ClosedLoopService(scalar_config)
    feedback = service.feedback_gain(scalar_bundle, scalar_system)
    assert feedback.f_matrix[0, 0] == pytest.approx(-1.0 / SCALAR_LAMBDA, abs=1e-9)

    trajectory = service.simulate_direct(scalar_system, feedback, [1.0], 1.0)
    assert trajectory.final_state[0] == pytest.approx(math.exp(-1.0 / SCALAR_LAMBDA), abs=1e-8)
    assert trajectory.omega_norms[0] == pytest.approx(1.0 / math.sqrt(SCALAR_LAMBDA))


def test_scalar_decay_bound_holds_over_horizon(scalar_system, scalar_config, scalar_bundle):
    service = ClosedLoopService(scalar_config)
    feedback = service.feedback_gain(scalar_bundle, scalar_system)
    trajectory = service.simulate_direct(scalar_system, feedback, [1.0], 20.0)
    report = service.verify_decay(trajectory, scalar_bundle)
    assert report.passed, report.residuals
    assert trajectory.omega_norms[-1] <= math.exp(-0.5 * 20.0) * trajectory.omega_norms[0] + 1e-6
    assert service.fitted_decay_rate(trajectory) == pytest.approx(1.0 / SCALAR_LAMBDA, rel=1e-4)


def test_zero_horizon_gives_single_sample(rotation_system, closed_loop, rotation_bundle):
    feedback = closed_loop.feedback_gain(rotation_bundle, rotation_system)
    trajectory = closed_loop.simulate_direct(rotation_system, feedback, [1.0, 0.0], 0.0)
    assert len(trajectory) == 1
    rows = trajectory.to_rows(rotation_bundle.omega)
    assert rows[0][-1] == rows[0][-2]
    with pytest.raises(DomainError):
        closed_loop.simulate_direct(rotation_system, feedback, [1.0, 0.0], -1.0)


def test_dimension_mismatch(rotation_system, scalar_bundle, closed_loop):
    with pytest.raises(DimensionError):
        closed_loop.feedback_gain(scalar_bundle, rotation_system)


def test_rk4_step_matches_exponential_for_small_steps():
    generator = np.array([[-1.0, 2.0], [-2.0, -1.0]])
    x = np.array([1.0, 1.0])
    exact = np.exp(-0.01) * np.array(
        [[math.cos(0.02), math.sin(0.02)], [-math.sin(0.02), math.cos(0.02)]]
    ) @ x
    assert np.allclose(rk4_step(generator, x, 0.01), exact, atol=1e-9)


def test_conjugation_on_suite(acceptance_suite):
    for system, T, _ in acceptance_suite:
        service, bundle, feedback = _setup(system, omega=1.0, T=T)
        assert service.verify_conjugation(system, bundle, feedback) <= 1e-7, system.name


def test_conjugation_with_fast_decay_rate(builder):
    system = builder.random_observable_system(12, 2, seed=1)
    service, bundle, feedback = _setup(system, omega=4.0, T=2.0)
    assert bundle.cond_lambda > 1e6
    assert service.verify_conjugation(system, bundle, feedback) <= 1e-7


@pytest.mark.parametrize("omega", [0.5, 1.0, 2.0, 4.0])
def test_prescribed_decay_on_suite(acceptance_suite, omega):
    rng = np.random.default_rng(0)
    for system, T, omegas in acceptance_suite:
        if omega not in omegas:
            continue
        service, bundle, feedback = _setup(system, omega=omega, T=T, exact=True)
        for _ in range(20):
            x0 = random_unit_vector(system.state_dim, rng)
            trajectory = service.simulate_direct(system, feedback, x0, 10.0 / omega)
            report = service.verify_decay(trajectory, bundle)
            assert report.passed, (system.name, report.residuals)
            assert service.fitted_decay_rate(trajectory) >= 0.99 * omega, system.name


def test_prescribed_decay_with_rk4(rotation_system):
    service, bundle, feedback = _setup(rotation_system, omega=1.0, exact=False)
    trajectory = service.simulate_direct(rotation_system, feedback, [0.6, 0.8], 10.0)
    assert trajectory.error_allowance > 0.0
    assert service.verify_decay(trajectory, bundle).passed
    assert service.fitted_decay_rate(trajectory) >= 0.99


def test_exact_stepping_defaults_to_max_step(rotation_system):
    service, _, feedback = _setup(rotation_system)
    trajectory = service.simulate_direct(rotation_system, feedback, [1.0, 0.0], 1.0)
    assert trajectory.step == pytest.approx(service.config.max_step)
    with pytest.raises(DomainError):
        service.simulate_direct(rotation_system, feedback, [1.0, 0.0], 1.0, step=0.0)


def test_decay_on_wave(builder):
    system = builder.wave_1d(6)
    service, bundle, feedback = _setup(system, omega=1.0, exact=True)
    x0 = random_unit_vector(system.state_dim, np.random.default_rng(1))
    trajectory = service.simulate_direct(system, feedback, x0, 10.0)
    assert service.verify_decay(trajectory, bundle).passed
    assert service.fitted_decay_rate(trajectory) >= 0.99


def _with_horizons(suite, random_suite):
    return [(system, 2.0) for system in suite] + [(case.system, case.T) for case in random_suite]


def test_routes_agree(suite, random_suite):
    rng = np.random.default_rng(2)
    for system, T in _with_horizons(suite, random_suite):
        service, bundle, feedback = _setup(system, T=T)
        x0 = random_unit_vector(system.state_dim, rng)
        assert service.route_equivalence(system, bundle, feedback, x0, 5.0) <= 1e-6, system.name

        direct = service.simulate_direct(system, feedback, x0, 2.0, step=0.01)
        conjugated = service.simulate_conjugated(system, bundle, x0, 2.0, step=0.01)
        assert conjugated.route == "conjugated"
        assert np.allclose(direct.states, conjugated.states, atol=1e-8)
        assert np.allclose(direct.omega_norms, conjugated.omega_norms, atol=1e-8)


def test_representation_identities(suite, random_suite):
    rng = np.random.default_rng(5)
    for system, T in _with_horizons(suite, random_suite):
        service, bundle, _ = _setup(system, T=T)
        for _ in range(3):
            x = random_unit_vector(system.state_dim, rng)
            y = random_unit_vector(system.state_dim, rng)
            t = float(rng.uniform(0.0, bundle.weight.T_omega))
            s = float(rng.uniform(0.0, 1.0))
            assert service.verify_repU(system, bundle, x, y, t) <= 1e-6, system.name
            assert service.verify_repL1(system, bundle, x, y, t) <= 1e-6, system.name
            assert service.verify_repL2(system, bundle, x, y, t) <= 1e-6, system.name
            assert service.verify_repIL(system, bundle, x, y, s, s + t) <= 1e-6, system.name
            assert service.group_property(system, bundle, x, t, s) <= 1e-8, system.name


@pytest.mark.parametrize("t", [-1.0, 1.0])
def test_representation_identities_in_both_directions(
    scalar_system, scalar_config, scalar_bundle, rotation_system, closed_loop, rotation_bundle, t
):
    scalar_service = ClosedLoopService(scalar_config)
    assert scalar_service.verify_repU(scalar_system, scalar_bundle, [1.0], [1.0], t) <= 1e-7
    assert scalar_service.verify_repL1(scalar_system, scalar_bundle, [1.0], [1.0], t) <= 1e-7

    x, y = [0.6, 0.8], [1.0, -0.5]
    assert closed_loop.verify_repU(rotation_system, rotation_bundle, x, y, t) <= 1e-7
    assert closed_loop.verify_repL1(rotation_system, rotation_bundle, x, y, t) <= 1e-7


def test_divergent_integration_is_reported():
    system = SystemModel(a_matrix=[[1e200]], b_matrix=[[1.0]])
    feedback = FeedbackLaw(f_matrix=np.zeros((1, 1)), lambda_factor=SpdFactor(np.eye(1)))
    service = ClosedLoopService(StabilizerConfig(exact_stepping=False))
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError):
            service.simulate_direct(system, feedback, [1.0], 2.0, step=1.0)


def test_representation_identities_vanish_at_zero(rotation_system, closed_loop, rotation_bundle):
    x, y = [1.0, 0.0], [0.3, -0.4]
    assert closed_loop.verify_repU(rotation_system, rotation_bundle, x, y, 0.0) == 0.0
    assert closed_loop.verify_repL1(rotation_system, rotation_bundle, x, y, 0.0) == 0.0
    assert closed_loop.verify_repL2(rotation_system, rotation_bundle, x, y, 0.0) == 0.0
    assert closed_loop.verify_repIL(rotation_system, rotation_bundle, x, y, 1.5, 1.5) == 0.0


def test_representation_domain_errors(rotation_system, closed_loop, rotation_bundle):
    x, y = [1.0, 0.0], [0.0, 1.0]
    with pytest.raises(DomainError):
        closed_loop.verify_repIL(rotation_system, rotation_bundle, x, y, 2.0, 1.0)
    with pytest.raises(DomainError):
        closed_loop.verify_repL1(rotation_system, rotation_bundle, x, y, 1e3)


def test_corrupted_damping_breaks_identities(rotation_system, closed_loop, rotation_bundle):
    service = GramianService(closed_loop.config)
    broken = service.assemble_bundle(
        rotation_system,
        rotation_bundle.lambda_matrix,
        np.zeros((2, 2)),
        c1=rotation_bundle.c1,
        c2=rotation_bundle.c2,
    )
    feedback = closed_loop.feedback_gain(broken, rotation_system)
    assert closed_loop.verify_conjugation(rotation_system, broken, feedback) > 1e-3
    assert closed_loop.verify_repL2(rotation_system, broken, [1.0, 0.0], [1.0, 0.0], 1.0) > 1e-3


def test_energy_balance(suite):
    for system in suite:
        service, bundle, feedback = _setup(system)
        x0 = np.ones(system.state_dim)
        trajectory = service.simulate_direct(system, feedback, x0, 3.0, step=1e-3)
        assert service.energy_balance(trajectory, bundle, system) <= 1e-6, system.name


def test_verify_decay_flags_growth(rotation_bundle, closed_loop):
    grid = np.linspace(0.0, 1.0, 11)
    norms = np.exp(0.1 * grid)
    trajectory = Trajectory(times=grid, states=np.zeros((11, 2)), omega_norms=norms)
    report = closed_loop.verify_decay(trajectory, rotation_bundle)
    assert set(report.failed) == {"decay_bound", "decay_monotone", "energy_monotone"}


def test_verify_decay_edge_cases(rotation_bundle, closed_loop):
    empty = Trajectory(times=np.zeros(0), states=np.zeros((0, 2)), omega_norms=np.zeros(0))
    with pytest.raises(DomainError):
        closed_loop.verify_decay(empty, rotation_bundle)

    still = Trajectory(times=np.array([0.0, 1.0]), states=np.zeros((2, 2)), omega_norms=np.zeros(2))
    report = closed_loop.verify_decay(still, rotation_bundle)
    assert report.passed
    assert set(report.residuals.values()) == {0.0}


def test_fit_needs_enough_samples(rotation_system, closed_loop, rotation_bundle):
    feedback = closed_loop.feedback_gain(rotation_bundle, rotation_system)
    short = closed_loop.simulate_direct(rotation_system, feedback, [1.0, 0.0], 0.05, step=0.01)
    with pytest.raises(DegenerateFitError):
        closed_loop.fitted_decay_rate(short)


def test_fit_recovers_known_rate(closed_loop):
    grid = np.linspace(0.0, 2.0, 201)
    trajectory = Trajectory(
        times=grid, states=np.zeros((201, 1)), omega_norms=3.0 * np.exp(-1.7 * grid)
    )
    assert closed_loop.fitted_decay_rate(trajectory) == pytest.approx(1.7)


def test_omega_norm_matches_lambda_inverse(rotation_bundle, closed_loop):
    x = np.array([0.6, -0.8])
    expected = math.sqrt(x @ np.linalg.solve(rotation_bundle.lambda_matrix, x))
    assert closed_loop.omega_norm(rotation_bundle, x) == pytest.approx(expected)
    with pytest.raises(DimensionError):
        closed_loop.omega_norm(rotation_bundle, [1.0])
