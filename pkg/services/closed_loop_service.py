import logging
import math
from typing import Optional, Tuple

import numpy as np

from exceptions import DegenerateFitError, DimensionError, DivergenceError, DomainError
from models.data_classes import FeedbackLaw, Trajectory, VerificationReport
from models.gramian_bundle import GramianBundle
from models.stabilizer_config import StabilizerConfig
from models.system_model import SystemModel
from utils.numerics import as_vector, propagate, simpson_integral, transition_matrix

logger = logging.getLogger(__name__)

MIN_FIT_SAMPLES = 10
HORIZON_GUARD_FACTOR = 10.0


def rk4_step(generator: np.ndarray, x: np.ndarray, h: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of x' = Kx."""
    k1 = generator @ x
    k2 = generator @ (x + 0.5 * h * k1)
    k3 = generator @ (x + 0.5 * h * k2)
    k4 = generator @ (x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_matrix(generator: np.ndarray, h: float) -> np.ndarray:
    scaled = h * generator
    identity = np.eye(generator.shape[0])
    return identity + scaled @ (
        identity + scaled @ (identity / 2.0 + scaled @ (identity / 6.0 + scaled / 24.0))
    )


def _rowwise_dot(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    return np.einsum("ki,ki->k", left, right)


def _relative_gap(lhs: float, *terms: float, rhs: float) -> float:
    """|lhs - rhs| relative to the largest magnitude in the identity."""
    scale = max([abs(lhs)] + [abs(term) for term in terms])
    if scale == 0.0:
        return 0.0
    return float(abs(lhs - rhs) / scale)


class ClosedLoopService:
    """
    Feedback synthesis, closed-loop simulation and the residual checks of
    the closed-loop identities.

    The closed loop x' = (A + BF) x is simulated directly, or through the
    conjugated problem y' = (-A^T - C^T C Lambda) y with x = Lambda y.
    Representation checks always step exactly through transition matrices
    and integrate with composite Simpson on the sample grid.
    """

    def __init__(self, config: Optional[StabilizerConfig] = None):
        self.config = config or StabilizerConfig()

    @staticmethod
    def _check_dims(system: SystemModel, bundle: GramianBundle) -> None:
        if bundle.state_dim != system.state_dim:
            raise DimensionError(
                f"bundle has dimension {bundle.state_dim}, system has {system.state_dim}"
            )

    def feedback_gain(self, bundle: GramianBundle, system: SystemModel) -> FeedbackLaw:
        """F = -B^T Lambda^{-1}, via an SPD solve against the columns of B."""
        self._check_dims(system, bundle)
        f_matrix = -bundle.lambda_inverse_apply(system.b_matrix).T
        return FeedbackLaw(f_matrix=f_matrix, lambda_factor=bundle.lambda_factor)

    @staticmethod
    def closed_loop_matrix(system: SystemModel, feedback: FeedbackLaw) -> np.ndarray:
        if feedback.state_dim != system.state_dim or feedback.input_dim != system.input_dim:
            raise DimensionError(
                f"feedback is {feedback.f_matrix.shape}, system needs "
                f"({system.input_dim}, {system.state_dim})"
            )
        return system.a_matrix + system.b_matrix @ feedback.f_matrix

    @staticmethod
    def conjugated_generator(system: SystemModel, bundle: GramianBundle) -> np.ndarray:
        """-A^T - C^T C Lambda, the generator of V(t)."""
        return -system.a_matrix.T - bundle.c_matrix.T @ bundle.c_matrix @ bundle.lambda_matrix

    def default_step(self, generator: np.ndarray) -> float:
        """Configured step, else max_step for exact stepping, else min(max_step, 0.1 / ||K||)."""
        if self.config.step is not None:
            return self.config.step
        if self.config.exact_stepping:
            return self.config.max_step
        norm = float(np.linalg.norm(generator, 2))
        if norm == 0.0:
            return self.config.max_step
        return min(self.config.max_step, 0.1 / norm)

    def _time_grid(self, horizon: float, step: float) -> np.ndarray:
        if horizon < 0.0:
            raise DomainError(f"horizon must be nonnegative, got {horizon}")
        if not step > 0.0:
            raise DomainError(f"step must be positive, got {step}")
        if horizon == 0.0:
            return np.zeros(1)
        steps = max(1, math.ceil(horizon / step - 1e-9))
        return np.linspace(0.0, horizon, steps + 1)

    def _integrate(
        self, generator: np.ndarray, x0: np.ndarray, times: np.ndarray
    ) -> np.ndarray:
        states = np.empty((times.shape[0], x0.shape[0]))
        states[0] = x0
        if times.shape[0] == 1:
            return states

        h = times[1] - times[0]
        step_matrix = transition_matrix(generator, h) if self.config.exact_stepping else None
        for k in range(times.shape[0] - 1):
            if step_matrix is not None:
                states[k + 1] = step_matrix @ states[k]
            else:
                states[k + 1] = rk4_step(generator, states[k], h)
            if not np.all(np.isfinite(states[k + 1])):
                logger.error(f"Integration diverged at t={times[k + 1]:.6g}")
                raise DivergenceError(f"non-finite state at t={times[k + 1]:.6g}")
        return states

    def _error_allowance(
        self, generator: np.ndarray, times: np.ndarray, weight_root: np.ndarray, weight_root_inv: np.ndarray
    ) -> float:
        """
        Accumulated one-step defect of the stepping scheme in the omega-norm.

        The exact closed-loop flow does not expand the omega-norm, so local
        defects add up without amplification.
        """
        steps = times.shape[0] - 1
        if steps == 0:
            return 0.0
        if self.config.exact_stepping:
            return steps * 64.0 * np.finfo(float).eps
        h = times[1] - times[0]
        defect = _rk4_matrix(generator, h) - transition_matrix(generator, h)
        return float(steps * np.linalg.norm(weight_root @ defect @ weight_root_inv, 2))

    @staticmethod
    def _lambda_roots(lambda_matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        eigenvalues, eigenvectors = np.linalg.eigh(lambda_matrix)
        root = (eigenvectors * np.sqrt(eigenvalues)) @ eigenvectors.T
        root_inv = (eigenvectors / np.sqrt(eigenvalues)) @ eigenvectors.T
        return root, root_inv

    def simulate_direct(
        self,
        system: SystemModel,
        feedback: FeedbackLaw,
        x0,
        horizon: float,
        step: Optional[float] = None,
    ) -> Trajectory:
        """
        Integrate x' = (A + BF) x from x(0) = x0 with a fixed step.

        Exact stepping runs in z = Lambda^{-1/2} x, where the omega-norm is
        the Euclidean norm and the closed loop is a contraction.

        Raises:
            DivergenceError: If the state stops being finite
        """
        generator = self.closed_loop_matrix(system, feedback)
        x0 = as_vector(x0, system.state_dim, "x0")
        step = step if step is not None else self.default_step(generator)
        times = self._time_grid(horizon, step)
        root, root_inv = self._lambda_roots(feedback.lambda_factor.matrix)

        if self.config.exact_stepping:
            scaled_generator = root_inv @ system.a_matrix @ root + (root_inv @ system.b_matrix) @ (
                feedback.f_matrix @ root
            )
            normalized = self._integrate(scaled_generator, root_inv @ x0, times)
            states = normalized @ root
            omega_norms = np.linalg.norm(normalized, axis=1)
        else:
            states = self._integrate(generator, x0, times)
            inverse_states = feedback.lambda_factor.solve(states.T).T
            omega_norms = np.sqrt(np.clip(_rowwise_dot(states, inverse_states), 0.0, None))

        allowance = self._error_allowance(generator, times, root_inv, root)
        logger.debug(
            f"Direct simulation: {len(times)} samples, step={step:.3e}, allowance={allowance:.3e}"
        )
        return Trajectory(
            times=times,
            states=states,
            omega_norms=omega_norms,
            route="direct",
            step=float(times[1] - times[0]) if len(times) > 1 else float(step),
            error_allowance=allowance,
        )

    def simulate_conjugated(
        self,
        system: SystemModel,
        bundle: GramianBundle,
        x0,
        horizon: float,
        step: Optional[float] = None,
    ) -> Trajectory:
        """
        Closed loop through the conjugated problem: x(t) = Lambda V(t) Lambda^{-1} x0.

        ||x(t)||_omega equals sqrt(y^T Lambda y) for y = Lambda^{-1} x.
        """
        self._check_dims(system, bundle)
        generator = self.conjugated_generator(system, bundle)
        x0 = as_vector(x0, system.state_dim, "x0")
        step = step if step is not None else self.default_step(generator)
        times = self._time_grid(horizon, step)

        dual_states = self._integrate(generator, bundle.lambda_inverse_apply(x0), times)
        states = dual_states @ bundle.lambda_matrix
        omega_norms = np.sqrt(np.clip(_rowwise_dot(dual_states, states), 0.0, None))

        root, root_inv = self._lambda_roots(bundle.lambda_matrix)
        allowance = self._error_allowance(generator, times, root, root_inv)
        return Trajectory(
            times=times,
            states=states,
            omega_norms=omega_norms,
            route="conjugated",
            step=float(times[1] - times[0]) if len(times) > 1 else float(step),
            error_allowance=allowance,
        )

    @staticmethod
    def omega_norm(bundle: GramianBundle, x) -> float:
        """||x||_omega = sqrt(x^T Lambda^{-1} x)."""
        return bundle.omega_norm(as_vector(x, bundle.state_dim, "x"))

    def verify_decay(
        self,
        trajectory: Trajectory,
        bundle: GramianBundle,
        omega: Optional[float] = None,
        tolerance: Optional[float] = None,
    ) -> VerificationReport:
        """
        Check ||x(t)||_omega <= e^{-omega t} ||x0||_omega along the samples.

        Reports "decay_bound" (worst excess over the envelope),
        "decay_monotone" (worst increase of e^{omega t} ||x(t)||_omega) and
        "energy_monotone" (worst increase of ||x(t)||_omega), each relative to
        ||x0||_omega. The tolerance adds the trajectory's integrator allowance.

        Raises:
            DomainError: If the trajectory has no samples
        """
        if len(trajectory) == 0:
            raise DomainError("cannot verify decay on an empty trajectory")

        omega = bundle.omega if omega is None else omega
        tolerance = self.config.decay_tolerance if tolerance is None else tolerance
        tolerance += trajectory.error_allowance

        report = VerificationReport(seed=self.config.seed)
        initial = trajectory.omega_norms[0]
        if initial == 0.0:
            for name in ("decay_bound", "decay_monotone", "energy_monotone"):
                report.add(name, 0.0, tolerance)
            return report

        norms = trajectory.omega_norms / initial
        scaled = np.exp(omega * trajectory.times) * norms
        report.add("decay_bound", float(np.max(norms - np.exp(-omega * trajectory.times))), tolerance)
        report.add("decay_monotone", float(np.max(np.diff(scaled), initial=0.0)), tolerance)
        report.add("energy_monotone", float(np.max(np.diff(norms), initial=0.0)), tolerance)
        logger.debug(f"Decay check residuals: {report.residuals}")
        return report

    def energy_balance(
        self, trajectory: Trajectory, bundle: GramianBundle, system: SystemModel
    ) -> float:
        """
        Dissipation balance ||x0||^2_omega - ||x(t)||^2_omega = int (|B^T Lam^{-1} x|^2 + |Cx|^2).

        Returns the gap relative to ||x0||^2_omega, 0 for a single sample or x0 = 0.
        """
        self._check_dims(system, bundle)
        if len(trajectory) < 2 or trajectory.omega_norms[0] == 0.0:
            return 0.0
        dual = bundle.lambda_inverse_apply(trajectory.states.T).T
        feedback_power = np.sum((dual @ system.b_matrix) ** 2, axis=1)
        damping_power = np.sum((trajectory.states @ bundle.c_matrix.T) ** 2, axis=1)
        dissipated = simpson_integral(feedback_power + damping_power, trajectory.times)
        drop = trajectory.omega_norms[0] ** 2 - trajectory.omega_norms[-1] ** 2
        return float(abs(drop - dissipated) / trajectory.omega_norms[0] ** 2)

    def fitted_decay_rate(self, trajectory: Trajectory, floor: Optional[float] = None) -> float:
        """
        Least-squares slope of -log ||x(t)||_omega against t.

        The fit uses the leading samples whose omega-norm stays above
        floor * ||x0||_omega, where rounding has not yet taken over.

        Raises:
            DegenerateFitError: If fewer than ten samples are usable or a norm is zero
        """
        floor = self.config.fit_floor if floor is None else floor
        norms = trajectory.omega_norms
        if len(norms) == 0 or norms[0] <= 0.0:
            raise DegenerateFitError("decay fit needs a nonzero initial omega-norm")

        below = np.nonzero(norms < floor * norms[0])[0]
        window = below[0] if below.size else len(norms)
        if window < MIN_FIT_SAMPLES:
            raise DegenerateFitError(
                f"decay fit needs {MIN_FIT_SAMPLES} samples above the floor, got {window}"
            )
        if np.any(norms[:window] <= 0.0):
            raise DegenerateFitError("zero omega-norm inside the fit window")

        slope, _ = np.polyfit(trajectory.times[:window], -np.log(norms[:window]), 1)
        return float(slope)

    def verify_conjugation(
        self, system: SystemModel, bundle: GramianBundle, feedback: FeedbackLaw
    ) -> float:
        """
        Relative residual of Lambda^{-1} (A + BF) Lambda + A^T + C^T C Lambda.

        For the feedback built from this bundle, B F Lambda = -B B^T is
        substituted before the solve so Lambda^{-1} never meets F.
        """
        self._check_dims(system, bundle)
        self.closed_loop_matrix(system, feedback)
        if feedback.lambda_factor is bundle.lambda_factor:
            feedback_term = -system.control_gram
        else:
            feedback_term = system.b_matrix @ (feedback.f_matrix @ bundle.lambda_matrix)
        conjugated = bundle.lambda_inverse_apply(
            system.a_matrix @ bundle.lambda_matrix + feedback_term
        )
        residual = conjugated - self.conjugated_generator(system, bundle)
        return float(np.linalg.norm(residual) / (1.0 + np.linalg.norm(system.a_matrix)))

    def _guard_time(self, bundle: GramianBundle, t: float) -> None:
        guard = HORIZON_GUARD_FACTOR * bundle.weight.T_omega
        if abs(t) > guard:
            raise DomainError(f"|t|={abs(t)} exceeds the horizon guard {guard:.4g}")

    def verify_repU(self, system: SystemModel, bundle: GramianBundle, x0, y, t: float) -> float:
        """
        Variation of constants for U(t) = Lambda V(t) Lambda^{-1}:
        <U(t)x0, y> = <e^{tA}x0, y> - int_0^t <B^T Lam^{-1} U(r)x0, B^T e^{(t-r)A^T} y> dr.
        """
        self._check_dims(system, bundle)
        self._guard_time(bundle, t)
        x0 = as_vector(x0, system.state_dim, "x0")
        y = as_vector(y, system.state_dim, "y")
        if t == 0.0:
            return 0.0

        generator = self.conjugated_generator(system, bundle)
        step = self.config.verify_step
        times, dual = propagate(generator, bundle.lambda_inverse_apply(x0), t, step)
        _, adjoint = propagate(
            -system.a_matrix.T, transition_matrix(system.a_matrix.T, t) @ y, t, step
        )

        lhs = float((bundle.lambda_matrix @ dual[-1]) @ y)
        free = float((transition_matrix(system.a_matrix, t) @ x0) @ y)
        coupling = float(
            simpson_integral(_rowwise_dot(dual @ system.b_matrix, adjoint @ system.b_matrix), times)
        )
        return _relative_gap(lhs, free, coupling, rhs=free - coupling)

    def verify_repL1(self, system: SystemModel, bundle: GramianBundle, x, y, t: float) -> float:
        """
        <Lam x, y> = <Lam V(t)x, e^{-tA^T}y> + int_0^t <B^T V(s)x, B^T e^{-sA^T}y> ds.
        """
        self._check_dims(system, bundle)
        self._guard_time(bundle, t)
        x = as_vector(x, system.state_dim, "x")
        y = as_vector(y, system.state_dim, "y")
        if t == 0.0:
            return 0.0

        step = self.config.verify_step
        times, dual = propagate(self.conjugated_generator(system, bundle), x, t, step)
        _, adjoint = propagate(-system.a_matrix.T, y, t, step)

        lhs = float(x @ bundle.lambda_matrix @ y)
        boundary = float((bundle.lambda_matrix @ dual[-1]) @ adjoint[-1])
        supply = float(
            simpson_integral(_rowwise_dot(dual @ system.b_matrix, adjoint @ system.b_matrix), times)
        )
        return _relative_gap(lhs, boundary, supply, rhs=boundary + supply)

    def verify_repL2(self, system: SystemModel, bundle: GramianBundle, x, y, t: float) -> float:
        """
        <Lam x, y> = <Lam V(t)x, V(t)y> + int_0^t <B^T V x, B^T V y> + <C Lam V x, C Lam V y> ds.
        """
        self._check_dims(system, bundle)
        self._guard_time(bundle, t)
        x = as_vector(x, system.state_dim, "x")
        y = as_vector(y, system.state_dim, "y")
        if t == 0.0:
            return 0.0

        times, dual = propagate(
            self.conjugated_generator(system, bundle),
            np.column_stack([x, y]),
            t,
            self.config.verify_step,
        )
        vx, vy = dual[:, :, 0], dual[:, :, 1]
        c_lam = bundle.c_matrix @ bundle.lambda_matrix

        lhs = float(x @ bundle.lambda_matrix @ y)
        boundary = float((bundle.lambda_matrix @ vx[-1]) @ vy[-1])
        supply = float(
            simpson_integral(_rowwise_dot(vx @ system.b_matrix, vy @ system.b_matrix), times)
        )
        damping = float(simpson_integral(_rowwise_dot(vx @ c_lam.T, vy @ c_lam.T), times))
        return _relative_gap(lhs, boundary, supply, damping, rhs=boundary + supply + damping)

    def verify_repIL(
        self, system: SystemModel, bundle: GramianBundle, x, y, s: float, t: float
    ) -> float:
        """
        Time-shifted representation of Lambda^{-1} along U:
        <Lam^{-1}x, y> = <Lam^{-1}U(t-s)x, U(t-s)y>
        + int_s^t <B^T Lam^{-1} U(tau-s)x, B^T Lam^{-1} U(tau-s)y> + <C U(tau-s)x, C U(tau-s)y> dtau.

        Only t - s enters the computation.
        """
        self._check_dims(system, bundle)
        if s > t:
            raise DomainError(f"repIL needs s <= t, got s={s}, t={t}")
        duration = t - s
        self._guard_time(bundle, duration)
        x = as_vector(x, system.state_dim, "x")
        y = as_vector(y, system.state_dim, "y")
        if duration == 0.0:
            return 0.0

        times, dual = propagate(
            self.conjugated_generator(system, bundle),
            bundle.lambda_inverse_apply(np.column_stack([x, y])),
            duration,
            self.config.verify_step,
        )
        dual_x, dual_y = dual[:, :, 0], dual[:, :, 1]
        state_x, state_y = dual_x @ bundle.lambda_matrix, dual_y @ bundle.lambda_matrix

        lhs = float(bundle.lambda_inverse_apply(x) @ y)
        boundary = float(dual_x[-1] @ state_y[-1])
        feedback = float(
            simpson_integral(_rowwise_dot(dual_x @ system.b_matrix, dual_y @ system.b_matrix), times)
        )
        damping = float(
            simpson_integral(
                _rowwise_dot(state_x @ bundle.c_matrix.T, state_y @ bundle.c_matrix.T), times
            )
        )
        return _relative_gap(lhs, boundary, feedback, damping, rhs=boundary + feedback + damping)

    def group_property(
        self, system: SystemModel, bundle: GramianBundle, x0, t: float, s: float
    ) -> float:
        """Relative gap between U(t+s)x0 and U(t)U(s)x0."""
        x0 = as_vector(x0, system.state_dim, "x0")
        generator = self.conjugated_generator(system, bundle)

        def group(duration, vector):
            dual = transition_matrix(generator, duration) @ bundle.lambda_inverse_apply(vector)
            return bundle.lambda_matrix @ dual

        combined = group(t + s, x0)
        composed = group(t, group(s, x0))
        scale = max(float(np.linalg.norm(combined)), np.finfo(float).tiny)
        return float(np.linalg.norm(combined - composed) / scale)

    def route_equivalence(
        self,
        system: SystemModel,
        bundle: GramianBundle,
        feedback: FeedbackLaw,
        x0,
        horizon: float,
    ) -> float:
        """
        Largest pointwise gap between the direct and conjugated routes.

        Both routes step exactly on the same grid; the gap is relative to the
        largest state norm along the direct route.
        """
        x0 = as_vector(x0, system.state_dim, "x0")
        if horizon == 0.0 or not np.any(x0):
            return 0.0
        step = self.config.verify_step
        _, direct = propagate(self.closed_loop_matrix(system, feedback), x0, horizon, step)
        _, dual = propagate(
            self.conjugated_generator(system, bundle), bundle.lambda_inverse_apply(x0), horizon, step
        )
        conjugated = dual @ bundle.lambda_matrix
        scale = float(np.max(np.linalg.norm(direct, axis=1)))
        return float(np.max(np.linalg.norm(direct - conjugated, axis=1)) / scale)
