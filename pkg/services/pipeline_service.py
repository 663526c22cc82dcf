import dataclasses
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from exceptions import ConfigError, DegenerateFitError, DomainError
from models.data_classes import Trajectory, VerificationReport
from models.gramian_bundle import GramianBundle
from models.run_config import RunConfig
from models.system_model import SystemModel
from services.closed_loop_service import ClosedLoopService
from services.gramian_service import GramianService
from services.system_builder_service import SystemBuilderService
from utils.helpers import load_matrix, random_unit_vector
from utils.numerics import spectral_abscissa

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "omega",
    "T_omega",
    "cond_lambda",
    "c1",
    "c2",
    "riccati_residual",
    "fitted_rate",
    "decay_margin",
]


@dataclasses.dataclass(eq=False)
class StabilizeResult:
    """Outcome of one closed-loop run."""

    system: SystemModel
    bundle: GramianBundle
    trajectory: Trajectory
    decay_report: VerificationReport
    summary: Dict[str, Optional[float]]

    def to_dict(self):
        """Convert to dictionary."""
        return {
            "system": self.system.name,
            "summary": dict(self.summary),
            "trajectory": self.trajectory.to_dict(),
            "decay": self.decay_report.to_dict(),
        }


class StabilizationPipeline:
    """
    Runs the gramian, stabilize, verify and sweep workflows for one RunConfig.

    All random draws (initial state, random systems, verification samples)
    come from generators seeded with the run seed.
    """

    def __init__(self, run: RunConfig):
        self.run = run
        self.builder = SystemBuilderService()

    def build_system(self) -> SystemModel:
        """Resolve the configured system kind into a SystemModel."""
        params = dict(self.run.system_params)
        try:
            if self.run.system_kind == "matrices":
                return SystemModel(
                    a_matrix=load_matrix(params["a_matrix"], self.run.base_dir, "a_matrix"),
                    b_matrix=load_matrix(params["b_matrix"], self.run.base_dir, "b_matrix"),
                    name=params.get("name", "matrices"),
                )
            if self.run.system_kind == "random":
                params.setdefault("seed", self.run.seed)
            return self.builder.build_system(self.run.system_kind, **params)
        except DomainError as e:
            raise ConfigError(f"cannot build system: {e}") from e

    def initial_state(self, system: SystemModel) -> np.ndarray:
        """Configured x0, or a seeded random unit vector."""
        if self.run.x0 is None:
            return random_unit_vector(system.state_dim, np.random.default_rng(self.run.seed))
        if len(self.run.x0) != system.state_dim:
            raise ConfigError(
                f"x0 has {len(self.run.x0)} entries, system state dimension is {system.state_dim}"
            )
        return np.asarray(self.run.x0, dtype=float)

    def _services(self, omega: Optional[float] = None) -> Tuple[GramianService, ClosedLoopService]:
        stabilizer_config = self.run.stabilizer_config()
        if omega is not None:
            stabilizer_config = stabilizer_config.with_omega(omega)
        return GramianService(stabilizer_config), ClosedLoopService(stabilizer_config)

    def run_gramian(self) -> Dict[str, object]:
        """Lambda_omega, C, F and their diagnostics as a report dictionary."""
        system = self.build_system()
        gramian_service, closed_loop_service = self._services()
        bundle = gramian_service.build_bundle(system)
        feedback = closed_loop_service.feedback_gain(bundle, system)

        report = {"system": system.to_dict(), **bundle.to_dict()}
        report["f_matrix"] = feedback.f_matrix.tolist()
        report["riccati_residual"] = gramian_service.riccati_residual(bundle, system)
        report["psd_gap"] = gramian_service.psd_gap(bundle)
        report["envelope_gap"] = gramian_service.envelope_gap(bundle)

        baseline = gramian_service.baseline_feedback(system)
        report["baseline_f_matrix"] = baseline.f_matrix.tolist()
        report["baseline_abscissa"] = spectral_abscissa(
            closed_loop_service.closed_loop_matrix(system, baseline)
        )
        return report

    def _stabilize(
        self,
        system: SystemModel,
        x0: np.ndarray,
        omega: Optional[float] = None,
    ) -> StabilizeResult:
        gramian_service, closed_loop_service = self._services(omega)
        bundle = gramian_service.build_bundle(system)
        feedback = closed_loop_service.feedback_gain(bundle, system)
        horizon = self.run.horizon if self.run.horizon is not None else 10.0 / bundle.omega
        trajectory = closed_loop_service.simulate_direct(
            system, feedback, x0, horizon, step=self.run.step
        )
        decay_report = closed_loop_service.verify_decay(trajectory, bundle)

        try:
            fitted_rate = closed_loop_service.fitted_decay_rate(trajectory)
        except DegenerateFitError as e:
            logger.warning(f"No decay rate fitted for omega={bundle.omega}: {e}")
            fitted_rate = None

        summary = {
            "omega": bundle.omega,
            "T_omega": bundle.weight.T_omega,
            "cond_lambda": bundle.cond_lambda,
            "c1": bundle.c1,
            "c2": bundle.c2,
            "riccati_residual": gramian_service.riccati_residual(bundle, system),
            "fitted_rate": fitted_rate,
            "decay_margin": None if fitted_rate is None else fitted_rate - bundle.omega,
        }
        return StabilizeResult(
            system=system,
            bundle=bundle,
            trajectory=trajectory,
            decay_report=decay_report,
            summary=summary,
        )

    def run_stabilize(self) -> StabilizeResult:
        """Simulate the closed loop from x0 over the run horizon and check the decay bound."""
        system = self.build_system()
        result = self._stabilize(system, self.initial_state(system))
        logger.info(
            f"Stabilized '{system.name}' at omega={self.run.omega}: "
            f"decay {'held' if result.decay_report.passed else 'VIOLATED'}, "
            f"fitted rate {result.summary['fitted_rate']}"
        )
        return result

    def run_sweep(self) -> List[StabilizeResult]:
        """
        One stabilize run per omega, in increasing omega order.

        The first failing row aborts the sweep with its error.
        """
        omegas = sorted(self.run.omegas) if self.run.omegas else [self.run.omega]
        system = self.build_system()
        x0 = self.initial_state(system)

        results = []
        for omega in omegas:
            result = self._stabilize(system, x0, omega)
            logger.info(
                f"Sweep row omega={omega}: cond={result.summary['cond_lambda']:.3e}, "
                f"fitted rate {result.summary['fitted_rate']}"
            )
            results.append(result)
        return results

    def sweep_violations(self, results: List[StabilizeResult]) -> List[float]:
        """Omegas whose row broke the decay bound or fitted below omega."""
        tolerance = self.run.stabilizer_config().decay_tolerance
        violations = []
        for result in results:
            rate = result.summary["fitted_rate"]
            omega = result.summary["omega"]
            if not result.decay_report.passed or rate is None or rate < omega - tolerance:
                violations.append(omega)
        return violations

    def run_verify(self, corrupt_c: bool = False) -> VerificationReport:
        """
        Residuals of every closed-loop identity, checked against the run tolerances.

        Args:
            corrupt_c: Replace C by zero before checking (test hook)
        """
        system = self.build_system()
        gramian_service, closed_loop_service = self._services()
        bundle = gramian_service.build_bundle(system)
        if corrupt_c:
            logger.warning("Verifying a corrupted bundle with C := 0")
            bundle = dataclasses.replace(bundle, c_matrix=np.zeros_like(bundle.c_matrix))
        feedback = closed_loop_service.feedback_gain(bundle, system)

        rng = np.random.default_rng(self.run.seed)
        n = system.state_dim
        T_omega = bundle.weight.T_omega
        tolerances = self.run.tolerances
        report = VerificationReport(seed=self.run.seed)

        report.add("riccati", gramian_service.riccati_residual(bundle, system), tolerances["riccati"])
        report.add(
            "conjugation",
            closed_loop_service.verify_conjugation(system, bundle, feedback),
            tolerances["conjugation"],
        )
        report.add("psd_gap", -gramian_service.psd_gap(bundle), tolerances["psd_gap"])

        # Backward draws span at most 1 / ||G|| so e^{-tG} stays bounded.
        generator_norm = np.linalg.norm(closed_loop_service.conjugated_generator(system, bundle), 2)
        backward_span = min(T_omega, 1.0 / max(float(generator_norm), 1e-12))
        sampled = ("integral_riccati", "repU", "repL1", "repL2", "repIL", "group_property")
        worst = {name: 0.0 for name in sampled}
        for _ in range(self.run.trials):
            x = random_unit_vector(n, rng)
            y = random_unit_vector(n, rng)
            t = float(rng.uniform(0.0, T_omega))
            s = float(rng.uniform(0.0, T_omega))
            t_back = -float(rng.uniform(0.0, backward_span))
            trial_seed = int(rng.integers(2**31))

            draws = {
                "integral_riccati": gramian_service.integral_riccati_residual(
                    bundle, system, t, trials=1, seed=trial_seed
                ),
                "repU": closed_loop_service.verify_repU(system, bundle, x, y, t),
                "repL1": closed_loop_service.verify_repL1(system, bundle, x, y, t),
                "repL2": closed_loop_service.verify_repL2(system, bundle, x, y, t),
                "repIL": closed_loop_service.verify_repIL(system, bundle, x, y, s, s + t),
                "group_property": closed_loop_service.group_property(system, bundle, x, t, s),
            }
            draws_back = {
                "repU": closed_loop_service.verify_repU(system, bundle, x, y, t_back),
                "repL1": closed_loop_service.verify_repL1(system, bundle, x, y, t_back),
            }
            for name, residual in list(draws.items()) + list(draws_back.items()):
                worst[name] = float(np.maximum(worst[name], residual))
        for name, residual in worst.items():
            report.add(name, residual, tolerances[name])

        x0 = self.initial_state(system)
        horizon = self.run.run_horizon
        trajectory = closed_loop_service.simulate_direct(
            system, feedback, x0, horizon, step=self.run.step
        )
        report.merge(closed_loop_service.verify_decay(trajectory, bundle))
        report.add(
            "energy_balance",
            closed_loop_service.energy_balance(trajectory, bundle, system),
            tolerances["energy_balance"],
        )
        report.add(
            "route_equivalence",
            closed_loop_service.route_equivalence(system, bundle, feedback, x0, horizon),
            tolerances["route_equivalence"],
        )

        report.details.update(
            {
                "system": system.name,
                "omega": bundle.omega,
                "T_omega": T_omega,
                "cond_lambda": bundle.cond_lambda,
                "c1": bundle.c1,
                "c2": bundle.c2,
                "trials": self.run.trials,
                "horizon": horizon,
                "integrator_allowance": trajectory.error_allowance,
            }
        )
        logger.info(
            f"Verification of '{system.name}': {'passed' if report.passed else 'FAILED'}"
            + (f" ({', '.join(report.failed)})" if report.failed else "")
        )
        for name, residual in report.residuals.items():
            logger.debug(f"  {name}: {residual:.3e} (tol {report.tolerances[name]:.1e})")
        return report
