import logging
import math
from typing import Optional, Tuple

import numpy as np

from exceptions import DimensionError, DomainError, NotObservableError
from models.data_classes import FeedbackLaw
from models.gramian_bundle import GramianBundle, WeightFunction
from models.stabilizer_config import StabilizerConfig
from models.system_model import SystemModel
from utils.numerics import (
    QuadratureRule,
    SpdFactor,
    composite_gauss_legendre,
    propagate,
    simpson_integral,
    sym_eig_extremes,
    sym_sqrt,
    symmetrize,
    transition_matrix,
)

logger = logging.getLogger(__name__)


class GramianService:
    """
    Builds the weighted Gramian Lambda_omega and the operators derived from it.

    Every integral over s is evaluated with composite Gauss-Legendre rules,
    split at the kink s = T of the weight. Lambda_omega is defined by its
    integral; the algebraic Riccati equation it satisfies is only checked,
    never solved.
    """

    def __init__(self, config: Optional[StabilizerConfig] = None):
        self.config = config or StabilizerConfig()

    def weight_function(self) -> WeightFunction:
        return WeightFunction(omega=self.config.omega, T=self.config.T)

    def _rule(self, system: SystemModel, a: float, b: float):
        """Composite rule on [a, b] with panels short enough for ||A||."""
        a_norm = float(np.linalg.norm(system.a_matrix, 2))
        panels = max(1, math.ceil(a_norm * (b - a) / self.config.panel_width))
        logger.debug(
            f"Quadrature on [{a:.4g}, {b:.4g}]: {panels} panel(s) of order {self.config.quadrature_order}"
        )
        return composite_gauss_legendre(a, b, self.config.quadrature_order, panels)

    def _orbit(self, system: SystemModel, rule: QuadratureRule) -> np.ndarray:
        """
        Stack e^{-sA} B for every node s, in node order.

        All panels of a composite rule place their nodes at the same offsets,
        so e^{-sA} B = e^{-aA} (e^{-tau A} B) for the panel start a and the
        offset tau. One exponential per offset and one per panel suffice.
        """
        offsets = rule.nodes[: rule.order] - rule.a
        local = np.stack(
            [transition_matrix(system.a_matrix, -float(tau)) @ system.b_matrix for tau in offsets]
        )
        starts = np.linspace(rule.a, rule.b, rule.panels + 1)[:-1]
        return np.concatenate(
            [
                np.einsum("ij,kjm->kim", transition_matrix(system.a_matrix, -float(start)), local)
                for start in starts
            ]
        )

    @staticmethod
    def _accumulate(orbit: np.ndarray, weights) -> np.ndarray:
        """Sum_k w_k P_k P_k^T, accumulated in node order."""
        return symmetrize(np.einsum("k,kim,kjm->ij", np.asarray(weights), orbit, orbit))

    def plain_gramian(self, system: SystemModel, T: float) -> np.ndarray:
        """G_T = integral over [0, T] of e^{-sA} B B^T e^{-sA^T} ds."""
        if not T > 0:
            raise DomainError(f"observability horizon must be positive, got {T}")
        rule = self._rule(system, 0.0, T)
        return self._accumulate(self._orbit(system, rule), rule.weights)

    def observability_constants(
        self, system: SystemModel, T: Optional[float] = None
    ) -> Tuple[float, float]:
        """
        Constants of the direct and observability inequalities on [0, T].

        Returns:
            Tuple (c1, c2) = (largest, smallest) eigenvalue of G_T; c2 > 0
            exactly when the pair is observable at horizon T
        """
        T = self.config.T if T is None else T
        smallest, largest = sym_eig_extremes(self.plain_gramian(system, T))
        return max(largest, 0.0), max(smallest, 0.0)

    def _require_observable(self, system: SystemModel) -> Tuple[float, float]:
        c1, c2 = self.observability_constants(system)
        if c1 <= 0.0 or c2 / c1 < self.config.observability_ratio:
            logger.error(f"System '{system.name}' rejected: c1={c1:.3e}, c2={c2:.3e}")
            raise NotObservableError(
                f"system '{system.name}' is numerically unobservable on [0, {self.config.T}] "
                f"(c1={c1:.3e}, c2={c2:.3e})"
            )
        return c1, c2

    def _weighted_integrals(self, system: SystemModel) -> Tuple[np.ndarray, np.ndarray]:
        """Lambda_omega and M from one pass over both weight pieces."""
        weight = self.weight_function()
        lambda_matrix = np.zeros((system.state_dim, system.state_dim))
        m_matrix = np.zeros_like(lambda_matrix)

        for a, b in ((0.0, weight.T), (weight.T, weight.T_omega)):
            rule = self._rule(system, a, b)
            orbit = self._orbit(system, rule)
            lambda_matrix += self._accumulate(orbit, rule.weights * weight.values(rule.nodes))
            m_matrix += self._accumulate(orbit, -rule.weights * weight.derivatives(rule.nodes))

        return symmetrize(lambda_matrix), symmetrize(m_matrix)

    def compute_gramian(self, system: SystemModel) -> np.ndarray:
        """
        Weighted Gramian Lambda_omega, checked for observability and conditioning.

        Raises:
            NotObservableError: If c2 / c1 falls below the configured ratio
            IllConditionedError: If cond(Lambda_omega) exceeds the guard
        """
        self._require_observable(system)
        lambda_matrix, _ = self._weighted_integrals(system)
        SpdFactor(lambda_matrix, cond_guard=self.config.cond_guard)
        return lambda_matrix

    def compute_derivative_gramian(self, system: SystemModel) -> np.ndarray:
        """M = integral of -e_omega'(s) e^{-sA} B B^T e^{-sA^T} ds over [0, T_omega]."""
        self._require_observable(system)
        _, m_matrix = self._weighted_integrals(system)
        return m_matrix

    def assemble_bundle(
        self,
        system: SystemModel,
        lambda_matrix,
        m_matrix,
        c1: Optional[float] = None,
        c2: Optional[float] = None,
    ) -> GramianBundle:
        """
        Derive L, C and diagnostics from given Lambda and M.

        L = Lambda^{-1} M Lambda^{-1} comes from two SPD solves, never an
        explicit inverse.
        """
        lambda_matrix = symmetrize(np.asarray(lambda_matrix, dtype=float))
        m_matrix = symmetrize(np.asarray(m_matrix, dtype=float))
        if lambda_matrix.shape != (system.state_dim, system.state_dim):
            raise DimensionError("Lambda does not match the state dimension")
        if m_matrix.shape != lambda_matrix.shape:
            raise DimensionError("M does not match the shape of Lambda")

        factor = SpdFactor(lambda_matrix, cond_guard=self.config.cond_guard)
        half = factor.solve(m_matrix)
        l_matrix = symmetrize(factor.solve(half.T))
        c_matrix = sym_sqrt(l_matrix)

        if c1 is None or c2 is None:
            c1, c2 = self.observability_constants(system)

        return GramianBundle(
            lambda_matrix=lambda_matrix,
            lambda_factor=factor,
            m_matrix=m_matrix,
            l_matrix=l_matrix,
            c_matrix=c_matrix,
            weight=self.weight_function(),
            cond_lambda=factor.cond,
            c1=float(c1),
            c2=float(c2),
        )

    def build_bundle(self, system: SystemModel) -> GramianBundle:
        """Full construction: Lambda_omega, M, L, C and diagnostics."""
        try:
            c1, c2 = self._require_observable(system)
            lambda_matrix, m_matrix = self._weighted_integrals(system)
            bundle = self.assemble_bundle(system, lambda_matrix, m_matrix, c1=c1, c2=c2)
        except Exception as e:
            logger.error(f"Gramian construction failed for '{system.name}': {e}")
            raise

        logger.info(
            f"Built Gramian for '{system.name}' (n={system.state_dim}, omega={self.config.omega}, "
            f"T_omega={bundle.weight.T_omega:.4g}, cond={bundle.cond_lambda:.3e})"
        )
        return bundle

    @staticmethod
    def _check_dims(bundle: GramianBundle, system: SystemModel) -> None:
        if bundle.state_dim != system.state_dim:
            raise DimensionError(
                f"bundle has dimension {bundle.state_dim}, system has {system.state_dim}"
            )

    def riccati_residual(self, bundle: GramianBundle, system: SystemModel) -> float:
        """Relative Frobenius residual of A Lam + Lam A^T + Lam C^T C Lam - B B^T."""
        self._check_dims(bundle, system)
        lam = bundle.lambda_matrix
        c_lam = bundle.c_matrix @ lam
        control_gram = system.control_gram
        residual = (
            system.a_matrix @ lam + lam @ system.a_matrix.T + c_lam.T @ c_lam - control_gram
        )
        return float(np.linalg.norm(residual) / (1.0 + np.linalg.norm(control_gram)))

    def integral_riccati_residual(
        self,
        bundle: GramianBundle,
        system: SystemModel,
        t: float,
        trials: int = 5,
        seed: Optional[int] = None,
    ) -> float:
        """
        Integral form of the Riccati equation along the adjoint flow e^{-sA^T}.

        For random x, y checks <Lam x, y> = <Lam z(t), w(t)>
        - int_0^t <C Lam z, C Lam w> ds + int_0^t <B^T z, B^T w> ds with
        z(s) = e^{-sA^T} x, w(s) = e^{-sA^T} y. Returns the worst trial,
        normalized by ||Lam|| ||x|| ||y||.
        """
        self._check_dims(bundle, system)
        T_omega = bundle.weight.T_omega
        if abs(t) > T_omega:
            raise DomainError(f"t={t} outside [-{T_omega}, {T_omega}]")
        if t == 0.0:
            return 0.0

        rng = np.random.default_rng(self.config.seed if seed is None else seed)
        lam = bundle.lambda_matrix
        lam_norm = float(np.linalg.norm(lam, 2))
        c_lam = bundle.c_matrix @ lam
        b_t = system.b_matrix.T

        worst = 0.0
        for _ in range(trials):
            pair = rng.standard_normal((system.state_dim, 2))
            times, states = propagate(-system.a_matrix.T, pair, t, self.config.verify_step)
            z, w = states[:, :, 0], states[:, :, 1]

            lhs = pair[:, 0] @ lam @ pair[:, 1]
            boundary = z[-1] @ lam @ w[-1]
            dissipation = simpson_integral(np.einsum("ki,ki->k", z @ c_lam.T, w @ c_lam.T), times)
            supply = simpson_integral(np.einsum("ki,ki->k", z @ b_t.T, w @ b_t.T), times)

            scale = lam_norm * np.linalg.norm(pair[:, 0]) * np.linalg.norm(pair[:, 1])
            worst = max(worst, abs(lhs - (boundary - dissipation + supply)) / scale)

        logger.debug(f"Integral Riccati residual at t={t}: {worst:.3e}")
        return float(worst)

    def psd_gap(self, bundle: GramianBundle) -> float:
        """
        Smallest eigenvalue of C^T C - 2 omega Lambda^{-1}, relative to the
        larger norm of the two terms.

        Nonnegative (up to rounding) by construction of the weight.
        """
        gram_c = bundle.c_matrix.T @ bundle.c_matrix
        lambda_inverse = bundle.lambda_inverse_apply(np.eye(bundle.state_dim))
        penalty = 2.0 * bundle.omega * lambda_inverse
        smallest, _ = sym_eig_extremes(symmetrize(gram_c - penalty))
        scale = max(float(np.linalg.norm(gram_c, 2)), float(np.linalg.norm(penalty, 2)))
        return smallest / max(scale, np.finfo(float).tiny)

    def envelope_gap(self, bundle: GramianBundle) -> float:
        """Smallest eigenvalue of M - 2 omega Lambda, relative to ||M||."""
        smallest, _ = sym_eig_extremes(
            symmetrize(bundle.m_matrix - 2.0 * bundle.omega * bundle.lambda_matrix)
        )
        return smallest / max(float(np.linalg.norm(bundle.m_matrix, 2)), np.finfo(float).tiny)

    def baseline_feedback(self, system: SystemModel) -> FeedbackLaw:
        """Classical stabilizer F = -B^T G_T^{-1} from the unweighted Gramian."""
        self._require_observable(system)
        factor = SpdFactor(self.plain_gramian(system, self.config.T), cond_guard=self.config.cond_guard)
        return FeedbackLaw(f_matrix=-factor.solve(system.b_matrix).T, lambda_factor=factor)
