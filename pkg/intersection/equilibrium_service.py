# intersection/equilibrium_service.py

"""
Equilibrium service-time law.

In steady state a driver's service depends on their predecessor's type and on
whether the predecessor left the queue empty. This module solves for the
first-attempt success probabilities P_(1,k,r) (a linear system of size M*R),
derives the attempt probabilities pi_(i,k,r), and assembles the conditional and
unconditional service-time transforms, the mean service time and the
stability margin.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import dual
from .capacity_service import capacity
from .dual import Dual
from .exceptions import AnalysisError, EmptyProbabilityError
from .kernel import cond_service_lst, lag_averaged_lst, lag_matrix, service_matrix
from .scenario import ScenarioConfig, TypeIndex

logger = logging.getLogger(__name__)

# Types whose probability falls below this are treated as unreachable.
UNREACHABLE = 1e-300
RATIO_TOL = 1e-8


@dataclass(frozen=True)
class AttemptProbs:
    """Success probabilities P and service-at-attempt probabilities pi, both (N, M, R)."""

    success: np.ndarray
    served: np.ndarray
    type_probs: np.ndarray

    def type_probability(self, t: TypeIndex) -> float:
        """P(J = t) = pi_t * p_t * p_r."""
        return float(self.type_probs[t.attempt - 1, t.gap - 1, t.profile - 1])


@dataclass(frozen=True)
class StabilityMargin:
    rho: float
    stable: bool
    g: float


def _failure_products(config: ScenarioConfig, success: np.ndarray) -> np.ndarray:
    """
    For every attempt i, the probability of failing attempts 1..i-1, (N, R).

    :param success: Success probabilities P, (N, M, R)
    """
    fail = 1.0 - (config.gap_probs * success).sum(axis=1)
    before = np.ones_like(fail)
    before[1:] = np.cumprod(fail[:-1], axis=0)
    return before


def later_attempt_probs(config: ScenarioConfig) -> np.ndarray:
    """P_(i,k,r) = P(tau_q >= u_(i,k,r)) for every attempt; row 1 is overwritten by the solve."""
    return np.exp(-config.major_rate * config.gap_values)


def _later_attempt_weights(config: ScenarioConfig) -> np.ndarray:
    """
    p_r p_(i,l,r) e^{-q u_(i,l,r)} prod_{m=2}^{i-1} (1 - E[e^{-q T_(m,r)}]) for i >= 2,
    zero for i = 1, as an (N, M, R) array.
    """
    success = later_attempt_probs(config)
    fail = 1.0 - (config.gap_probs * success).sum(axis=1)
    weights = np.zeros_like(success)
    prefix = np.ones(config.n_profiles)
    for i0 in range(1, config.attempts):
        if i0 >= 2:
            prefix = prefix * fail[i0 - 1]
        weights[i0] = config.type_probs[i0] * success[i0] * prefix[None, :]
    if config.saturating:
        weights[-1] /= 1.0 - fail[-1]
    return weights


def solve_first_attempt_probs(config: ScenarioConfig, f0) -> np.ndarray:
    """
    Solves the M*R linear system for the first-attempt success probabilities.

    A driver's first gap is accepted if the major-road vehicle they see is at
    least u_(1,k,r) away; that depends on the predecessor's lag and, when the
    predecessor left the queue empty, on how long the queue stayed empty. The
    f0 terms carry the latter.

    :param config: Scenario
    :param f0: Empty-queue vector f_(i,k,r)(0) in flat type order (zeros for a saturated queue)
    :return: P_(1,k,r) as an (M, R) array
    :raises AnalysisError: singular system or a solution outside [0, 1]
    """
    M, R = config.gaps_per_attempt, config.n_profiles
    q, lam = config.major_rate, config.batch_rate
    if q == 0.0:
        return np.ones((M, R))

    f0 = np.asarray(f0, dtype=float).reshape(config.attempts, M, R)
    u1 = config.gap_values[0][:, :, None, None, None]
    ubar = config.lags[None, None]
    v = u1 - ubar
    v_hat = np.maximum(v, 0.0)
    v_check = np.maximum(-v, 0.0)

    coef_f = (1.0 - np.exp(-lam * v_check) - np.exp(-q * v_hat)
              + lam / (lam + q) * np.exp(-(lam + q) * v_check - q * v)
              + q / (lam + q) * np.exp(-lam * ubar - q * u1))
    rhs = (coef_f * f0[None, None]).sum(axis=(2, 3, 4))

    # c[k, r, r0]: mass of predecessors served after their first attempt
    c = (_later_attempt_weights(config)[None, None] * np.exp(-q * v_hat)).sum(axis=(2, 3))
    rhs = rhs + c.sum(axis=2)

    first_weights = config.profile_probs[None, None, None, :] * np.exp(-q * v_hat[:, :, 0])
    coefficients = (c[:, :, None, :] - first_weights) * config.gap_probs[0][None, None]
    system = np.eye(M * R) + coefficients.reshape(M * R, M * R)

    try:
        solution = np.linalg.solve(system, rhs.reshape(M * R))
    except np.linalg.LinAlgError as exc:
        raise AnalysisError(f"first-attempt system is singular: {exc}")

    residual = np.max(np.abs(system @ solution - rhs.reshape(M * R)))
    if residual > 1e-12 * max(1.0, np.max(np.abs(rhs))):
        raise AnalysisError(f"first-attempt system residual {residual:.2e} exceeds 1e-12")
    if solution.min() < -1e-10 or solution.max() > 1.0 + 1e-10:
        raise AnalysisError(
            f"first-attempt probabilities outside [0, 1]: min {solution.min():.3e}, "
            f"max {solution.max():.6f} (residual {residual:.2e})"
        )
    return np.clip(solution, 0.0, 1.0).reshape(M, R)


def attempt_success_probs(config: ScenarioConfig, first_attempt) -> AttemptProbs:
    """
    Attempt probabilities from the first-attempt success probabilities:
    pi_(i,k,r) = P_(i,k,r) * prod_{m<i} (1 - sum_k p_(m,k,r) P_(m,k,r)).

    :param config: Scenario
    :param first_attempt: P_(1,k,r) as an (M, R) array
    :return: AttemptProbs
    """
    success = later_attempt_probs(config)
    success[0] = np.asarray(first_attempt, dtype=float)
    served = success * _failure_products(config, success)[:, None, :]
    if config.saturating:
        # Attempts N, N+1, ... share one type; their probabilities form a geometric series.
        served[-1] /= (config.gap_probs[-1] * success[-1]).sum(axis=0)[None, :]
    return AttemptProbs(success=success, served=served, type_probs=served * config.type_probs)


class ServiceLaw:
    """
    Conditional service transforms G^(target)_(source)(s) and their mixture over
    the predecessor type.

    :param config: Scenario
    :param f0: Empty-queue vector in flat order; zeros for a saturated queue
    """

    def __init__(self, config: ScenarioConfig, f0=None):
        self.config = config
        n = config.n_types
        self.f0 = np.zeros(n) if f0 is None else np.asarray(f0, dtype=float)
        self.attempt_probs = attempt_success_probs(config, solve_first_attempt_probs(config, self.f0))
        self.source_probs = self.attempt_probs.type_probs.reshape(-1)
        self.reachable = self.source_probs > UNREACHABLE
        self.empty_ratio = empty_ratio(self.f0, self.source_probs)
        self.lags = config.lags.reshape(-1)

    def conditional(self, s):
        """(N_bar, N_bar) matrix of G^(target)_(source)(s); unreachable sources give zero rows."""
        mask = self.reachable.astype(float)
        matrix = service_matrix(self.config, s, self.lags) * ((1.0 - self.empty_ratio) * mask)[:, None]
        if np.any(self.empty_ratio > 0.0):
            averaged = lag_matrix(self.config, s, self.lags, self.config.batch_rate)
            matrix = matrix + averaged * (self.empty_ratio * mask)[:, None]
        return matrix

    def lst(self, s):
        """Unconditional G(s) = sum over sources and targets of P(J=source) G^(target)_(source)(s)."""
        return dual.total(self.conditional(s) * self.source_probs[:, None])

    def transform(self, s) -> complex:
        return complex(self.lst(s))

    @property
    def mean(self) -> float:
        """E[G] = -G'(0) in seconds."""
        return float(-np.real(self.lst(Dual(0.0 + 0.0j, 1.0 + 0.0j)).slope))

    @property
    def defect(self) -> float:
        return float(1.0 - np.real(self.lst(0.0)))

    def arrivals_per_service(self) -> float:
        """E[A] = A'(1) for A(z) = G(lambda (1 - B(z)))."""
        law = self.config.batch_size
        lam = self.config.batch_rate
        argument = Dual(0.0 + 0.0j, complex(-lam * law.pgf_derivative(1.0)))
        return float(np.real(self.lst(argument).slope))

    def mean_given_source(self) -> np.ndarray:
        """Conditional mean service time per predecessor type, normalized by the row mass (seconds)."""
        matrix = self.conditional(Dual(0.0 + 0.0j, 1.0 + 0.0j))
        mass = np.real(matrix.value.sum(axis=1))
        means = -np.real(matrix.slope.sum(axis=1))
        return np.divide(means, mass, out=np.zeros_like(means), where=mass > 0)


def empty_ratio(f0: np.ndarray, source_probs: np.ndarray) -> np.ndarray:
    """
    f_bar = f0 / P(J = source): the probability that a type-source driver left
    the queue empty. Unreachable sources get 0.

    :raises EmptyProbabilityError: when a ratio leaves [0, 1] by more than 1e-8
    """
    reachable = source_probs > UNREACHABLE
    ratio = np.divide(f0, source_probs, out=np.zeros_like(f0), where=reachable)
    if ratio.min() < -RATIO_TOL or ratio.max() > 1.0 + RATIO_TOL:
        worst = int(np.argmax(np.maximum(ratio - 1.0, -ratio)))
        raise EmptyProbabilityError(
            f"empty-queue ratio {ratio[worst]:.3e} at flat type {worst + 1} lies outside [0, 1]; "
            "f0 and the attempt probabilities are inconsistent"
        )
    return np.clip(ratio, 0.0, 1.0)


def service_lst_given_pred(config: ScenarioConfig, source: TypeIndex, target: TypeIndex, s,
                           attempt_probs: AttemptProbs, f0) -> complex:
    """
    Transform of a driver's service time jointly with being of type ``target``,
    given that their predecessor was of type ``source``.

    :param config: Scenario
    :param source: Predecessor type (i, k, r0)
    :param target: Driver type (j, l, r1)
    :param s: Transform argument
    :param attempt_probs: Output of :func:`attempt_success_probs`
    :param f0: Empty-queue vector in flat order
    :return: Complex transform value (0 when the source is unreachable)
    """
    source_prob = attempt_probs.type_probability(source)
    if source_prob <= UNREACHABLE:
        return 0.0 + 0.0j
    j = config.flatten(source) - 1
    ratio = float(empty_ratio(np.asarray(f0, dtype=float)[j:j + 1], np.array([source_prob]))[0])
    ubar = float(config.lags.reshape(-1)[j])
    value = cond_service_lst(config, target, s, ubar) * (1.0 - ratio)
    if ratio > 0.0:
        value += lag_averaged_lst(config, target, s, ubar, config.batch_rate) * ratio
    return complex(value)


def build_service_law(config: ScenarioConfig, saturated: bool = False) -> ServiceLaw:
    """Service law of the scenario, taking f0 from the solved queue unless ``saturated``."""
    if saturated:
        return ServiceLaw(config)
    from .analysis_service import solve
    return solve(config).service_law


def service_lst(config: ScenarioConfig, s, saturated: bool = False) -> complex:
    return build_service_law(config, saturated).transform(s)


def mean_service_time(config: ScenarioConfig, saturated: bool = False) -> float:
    return build_service_law(config, saturated).mean


def arrivals_per_service_mean(config: ScenarioConfig, saturated: bool = False) -> float:
    """Mean number of minor-road vehicles arriving during one service, from A(z)."""
    return build_service_law(config, saturated).arrivals_per_service()


def mean_service_given_source(config: ScenarioConfig, saturated: bool = False) -> np.ndarray:
    return build_service_law(config, saturated).mean_given_source()


def stability_margin(config: ScenarioConfig) -> StabilityMargin:
    """
    rho = lambda E[B] g. The queue is stable iff rho < 1.

    :param config: Scenario
    :return: StabilityMargin
    """
    if config.arrival_rate == 0.0:
        return StabilityMargin(rho=0.0, stable=True, g=float('nan'))
    g = capacity(config).g
    rho = config.arrival_rate * g
    if rho >= 1.0:
        logger.info("[EQUILIBRIUM] unstable: rho=%.6f (arrivals %.1f veh/h)", rho, config.arrival_rate * 3600.0)
    return StabilityMargin(rho=rho, stable=rho < 1.0, g=g)
