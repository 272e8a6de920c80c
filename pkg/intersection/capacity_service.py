# intersection/capacity_service.py

"""
Minor-road capacity from the saturated customer-type chain.

When the minor-road queue never empties, each driver starts scanning with the
lag ``ubar = u - Delta`` their predecessor left, so the type of the next driver
depends only on the type of the current one. The transition matrix of that
chain is the kernel ``G_target(0, ubar_source)``; its stationary law weights
the conditional mean service times into ``g``, and the capacity is ``1/g``.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .conf import app_setting
from .exceptions import AnalysisError, TruncationDefectError
from .kernel import partial_mean_matrix, service_matrix
from .scenario import SECONDS_PER_HOUR, ScenarioConfig, check_limited_reuse

logger = logging.getLogger(__name__)

# Above this many types the stationary law is found by power iteration first.
DIRECT_SOLVE_LIMIT = 5000


@dataclass(frozen=True)
class SaturatedChain:
    raw_kernel: np.ndarray
    kernel: np.ndarray
    row_mass: np.ndarray
    stationary: np.ndarray
    defect: float


@dataclass(frozen=True)
class CapacityResult:
    major_flow: float
    g: float
    capacity: float
    defect: float
    exact: bool


def check_defect(defect: float, config: ScenarioConfig) -> None:
    """
    Applies the truncation-defect thresholds to the largest row defect of a kernel.

    :param defect: Largest probability mass lost to drivers exceeding N attempts
    :param config: Scenario the kernel was built from (for the message)
    :raises TruncationDefectError: above ``DEFECT_ERROR``
    """
    if defect > app_setting('DEFECT_ERROR'):
        raise TruncationDefectError(
            f"truncation defect {defect:.3e} with N={config.attempts} attempts exceeds "
            f"{app_setting('DEFECT_ERROR'):.0e}; increase attempts or use tail: saturating"
        )
    if defect > app_setting('DEFECT_WARN'):
        logger.warning("[CAPACITY] truncation defect %.3e at N=%d (q=%.1f veh/h); rows renormalized",
                       defect, config.attempts, config.major_flow)


def power_iteration(kernel: np.ndarray, tol: float = 1e-13, max_iter: int = 100_000) -> np.ndarray:
    """Find stationary distribution of a Markov chain by iteration."""
    pi = np.ones(kernel.shape[0]) / kernel.shape[0]
    for it in range(max_iter):
        pi_new = pi @ kernel
        if it % 10 == 0 and np.max(np.abs(pi_new - pi)) < tol:
            break
        pi = pi_new
    else:
        raise AnalysisError('power iteration did not converge to a stationary distribution')
    return pi_new / pi_new.sum()


def stationary_distribution(kernel: np.ndarray) -> np.ndarray:
    """
    Stationary law of a row-stochastic matrix: solve (I - K^T) pi = 0 with the
    last equation replaced by sum(pi) = 1, falling back to power iteration.

    :param kernel: Row-stochastic (n, n) matrix
    :return: Nonnegative probability vector of length n
    """
    n = kernel.shape[0]
    if n == 1:
        return np.ones(1)

    pi = None
    if n <= DIRECT_SOLVE_LIMIT:
        system = np.eye(n) - kernel.T
        system[-1, :] = 1.0
        rhs = np.zeros(n)
        rhs[-1] = 1.0
        try:
            pi = np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError:
            logger.info("[CAPACITY] singular stationary system, switching to power iteration")
    if pi is None or np.max(np.abs(pi @ kernel - pi)) > 1e-10:
        pi = power_iteration(kernel)

    residual = np.max(np.abs(pi @ kernel - pi))
    if residual > 1e-10 or pi.min() < -1e-10:
        raise AnalysisError(f"stationary distribution not found (residual {residual:.2e}, min {pi.min():.2e})")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _raw_kernel(config: ScenarioConfig) -> np.ndarray:
    return np.real(service_matrix(config, 0.0, config.lags.reshape(-1)))


def truncation_defect(config: ScenarioConfig) -> float:
    """Largest mass a row of the saturated kernel loses to drivers needing more than N attempts."""
    return float(max(0.0, np.max(1.0 - _raw_kernel(config).sum(axis=1))))


def build_saturated_chain(config: ScenarioConfig) -> SaturatedChain:
    """
    Builds the type-transition matrix of the never-empty queue.

    :param config: Scenario
    :return: SaturatedChain with renormalized kernel and its stationary law
    :raises TruncationDefectError: if a row loses more than ``DEFECT_ERROR``
    """
    raw = _raw_kernel(config)
    row_mass = raw.sum(axis=1)
    defect = float(max(0.0, np.max(1.0 - row_mass)))
    check_defect(defect, config)

    kernel = raw / row_mass[:, None]
    stationary = stationary_distribution(kernel)
    return SaturatedChain(raw_kernel=raw, kernel=kernel, row_mass=row_mass, stationary=stationary, defect=defect)


def mean_service_saturated(config: ScenarioConfig, chain: SaturatedChain) -> float:
    """
    g: mean service time (seconds) of a driver who queued behind another one.

    :param config: Scenario
    :param chain: Output of :func:`build_saturated_chain`
    :return: g in seconds
    """
    means = partial_mean_matrix(config, config.lags.reshape(-1))
    per_source = means.sum(axis=1) / chain.row_mass
    return float(chain.stationary @ per_source)


def capacity(config: ScenarioConfig) -> CapacityResult:
    chain = build_saturated_chain(config)
    g = mean_service_saturated(config, chain)
    result = CapacityResult(
        major_flow=config.major_flow,
        g=g,
        capacity=SECONDS_PER_HOUR / g,
        defect=chain.defect,
        exact=check_limited_reuse(config).holds,
    )
    logger.info("[CAPACITY] q=%.1f veh/h: g=%.6f s, C=%.3f veh/h", config.major_flow, g, result.capacity)
    return result


def capacity_sweep(config: ScenarioConfig, flows, n_jobs: int = None) -> list:
    """
    Capacity for each major-road flow in ``flows`` (veh/h).

    :param config: Scenario; its own major flow is ignored
    :param flows: Iterable of nonnegative major-road flows (veh/h)
    :param n_jobs: joblib workers (defaults to the ``N_JOBS`` setting)
    :return: One CapacityResult per flow, in input order
    """
    flows = [float(q) for q in flows]
    if any(q < 0 for q in flows):
        raise ValueError('major-road flows must be nonnegative')
    n_jobs = n_jobs or app_setting('N_JOBS')
    return Parallel(n_jobs=n_jobs, prefer='threads')(
        delayed(capacity)(config.with_overrides(major_flow=q)) for q in flows
    )


def capacity_table(config: ScenarioConfig, flows, alphas=None, merge_time_sets=None, n_jobs: int = None) -> pd.DataFrame:
    """
    Capacity curves over major-road flow, optionally for several impatience
    factors and merge-time vectors (one curve per combination).

    :param config: Base scenario
    :param flows: Major-road flows (veh/h)
    :param alphas: Impatience factors for generator-built profiles, or None to keep the scenario's
    :param merge_time_sets: Sequence of per-profile merge-time tuples, or None
    :param n_jobs: joblib workers
    :return: DataFrame with columns alpha, merge_times, q_veh_per_hour, capacity_veh_per_hour, exact, defect
    """
    rows = []
    for alpha in (alphas or [None]):
        for merge_times in (merge_time_sets or [None]):
            variant = config.with_overrides(alpha=alpha, merge_times=merge_times)
            generators = [p.generator for p in variant.profiles if p.generator is not None]
            for result in capacity_sweep(variant, flows, n_jobs=n_jobs):
                rows.append({
                    'alpha': generators[0].alpha if generators else np.nan,
                    'merge_times': ','.join(f"{t:g}" for t in variant.merge_times),
                    'q_veh_per_hour': result.major_flow,
                    'capacity_veh_per_hour': result.capacity,
                    'exact': result.exact,
                    'defect': result.defect,
                })
    return pd.DataFrame(rows, columns=['alpha', 'merge_times', 'q_veh_per_hour',
                                       'capacity_veh_per_hour', 'exact', 'defect'])
