# intersection/analysis_service.py

"""
One-stop solve of a scenario: saturated chain and capacity, stability, the
unit-disk roots, f(0) and the equilibrium service law. Commands work from the
returned bundle so that nothing is solved twice.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .capacity_service import CapacityResult, capacity
from .equilibrium_service import ServiceLaw, StabilityMargin, stability_margin
from .exceptions import InstabilityError
from .queue_service import RootSet, find_unit_disk_roots, solve_empty_probs
from .scenario import ScenarioConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveArtifacts:
    config: ScenarioConfig
    capacity: CapacityResult
    stability: StabilityMargin
    service_law: ServiceLaw
    empty_probs: np.ndarray
    roots: RootSet = None

    @property
    def saturated(self) -> bool:
        return self.roots is None


@lru_cache(maxsize=8)
def solve(config: ScenarioConfig, saturated: bool = False) -> SolveArtifacts:
    """
    Solves every stage the queue-length and service outputs depend on.

    :param config: Scenario
    :param saturated: Skip the queue-length stages and use f(0) = 0
    :return: SolveArtifacts
    :raises InstabilityError: rho >= 1 and ``saturated`` is False
    """
    result = capacity(config)
    margin = stability_margin(config)
    if saturated:
        law = ServiceLaw(config)
        return SolveArtifacts(config=config, capacity=result, stability=margin,
                              service_law=law, empty_probs=law.f0)

    if not margin.stable:
        raise InstabilityError(margin.rho)
    roots = find_unit_disk_roots(config)
    f0 = solve_empty_probs(config)
    law = ServiceLaw(config, f0)
    logger.info("[ANALYSIS] rho=%.6f, E[G]=%.6f s, P(empty at departure)=%.6f",
                margin.rho, law.mean, f0.sum())
    return SolveArtifacts(config=config, capacity=result, stability=margin,
                          service_law=law, empty_probs=f0, roots=roots)
