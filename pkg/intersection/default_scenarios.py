# intersection/default_scenarios.py

"""
The two worked intersections, built programmatically.

Both have two driver profiles in a 90%/10% mix (cars and slower vehicles)
with two equally structured critical-gap draws per attempt and impatience
``u_(i+1) = alpha (u_i - Delta) + Delta``. They differ only in the slower
profile's first-attempt gaps: 8/9 s in the first example and 10/12 s in the
second. With 10/12 s a merged vehicle can leave a lag longer than a follower's
shortest gap, so the analysis of the second example is a lower bound.
"""

import yaml

from .scenario import ScenarioConfig, parse_config

PROFILE_PROBS = (0.9, 0.1)
PROFILE_ONE_GAPS = (5.0, 6.0)
PROFILE_ONE_PROBS = (0.4, 0.6)
PROFILE_TWO_PROBS = (0.5, 0.5)
EXAMPLE_ONE_GAPS = (8.0, 9.0)
EXAMPLE_TWO_GAPS = (10.0, 12.0)


def example_document(profile_two_gaps=EXAMPLE_ONE_GAPS, major_flow: float = 500.0, batch_flow: float = 200.0,
                     batch_size: dict = None, alpha: float = 0.9, merge_times=(4.0, 5.0),
                     attempts: int = None, tail: str = 'truncated') -> dict:
    """
    Scenario document of the worked examples.

    :param profile_two_gaps: First-attempt critical gaps of the slower profile (seconds)
    :param major_flow: Major-road flow (veh/h)
    :param batch_flow: Minor-road batch rate (batches/h)
    :param batch_size: ``{kind, params}`` mapping; single vehicles if None
    :param alpha: Impatience factor shared by both profiles
    :param merge_times: (Delta_1, Delta_2) in seconds
    :param attempts: Number of modeled attempts, or None for the command default
    :param tail: 'truncated' or 'saturating'
    :return: Document dict accepted by :func:`parse_config`
    """
    profiles = []
    for probability, merge_time, gaps, probs in zip(
            PROFILE_PROBS, merge_times, (PROFILE_ONE_GAPS, profile_two_gaps), (PROFILE_ONE_PROBS, PROFILE_TWO_PROBS)):
        profiles.append({
            'probability': probability,
            'merge_time_s': float(merge_time),
            'gaps': {'generator': {'base_gaps_s': list(gaps), 'base_probs': list(probs), 'alpha': float(alpha)}},
        })
    doc = {
        'major': {'flow_veh_per_hour': float(major_flow)},
        'minor': {
            'batch_rate_per_hour': float(batch_flow),
            'batch_size': batch_size or {'kind': 'deterministic', 'params': {'size': 1}},
        },
        'gaps_per_attempt': 2,
        'tail': tail,
        'profiles': profiles,
    }
    if attempts is not None:
        doc['attempts'] = int(attempts)
    return doc


def example_one(**overrides) -> ScenarioConfig:
    """First worked example: limited gap reuse holds, the analysis is exact."""
    return parse_config(yaml.safe_dump(example_document(**overrides)))


def example_two(**overrides) -> ScenarioConfig:
    """Second worked example with a saturating tail unless ``tail`` is given."""
    overrides.setdefault('tail', 'saturating')
    overrides.setdefault('alpha', 1.0)
    return parse_config(yaml.safe_dump(example_document(profile_two_gaps=EXAMPLE_TWO_GAPS, **overrides)))
