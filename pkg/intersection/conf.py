# intersection/conf.py

"""
Access to the ``GAP_ACCEPTANCE`` settings dict with built-in fallbacks, so the
library also works when imported outside ``manage.py``.
"""

from django.conf import settings

DEFAULTS = {
    'PROBABILITY_TOLERANCE': 1e-12,
    'DEFECT_WARN': 1e-8,
    'DEFECT_ERROR': 1e-6,
    'CAPACITY_ATTEMPTS': 100,
    'QUEUE_ATTEMPTS': 25,
    'ROOT_ZERO_TOL': 1e-10,
    'ROOT_MERGE_TOL': 1e-8,
    'ROOT_CONTOUR_GAP': 1e-8,
    'ROOT_CONTOUR_NODES': 2 ** 14,
    'ROOT_MAX_ITER': 500,
    'F0_CLAMP_TOL': 1e-12,
    'F0_NEGATIVE_TOL': 1e-8,
    'RICHARDSON_LEVELS': 6,
    'INVERSION_SAMPLES': 2 ** 14,
    'INVERSION_MAX_SAMPLES': 2 ** 20,
    'ALIASING_TOL': 1e-10,
    'SIM_SEED': 20240917,
    'SIM_WARMUP': 10_000,
    'SIM_HORIZON': 1_000_000,
    'SIM_REPLICATIONS': 10,
    'N_JOBS': 1,
}


def app_setting(name: str):
    """
    Returns a gap-acceptance setting, preferring the project's settings.

    :param name: Key of the ``GAP_ACCEPTANCE`` dict (e.g. 'DEFECT_ERROR')
    :return: The configured value, or the built-in default
    """
    if name not in DEFAULTS:
        raise KeyError(f"Unknown gap-acceptance setting '{name}'")
    if settings.configured:
        overrides = getattr(settings, 'GAP_ACCEPTANCE', {})
        if name in overrides:
            return overrides[name]
    return DEFAULTS[name]
