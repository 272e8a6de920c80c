"""
Django settings for the gap-acceptance analysis project.

The project is command-line only: no database, no HTTP surface. Everything
runs through ``python manage.py <command>`` and the ``intersection`` app.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Management commands never sign anything, but Django refuses to start without a key.
SECRET_KEY = os.environ.get('GAP_ACCEPTANCE_SECRET_KEY', 'gap-acceptance-cli-only-not-a-secret')

DEBUG = os.environ.get('GAP_ACCEPTANCE_DEBUG', '0') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'intersection.apps.IntersectionConfig',
]

MIDDLEWARE = []


# Database
# Analyses are pure computations over a scenario document; nothing is persisted.

DATABASES = {}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Logging
# Components log with a bracketed tag ("[CAPACITY] ...") through logging.getLogger(__name__).
# Set GAP_ACCEPTANCE_LOG_JSON=1 to get one JSON object per record instead.

LOG_LEVEL = os.environ.get('GAP_ACCEPTANCE_LOG_LEVEL', 'INFO')
LOG_AS_JSON = os.environ.get('GAP_ACCEPTANCE_LOG_JSON', '0') == '1'

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s [%(levelname)s] %(name)s: %(message)s',
        },
        'json': {
            '()': 'pythonjsonlogger.json.JsonFormatter',
            'format': '%(asctime)s %(levelname)s %(name)s %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'json' if LOG_AS_JSON else 'plain',
        },
    },
    'loggers': {
        'intersection': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}


# Gap-acceptance analysis defaults
# Read through intersection.conf.app_setting(); every key has a built-in fallback.

GAP_ACCEPTANCE = {
    # Probability vectors in scenario documents must sum to 1 within this.
    'PROBABILITY_TOLERANCE': 1e-12,
    # Truncation defect (drivers failing all N modeled attempts).
    'DEFECT_WARN': 1e-8,
    'DEFECT_ERROR': 1e-6,
    # Attempt counts used when a document does not fix N.
    'CAPACITY_ATTEMPTS': 100,
    'QUEUE_ATTEMPTS': 25,
    # Unit-disk root search.
    'ROOT_ZERO_TOL': 1e-10,
    'ROOT_MERGE_TOL': 1e-8,
    'ROOT_CONTOUR_GAP': 1e-8,
    'ROOT_CONTOUR_NODES': 2 ** 14,
    'ROOT_MAX_ITER': 500,
    # Empty-queue vector.
    'F0_CLAMP_TOL': 1e-12,
    'F0_NEGATIVE_TOL': 1e-8,
    'RICHARDSON_LEVELS': 6,
    # PGF inversion.
    'INVERSION_SAMPLES': 2 ** 14,
    'INVERSION_MAX_SAMPLES': 2 ** 20,
    'ALIASING_TOL': 1e-10,
    # Simulator.
    'SIM_SEED': 20240917,
    'SIM_WARMUP': 10_000,
    'SIM_HORIZON': 1_000_000,
    'SIM_REPLICATIONS': 10,
    # joblib workers for sweeps, replications and batched PGF evaluations.
    'N_JOBS': int(os.environ.get('GAP_ACCEPTANCE_N_JOBS', '1')),
}
