"""
Django settings for the prodtop project.

prodtop is a command-line research artifact, so only the pieces of Django it uses are configured here: the `core` app
(management commands), Django REST Framework (serializers for input validation), logging, and the numerical tunables
read by the services.

For the full list of Django settings and their values, see
https://docs.djangoproject.com/en/5.1/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Nothing is signed or served, but Django refuses to start without a key.
SECRET_KEY = os.getenv("DJANGO_SECRET_KEY", default="prodtop-cli-only-not-a-secret")

DEBUG = os.getenv("DJANGO_DEBUG", default=False)

ALLOWED_HOSTS: list[str] = []


# Application definition

INSTALLED_APPS = [
    "core.apps.CoreConfig",
    "rest_framework",
]

# No models are persisted; commands never touch a database.
DATABASES: dict[str, dict[str, str]] = {}


# Internationalization
# https://docs.djangoproject.com/en/5.1/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True


# Logging
# https://docs.djangoproject.com/en/5.1/topics/logging/

PRODTOP_LOG_LEVEL = os.getenv("PRODTOP_LOG_LEVEL", default="WARNING")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(levelname)s %(name)s %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "loggers": {
        "core": {"handlers": ["console"], "level": PRODTOP_LOG_LEVEL, "propagate": True},
    },
}


# prodtop

PRODTOP_VERSION = "0.1.0"
PRODTOP_THREADS = int(os.getenv("PRODTOP_THREADS", default=os.cpu_count() or 1))
PRODTOP_DEFAULT_SEED = int(os.getenv("PRODTOP_DEFAULT_SEED", default=7))

# Singular values below PRODTOP_RANK_TOL * (largest singular value) count as zero.
PRODTOP_RANK_TOL = float(os.getenv("PRODTOP_RANK_TOL", default=1e-10))

# Dense eigendecomposition / dense solves below these dimensions, iterative methods at or above.
PRODTOP_DENSE_EIG_LIMIT = int(os.getenv("PRODTOP_DENSE_EIG_LIMIT", default=512))
PRODTOP_DENSE_SOLVE_LIMIT = int(os.getenv("PRODTOP_DENSE_SOLVE_LIMIT", default=2000))
PRODTOP_CG_RTOL = float(os.getenv("PRODTOP_CG_RTOL", default=1e-10))

PRODTOP_DRIFTER_MAX_ITER = int(os.getenv("PRODTOP_DRIFTER_MAX_ITER", default=5000))
PRODTOP_MIN_YEAR = int(os.getenv("PRODTOP_MIN_YEAR", default=1992))
