"""
With these settings, tests run faster.
"""

from .base import *  # noqa: F403
from .base import env

# GENERAL
# ------------------------------------------------------------------------------
# https://docs.djangoproject.com/en/dev/ref/settings/#secret-key
SECRET_KEY = env(
    "DJANGO_SECRET_KEY",
    default="vY3kqN8u2cXh0pR6tLw1sJd9mFz4bGa7eKo5iUn2TyQ8rVx3MhC0lPjS6dWfE1gB",
)
# https://docs.djangoproject.com/en/dev/ref/settings/#test-runner
TEST_RUNNER = "django.test.runner.DiscoverRunner"

# DATABASES
# ------------------------------------------------------------------------------
DATABASES = {"default": env.db("DATABASE_URL", default="sqlite://:memory:")}

# SIMULATION
# ------------------------------------------------------------------------------
# Tests pin every knob the environment could otherwise change.
SIMULATION_CONFIG = None
SIMULATION_SEED = None
SIMULATION_JOBS = 1
SIMULATION_BACKEND = "local"
SIMULATION_TABLE_CACHE = None

# Celery
# ------------------------------------------------------------------------------
CELERY_TASK_ALWAYS_EAGER = True
# https://docs.celeryq.dev/en/stable/userguide/configuration.html#task-eager-propagates
CELERY_TASK_EAGER_PROPAGATES = True
