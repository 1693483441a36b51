from .base import *  # noqa: F401,F403

DEBUG = False

CELERY_TASK_ALWAYS_EAGER = True
CELERY_TASK_EAGER_PROPAGATES = True
CELERY_BROKER_URL = 'memory://'
CELERY_RESULT_BACKEND = 'cache+memory://'

# Keep test output readable; failures still surface through assertions.
LOGGING['root']['level'] = 'WARNING'  # noqa: F405

HEALSIM['TELEMETRY']['CPU_MODE'] = 'synthetic'  # noqa: F405
HEALSIM['REASONER']['BACKEND'] = 'scripted'  # noqa: F405
HEALSIM['REASONER']['SYNTHETIC_LATENCY'] = 0.0  # noqa: F405
