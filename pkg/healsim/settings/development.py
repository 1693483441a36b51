from .base import *  # noqa: F401,F403

DEBUG = os.environ.get('DEBUG', 'True') == 'True'  # noqa: F405

LOGGING['root']['level'] = os.environ.get('HEALSIM_LOG_LEVEL', 'DEBUG')  # noqa: F405
