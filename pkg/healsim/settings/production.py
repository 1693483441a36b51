from .base import *  # noqa: F401,F403

DEBUG = False

SECRET_KEY = os.environ['SECRET_KEY']  # noqa: F405

LOGGING['root']['level'] = os.environ.get('HEALSIM_LOG_LEVEL', 'WARNING')  # noqa: F405
