import os
import sys
from pathlib import Path

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent
APPS_DIR = BASE_DIR / 'apps'

if str(APPS_DIR) not in sys.path:
    sys.path.insert(0, str(APPS_DIR))

load_dotenv(BASE_DIR / '.env')


def env_float(name, default):
    value = os.environ.get(name)
    return float(value) if value not in (None, '') else default


def env_int(name, default):
    value = os.environ.get(name)
    return int(value) if value not in (None, '') else default


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('SECRET_KEY', 'django-insecure-healsim-local-key')

DEBUG = os.environ.get('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = os.environ.get('ALLOWED_HOSTS', 'localhost,127.0.0.1').split(',')

# Application definition
INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',

    # Third-party apps
    'rest_framework',

    # Local apps
    'core',
    'continuum',
    'faults',
    'containment',
    'logs',
    'reasoner',
    'diagnosis',
    'metacognition',
    'knowledge',
    'telemetry',
    'simulation',
]

LOCAL_APPS = [app for app in INSTALLED_APPS if '.' not in app and app != 'rest_framework']

# The simulator keeps its state in memory and in text files; the database
# only exists because Django expects one.
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.environ.get('DB_NAME', ':memory:'),
    }
}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = True
USE_TZ = True

# REST Framework settings (serializers only, no API views)
REST_FRAMEWORK = {
    'UNAUTHENTICATED_USER': None,
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [],
    'COERCE_DECIMAL_TO_STRING': False,
}

# Celery settings
CELERY_BROKER_URL = os.environ.get('REDIS_URL', 'redis://localhost:6379/0')
CELERY_RESULT_BACKEND = os.environ.get('REDIS_URL', 'redis://localhost:6379/0')
CELERY_ACCEPT_CONTENT = ['json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = TIME_ZONE
CELERY_TASK_ALWAYS_EAGER = os.environ.get('CELERY_TASK_ALWAYS_EAGER', 'False') == 'True'

TEST_RUNNER = 'healsim.test_runner.LocalAppsDiscoverRunner'

# Simulator defaults, one section per layer. Every free symbol of the
# pipeline has its default here; run configs override per key.
HEALSIM = {
    'SEED': env_int('HEALSIM_SEED', 0),
    'CONTINUUM': {
        'ALPHA': 0.5,
        'BANDWIDTH_FLOOR': 1.0,
        'BUSY_ACCEPTS': False,
    },
    'CONTAINMENT': {
        'K': 2,
        'PROBE_INTERVAL': 1.0,
        'TIMEOUT': None,
        'TIMEOUT_FACTOR': 3.0,
        'CANDIDATE_LIMIT': 8,
    },
    'LOGS': {
        'DELTA_D': 120.0,
        'BASE_YEAR': 2017,
    },
    'METACOGNITION': {
        'WEIGHTS': (0.4, 0.35, 0.25),
        'THETA_PRO': 0.35,
        'THETA_ACC': 0.55,
        'THETA_INH': 0.85,
        'R_MAX': 8,
        'PROLIFERATION_BATCH': 2,
        'AGENT_CAP': 32,
        'MAX_DEPTH': 12,
        'PATH_CAP': 64,
        'PERSIST_SUPPORTING': False,
    },
    'KNOWLEDGE': {
        'THETA_TOPIC': 0.75,
        'THETA_REASON': 0.70,
        'THETA_MERGE': 0.90,
        'THETA_SPLIT': 0.60,
        'DIMENSION': 256,
    },
    'REASONER': {
        'BACKEND': os.environ.get('HEALSIM_REASONER_BACKEND', 'scripted'),
        'ENDPOINT': os.environ.get('HEALSIM_REASONER_ENDPOINT', 'http://localhost:8080/v1/reason'),
        'WIRE': os.environ.get('HEALSIM_REASONER_WIRE', 'native'),
        'MODEL': os.environ.get('HEALSIM_REASONER_MODEL', ''),
        'TOKEN_ENV': os.environ.get('HEALSIM_REASONER_TOKEN_ENV', 'HEALSIM_REASONER_TOKEN'),
        'TIMEOUT': env_float('HEALSIM_REASONER_TIMEOUT', 30.0),
        'RETRIES': env_int('HEALSIM_REASONER_RETRIES', 2),
        'MAX_TOKENS': env_int('HEALSIM_REASONER_MAX_TOKENS', 1024),
        'SYNTHETIC_LATENCY': env_float('HEALSIM_SYNTHETIC_LATENCY', 0.0),
    },
    'TELEMETRY': {
        'CPU_MODE': os.environ.get('HEALSIM_CPU_MODE', 'synthetic'),
        'CPU_INTERVAL': 0.1,
        'UNIT_COST': 1.0,
    },
}

# Logging
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': os.environ.get('HEALSIM_LOG_LEVEL', 'INFO'),
    },
    'loggers': {
        'celery': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
    },
}
