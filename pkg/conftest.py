"""Pytest wiring: configure Django the same way ``manage.py test`` does."""
import os
import sys
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent
sys.path.insert(0, str(BASE_DIR / 'apps'))
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'healsim.settings.test')

import django  # noqa: E402

django.setup()
