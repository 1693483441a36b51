from copy import deepcopy

from django.conf import settings


def healsim_settings():
    """Return a copy of the HEALSIM settings dict"""
    return deepcopy(getattr(settings, 'HEALSIM', {}))


def section(name):
    """Return one HEALSIM section (e.g. ``'METACOGNITION'``) as a dict"""
    return healsim_settings().get(name.upper(), {})
