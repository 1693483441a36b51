from django.apps import AppConfig


class ContinuumConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'continuum'
    verbose_name = 'Continuum model'
