from django.apps import AppConfig


class ContainmentConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'containment'
    verbose_name = 'Containment'
