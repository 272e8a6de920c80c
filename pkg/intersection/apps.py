from django.apps import AppConfig


class IntersectionConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'intersection'
    verbose_name = 'Unsignalized intersection analysis'
