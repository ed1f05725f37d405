from django.apps import AppConfig


class GhostImagingConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'ghostimaging'
    verbose_name = 'Ghost imaging'
