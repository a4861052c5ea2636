from django.apps import AppConfig


class ExperimentsConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "proactive_scheduling.apps.experiments"
    verbose_name = "Experiments"
