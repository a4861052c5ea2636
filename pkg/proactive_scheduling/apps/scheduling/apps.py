from django.apps import AppConfig


class SchedulingConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "proactive_scheduling.apps.scheduling"
    verbose_name = "Scheduling"
