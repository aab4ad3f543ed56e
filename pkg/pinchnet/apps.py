from django.apps import AppConfig


class PinchnetConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "pinchnet"
    verbose_name = "Pinching-antenna network optimizer"
