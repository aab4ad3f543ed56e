"""
Shared plumbing of the management commands: error translation to exit codes and
helpers to resolve artifact paths.
"""
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from .exceptions import ArtifactError, ConfigError, GeometryError, NumericError, ShapeError


logger = logging.getLogger(__name__)

CONFIG_EXIT = 2
RUNTIME_EXIT = 3


class PinchnetCommand(BaseCommand):
    """
    Base class of the pinchnet commands.

    Subclasses implement ``run``; configuration problems leave with exit status 2,
    numerical, geometric and artifact problems with exit status 3.
    """

    def handle(self, *args, **options):
        try:
            return self.run(*args, **options)
        except (ConfigError, serializers.ValidationError) as exc:
            logger.error(f"{self.command_name}: configuration error: {exc}")
            raise CommandError(f"configuration error: {exc}", returncode=CONFIG_EXIT) from exc
        except (NumericError, ArtifactError, GeometryError, ShapeError) as exc:
            logger.error(f"{self.command_name}: {type(exc).__name__}: {exc}")
            raise CommandError(f"{type(exc).__name__}: {exc}", returncode=RUNTIME_EXIT) from exc

    @property
    def command_name(self):
        return self.__module__.rsplit(".", 1)[-1]

    def run(self, *args, **options):
        raise NotImplementedError

    def fail(self, message):
        logger.error(f"{self.command_name}: {message}")
        raise CommandError(message, returncode=RUNTIME_EXIT)


def artifact_path(value):
    """``value`` as a path; relative paths are resolved against ``ARTIFACT_DIR``."""
    path = Path(value)
    if path.is_absolute() or path.exists():
        return path
    return Path(settings.PINCHNET["ARTIFACT_DIR"]) / path


def existing_file(value, what):
    path = artifact_path(value)
    if not path.is_file():
        raise ArtifactError(f"{what} not found: {value}")
    return path
