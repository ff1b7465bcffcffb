"""Decorators for command handlers: error-to-exit-code mapping and input checks."""
import logging
from functools import wraps
from pathlib import Path

from django.conf import settings
from django.core.management.base import CommandError

from .exceptions import FlatsError, UsageError

logger = logging.getLogger(__name__)


def error_line(exc):
    """Machine-parsable one-line description of a failure."""
    message = str(exc).replace('\\', '\\\\').replace('"', '\\"').replace('\n', ' ')
    return f'error: kind={type(exc).__name__} message="{message}"'


def as_command_error(exc):
    """CommandError carrying the error line and the exit code of a pipeline failure."""
    if isinstance(exc, (UsageError, FileNotFoundError)):
        return CommandError(error_line(exc), returncode=settings.EXIT_USAGE)
    return CommandError(error_line(exc), returncode=settings.EXIT_RUNTIME_FAILURE)


def command_handler(handle):
    """
    Map the failures of a command's handle method onto CommandError.

    Usage errors and missing inputs carry EXIT_USAGE, every other FlatsError
    EXIT_RUNTIME_FAILURE; the message is the single error line printed on stderr.
    """
    @wraps(handle)
    def _wrapped(self, *args, **options):
        try:
            return handle(self, *args, **options)
        except (FlatsError, FileNotFoundError) as exc:
            logger.debug('Command %s failed', self.name, exc_info=True)
            raise as_command_error(exc) from exc
    return _wrapped


def requires_files(*option_names):
    """
    Check that every named option points at an existing file or directory.
    Usage: @requires_files('scene', 'dataset')
    """
    def decorator(handle):
        @wraps(handle)
        def _wrapped(self, *args, **options):
            for name in option_names:
                values = options.get(name)
                if values is None:
                    continue
                for value in values if isinstance(values, (list, tuple)) else [values]:
                    if not Path(value).exists():
                        raise UsageError('Input %(name)s not found: %(path)s',
                                         params={'name': name, 'path': value})
            return handle(self, *args, **options)
        return _wrapped
    return decorator
