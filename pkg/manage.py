#!/usr/bin/env python
"""Django's command-line utility for the planar reconstruction pipeline."""
import os
import sys


def main(argv=None):
    """Dispatch manage.py arguments; returns the exit code (0 ok, 1 runtime failure, 2 usage error)."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')
    try:
        import django
        from django.core.management import execute_from_command_line, get_commands
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and available on your PYTHONPATH environment variable?"
        ) from exc
    argv = list(sys.argv if argv is None else ['manage.py', *argv])

    django.setup()
    from django.conf import settings
    from utils.decorators import error_line
    from utils.exceptions import UsageError

    subcommand = argv[1] if len(argv) > 1 else None
    if subcommand and not subcommand.startswith('-') and subcommand != 'help' and subcommand not in get_commands():
        print(error_line(UsageError('Unknown command: %(name)s', params={'name': subcommand})), file=sys.stderr)
        return settings.EXIT_USAGE
    try:
        execute_from_command_line(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else settings.EXIT_RUNTIME_FAILURE * bool(exc.code)
    return settings.EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
