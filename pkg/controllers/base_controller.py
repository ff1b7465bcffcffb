"""Base class shared by every management command of the pipeline."""
import json
import logging
import sys
from dataclasses import MISSING, fields
from pathlib import Path

from django.core.management.base import BaseCommand as DjangoBaseCommand, CommandError, handle_default_options

from models.config_model import ConfigRecord
from utils.decorators import as_command_error
from utils.exceptions import UsageError
from utils.serializers import read_json, write_json

logger = logging.getLogger(__name__)

CONFIG_SECTIONS = ('synth', 'train', 'mesh')


class BaseCommand(DjangoBaseCommand):
    """
    One pipeline command.

    Subclasses set `name`, `help` and optionally `config_class` / `config_section`, declare their
    flags in add_arguments and do the work in handle, returning the JSON summary for stdout.
    Every command also takes --seed, --threads, --config, --quiet and --verbose.
    """
    name = None
    config_class = None
    config_section = None
    config_filename = None
    requires_system_checks = []

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        group = parser.add_argument_group('pipeline options')
        group.add_argument('--seed', type=int, default=None, help='seed for every random choice')
        group.add_argument('--threads', type=int, default=None, help='cap on internal parallelism')
        group.add_argument('--config', default=None, help='JSON config file (CLI flags take precedence)')
        group.add_argument('--quiet', action='store_true', help='no progress bars, warnings only')
        group.add_argument('--verbose', action='store_true', help='debug logging')
        return parser

    def run_from_argv(self, argv):
        """Run from manage.py: a failure prints one error line on stderr and exits with its code."""
        parser = self.create_parser(argv[0], argv[1])
        try:
            options = parser.parse_args(argv[2:])
        except CommandError as exc:
            self.fail(as_command_error(UsageError(str(exc).removeprefix('Error: '))))
        self._called_from_command_line = True
        cmd_options = vars(options)
        args = cmd_options.pop('args', ())
        handle_default_options(options)
        try:
            self.execute(*args, **cmd_options)
        except CommandError as exc:
            if options.traceback:
                raise
            self.fail(exc)

    def fail(self, exc):
        self.stderr.write(str(exc))
        sys.exit(exc.returncode)

    def execute(self, *args, **options):
        if options.get('quiet') or options.get('verbosity') == 0:
            logging.getLogger().setLevel(logging.WARNING)
        elif options.get('verbose') or options.get('verbosity', 1) > 1:
            logging.getLogger().setLevel(logging.DEBUG)
        threads = options.get('threads')
        if threads is not None and threads < 1:
            raise as_command_error(UsageError('--threads must be at least 1.'))
        return super().execute(*args, **options)

    def progress(self, options):
        return not options.get('quiet') and options.get('verbosity', 1) > 0

    def seed(self, options):
        return options['seed'] if options.get('seed') is not None else 0

    def load_config(self, options, **overrides):
        """Effective config record: CLI flag > config file > built-in default."""
        data = {}
        if options.get('config'):
            path = Path(options['config'])
            if not path.exists():
                raise UsageError('Config file not found: %(path)s', params={'path': path})
            data = read_json(path)
            if not isinstance(data, dict):
                raise UsageError('Config file %(path)s must hold a JSON object.', params={'path': path})
            if any(key in data for key in CONFIG_SECTIONS):
                data = data.get(self.config_section) or {}
        record = self.config_class.from_dict(data)
        return record.with_overrides(**overrides)

    def echo_config(self, out_dir, options, record=None, **extra):
        """Write the effective configuration into an output directory (config.json for synth and train)."""
        payload = {'command': self.name, 'seed': options.get('seed'), 'threads': options.get('threads')}
        if record is not None:
            payload['config'] = record.to_dict()
        payload.update(extra)
        filename = self.config_filename or f'{self.name.replace("-", "_")}_config.json'
        write_json(payload, Path(out_dir) / filename)

    def emit(self, result):
        """JSON summary; execute() writes it to stdout and call_command returns it."""
        return json.dumps(result, indent=2)


def _flag(name):
    return '--' + name.replace('_', '-')


def add_record_arguments(parser, record_class, prefix='', skip=()):
    """
    One flag per field of a config record; booleans become switches.
    Every default is None so an absent flag never overrides the config file.
    """
    for f in fields(record_class):
        if f.name in skip or isinstance(f.type, type) and issubclass(f.type, ConfigRecord):
            continue
        dest = prefix + f.name
        default = f.default if f.default is not MISSING else None
        if f.type is bool:
            parser.add_argument(_flag(dest), dest=dest, action='store_true', default=None,
                                help=f'enable {f.name} (default {default})')
        elif f.type is tuple:
            parser.add_argument(_flag(dest), dest=dest, type=float, nargs='+', default=None,
                                help=f'default {default}')
        else:
            parser.add_argument(_flag(dest), dest=dest, type=f.type, default=None,
                                help=f'default {default}')


def record_overrides(options, record_class, prefix=''):
    """Collect the record's flags from parsed options (None when absent)."""
    out = {}
    for f in fields(record_class):
        value = options.get(prefix + f.name)
        if value is not None:
            out[f.name] = tuple(value) if isinstance(value, list) else value
    return out
