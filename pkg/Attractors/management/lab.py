'''
What the laboratory commands share: the config flags, turning them into a validated
experiment config, and mapping --verbosity onto the Attractors logger.

Exit codes follow numerics.enums.ExitCode. A command fails by raising CommandError with
the matching returncode, which manage.py turns into the process exit status and
call_command hands to the caller as the exception.
'''
import logging

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from ..experiments.config import ConfigError, build_config, load_config
from ..numerics.enums import ExitCode

from Site.logutils import log, reset_timer


class LabCommand(BaseCommand):
    '''
    Base of validate, run and study. Subclasses implement lab(conf, out, **options).
    '''

    def add_arguments(self, parser):
        parser.add_argument('--config', metavar='PATH', help='JSON experiment config, merged over the defaults')
        parser.add_argument('--out', metavar='DIR', default=None, help=f'output directory (default {settings.LAB_OUTPUT_DIR})')
        parser.add_argument('--set', metavar='KEY=VALUE', action='append', default=[], dest='overrides',
                            help='override a dotted config key, repeatable')
        parser.add_argument('--threads', type=int, default=None, help='worker threads for ensemble runs')
        parser.add_argument('--seed', type=int, default=None, help='seed of all random initial data')

    def handle(self, *args, **options):
        reset_timer()
        self.set_log_level(options['verbosity'])

        conf = self.config_from(options)
        options = dict(options)
        out = options.pop('out') or settings.LAB_OUTPUT_DIR
        return self.lab(conf, out, **options)

    def lab(self, conf, out, **options):
        raise NotImplementedError

    @staticmethod
    def set_log_level(verbosity):
        # 1 is the level settings.LOGGING configures
        if verbosity == 0:
            log.setLevel(logging.ERROR)
        elif verbosity >= 2:
            log.setLevel(logging.DEBUG)
        else:
            log.setLevel(settings.LOGGING['loggers']['Attractors']['level'])

    @staticmethod
    def config_from(options):
        overrides = list(options['overrides'])
        # The dedicated flags win over --set
        if options['threads'] is not None:
            overrides.append(f"threads={options['threads']}")
        if options['seed'] is not None:
            overrides.append(f"seed={options['seed']}")

        try:
            base = load_config(options['config']) if options['config'] else None
            return build_config(overrides, base)
        except ConfigError as e:
            raise CommandError(str(e), returncode=ExitCode.usage)
