# -*- coding: utf-8 -*-
#
# ./manage.py study propagation --out output
u'''

Management command to run one of the experiment studies and write its report.

The report goes to <out>/<study>/ (report.json, runs.csv and the .dat series). Exits 0
when no declared verdict failed, 1 when one did, 2 for an unknown study or a bad config
and 3 when the solver fails outside of a per-run record.

Usage: manage.py study NAME [--config PATH] [--out DIR] [--set key=value ...] [--threads N] [--seed N]
'''
from django.core.management.base import CommandError

from Attractors.management.lab import LabCommand
from Attractors.experiments import STUDIES
from Attractors.experiments.config import ConfigError
from Attractors.numerics.analysis import AnalysisError
from Attractors.numerics.enums import ExitCode, Studies
from Attractors.numerics.model import ModelError
from Attractors.numerics.solver import SolverError

from Site.logutils import log


class Command(LabCommand):
    help = f"Runs a study, one of: {', '.join(Studies)}"

    def add_arguments(self, parser):
        parser.add_argument('study', help=', '.join(f"{k} ({v})" for k, v in Studies.items()))
        super().add_arguments(parser)

    def handle(self, *args, **options):
        # Checked before the config so that a typo is reported as such
        if options['study'] not in STUDIES:
            raise CommandError(f"unknown study '{options['study']}', expected one of: {', '.join(Studies)}",
                               returncode=ExitCode.usage)
        return super().handle(*args, **options)

    def lab(self, conf, out, **options):
        name = options['study']
        log.info(f"Study {name} started")

        try:
            report = STUDIES[name](conf)
        except (ConfigError, ModelError, AnalysisError) as e:
            raise CommandError(f"{name}: {e}", returncode=ExitCode.usage)
        except SolverError as e:
            raise CommandError(f"{name}: solver failed: {e}", returncode=ExitCode.solver_failed)

        directory = report.write(out)
        for note in report.notes:
            self.stdout.write(f"note: {note}")
        for v in report.verdicts:
            self.stdout.write(f"{v['verdict']:>7s}  {v['name']}  ({v['tolerance_key']}={v['tolerance']!r})")
        self.stdout.write(f"{name}: {report.summary()}, written to {directory}")

        if report.failed:
            raise CommandError(f"{name}: {len(report.failed)} verdict(s) failed", returncode=ExitCode.verdict_failed)
