# -*- coding: utf-8 -*-
#
# ./manage.py validate --config configs/printed.json
u'''

Management command to check a model against the exponent balance and the structural
assumptions on its reaction terms.

Prints one PASS/FAIL line per condition, with the slack and, for sampled conditions,
the (M, ρ) witness where the worst margin was found. Exits 0 when every condition holds,
1 when one fails and 2 when the config cannot be read.

Usage: manage.py validate [--config PATH] [--set model.key=value ...]
'''
from django.core.management.base import CommandError

from Attractors.management.lab import LabCommand
from Attractors.experiments.runner import params_of
from Attractors.numerics.enums import ExitCode
from Attractors.numerics.model import describe, validate_assumptions, validate_balance

from Site.logutils import log


class Command(LabCommand):
    help = 'Checks the balance conditions and structural assumptions of a model config'

    def lab(self, conf, out, **options):
        params = params_of(conf)
        log.info(f"Validating {describe(params)}")

        failed = []
        for report in (validate_balance(params.alpha, params.gamma, params.beta), validate_assumptions(params)):
            self.stdout.write(f"{report.title}:")
            for line in report.lines():
                self.stdout.write(f"  {line}")
            failed += report.failures()

        if failed:
            raise CommandError(f"{len(failed)} condition(s) failed: {', '.join(c.name for c in failed)}",
                               returncode=ExitCode.verdict_failed)
        self.stdout.write("all conditions hold")
