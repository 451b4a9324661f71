# -*- coding: utf-8 -*-
#
# ./manage.py run --config configs/default.json --out output
u'''

Management command to evolve one initial state and write the trajectory.

The trajectory lands in <out>/run as manifest.json plus one M_####.fld, rho_####.fld
pair per snapshot. If the solver gives up, the last valid state is written to
<out>/run/diagnostic_*.fld instead and the command exits 3.

Usage: manage.py run [--config PATH] [--out DIR] [--set key=value ...] [--seed N]
'''
import os

from django.core.management.base import CommandError

from Attractors.management.lab import LabCommand
from Attractors.experiments.config import seed_of
from Attractors.experiments.initial import initial_state, member_rngs
from Attractors.experiments.runner import grid_of, params_of, solver_of
from Attractors.numerics.enums import ExitCode
from Attractors.numerics.model import params_to_config
from Attractors.numerics.norms import state_norm
from Attractors.numerics.solver import SolverError, evolve, mass
from Attractors.numerics.storage import save_state, save_trajectory

from Site.logutils import log


class Command(LabCommand):
    help = 'Evolves one initial state and writes its trajectory directory'

    def lab(self, conf, out, **options):
        grid = grid_of(conf)
        params = params_of(conf)
        solver = solver_of(conf)
        state0 = initial_state(grid, conf["initial"], member_rngs(seed_of(conf), 1)[0])
        directory = os.path.join(out, "run")

        try:
            traj = evolve(state0, params, solver)
        except SolverError as e:
            if e.state is None:
                raise CommandError(f"solver failed before the first step: {e}", returncode=ExitCode.solver_failed)
            save_state(e.state, directory)
            log.error(f"solver failed at t={e.state.time}: {e.reason}")
            raise CommandError(f"solver failed ({e.reason}), diagnostic snapshot in "
                               f"{os.path.join(directory, 'diagnostic_M.fld')}", returncode=ExitCode.solver_failed)

        save_trajectory(traj, directory, config=conf, model=params_to_config(params))

        final = traj.final
        self.stdout.write(f"{len(traj)} snapshots to t={final.time:.6g} in {directory}: "
                          f"max M={final.M.values.max():.6g}, mass={mass(final):.6g}, "
                          f"norm={state_norm(final):.6g}")
