'''
Finite against infinite speed of propagation.

A compactly supported M₀ is evolved twice: with the degenerate diffusion, and with the
nondegenerate flag that sets the diffusion exponent to 0. The support of the first
should creep out at a finite speed; the second fills the whole domain at once.
'''
import math

import numpy as np

from ..numerics.analysis import support_measure
from .config import seed_of
from .initial import initial_state, member_rngs
from .report import ExperimentReport
from .runner import fan_out, grid_of, params_of, safe_evolve, solver_of, study_provenance


def support_series(traj, tol):
    return [(s.time,) + support_measure(s.M, tol) for s in traj]


def run_propagation(conf):
    sc = conf["studies"]["propagation"]
    key = "studies.propagation."
    tol = sc["support_tol"]
    grid = grid_of(conf)
    solver = solver_of(conf, reg_n=sc["reg_n"], t_end=sc["t_end"], snapshot_every=sc["snapshot_every"])
    models = {"degenerate": params_of(conf, nondegenerate=False), "nondegenerate": params_of(conf, nondegenerate=True)}
    report = ExperimentReport("propagation", conf, study_provenance(conf, models["degenerate"], solver))

    state0 = initial_state(grid, conf["initial"], member_rngs(seed_of(conf), 1)[0])
    names = list(models)
    runs = dict(zip(names, fan_out(lambda name: safe_evolve(state0, models[name], solver, name), names, conf)))

    series = {}
    for name, (traj, failure) in runs.items():
        if failure:
            report.add_run(run=name, failed=True, **failure)
            continue
        report.keep_trajectory(name, traj)
        rows = support_series(traj, tol)
        series[name] = rows
        report.add_series(f"support_{name}", ("t", "measure", "radius"), rows)
        report.add_run(run=name, failed=False, initial_measure=rows[0][1], initial_radius=rows[0][2],
                       final_measure=rows[-1][1], final_radius=rows[-1][2])

    measure0, radius0 = support_measure(state0.M, tol)
    report.aggregate("initial_support", {"measure": measure0, "radius": radius0})
    if measure0 == 0:
        report.note("M0 has empty support, nothing propagates")

    if "degenerate" in series:
        rows = series["degenerate"]
        # least-squares slope of radius against time
        speed = max(float(np.polyfit([t for t, _, _ in rows], [r for _, _, r in rows], 1)[0]), 0.0) if len(rows) > 1 else 0.0
        report.aggregate("front_speed", speed)
        bound = sc["front_fraction"] * radius0
        report.verdict("degenerate front speed below front_fraction of the initial radius",
                       speed < bound or (measure0 == 0 and speed == 0), speed, key + "front_fraction", sc["front_fraction"])
    else:
        report.verdict("degenerate front speed below front_fraction of the initial radius", False, None,
                       key + "front_fraction", sc["front_fraction"])

    name = "nondegenerate run fills the domain within one snapshot"
    if measure0 == 0:
        report.skip(name, "empty initial support", key + "support_tol", tol)
    elif "nondegenerate" in series and len(series["nondegenerate"]) > 1:
        measure1 = series["nondegenerate"][1][1]
        full = grid.measure
        report.aggregate("nondegenerate_first_measure", measure1)
        report.verdict(name, math.isclose(measure1, full), measure1 / full, key + "support_tol", tol)
    elif "nondegenerate" in series:
        report.skip(name, "t_end is 0, no step taken", key + "support_tol", tol)
    else:
        report.verdict(name, False, None, key + "support_tol", tol)
    return report
