'''
Fractal dimension of the post-transient snapshot cloud.

After the transient every snapshot is reduced to its coarse block averages of M and ρ,
and the box-counting dimension of that point cloud estimates the number of degrees of
freedom the long-time dynamics actually use. A dissipative run collapses to a point
(dimension 0). The f = −M counterexample is reported alongside for comparison; its
fit is not judged.
'''
import math

import numpy as np

from ..numerics.analysis import AnalysisError, box_counting_dimension, coarse_features
from .config import ConfigError, seed_of
from .initial import initial_state, member_rngs
from .report import ExperimentReport
from .runner import grid_of, params_of, safe_evolve, solver_of, study_provenance


def snapshot_cloud(traj, transient, block):
    slack = 1e-9 * max(1.0, transient)
    return np.array([coarse_features(s, block) for s in traj if s.time >= transient - slack])


def measure_cloud(points, sc):
    '''
    The box-counting fit of a cloud with the study's radii, as a plain dict.
    '''
    if len(points) < sc["min_snapshots"]:
        raise ConfigError(f"dimension study needs at least {sc['min_snapshots']} post-transient snapshots, "
                          f"got {len(points)}")
    fit = box_counting_dimension(points, sc["radii"])
    return {"dimension": fit.dimension, "residual": fit.residual, "counts": fit.counts, "points": len(points)}


def run_dimension(conf):
    sc = conf["studies"]["dimension"]
    key = "studies.dimension."
    if sc["transient"] > sc["t_end"]:
        raise ConfigError("studies.dimension.transient lies beyond studies.dimension.t_end")

    grid = grid_of(conf)
    params = params_of(conf)
    solver = solver_of(conf, t_end=sc["t_end"], snapshot_every=sc["snapshot_every"])
    report = ExperimentReport("dimension", conf, study_provenance(conf, params, solver))
    rng = member_rngs(seed_of(conf), 1)[0]
    state0 = initial_state(grid, conf["initial"], rng)

    expected = int(math.floor((sc["t_end"] - sc["transient"]) / sc["snapshot_every"] + 1e-9)) + 1
    if expected < sc["min_snapshots"]:
        raise ConfigError(f"dimension study needs at least {sc['min_snapshots']} post-transient snapshots, "
                          f"the config gives {expected}")

    traj, failure = safe_evolve(state0, params, solver, "dimension")
    name = "finite dimension"
    if failure:
        report.add_run(run="main", failed=True, **failure)
        report.verdict(name, False, None, key + "min_snapshots", sc["min_snapshots"])
        return report

    report.keep_trajectory("main", traj)
    points = snapshot_cloud(traj, sc["transient"], sc["block"])
    fit = measure_cloud(points, sc)
    report.add_run(run="main", failed=False, **fit)
    report.add_series("counts", ("radius", "count"), list(zip(sc["radii"], fit["counts"])))
    report.aggregate("dimension", fit["dimension"])
    report.aggregate("residual", fit["residual"])
    report.verdict(name, math.isfinite(fit["dimension"]), fit["dimension"], key + "min_snapshots", sc["min_snapshots"])

    ce = sc["counterexample"]
    if ce["enabled"]:
        counter_params = params_of(conf, spec="example1")
        counter_solver = solver_of(conf, t_end=ce["t_end"], snapshot_every=sc["snapshot_every"])
        counter0 = initial_state(grid, conf["initial"], rng, amplitude=ce["amplitude"])
        counter, failure = safe_evolve(counter0, counter_params, counter_solver, "counterexample")
        if failure:
            report.add_run(run="counterexample", failed=True, **failure)
        else:
            try:
                counter_fit = measure_cloud(snapshot_cloud(counter, ce["transient"], sc["block"]), sc)
                report.add_run(run="counterexample", failed=False, **counter_fit)
                report.aggregate("counterexample_dimension", counter_fit["dimension"])
            except (AnalysisError, ConfigError) as e:
                report.add_run(run="counterexample", failed=True, reason="fit", message=str(e))
                report.note(f"counterexample cloud not measured: {e}")
    return report
