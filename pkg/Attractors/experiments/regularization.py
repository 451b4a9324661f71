'''
Regularization ladder: solutions of the regularized system with ε = 1/n should settle
as n grows. One initial state is evolved for every n of the ladder and the L² distance
between the final M of neighbouring rungs is recorded. The order of convergence is the
slope of those distances against 1/n on log-log axes.
'''
from ..numerics.analysis import AnalysisError, fit_power_law
from ..numerics.norms import lp_norm
from .config import seed_of
from .initial import initial_state, member_rngs
from .report import ExperimentReport
from .runner import fan_out, grid_of, params_of, safe_evolve, solver_of, study_provenance


def run_regularization(conf):
    sc = conf["studies"]["regularization"]
    grid = grid_of(conf)
    params = params_of(conf)
    ladder = sorted(sc["ladder"])
    solvers = [solver_of(conf, reg_n=n, t_end=sc["t_end"], snapshot_every=max(sc["t_end"], conf["solver"]["snapshot_every"]))
               for n in ladder]
    report = ExperimentReport("regularization", conf, study_provenance(conf, params, solvers[0]))

    state0 = initial_state(grid, conf["initial"], member_rngs(seed_of(conf), 1)[0])
    runs = fan_out(lambda i: safe_evolve(state0, params, solvers[i], f"n = {ladder[i]}"), range(len(ladder)), conf)

    finals = []
    for n, (traj, failure) in zip(ladder, runs):
        if failure:
            report.add_run(n=n, failed=True, **failure)
            finals.append(None)
        else:
            report.add_run(n=n, failed=False, max_M=float(traj.final.M.values.max()), time=traj.final.time)
            report.keep_trajectory(f"n_{n}", traj)
            finals.append(traj.final)

    differences = []
    for (n, a), (m, b) in zip(zip(ladder, finals), zip(ladder[1:], finals[1:])):
        if a is not None and b is not None:
            differences.append((n, m, lp_norm(a.M - b.M, 2)))
    report.add_series("differences", ("n", "n_next", "l2_difference"), differences)
    report.aggregate("differences", [d[2] for d in differences])

    name = "differences strictly decreasing"
    key = "studies.regularization.decrease_tol"
    if any(f is None for f in finals):
        report.note("some rungs failed in the solver")
    if len(differences) < 2:
        report.skip(name, "fewer than two differences, insufficient data", key, sc["decrease_tol"])
        return report

    values = [d[2] for d in differences]
    decreasing = all(b < a * (1.0 - sc["decrease_tol"]) for a, b in zip(values, values[1:])) and None not in finals
    report.verdict(name, decreasing, values, key, sc["decrease_tol"])

    try:
        order, _ = fit_power_law([1.0 / d[0] for d in differences], values)
        report.aggregate("convergence_order", order)
    except AnalysisError as e:
        report.note(f"no convergence order: {e}")
    return report
