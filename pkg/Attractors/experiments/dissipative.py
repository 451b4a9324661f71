'''
Dissipativity: the phase-space norm ‖M‖_∞ + ‖ρ‖_{W^{1,∞}} should fall into a ball whose
size does not depend on where it started, exponentially fast.

Runs from bumps of several amplitudes are fitted to C·e^{−ωt} + D. A positive ω and
final norms that agree across amplitudes are the observable form of an absorbing set.
The exponent r_∞ in C ∝ ‖(M₀, ρ₀)‖^{r_∞} comes from the fitted C across amplitudes.

A comparison run with f = −M and g ≡ 0 grows without bound; its fit is flagged as the
non-dissipative counterexample regime.
'''
from ..numerics.analysis import AnalysisError, fit_dissipative, fit_power_law
from ..numerics.norms import state_norm
from .initial import initial_state, member_rngs
from .config import seed_of
from .report import ExperimentReport
from .runner import fan_out, grid_of, params_of, safe_evolve, solver_of, study_provenance

from Site.logutils import log

NON_DISSIPATIVE = "non-dissipative (counterexample regime)"

# Fewer samples than this leave the three parameter fit underdetermined.
MIN_FIT_SAMPLES = 8


def decay_run(grid, conf, params, solver, amplitude, label):
    '''
    One run from a bump of the given amplitude, returning (record, series rows).
    '''
    rng = member_rngs(seed_of(conf), 1)[0]
    state0 = initial_state(grid, conf["initial"], rng, amplitude=amplitude)
    record = {"label": label, "amplitude": amplitude, "initial_norm": state_norm(state0)}

    traj, failure = safe_evolve(state0, params, solver, label)
    if failure:
        record.update(failure, failed=True)
        return record, []

    times = traj.times
    norms = [state_norm(s) for s in traj]
    record.update(failed=False, final_norm=norms[-1], final_time=times[-1], samples=len(times))

    if len(times) >= MIN_FIT_SAMPLES:
        fit = fit_dissipative(times, norms)
        record.update(fit._asdict())
        record["regime"] = "dissipative" if fit.omega_fit > 0 else NON_DISSIPATIVE
    else:
        record.update(C_fit=None, omega_fit=None, D_fit=None, residual=None, converged=None, regime=None)

    log.info(f"{label}: norm {norms[0]:.4g} -> {norms[-1]:.4g}, regime {record['regime']}")
    return record, list(zip(times, norms))


def run_dissipative(conf):
    sc = conf["studies"]["dissipative"]
    key = "studies.dissipative."
    grid = grid_of(conf)
    params = params_of(conf)
    solver = solver_of(conf, t_end=sc["t_end"], snapshot_every=sc["snapshot_every"])
    report = ExperimentReport("dissipative", conf, study_provenance(conf, params, solver))

    amplitudes = sc["amplitudes"]
    runs = fan_out(lambda A: decay_run(grid, conf, params, solver, A, f"amplitude {A}"), amplitudes, conf)

    for i, (record, rows) in enumerate(runs):
        report.add_run(**record)
        report.add_series(f"norms_{i}", ("t", "norm"), rows)

    completed = [r for r, _ in runs if not r["failed"]]
    if len(completed) < len(runs):
        report.note(f"{len(runs) - len(completed)} of {len(runs)} runs failed")

    fitted = [r for r in completed if r["omega_fit"] is not None and r["converged"]]
    if fitted:
        omega = min(r["omega_fit"] for r in fitted)
        report.aggregate("omega_min", omega)
        # A failed or unfitted run fails the verdict too.
        passed = omega > sc["min_omega"] and len(fitted) == len(runs)
        report.verdict("omega > min_omega", passed, omega, key + "min_omega", sc["min_omega"])
    else:
        report.skip("omega > min_omega", f"fewer than {MIN_FIT_SAMPLES} snapshots per run", key + "min_omega", sc["min_omega"])

    if sc["t_end"] == 0:
        report.skip("final norms within norm_ratio", "t_end is 0, nothing evolved", key + "norm_ratio", sc["norm_ratio"])
    elif len(completed) >= 2:
        finals = [r["final_norm"] for r in completed]
        ratio = max(finals) / min(finals)
        report.aggregate("final_norm_ratio", ratio)
        report.verdict("final norms within norm_ratio", ratio <= sc["norm_ratio"], ratio, key + "norm_ratio", sc["norm_ratio"])
    else:
        report.skip("final norms within norm_ratio", "fewer than two completed runs", key + "norm_ratio", sc["norm_ratio"])

    if fitted:
        report.aggregate("D_inf", max(r["D_fit"] for r in fitted))
        try:
            r_inf, C_inf = fit_power_law([r["initial_norm"] for r in fitted], [r["C_fit"] for r in fitted])
            report.aggregate("r_inf", r_inf)
            report.aggregate("C_inf", C_inf)
        except AnalysisError as e:
            report.note(f"r_inf not fitted: {e}")

    ce = sc["counterexample"]
    if ce["enabled"]:
        counter_params = params_of(conf, spec="example1")
        counter_solver = solver_of(conf, t_end=ce["t_end"], snapshot_every=sc["snapshot_every"])
        record, rows = decay_run(grid, conf, counter_params, counter_solver, ce["amplitude"], "counterexample")
        report.add_run(**record)
        report.add_series("norms_counterexample", ("t", "norm"), rows)
        name = "counterexample flagged non-dissipative"
        if record["failed"] or record["omega_fit"] is None:
            report.skip(name, "counterexample run produced no fit", key + "counterexample.max_omega", ce["max_omega"])
        else:
            omega = record["omega_fit"]
            report.aggregate("counterexample_regime", record["regime"])
            report.verdict(name, omega <= ce["max_omega"], omega, key + "counterexample.max_omega", ce["max_omega"])

    return report
