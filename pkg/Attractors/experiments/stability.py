'''
Pair studies: how the distance between two solutions evolves.

run_pair_stability measures the Lipschitz constant of the semigroup in the H⁻¹ × L²
distance, the time integrated degenerate pairing, and the Hölder exponent with which the
sup-norm of the difference follows the initial distance.

run_smoothing confronts pairs near a base point with the contraction structure

    ‖u₁(T) − u₂(T)‖_X  ≤  ½‖u₁₀ − u₂₀‖_X + C_A2·‖difference‖_Y
    ‖difference‖_Z      ≤  C_A3·‖u₁₀ − u₂₀‖_X

where Y collects W, v and ∇v on {M₀ > δ} over (t₁, T) and Z is the parabolic norm of (W, v)
on {M₀ > δ/2}. The smallest constants C_A2 and C_A3 that make each pair consistent are
reported. Pairs whose difference lives where M₀ ≤ δ/4 are the pure contraction case:
there the Y-term is small and the distance itself has to halve.

Naming conventions used herein:

x0        ‖u₁₀ − u₂₀‖_X, the initial distance
lhs       ‖u₁(T) − u₂(T)‖_X
L0        sup_{s ≤ t} x(s)/x0, the empirical Lipschitz constant up to t
U         max of M₁, M₂ over [0, T] × {M₀ ≤ δ}
'''
import math

import numpy as np

from scipy.integrate import trapezoid

from ..numerics.analysis import sublevel_mask, sublevel_supremum
from ..numerics.model import ModelError, kappa
from ..numerics.norms import (difference_z_norm, lp_norm, sublevel_gradient_norm, sublevel_l2_norm, workspace_for,
                              x_norm)
from ..numerics.solver import SolverError, difference, evolve_pair, make_state
from .config import seed_of
from .initial import ensemble, initial_state, member_rngs, perturb, sine_profile, trig
from .report import ExperimentReport
from .runner import fan_out, grid_of, params_of, solver_of, study_provenance

from Site.logutils import log, run_label


def _paired(base, other, params, solver, ws, label):
    try:
        with run_label(label):
            return evolve_pair(base, other, params, solver, ws=ws), None
    except SolverError as e:
        log.warning(f"{label}: solver failed: {e}")
        return None, {"reason": e.reason, "message": str(e)}


def _sup_difference(paired):
    '''
    max over snapshots of max(‖W‖_∞, ‖v‖_∞).
    '''
    best = 0.0
    for a, b in zip(paired.first, paired.second):
        W, v = difference(a, b)
        best = max(best, lp_norm(W, np.inf), lp_norm(v, np.inf))
    return best


def pair_run(base, index, epsilon, params, solver, ws, sc):
    '''
    Evolves base against its ε-perturbation and returns (record, series rows).
    '''
    label = f"base {index}, epsilon {epsilon}"
    other = perturb(base, epsilon, sc["perturb"])
    x0 = x_norm(ws, *difference(base, other))
    record = {"label": label, "base": index, "epsilon": epsilon, "x0": x0, "skipped": False, "failed": False}

    if x0 == 0:
        record["skipped"] = True
        return record, []

    paired, failure = _paired(base, other, params, solver, ws, label)
    if failure:
        record.update(failure, failed=True)
        return record, []

    times = list(paired.diffs.keys())
    ratios = np.array([d.x_combined / x0 for d in paired.diffs.values()])
    L0 = np.maximum.accumulate(ratios)
    pairing = [d.pairing for d in paired.diffs.values()]
    sup = _sup_difference(paired)

    record.update(L0=float(L0[-1]),
                  L0_finite=bool(np.all(np.isfinite(L0))),
                  L0_monotone=bool(np.all(np.diff(L0) >= 0)),
                  pairing_integral=float(trapezoid(pairing, times)) if len(times) > 1 else 0.0,
                  sup_difference=sup)
    for theta in sc["thetas"]:
        record[f"holder_{theta}"] = sup / x0 ** theta

    return record, [(t, r, l) for t, r, l in zip(times, ratios, L0)]


def run_pair_stability(conf):
    sc = conf["studies"]["pair"]
    key = "studies.pair."
    grid = grid_of(conf)
    params = params_of(conf)
    solver = solver_of(conf, t_end=sc["t_end"], snapshot_every=sc["snapshot_every"])
    ws = workspace_for(grid)
    report = ExperimentReport("pair", conf, study_provenance(conf, params, solver))

    bases = ensemble(grid, conf["initial"], seed_of(conf), conf["ensemble"]["count"], conf["ensemble"]["spread"])
    jobs = [(i, eps) for i in range(len(bases)) for eps in sc["epsilons"]]
    runs = fan_out(lambda job: pair_run(bases[job[0]], job[0], job[1], params, solver, ws, sc), jobs, conf)

    for record, rows in runs:
        report.add_run(**record)
        if rows:
            report.add_series(f"lipschitz_{record['base']}_{record['epsilon']}", ("t", "ratio", "L0"), rows)

    done = [r for r, _ in runs if not r["skipped"] and not r["failed"]]
    skipped = sum(r["skipped"] for r, _ in runs)
    failed = sum(r["failed"] for r, _ in runs)
    if skipped:
        report.note(f"{skipped} pairs skipped: zero initial difference")
    if failed:
        report.note(f"{failed} pairs failed in the solver")

    if not done:
        if not failed:
            report.note("all pairs skipped")
        for name, k in (("L0 finite and non-decreasing", "max_L0"), ("L0 stable across epsilon", "stability_tol"),
                        ("holder exponent found", "holder_growth")):
            report.skip(name, "no evaluable pairs", key + k, sc[k])
        if failed:
            report.verdict("pairs completed", failed <= sc["max_failed_pairs"], failed, key + "max_failed_pairs",
                           sc["max_failed_pairs"])
        return report

    L0_max = max(r["L0"] for r in done)
    report.aggregate("L0_max", L0_max)
    report.aggregate("pairing_integral_max", max(r["pairing_integral"] for r in done))
    report.verdict("L0 finite and non-decreasing",
                   all(r["L0_finite"] and r["L0_monotone"] for r in done) and L0_max <= sc["max_L0"]
                   and failed <= sc["max_failed_pairs"], L0_max, key + "max_L0", sc["max_L0"])

    by_base = {}
    for r in done:
        by_base.setdefault(r["base"], []).append(r)

    spreads = [max(r["L0"] for r in rs) / min(r["L0"] for r in rs) - 1.0 for rs in by_base.values() if len(rs) > 1]
    if spreads:
        spread = max(spreads)
        report.aggregate("L0_spread", spread)
        report.verdict("L0 stable across epsilon", spread <= sc["stability_tol"], spread, key + "stability_tol",
                       sc["stability_tol"])
    else:
        report.skip("L0 stable across epsilon", "fewer than two epsilons per base", key + "stability_tol",
                    sc["stability_tol"])

    theta_inf = None
    for theta in sorted(sc["thetas"], reverse=True):
        bounded = True
        for rs in by_base.values():
            rs = sorted(rs, key=lambda r: r["epsilon"])
            bounded &= rs[0][f"holder_{theta}"] <= sc["holder_growth"] * rs[-1][f"holder_{theta}"]
        if bounded:
            theta_inf = theta
            break
    report.aggregate("theta_inf", theta_inf)
    report.verdict("holder exponent found", theta_inf is not None, theta_inf, key + "holder_growth", sc["holder_growth"])
    return report


def _random_member(base, epsilon, rng, modes, where=None):
    '''
    base plus a random nonnegative perturbation of M and a signed one of ρ, both of size
    at most ε and restricted to where.
    '''
    grid = base.grid
    where = np.ones(grid.shape, dtype=bool) if where is None else where
    M = base.M.values + epsilon * rng.uniform(0.5, 1.0) * trig(grid, 1.0, modes, rng) * where
    rho = base.rho.values + epsilon * rng.uniform(-1.0, 1.0) * sine_profile(grid) * where
    return make_state(grid, M, np.maximum(rho, 0.0), base.time)


def _window(paired, start, end):
    '''
    The snapshot pairs with start < t ≤ end.
    '''
    slack = 1e-9 * max(1.0, end)
    return [(a, b) for a, b in zip(paired.first, paired.second) if start + slack < a.time <= end + slack]


def evaluate_pair(paired, base, x0, delta, T, ws, sc, kap):
    '''
    The smoothing terms of one evolved pair at one (δ, T).
    '''
    dt = sc["snapshot_every"]
    lhs = x_norm(ws, *difference(paired.first.at(T), paired.second.at(T)))
    rhs = 0.5 * x0

    y_mask = sublevel_mask(base.M, delta)
    z_mask = sublevel_mask(base.M, 0.5 * delta)
    window = _window(paired, sc["t1_fraction"] * T, T)
    diffs = [difference(a, b) for a, b in window]

    if diffs:
        weights = [dt] * len(diffs)
        W = [d[0] for d in diffs]
        v = [d[1] for d in diffs]
        y_term = math.sqrt(sublevel_l2_norm(W, y_mask, weights) ** 2 + sublevel_l2_norm(v, y_mask, weights) ** 2
                           + sublevel_gradient_norm(v, y_mask, weights) ** 2)
    else:
        W = v = []
        y_term = 0.0
    z_term = difference_z_norm(W, v, z_mask, dt) if len(W) >= 2 and not z_mask.empty else 0.0

    excess = max(lhs - rhs, 0.0)
    violation = False
    if y_term > 0:
        C_A2 = excess / y_term
    elif excess > sc["violation_tol"] * x0:
        C_A2 = math.inf
        violation = True
    else:
        C_A2 = 0.0

    U = sublevel_supremum(paired.first, paired.second, y_mask, until=T)
    return {"delta": delta,
            "T": T,
            "lhs": lhs,
            "rhs": rhs,
            "y_term": y_term,
            "z_term": z_term,
            "C_A2": C_A2,
            "C_A3": z_term / x0,
            "violation": violation,
            "contracted": lhs <= rhs * (1.0 + sc["contraction_tol"]),
            "below_x0": lhs < x0,
            "U": U,
            "U_kappa": U ** kap if kap is not None else None}


def smoothing_run(job, base, params, solver, ws, sc, modes, kap):
    kind, delta, index, rng = job
    where = None if kind == "generic" else base.M.values <= sc["localized_factor"] * delta
    u1 = _random_member(base, sc["epsilon"], rng, modes, where)
    u2 = _random_member(base, sc["epsilon"], rng, modes, where)
    x0 = x_norm(ws, *difference(u1, u2))
    label = f"{kind} pair {index}" + (f" at delta {delta}" if delta is not None else "")
    head = {"label": label, "kind": kind, "pair": index, "x0": x0, "skipped": False, "failed": False}

    if x0 == 0:
        return [dict(head, skipped=True)]

    paired, failure = _paired(u1, u2, params, solver, ws, label)
    if failure:
        return [dict(head, failed=True, **failure)]

    deltas = sc["deltas"] if kind == "generic" else [delta]
    return [dict(head, **evaluate_pair(paired, base, x0, d, T, ws, sc, kap))
            for d in deltas for T in sorted(sc["horizons"])]


def kappa_or_none(params):
    try:
        return kappa(params)
    except ModelError:
        return None


def run_smoothing(conf):
    sc = conf["studies"]["smoothing"]
    key = "studies.smoothing."
    grid = grid_of(conf)
    params = params_of(conf)
    horizons = sorted(sc["horizons"])
    solver = solver_of(conf, t_end=horizons[-1], snapshot_every=sc["snapshot_every"])
    ws = workspace_for(grid)
    report = ExperimentReport("smoothing", conf, study_provenance(conf, params, solver))

    seed = seed_of(conf)
    base = initial_state(grid, conf["initial"], member_rngs([seed, 2], 1)[0])
    kap = kappa_or_none(params)
    modes = conf["initial"]["modes"]
    report.aggregate("kappa", kap)
    if kap is None:
        report.note("balance conditions fail, U^kappa not reported")

    # Generic pairs draw from their own seed stream so a larger ensemble extends a smaller one.
    jobs = [("generic", None, k, rng) for k, rng in enumerate(member_rngs(seed, sc["pairs"]))]
    for j, d in enumerate(sorted(sc["deltas"])):
        jobs += [("localized", d, k, rng) for k, rng in enumerate(member_rngs([seed, 1, j], sc["localized_pairs"]))]

    rows = [r for batch in fan_out(lambda job: smoothing_run(job, base, params, solver, ws, sc, modes, kap), jobs, conf)
            for r in batch]
    for r in rows:
        report.add_run(**r)

    evaluated = [r for r in rows if not r["skipped"] and not r["failed"]]
    generic = [r for r in evaluated if r["kind"] == "generic"]
    localized = [r for r in evaluated if r["kind"] == "localized"]
    if any(r["skipped"] for r in rows):
        report.note("identical pairs skipped: all terms 0, trivially consistent")
    failed = [r for r in rows if r["failed"]]
    if failed:
        report.note(f"{len(failed)} pairs failed in the solver")

    violations = sum(r["violation"] for r in evaluated)
    report.verdict("no Y-term violations", violations == 0 and not failed, violations, key + "violation_tol",
                   sc["violation_tol"])

    if generic:
        C_A2 = max(r["C_A2"] for r in generic)
        C_A3 = max(r["C_A3"] for r in generic)
        report.aggregate("C_A2_max", C_A2)
        report.aggregate("C_A3_max", C_A3)
        report.aggregate("U_max", max(r["U"] for r in generic))
        report.verdict("C_A2 and C_A3 finite", max(C_A2, C_A3) <= sc["max_constant"], max(C_A2, C_A3),
                       key + "max_constant", sc["max_constant"])
        last = [r for r in generic if r["T"] == horizons[-1]]
        ratio = max(r["lhs"] / r["x0"] for r in last)
        report.verdict("generic pairs closer at the last horizon", ratio < 1.0 + sc["closer_tol"], ratio,
                       key + "closer_tol", sc["closer_tol"])
        report.add_series("generic", ("delta", "T", "lhs_over_x0", "C_A2", "C_A3"),
                          [(r["delta"], r["T"], r["lhs"] / r["x0"], r["C_A2"], r["C_A3"]) for r in generic])
    else:
        report.skip("C_A2 and C_A3 finite", "no generic pairs evaluated", key + "max_constant", sc["max_constant"])

    if localized:
        point = None
        for T in horizons:
            for d in sorted(sc["deltas"]):
                here = [r for r in localized if r["T"] == T and r["delta"] == d]
                if here and all(r["contracted"] for r in here):
                    point = {"delta": d, "T": T}
                    break
            if point:
                break
        report.aggregate("contraction_point", point)
        report.verdict("localized pairs contract", point is not None,
                       min(r["lhs"] / r["x0"] for r in localized), key + "contraction_tol", sc["contraction_tol"])
        report.add_series("localized", ("delta", "T", "lhs_over_x0", "y_term"),
                          [(r["delta"], r["T"], r["lhs"] / r["x0"], r["y_term"]) for r in localized])
    else:
        report.skip("localized pairs contract", "no localized pairs evaluated", key + "contraction_tol",
                    sc["contraction_tol"])

    return report
