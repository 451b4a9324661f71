import json
import math
import os
import tempfile

import numpy as np

from numpy.testing import assert_array_equal

from django.test import SimpleTestCase, tag

from Attractors.experiments import STUDIES, ConfigError, ExperimentReport, build_config, load_config
from Attractors.experiments.config import DEFAULT_CONFIG, parse_override, seed_of
from Attractors.experiments.dimension import measure_cloud
from Attractors.experiments.initial import ensemble, initial_M, perturb, sine_profile
from Attractors.experiments.stability import evaluate_pair
from Attractors.numerics.grid import ScalarField, make_grid
from Attractors.numerics.model import make_params
from Attractors.numerics.norms import lp_norm, workspace_for, x_norm
from Attractors.numerics.solver import Trajectory, difference, evolve_pair, make_solver_config, make_state


def small(**overrides):
    '''
    A validated config on a 16 cell grid evaluated on one thread, with dotted overrides.
    '''
    return build_config(dict({"grid.cells": [16], "threads": 1}, **overrides))


def verdicts(report):
    return {v["name"]: v["verdict"] for v in report.verdicts}


def unkeyed(report):
    '''
    Names of verdicts whose tolerance_key does not lead to their tolerance in the report's config.
    '''
    names = []
    for v in report.verdicts:
        node = report.config
        for part in (v["tolerance_key"] or "").split("."):
            node = node.get(part) if isinstance(node, dict) else None
        if v["tolerance_key"] is None or node != v["tolerance"]:
            names.append(v["name"])
    return names


class ConfigTestCase(SimpleTestCase):

    def test_defaults(self):
        conf = build_config()
        self.assertEqual(conf["model"], DEFAULT_CONFIG["model"])
        self.assertEqual(seed_of(conf), 1)
        self.assertIsNot(conf["studies"], DEFAULT_CONFIG["studies"])

    def test_merge_and_overrides(self):
        conf = build_config(["solver.t_end=0.5", "model.constants.F5=2"], base={"grid": {"cells": [32]}})
        self.assertEqual(conf["grid"], {"dim": 1, "lengths": [1.0], "cells": [32]})
        self.assertEqual(conf["solver"]["t_end"], 0.5)
        self.assertEqual(conf["model"]["constants"], {"F5": 2})
        self.assertEqual(conf["solver"]["dt_max"], DEFAULT_CONFIG["solver"]["dt_max"])

    def test_unknown_keys(self):
        with self.assertRaises(ConfigError):
            build_config(base={"solver": {"dt_min": 0.1}})
        with self.assertRaises(ConfigError):
            build_config({"studies.pair.epsilon": 0.1})
        with self.assertRaises(ConfigError):
            parse_override("solver.t_end")

    def test_invalid_values(self):
        for overrides in ({"solver.dt_max": -0.1}, {"grid.cells": [2]}, {"model.alpha": 0.0},
                          {"initial.family": "gauss"}, {"seed": -1}, {"threads": 0},
                          {"studies.pair.thetas": [1.5]}, {"studies.regularization.ladder": [10.5]},
                          {"studies.dimension.radii": [0.1, 0.2]}, {"output.save_trajectories": 1},
                          {"studies.regularization.decrease_tol": 1.0}, {"studies.pair.max_failed_pairs": -1},
                          {"studies.smoothing.max_constant": 0}):
            with self.assertRaises(ConfigError, msg=repr(overrides)):
                build_config(overrides)

    def test_load_config(self):
        with tempfile.TemporaryDirectory() as d:
            with self.assertRaises(ConfigError):
                load_config(os.path.join(d, "missing.json"))

            path = os.path.join(d, "broken.json")
            with open(path, "w") as fh:
                fh.write('{\n  "grid":\n}\n')
            with self.assertRaisesMessage(ConfigError, "line 3"):
                load_config(path)

            with open(path, "w") as fh:
                fh.write("[1, 2]")
            with self.assertRaises(ConfigError):
                load_config(path)

            with open(path, "w") as fh:
                json.dump({"solver": {"t_end": 2.0}}, fh)
            self.assertEqual(build_config(base=load_config(path))["solver"]["t_end"], 2.0)


class InitialTestCase(SimpleTestCase):

    def setUp(self):
        self.grid = make_grid(1, [1.0], [64])
        self.initial = dict(DEFAULT_CONFIG["initial"])

    def test_families(self):
        for family in ("bump", "plateau", "trig", "zero"):
            M = initial_M(self.grid, dict(self.initial, family=family), np.random.default_rng(0))
            self.assertTrue(np.all(M >= 0), family)
            self.assertLessEqual(M.max(), self.initial["amplitude"])

        bump = initial_M(self.grid, self.initial)
        x = (np.arange(64) + 0.5) / 64
        assert_array_equal(bump[np.abs(x - 0.5) >= 0.25], 0.0)
        self.assertEqual(initial_M(self.grid, dict(self.initial, family="plateau")).max(), 1.0)
        self.assertEqual(initial_M(self.grid, dict(self.initial, family="trig"), np.random.default_rng(1)).max(), 1.0)

    def test_ensemble(self):
        three = ensemble(self.grid, self.initial, 7, 3, 0.1)
        again = ensemble(self.grid, self.initial, 7, 3, 0.1)
        self.assertEqual([s.digest() for s in three], [s.digest() for s in again])
        # a larger ensemble extends a smaller one
        self.assertEqual([s.digest() for s in ensemble(self.grid, self.initial, 7, 2, 0.1)],
                         [s.digest() for s in three[:2]])
        self.assertNotEqual(three[0].digest(), three[1].digest())

    def test_perturb(self):
        state = make_state(self.grid, initial_M(self.grid, self.initial))
        other = perturb(state, 0.01, "rho")
        assert_array_equal(other.M.values, state.M.values)
        np.testing.assert_allclose(other.rho.values - state.rho.values, 0.01 * sine_profile(self.grid))
        # a perturbation of rho alone is measured by its L² norm
        expected = 0.01 * lp_norm(ScalarField(self.grid, sine_profile(self.grid)), 2)
        self.assertAlmostEqual(x_norm(workspace_for(self.grid), *difference(other, state)), expected, places=12)
        both = perturb(state, 0.01, "both")
        self.assertTrue(np.all(both.M.values >= state.M.values))


class DissipativeTestCase(SimpleTestCase):

    def test_zero_horizon_skips(self):
        report = STUDIES["dissipative"](small(**{"studies.dissipative.t_end": 0.0,
                                                 "studies.dissipative.counterexample.enabled": False}))
        self.assertEqual(set(verdicts(report).values()), {"skipped"})
        self.assertTrue(report.passed)
        self.assertEqual(len(report.records), 3)

    def test_fit_is_reported(self):
        report = STUDIES["dissipative"](small(**{"studies.dissipative.amplitudes": [0.5, 1.0],
                                                 "studies.dissipative.t_end": 2.0,
                                                 "studies.dissipative.counterexample.enabled": False}))
        self.assertIn("omega > min_omega", verdicts(report))
        self.assertTrue(all(r["omega_fit"] is not None and r["regime"] is not None for r in report.records))
        self.assertEqual(list(report.series), ["norms_0", "norms_1"])
        self.assertTrue(all(r["samples"] == 9 for r in report.records))


class PairTestCase(SimpleTestCase):

    def test_all_pairs_skipped(self):
        report = STUDIES["pair"](small(**{"studies.pair.epsilons": [0], "ensemble.count": 2}))
        self.assertIn("all pairs skipped", report.notes)
        self.assertEqual(set(verdicts(report).values()), {"skipped"})
        self.assertTrue(report.passed)

    def test_lipschitz_ratio(self):
        report = STUDIES["pair"](small(**{"studies.pair.epsilons": [1e-2, 1e-3], "ensemble.count": 1,
                                          "studies.pair.t_end": 0.2, "studies.pair.snapshot_every": 0.1}))
        self.assertEqual(len(report.records), 2)
        for r in report.records:
            self.assertGreaterEqual(r["L0"], 1.0 - 1e-9)
            self.assertTrue(r["L0_monotone"])
            self.assertIn("holder_0.5", r)
        self.assertEqual(verdicts(report)["L0 finite and non-decreasing"], "pass")
        self.assertIn("L0_spread", report.aggregates)


class SmoothingTestCase(SimpleTestCase):

    def test_empty_y_region_is_a_violation(self):
        '''
        With δ above max M₀ the Y-term vanishes, so any distance left above ½x0 is a violation.
        '''
        report = STUDIES["smoothing"](small(**{"studies.smoothing.deltas": [10],
                                               "studies.smoothing.horizons": [0.01],
                                               "studies.smoothing.snapshot_every": 0.01,
                                               "studies.smoothing.pairs": 1,
                                               "studies.smoothing.localized_pairs": 1}))
        self.assertEqual(verdicts(report)["no Y-term violations"], "fail")
        self.assertFalse(report.passed)
        generic = [r for r in report.records if r["kind"] == "generic"]
        self.assertEqual(generic[0]["y_term"], 0.0)
        self.assertEqual(generic[0]["C_A2"], math.inf)
        self.assertAlmostEqual(report.aggregates["kappa"], 1.0 / 3.0)

    def test_z_term_includes_the_rho_difference(self):
        grid = make_grid(1, [1.0], [32])
        x = (np.arange(32) + 0.5) / 32
        a = make_state(grid, np.zeros(32))
        b = make_state(grid, np.zeros(32), 1.0 + 0.1 * np.sin(np.pi * x))
        paired = evolve_pair(a, b, make_params(4.0, 3.5, 3.5), make_solver_config(t_end=0.2, snapshot_every=0.05))
        ws = workspace_for(grid)
        x0 = x_norm(ws, *difference(a, b))
        sc = dict(DEFAULT_CONFIG["studies"]["smoothing"], snapshot_every=0.05)
        record = evaluate_pair(paired, make_state(grid, np.ones(32)), x0, 0.1, 0.2, ws, sc, None)
        self.assertGreater(record["z_term"], 0.0)
        self.assertAlmostEqual(record["C_A3"], record["z_term"] / x0)


class RegularizationTestCase(SimpleTestCase):

    def test_single_rung_is_insufficient(self):
        report = STUDIES["regularization"](small(**{"studies.regularization.ladder": [10],
                                                    "studies.regularization.t_end": 0.05}))
        self.assertEqual(verdicts(report), {"differences strictly decreasing": "skipped"})
        self.assertEqual(report.aggregates["differences"], [])

    def test_threads_do_not_change_results(self):
        overrides = {"studies.regularization.ladder": [10, 20, 40], "studies.regularization.t_end": 0.05}
        serial = STUDIES["regularization"](small(**overrides))
        pooled = STUDIES["regularization"](small(threads=3, **overrides))
        self.assertEqual(serial.as_dict()["runs"], pooled.as_dict()["runs"])
        self.assertEqual(len(serial.aggregates["differences"]), 2)


class PropagationTestCase(SimpleTestCase):

    def test_empty_support(self):
        report = STUDIES["propagation"](small(**{"initial.family": "zero", "studies.propagation.t_end": 0.1}))
        self.assertIn("M0 has empty support, nothing propagates", report.notes)
        self.assertEqual(report.aggregates["front_speed"], 0.0)
        self.assertEqual(report.aggregates["initial_support"], {"measure": 0.0, "radius": 0.0})
        self.assertTrue(report.passed)

    def test_nondegenerate_run_fills_the_domain(self):
        report = STUDIES["propagation"](small(**{"studies.propagation.t_end": 0.1}))
        name = "nondegenerate run fills the domain within one snapshot"
        self.assertEqual(verdicts(report)[name], "pass")
        self.assertEqual(list(report.series), ["support_degenerate", "support_nondegenerate"])


class DimensionTestCase(SimpleTestCase):

    def setUp(self):
        self.sc = dict(DEFAULT_CONFIG["studies"]["dimension"], radii=[1 / 4, 1 / 8, 1 / 16, 1 / 32, 1 / 64])

    def test_circle(self):
        t = np.linspace(0.0, 2.0 * np.pi, 4000, endpoint=False)
        fit = measure_cloud(np.stack((np.cos(t), np.sin(t)), axis=1), self.sc)
        self.assertAlmostEqual(fit["dimension"], 1.0, delta=0.2)
        self.assertEqual(fit["points"], 4000)

    def test_too_few_points(self):
        with self.assertRaises(ConfigError):
            measure_cloud(np.zeros((9, 2)), self.sc)

    def test_too_few_snapshots(self):
        with self.assertRaises(ConfigError):
            STUDIES["dimension"](small(**{"studies.dimension.t_end": 1.0, "studies.dimension.transient": 0.5}))
        with self.assertRaises(ConfigError):
            STUDIES["dimension"](small(**{"studies.dimension.t_end": 1.0, "studies.dimension.transient": 2.0}))

    def test_steady_state_collapses_to_a_point(self):
        report = STUDIES["dimension"](small(**{"initial.family": "zero",
                                               "studies.dimension.t_end": 3.0,
                                               "studies.dimension.transient": 2.0,
                                               "studies.dimension.snapshot_every": 0.1,
                                               "studies.dimension.counterexample.enabled": False}))
        self.assertEqual(report.aggregates["dimension"], 0.0)
        self.assertEqual(verdicts(report), {"finite dimension": "pass"})


class ToleranceKeyTestCase(SimpleTestCase):

    def test_every_verdict_names_its_tolerance(self):
        runs = (("dissipative", {"studies.dissipative.t_end": 0.0, "studies.dissipative.counterexample.enabled": False}),
                ("pair", {"studies.pair.epsilons": [0], "ensemble.count": 2}),
                ("pair", {"studies.pair.epsilons": [1e-2, 1e-3], "ensemble.count": 1,
                          "studies.pair.t_end": 0.2, "studies.pair.snapshot_every": 0.1}),
                ("smoothing", {"studies.smoothing.deltas": [10], "studies.smoothing.horizons": [0.01],
                               "studies.smoothing.snapshot_every": 0.01, "studies.smoothing.pairs": 1,
                               "studies.smoothing.localized_pairs": 1}),
                ("regularization", {"studies.regularization.ladder": [10], "studies.regularization.t_end": 0.05}),
                ("regularization", {"studies.regularization.ladder": [10, 20, 40],
                                    "studies.regularization.t_end": 0.05}),
                ("propagation", {"studies.propagation.t_end": 0.1}))
        for study, overrides in runs:
            report = STUDIES[study](small(**overrides))
            self.assertTrue(report.verdicts, study)
            self.assertEqual(unkeyed(report), [], f"{study} {overrides}")

    def test_tolerances_move_the_verdicts(self):
        overrides = {"studies.pair.epsilons": [1e-2, 1e-3], "ensemble.count": 1,
                     "studies.pair.t_end": 0.2, "studies.pair.snapshot_every": 0.1}
        strict = STUDIES["pair"](small(**dict(overrides, **{"studies.pair.max_L0": 0.5})))
        # L0 is at least 1, the ratio at t = 0
        self.assertEqual(verdicts(strict)["L0 finite and non-decreasing"], "fail")
        self.assertEqual(strict["L0 finite and non-decreasing"]["tolerance"], 0.5)


@tag("slow")
class AcceptanceTestCase(SimpleTestCase):
    '''
    The studies on the default config, with the outcomes the model is expected to show.
    '''

    def study(self, name, **overrides):
        report = STUDIES[name](build_config(overrides))
        self.assertEqual(unkeyed(report), [])
        return verdicts(report)

    def test_dissipative(self):
        outcome = self.study("dissipative")
        self.assertEqual(outcome["omega > min_omega"], "pass")
        self.assertEqual(outcome["counterexample flagged non-dissipative"], "pass")

    def test_regularization(self):
        self.assertEqual(self.study("regularization")["differences strictly decreasing"], "pass")

    def test_pair_stability(self):
        self.assertEqual(self.study("pair")["L0 stable across epsilon"], "pass")

    def test_smoothing(self):
        outcome = self.study("smoothing")
        self.assertEqual(outcome["localized pairs contract"], "pass")
        self.assertEqual(outcome["C_A2 and C_A3 finite"], "pass")

    def test_propagation(self):
        outcome = self.study("propagation")
        self.assertEqual(outcome["degenerate front speed below front_fraction of the initial radius"], "pass")


class ReportTestCase(SimpleTestCase):

    def setUp(self):
        self.conf = small()
        self.report = ExperimentReport("pair", self.conf, {"seed": 1})
        self.report.add_run(label="a", x0=0.5, history=[1, 2])
        self.report.aggregate("L0_max", 1.25)
        self.report.verdict("L0 finite", True, 1.25, None, None)
        self.report.add_series("ratios", ("t", "ratio"), [(0.0, 1.0), (0.1, None)])

    def test_write(self):
        with tempfile.TemporaryDirectory() as d:
            directory = self.report.write(d)
            with open(os.path.join(directory, "report.json")) as fh:
                document = json.load(fh)
            self.assertEqual(document["report_hash"], self.report.report_hash())
            self.assertIn("timestamp", document)
            self.assertTrue(document["passed"])
            with open(os.path.join(directory, "runs.csv")) as fh:
                self.assertEqual(fh.read().splitlines(), ["label,x0", "a,0.5"])
            with open(os.path.join(directory, "ratios.dat")) as fh:
                self.assertEqual(fh.read().splitlines(), ["# t ratio", "0.0 1.0", "0.1 nan"])

    def test_hash_excludes_timestamp(self):
        with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
            self.report.write(a)
            self.report.write(b)
            with open(os.path.join(a, "pair", "report.json")) as fa, open(os.path.join(b, "pair", "report.json")) as fb:
                first, second = json.load(fa), json.load(fb)
        first.pop("timestamp")
        second.pop("timestamp")
        self.assertEqual(first, second)

    def test_failed_and_skipped_verdicts(self):
        self.report.skip("holder exponent found", "no data")
        self.assertTrue(self.report.passed)
        self.report.verdict("L0 stable", False, 0.5, "studies.pair.stability_tol", 0.2)
        self.assertFalse(self.report.passed)
        self.assertEqual(self.report["L0 stable"]["tolerance_key"], "studies.pair.stability_tol")
        self.assertEqual(self.report.summary(), "1 pass, 1 fail, 1 skipped")

    def test_trajectories_only_when_asked(self):
        grid = make_grid(1, [1.0], [8])
        traj = Trajectory()
        traj.add(make_state(grid, np.zeros(8)))
        self.report.keep_trajectory("main", traj)
        self.assertEqual(len(self.report.trajectories), 0)

        report = ExperimentReport("pair", small(**{"output.save_trajectories": True}))
        report.keep_trajectory("main", traj)
        with tempfile.TemporaryDirectory() as d:
            directory = report.write(d)
            self.assertTrue(os.path.isfile(os.path.join(directory, "main", "manifest.json")))
