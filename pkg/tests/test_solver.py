import json
import os
import tempfile

import numpy as np

from numpy.testing import assert_allclose, assert_array_equal

from django.test import SimpleTestCase

from Attractors.numerics.grid import ScalarField, make_grid
from Attractors.numerics.model import make_params
from Attractors.numerics.norms import lp_norm
from Attractors.numerics.solver import (SolverConfigError, SolverError, State, StateError, TimeStepError, Trajectory,
                                        boundary_flux, evolve, evolve_pair, make_solver_config, make_state, mass,
                                        snapshot_times, stable_dt, step, step_with_budget)
from Attractors.numerics.storage import load_field, load_trajectory, save_state, save_trajectory


def bump(grid, amplitude=1.0, radius=0.25):
    x = (np.arange(grid.cells[0]) + 0.5) / grid.cells[0]
    r = np.abs(x - 0.5)
    return np.where(r < radius, amplitude * np.cos(0.5 * np.pi * r / radius) ** 2, 0.0)


class StateTestCase(SimpleTestCase):

    def test_contract(self):
        grid = make_grid(1, [1.0], [8])
        with self.assertRaises(StateError):
            make_state(grid, -np.ones(8))
        with self.assertRaises(StateError):
            make_state(grid, np.ones(8), -np.ones(8))
        with self.assertRaises(StateError):
            make_state(grid, np.ones(8), time=-1.0)
        rho = make_state(grid, np.ones(8)).rho
        with self.assertRaises(StateError):
            State(rho, rho)

    def test_digest(self):
        grid = make_grid(1, [1.0], [8])
        a = make_state(grid, np.ones(8))
        self.assertEqual(a.digest(), make_state(grid, np.ones(8)).digest())
        self.assertNotEqual(a.digest(), a.at_time(1.0).digest())


class ConfigTestCase(SimpleTestCase):

    def test_contract(self):
        for bad in ({"dt_max": -0.1}, {"reg_n": 0}, {"reg_n": 2.5}, {"cfl_safety": 1.5}, {"t_end": -1.0},
                    {"snapshot_every": 0.0}, {"scheme": "rk4"}, {"tolerance": 1.0}):
            with self.assertRaises(SolverConfigError, msg=repr(bad)):
                make_solver_config(**bad)

    def test_snapshot_times(self):
        assert_allclose(snapshot_times(0.0, make_solver_config(t_end=1.0, snapshot_every=0.25)),
                        [0.0, 0.25, 0.5, 0.75, 1.0])
        self.assertEqual(snapshot_times(2.0, make_solver_config(t_end=0.0)), [2.0])
        times = snapshot_times(0.0, make_solver_config(t_end=1.0, snapshot_every=0.3))
        self.assertEqual(times[-1], 1.0)
        self.assertEqual(len(times), 5)


class StepTestCase(SimpleTestCase):

    def setUp(self):
        self.grid = make_grid(1, [1.0], [32])
        self.params = make_params(4.0, 3.5, 3.5)
        self.config = make_solver_config(reg_n=10, t_end=0.05, snapshot_every=0.01)
        self.state = make_state(self.grid, bump(self.grid))

    def test_time_step_contract(self):
        limit = stable_dt(self.state, self.params, self.config)
        self.assertLessEqual(limit, self.config.cfl_safety * self.config.dt_max)
        with self.assertRaises(TimeStepError):
            step(self.state, self.params, self.config, 2.0 * limit)
        with self.assertRaises(TimeStepError):
            step(self.state, self.params, self.config, 0.0)
        self.assertAlmostEqual(step(self.state, self.params, self.config, limit).time, limit)

    def test_zero_biomass_stays_zero(self):
        rng = np.random.default_rng(5)
        state = make_state(self.grid, np.zeros(32), rng.uniform(0.0, 2.0, 32))
        for s in evolve(state, self.params, self.config):
            assert_array_equal(s.M.values, 0.0)

    def test_positivity_on_random_data(self):
        '''
        Nonnegative data stay nonnegative at every snapshot, to the last bit.
        '''
        grid = make_grid(1, [1.0], [16])
        config = make_solver_config(reg_n=10, t_end=0.01, snapshot_every=0.005)
        rng = np.random.default_rng(17)
        for _ in range(1000):
            M = rng.uniform(0.0, 1.0, 16) * (rng.uniform(size=16) < 0.6)
            rho = rng.uniform(0.0, 2.0, 16)
            for s in evolve(make_state(grid, M, rho), self.params, config):
                self.assertGreaterEqual(s.M.values.min(), 0.0)
                self.assertGreaterEqual(s.rho.values.min(), 0.0)

    def test_positivity_in_two_dimensions(self):
        grid = make_grid(2, [1.0, 1.0], [12, 12])
        rng = np.random.default_rng(23)
        config = make_solver_config(reg_n=10, t_end=0.01, snapshot_every=0.005)
        for _ in range(10):
            state = make_state(grid, rng.uniform(0.0, 1.0, (12, 12)), rng.uniform(0.0, 2.0, (12, 12)))
            for s in evolve(state, self.params, config):
                self.assertGreaterEqual(s.M.values.min(), 0.0)
                self.assertGreaterEqual(s.rho.values.min(), 0.0)

    def test_mass_budget_without_reactions(self):
        '''
        Without reactions ∫M only changes by what leaves through the boundary.
        '''
        params = make_params(4.0, 3.5, 3.5, spec="zero")
        state = make_state(self.grid, np.full(32, 0.5))
        dt = 0.5 * stable_dt(state, params, self.config)
        after, budget = step_with_budget(state, params, self.config, dt)
        flux = boundary_flux(state, params, self.config)
        self.assertLess(flux, 0.0)
        self.assertEqual(budget.consumed, 0.0)
        self.assertLessEqual(abs(budget.outflow + dt * flux), 1e-12 * mass(state))
        self.assertLessEqual(abs(mass(after) - mass(state) - dt * flux), 1e-12 * mass(state))

    def test_mass_budget_with_reactions(self):
        '''
        The change of ∫M is the boundary outflow plus what f removes, across sub-cycled steps too.
        '''
        rng = np.random.default_rng(31)
        for grid in (self.grid, make_grid(2, [1.0, 1.0], [12, 12])):
            for spec in ("example2_corrected", "example2_printed"):
                params = make_params(4.0, 3.5, 3.5, spec=spec)
                state = make_state(grid, rng.uniform(0.0, 2.0, grid.shape), rng.uniform(0.0, 2.0, grid.shape))
                for _ in range(5):
                    after, budget = step_with_budget(state, params, self.config, stable_dt(state, params, self.config))
                    self.assertNotEqual(budget.consumed, 0.0)
                    self.assertGreater(budget.outflow, 0.0)
                    self.assertLessEqual(abs(mass(after) - mass(state) + budget.outflow + budget.consumed),
                                         1e-12 * mass(state), spec)
                    state = after

    def test_rho_stays_between_zero_and_its_bound(self):
        '''
        With consumption ρ never exceeds max(‖ρ₀‖_∞, 1), the boundary value, and never goes negative.
        '''
        rng = np.random.default_rng(41)
        grid = make_grid(1, [1.0], [24])
        config = make_solver_config(reg_n=10, t_end=0.05, snapshot_every=0.01)
        for top in (0.5, 1.0, 3.0):
            for _ in range(10):
                rho = rng.uniform(0.0, top, 24)
                bound = max(float(rho.max()), 1.0)
                for s in evolve(make_state(grid, rng.uniform(0.0, 1.0, 24), rho), self.params, config):
                    self.assertGreaterEqual(s.rho.values.min(), 0.0)
                    self.assertLessEqual(s.rho.values.max(), bound)

    def test_deterministic(self):
        a = evolve(self.state, self.params, self.config)
        b = evolve(self.state, self.params, self.config)
        self.assertEqual([s.digest() for s in a], [s.digest() for s in b])
        self.assertEqual(a.provenance, b.provenance)

    def test_nondegenerate_flag_fills_the_domain(self):
        params = make_params(4.0, 3.5, 3.5, nondegenerate=True)
        traj = evolve(self.state, params, self.config)
        self.assertTrue(np.all(traj.final.M.values > 0))
        self.assertEqual(self.state.M.values[0], 0.0)


def restrict(values):
    '''
    Means of neighbouring cell pairs, a fine 1D field on the next coarser grid.
    '''
    return values.reshape(-1, 2).mean(axis=1)


class ConvergenceTestCase(SimpleTestCase):
    '''
    Smooth data under linear diffusion: M₀ = sin(πx), which shares the trace of M.
    '''

    def setUp(self):
        self.params = make_params(4.0, 3.5, 3.5, nondegenerate=True)
        self.config = make_solver_config(reg_n=10, t_end=0.1, snapshot_every=0.1)

    def final_M(self, cells, config=None):
        grid = make_grid(1, [1.0], [cells])
        x = (np.arange(cells) + 0.5) / cells
        return evolve(make_state(grid, np.sin(np.pi * x)), self.params, config or self.config).final

    @staticmethod
    def difference(coarse, fine, p):
        return lp_norm(ScalarField(coarse.grid, coarse.M.values - restrict(fine.M.values)), p)

    def test_self_convergence(self):
        M64, M128, M256 = (self.final_M(cells) for cells in (64, 128, 256))
        order = np.log2(self.difference(M64, M128, 1) / self.difference(M128, M256, 1))
        self.assertGreaterEqual(order, 0.9)

    def test_semigroup(self):
        '''
        Evolving to t and then on by s matches evolving to t + s, within the discretization error.
        '''
        once = self.final_M(64)
        grid = once.grid
        half = make_solver_config(reg_n=10, t_end=0.05, snapshot_every=0.05)
        twice = evolve(self.final_M(64, half), self.params, half).final
        self.assertAlmostEqual(twice.time, once.time)

        gap = lp_norm(ScalarField(grid, twice.M.values - once.M.values), 2)
        error = self.difference(once, self.final_M(128), 2)
        self.assertGreater(error, 0.0)
        self.assertLessEqual(gap, 10.0 * error)


class TrajectoryTestCase(SimpleTestCase):

    def setUp(self):
        grid = make_grid(1, [1.0], [16])
        self.traj = evolve(make_state(grid, bump(grid)), make_params(4.0, 3.5, 3.5),
                           make_solver_config(t_end=0.1, snapshot_every=0.05))

    def test_layout(self):
        assert_allclose(self.traj.times, [0.0, 0.05, 0.1])
        self.assertEqual(len(self.traj), 3)
        self.assertIs(self.traj.initial, self.traj[0])
        self.assertEqual(self.traj.final.time, 0.1)
        self.assertEqual(len(self.traj.window(0.01, 0.1)), 2)

    def test_at(self):
        self.assertIs(self.traj.at(0.05), self.traj[1])
        mid = self.traj.at(0.075)
        assert_allclose(mid.M.values, 0.5 * (self.traj[1].M.values + self.traj[2].M.values))
        with self.assertRaises(SolverError):
            self.traj.at(0.2)

    def test_order(self):
        traj = Trajectory()
        traj.add(self.traj[1])
        with self.assertRaises(SolverError):
            traj.add(self.traj[0])

    def test_zero_horizon(self):
        grid = make_grid(1, [1.0], [16])
        traj = evolve(make_state(grid, bump(grid)), make_params(4.0, 3.5, 3.5), make_solver_config(t_end=0.0))
        self.assertEqual(len(traj), 1)


class PairTestCase(SimpleTestCase):

    def setUp(self):
        self.grid = make_grid(1, [1.0], [32])
        self.params = make_params(4.0, 3.5, 3.5)
        self.config = make_solver_config(t_end=0.1, snapshot_every=0.05)

    def test_identical_pair(self):
        a = make_state(self.grid, bump(self.grid))
        paired = evolve_pair(a, a, self.params, self.config, delta=0.1)
        self.assertEqual(list(paired.diffs.keys()), paired.first.times)
        for d in paired.diffs.values():
            self.assertEqual(d.x_combined, 0.0)
            self.assertEqual(d.y_sublevel, 0.0)

    def test_lockstep(self):
        a = make_state(self.grid, bump(self.grid))
        b = make_state(self.grid, bump(self.grid, 1.01))
        paired = evolve_pair(a, b, self.params, self.config, delta=0.1)
        self.assertEqual(paired.first.times, paired.second.times)
        norms = list(paired.diffs.values())
        self.assertGreater(norms[0].x_combined, 0.0)
        self.assertGreater(norms[-1].y_sublevel, 0.0)
        self.assertTrue(all(d.pairing >= 0 for d in norms))
        # accumulated norms never shrink
        self.assertTrue(all(q.z_parabolic >= p.z_parabolic for p, q in zip(norms, norms[1:])))

    def test_rho_difference_enters_the_z_norm(self):
        x = (np.arange(32) + 0.5) / 32
        a = make_state(self.grid, np.zeros(32))
        b = make_state(self.grid, np.zeros(32), 1.0 + 0.1 * np.sin(np.pi * x))
        paired = evolve_pair(a, b, self.params, self.config)
        last = paired.diffs.values()[-1]
        # without biomass M stays 0, the whole difference is in rho
        self.assertEqual(last.h_minus1_W, 0.0)
        self.assertGreater(last.l2_v, 0.0)
        self.assertGreater(last.z_parabolic, 0.0)

    def test_grid_mismatch(self):
        other = make_grid(1, [1.0], [16])
        with self.assertRaises(SolverConfigError):
            evolve_pair(make_state(self.grid, bump(self.grid)), make_state(other, bump(other)), self.params, self.config)


class StorageTestCase(SimpleTestCase):

    def test_trajectory_directory(self):
        grid = make_grid(1, [1.0], [16])
        traj = evolve(make_state(grid, bump(grid)), make_params(4.0, 3.5, 3.5), make_solver_config(t_end=0.1, snapshot_every=0.05))
        with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
            first = save_trajectory(traj, a, config={"seed": 1})
            second = save_trajectory(traj, b, config={"seed": 1})
            self.assertEqual(first, second)
            self.assertTrue(os.path.isfile(os.path.join(a, "M_0002.fld")))
            with open(os.path.join(a, "manifest.json")) as fh:
                self.assertEqual(json.load(fh)["snapshot_times"], traj.times)

            loaded = load_trajectory(a)
            self.assertEqual([s.digest() for s in loaded], [s.digest() for s in traj])

    def test_diagnostic_state(self):
        grid = make_grid(2, [1.0, 1.0], [4, 5])
        state = make_state(grid, np.arange(20.0).reshape(4, 5))
        with tempfile.TemporaryDirectory() as d:
            save_state(state, d)
            M = load_field(os.path.join(d, "diagnostic_M.fld"))
            assert_array_equal(M.values, state.M.values)
            self.assertEqual(M.grid, grid)
            self.assertEqual(load_field(os.path.join(d, "diagnostic_rho.fld")).boundary_value, 1.0)
