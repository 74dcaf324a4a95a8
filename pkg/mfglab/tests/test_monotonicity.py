# -*- coding: utf-8 -*-
#
import math
import unittest

import numpy as np

from mfglab._exceptions import CouplingException
from mfglab._grid import ValueField, build_grid
from mfglab._master import Coupling, Trajectory, solve_master
from mfglab._monotonicity import (
    F_MONOTONE,
    G_MONOTONE,
    RandomPairs,
    beta_gamma_schedule,
    check_lipschitz_bound,
    default_tolerance,
    field_modulus,
    lipschitz_beta,
    lipschitz_bound,
    lipschitz_budget,
    max_principle_check,
    measured_lipschitz,
    monotonicity_modulus,
    strong_monotonicity_coupling_modulus,
    verify_propagation,
)

"""
test_monotonicity.py
mfglab - numerical laboratory for finite-state master equations

Copyright 2026 mfg-lab contributors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""


def _random_pairs(n, dim, seed=0):
    rng = np.random.default_rng(seed)
    return [(rng.standard_normal(dim), rng.standard_normal(dim)) for _ in range(n)]


class ModulusTest(unittest.TestCase):
    def test_scaled_identity(self):
        pairs = _random_pairs(100, 3)
        self.assertAlmostEqual(monotonicity_modulus(lambda x: 2.0 * x, pairs), 2.0, places=12)
        self.assertAlmostEqual(
            monotonicity_modulus(lambda x: 2.0 * x, pairs, vectorized=True), 2.0, places=12
        )

    def test_rotation_is_not_strictly_monotone(self):
        J = np.array([[0.0, -1.0], [1.0, 0.0]])
        self.assertAlmostEqual(monotonicity_modulus(lambda x: J @ x, _random_pairs(50, 2)), 0.0, places=12)

    def test_decreasing_map(self):
        modulus = monotonicity_modulus(lambda x: -x, _random_pairs(20, 1))
        self.assertAlmostEqual(modulus, -1.0, places=12)

    def test_coincident_pairs(self):
        pairs = [([1.0, 1.0], [1.0, 1.0]), ([0.0, 0.0], [1.0, 0.0])]
        self.assertAlmostEqual(monotonicity_modulus(lambda x: 3.0 * x, pairs), 3.0)
        with self.assertRaises(CouplingException):
            monotonicity_modulus(lambda x: x, [([1.0], [1.0])])
        with self.assertRaises(CouplingException):
            monotonicity_modulus(lambda x: x, [])

    def test_non_normal_linear_map(self):
        M = np.array([[1.0, 0.4, 0.0], [0.0, 1.0, 0.3], [0.0, 0.0, 1.2]])
        smallest = np.linalg.eigvalsh(0.5 * (M + M.T))[0]
        modulus = monotonicity_modulus(lambda X: X @ M.T, _random_pairs(10000, 3, seed=2), vectorized=True)
        self.assertGreaterEqual(modulus, smallest - 1e-12)
        self.assertLess(modulus - smallest, 1e-3)

    def test_positive_scaling(self):
        M = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 1.0], [0.0, 0.0, 2.0]])
        pairs = _random_pairs(200, 3, seed=8)
        base = monotonicity_modulus(lambda x: M @ x, pairs)
        for s in (0.1, 2.5, 40.0):
            self.assertAlmostEqual(monotonicity_modulus(lambda x, s=s: s * (M @ x), pairs), s * base, places=10)


class FieldModulusTest(unittest.TestCase):
    def setUp(self):
        self.grid = build_grid((0.0, 0.0), (1.0, 1.0), (5, 5))
        self.field = ValueField.affine(self.grid, np.diag([1.0, 3.0]))

    def test_all_nodes(self):
        best, a, b, count = field_modulus(self.field, "all_nodes")
        self.assertAlmostEqual(best, 1.0, places=12)
        self.assertEqual(a[1], b[1])
        self.assertEqual(count, 25 * 24 // 2)

    def test_random_pairs(self):
        first = field_modulus(self.field, RandomPairs(500, seed=4))
        best, _, _, count = first
        self.assertGreaterEqual(best, 1.0 - 1e-12)
        self.assertLessEqual(best, 3.0 + 1e-12)
        self.assertLessEqual(count, 500)
        self.assertEqual(field_modulus(self.field, RandomPairs(500, seed=4)), first)

    def test_unknown_strategy(self):
        with self.assertRaises(CouplingException):
            field_modulus(self.field, "some_pairs")


class PropagationTest(unittest.TestCase):
    def test_monotone_linear_coupling(self):
        grid = build_grid((0.0, 0.0), (4.0, 4.0), (11, 11))
        zero = np.zeros((2, 2))
        coupling = Coupling.linear(0.5 * np.eye(2), zero, zero, 0.2 * np.eye(2))
        traj = solve_master(ValueField.affine(grid, 0.5 * np.eye(2)), coupling, None, 1.0, 0.025)
        report = verify_propagation(traj, "auto")
        self.assertTrue(report.holds)
        self.assertIsNone(report.first_failure)
        self.assertEqual(report.strategy, "all_nodes")
        self.assertEqual(len(report.min_pairing), len(traj.times))
        self.assertAlmostEqual(report.tol, default_tolerance(grid, 0.025))
        self.assertGreater(report.worst, 0.0)

    def test_constant_offset_changes_nothing(self):
        grid = build_grid((0.0, 0.0), (4.0, 4.0), (11, 11))
        zero = np.zeros((2, 2))
        coupling = Coupling.linear(0.5 * np.eye(2), zero, zero, 0.2 * np.eye(2))
        traj = solve_master(ValueField.affine(grid, [[1.0, 0.3], [-0.3, 0.4]]), coupling, None, 1.0, 0.025)
        offset = np.array([3.0, -7.0])
        moved = Trajectory(traj.times, [f.with_values(f.values + offset) for f in traj.fields], traj.scheme_meta)
        report = verify_propagation(traj, "all_nodes")
        again = verify_propagation(moved, "all_nodes")
        self.assertEqual(again.holds, report.holds)
        np.testing.assert_allclose(again.min_pairing, report.min_pairing, rtol=0, atol=1e-12)

    def test_decreasing_initial_data(self):
        grid = build_grid((0.0,), (1.0,), (11,))
        traj = solve_master(ValueField.affine(grid, [[-1.0]]), Coupling.zero(1), None, 0.5, 0.1)
        report = verify_propagation(traj, "all_nodes", tol=1e-9)
        self.assertFalse(report.holds)
        self.assertEqual(report.first_failure, 0)
        self.assertAlmostEqual(report.worst, -1.0)

    def test_default_tolerance(self):
        grid = build_grid((0.0, 0.0), (3.0, 4.0), (4, 5))
        self.assertAlmostEqual(default_tolerance(grid, 0.5), 10.0 * (1.0 + 0.5) * 25.0)


class LipschitzTest(unittest.TestCase):
    def test_beta(self):
        self.assertEqual(lipschitz_beta(0.0, 1.0, 2.0, 1.0, 0.5, 1.0), 0.0)
        self.assertAlmostEqual(lipschitz_beta(1.0, 1.0, 2.0, 1.0, 0.5, 0.5), 0.2)
        self.assertAlmostEqual(lipschitz_beta(1.0, 1.0, 2.0, 1.0, 0.5, 0.1), 0.1)
        self.assertEqual(lipschitz_beta(1.0, 1.0, 0.5, 0.0, 0.0, 0.7), 0.7)
        # |S| <= 1: the jump rate drops out
        self.assertEqual(
            lipschitz_beta(0.5, 0.0, 0.8, 0.5, 0.0, 1.0), lipschitz_beta(0.5, 10.0, 0.8, 0.5, 0.0, 1.0)
        )

    def test_bound(self):
        self.assertAlmostEqual(lipschitz_bound(0.5), 2.0)
        self.assertAlmostEqual(lipschitz_bound(1.0, 2.0), 2.0)
        self.assertIsNone(lipschitz_bound(0.0))
        self.assertIsNone(lipschitz_bound(-1.0, 1.0))

    def test_g_monotone_schedule(self):
        schedule = beta_gamma_schedule(G_MONOTONE, 0.5, 2.0, 1.5, 0.5, 0.25, 0.0, 0.0, 1.0, 2.0)
        rate = 2.0 * 0.25 + 0.5 + 2.0 * (1.5 ** 2 - 1.0)
        self.assertTrue(schedule.valid)
        self.assertIsNone(schedule.crossing_time)
        self.assertAlmostEqual(schedule.beta[-1], 0.5 * math.exp(-rate * 2.0))
        self.assertTrue(np.all(schedule.gamma == 0.0))
        beta, gamma = schedule.at(0.0)
        self.assertAlmostEqual(beta, 0.5)
        self.assertEqual(gamma, 0.0)

    def test_f_monotone_schedule_crossing(self):
        # beta' = -gamma, gamma' = gamma: beta = 1 - 4 (e^t - 1) vanishes at log(1.25)
        schedule = beta_gamma_schedule(F_MONOTONE, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 2.0, 1.0, beta0=1.0)
        self.assertFalse(schedule.valid)
        self.assertAlmostEqual(schedule.crossing_time, math.log(1.25), delta=2e-3)
        self.assertAlmostEqual(schedule.gamma[-1], 4.0 * math.e, places=6)

    def test_schedule_arguments(self):
        with self.assertRaises(CouplingException):
            beta_gamma_schedule(F_MONOTONE, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0)
        with self.assertRaises(CouplingException):
            beta_gamma_schedule("other", 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0)

    def test_coupling_modulus(self):
        zero = np.zeros((2, 2))
        coupling = Coupling.linear(np.diag([1.0, 2.0]), zero, zero, 0.5 * np.eye(2))
        self.assertAlmostEqual(strong_monotonicity_coupling_modulus(coupling), 0.5)
        self.assertAlmostEqual(strong_monotonicity_coupling_modulus(coupling, "G_x"), 1.0)
        self.assertAlmostEqual(strong_monotonicity_coupling_modulus(coupling, "F_u"), 0.5)
        with self.assertRaises(CouplingException):
            strong_monotonicity_coupling_modulus(coupling, "other")
        loose = Coupling.linear(-np.eye(2), zero, zero, zero, require_monotone=False)
        with self.assertRaises(CouplingException):
            strong_monotonicity_coupling_modulus(loose)

    def test_budget(self):
        zero = np.zeros((1, 1))
        coupling = Coupling.linear([[0.5]], zero, zero, zero)
        budget = lipschitz_budget(coupling, 0.5, 1.0, 0.8, 1.0, t_f=1.0, case=G_MONOTONE)
        self.assertAlmostEqual(budget.beta, 1.0)
        self.assertAlmostEqual(budget.bound, 1.0)
        self.assertIsNotNone(budget.schedule)
        self.assertAlmostEqual(budget.bound_at(1.0), 1.0 / (0.5 * math.exp(-0.5)), places=6)
        self.assertIsNone(lipschitz_budget(coupling, 0.5, 1.0, 0.8, 1.0).schedule)

    def test_measured_and_checked(self):
        grid = build_grid((0.0, 0.0), (1.0, 1.0), (5, 5))
        field = ValueField.affine(grid, [[1.0, 2.0], [0.0, 1.0]])
        np.testing.assert_allclose(measured_lipschitz(field), [math.sqrt(5.0)])

        line = build_grid((0.0,), (2.0,), (11,))
        traj = solve_master(ValueField.affine(line, [[0.5]]), Coupling.zero(1), None, 1.0, 0.1)
        np.testing.assert_allclose(measured_lipschitz(traj), 0.5)
        self.assertTrue(check_lipschitz_bound(traj, 1.0).holds)
        failed = check_lipschitz_bound(traj, 4.0, slack=0.1)
        self.assertFalse(failed.holds)
        self.assertAlmostEqual(failed.worst_ratio, 2.0)


class MaxPrincipleTest(unittest.TestCase):
    def test_nonnegative(self):
        result = max_principle_check([np.ones(5), np.full(5, 0.5)])
        self.assertTrue(result.holds)
        self.assertEqual(result.min_value, 0.5)

    def test_witness(self):
        slices = [np.ones(5), np.array([1.0, 1.0, -0.5, 1.0, 1.0]), np.ones(5)]
        result = max_principle_check(slices)
        self.assertFalse(result.holds)
        self.assertEqual(result.min_value, -0.5)
        self.assertEqual(result.arg, (1, (2,)))

        grid_slices = [np.ones((3, 4)), np.ones((3, 4))]
        grid_slices[1][2, 1] = -1e-3
        self.assertEqual(max_principle_check(grid_slices).arg, (1, (2, 1)))
        self.assertTrue(max_principle_check(grid_slices, tol=1e-2).holds)


if __name__ == "__main__":
    unittest.main()
