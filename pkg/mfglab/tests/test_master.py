# -*- coding: utf-8 -*-
#
import unittest

import numpy as np
from scipy.linalg import expm

from mfglab._exceptions import (
    BlowUpException,
    CflException,
    CouplingException,
    NoiseException,
    SingularJumpException,
)
from mfglab._grid import ValueField, build_grid
from mfglab._master import (
    AffineJump,
    CombinedNoise,
    CommonPoisson,
    Coupling,
    DeterministicJump,
    IidPoisson,
    LinearBlock,
    Mixture,
    NoNoise,
    jump_pullback,
    solve_asymptotic,
    solve_master,
    step_master,
    symmetric_jump_pair,
)

"""
test_master.py
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


def _line(nodes=41, upper=2.0):
    return build_grid((0.0,), (upper,), (nodes,))


class CouplingTest(unittest.TestCase):
    def test_linear_certificate(self):
        c = Coupling.linear([[1.0]], [[0.0]], [[0.0]], [[0.5]])
        self.assertIsInstance(c.certificate, LinearBlock)
        self.assertTrue(c.is_certified)
        self.assertAlmostEqual(c.lip_G_x, 1.0)
        self.assertAlmostEqual(c.lip_F_u, 0.5)

    def test_non_monotone_block(self):
        with self.assertRaises(CouplingException):
            Coupling.linear([[-1.0]], [[0.0]], [[0.0]], [[0.0]])
        c = Coupling.linear([[-1.0]], [[0.0]], [[0.0]], [[0.0]], require_monotone=False)
        self.assertFalse(c.is_certified)

    def test_shape_mismatch(self):
        with self.assertRaises(CouplingException):
            Coupling.linear(np.eye(2), np.eye(3), np.eye(2), np.eye(2))

    def test_negative_lipschitz_constant(self):
        with self.assertRaises(CouplingException):
            Coupling(lambda x, u: u, lambda x, u: u, 1, lip_F_x=-1.0)


class JumpTest(unittest.TestCase):
    def test_constructors(self):
        swap = AffineJump.swap(3, 0, 2)
        np.testing.assert_allclose(swap.apply([1.0, 2.0, 3.0]), [3.0, 2.0, 1.0])
        split = AffineJump.split_half(2, 0.1)
        np.testing.assert_allclose(split.apply([1.0, 0.0]), [0.6, 0.5])
        self.assertTrue(AffineJump.identity(2).is_identity())
        with self.assertRaises(NoiseException):
            AffineJump.split_half(1, 0.1)
        with self.assertRaises(NoiseException):
            AffineJump([[1.0, 0.0]])

    def test_partial(self):
        jump = AffineJump([[0.0]], [1.0])
        half = jump.partial(0.5)
        np.testing.assert_allclose(half.S, [[0.5]])
        np.testing.assert_allclose(half.e, [0.5])
        self.assertTrue(jump.partial(0.0).is_identity())
        with self.assertRaises(NoiseException):
            jump.partial(1.5)
        with self.assertRaises(NoiseException):
            jump.partial(-0.1)

    def test_inverse(self):
        jump = AffineJump([[2.0, 1.0], [0.0, 1.0]], [1.0, -1.0])
        x = np.array([[0.3, 0.7], [1.0, -2.0]])
        np.testing.assert_allclose(jump.inverse().apply(jump.apply(x)), x, atol=1e-12)
        with self.assertRaises(SingularJumpException) as ctx:
            AffineJump([[1.0, 1.0], [1.0, 1.0]]).inverse()
        self.assertGreater(ctx.exception.condition_number, 1e12)

    def test_power_iteration_norm(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            jump = AffineJump(rng.standard_normal((3, 3)))
            self.assertAlmostEqual(jump.power_iteration_norm(), jump.op_norm_S, places=8)
        self.assertEqual(AffineJump(np.zeros((2, 2))).power_iteration_norm(), 0.0)

    def test_pullback_of_linear_field(self):
        grid = build_grid((0.0, 0.0), (1.0, 1.0), (5, 5))
        M = np.array([[1.0, 2.0], [0.0, 1.0]])
        field = ValueField.affine(grid, M)
        S = np.array([[0.5, 0.0], [0.25, 0.5]])
        pulled = jump_pullback(field, AffineJump(S))
        # S^T M S x, the landing points stay inside the box
        expected = grid.flat_coordinates @ (S.T @ M @ S).T
        np.testing.assert_allclose(pulled.flat, expected, atol=1e-12)


class NoiseSpecTest(unittest.TestCase):
    def test_rates(self):
        with self.assertRaises(NoiseException):
            CommonPoisson(-1.0, AffineJump.identity(1))
        with self.assertRaises(NoiseException):
            IidPoisson(float("inf"), AffineJump.identity(1))
        with self.assertRaises(NoiseException):
            DeterministicJump(0.0, AffineJump.identity(1))

    def test_mixture_weights(self):
        jump = AffineJump.identity(1)
        Mixture(1.0, [(jump, 0.25), (jump, 0.75)])
        with self.assertRaises(NoiseException):
            Mixture(1.0, [(jump, 0.5), (jump, 0.6)])
        with self.assertRaises(NoiseException):
            Mixture(1.0, [(jump, -0.5), (jump, 1.5)])
        with self.assertRaises(NoiseException):
            Mixture(1.0, [])

    def test_symmetric_pair(self):
        pair = symmetric_jump_pair([[1.0]], 0.1)
        self.assertAlmostEqual(pair.rate, 200.0)
        np.testing.assert_allclose(pair.atoms[0][0].S, [[1.1]])
        np.testing.assert_allclose(pair.atoms[1][0].S, [[0.9]])
        with self.assertRaises(NoiseException):
            symmetric_jump_pair([[1.0]], 0.0)

    def test_combined_noise(self):
        noise = CombinedNoise(
            [
                DeterministicJump(0.7, AffineJump.identity(1)),
                CommonPoisson(2.0, AffineJump.identity(1)),
                DeterministicJump(0.3, AffineJump.identity(1)),
            ]
        )
        self.assertEqual([j.t1 for j in noise.deterministic_jumps()], [0.3, 0.7])
        self.assertEqual(noise.relaxation_rate(), 2.0)
        self.assertEqual(noise.describe()["kind"], "combined")


class SolveMasterTest(unittest.TestCase):
    def test_noiseless_zero_coupling_is_stationary(self):
        grid = build_grid((0.0, 0.0), (4.0, 4.0), (9, 9))
        U0 = ValueField.affine(grid, [[0.5, 0.0], [0.0, 0.5]])
        traj = solve_master(U0, Coupling.zero(2), NoNoise(), 1.0, 0.025)
        self.assertAlmostEqual(traj.times[-1], 1.0)
        for field in traj.fields:
            np.testing.assert_array_equal(field.values, U0.values)

    def test_linear_source_matches_matrix_exponential(self):
        # F = 0, G = A x + B U: U(t, x) = P(t) x with P' = A + B P
        grid = build_grid((0.0, 0.0), (1.0, 1.0), (5, 5))
        A = np.array([[0.5, 0.1], [0.0, 0.3]])
        B = np.array([[-0.2, 0.1], [0.0, 0.1]])
        M = np.array([[1.0, 0.0], [0.5, 1.0]])
        zero = np.zeros((2, 2))
        coupling = Coupling.linear(A, B, zero, zero, require_monotone=False)
        traj = solve_master(ValueField.affine(grid, M), coupling, None, 1.0, 0.001)

        augmented = np.block([[B, A], [zero, zero]])
        P = (expm(augmented) @ np.vstack([M, np.eye(2)]))[:2]
        expected = grid.flat_coordinates @ P.T
        np.testing.assert_allclose(traj.final.flat, expected, atol=5e-3)

    def test_common_poisson_on_linear_data(self):
        grid = _line()
        s, rate = 0.5, 2.0
        U0 = ValueField.affine(grid, [[1.0]])
        traj = solve_master(U0, Coupling.zero(1), CommonPoisson(rate, AffineJump([[s]])), 1.0, 0.01)
        decay = rate * (1.0 - s * s)
        x = grid.flat_coordinates[:, 0]
        np.testing.assert_allclose(traj.final.flat[:, 0], (1.0 - 0.01 * decay) ** 100 * x, rtol=1e-10)
        np.testing.assert_allclose(traj.final.flat[:, 0], np.exp(-decay) * x, rtol=2e-2, atol=1e-12)

    def test_iid_poisson_on_linear_data(self):
        grid = _line()
        s, rate = 0.5, 2.0
        U0 = ValueField.affine(grid, [[1.0]])
        traj = solve_master(U0, Coupling.zero(1), IidPoisson(rate, AffineJump([[s]])), 1.0, 0.01)
        decay = 2.0 * rate * (1.0 - s)
        x = grid.flat_coordinates[:, 0]
        np.testing.assert_allclose(traj.final.flat[:, 0], (1.0 - 0.01 * decay) ** 100 * x, rtol=1e-10)
        np.testing.assert_allclose(traj.final.flat[:, 0], np.exp(-decay) * x, rtol=3e-2, atol=1e-12)

    def test_deterministic_jump(self):
        grid = _line()
        s = 0.5
        U0 = ValueField.affine(grid, [[1.0]])
        noise = DeterministicJump(0.5, AffineJump([[s]]))
        traj = solve_master(U0, Coupling.zero(1), noise, 1.0, 0.1)
        self.assertEqual(traj.times.count(0.5), 2)
        first = traj.times.index(0.5)
        np.testing.assert_array_equal(traj.fields[first].values, U0.values)
        np.testing.assert_allclose(traj.fields[first + 1].values, s * s * U0.values, atol=1e-12)
        np.testing.assert_allclose(traj.final.values, s * s * U0.values, atol=1e-12)
        # the post-jump slice is read at t1
        np.testing.assert_allclose(traj.evaluate(0.5, [[1.0]]), [[0.25]], atol=1e-12)
        self.assertTrue(all(a <= b for a, b in zip(traj.times, traj.times[1:])))

    def test_jump_after_horizon_never_fires(self):
        grid = _line()
        U0 = ValueField.affine(grid, [[1.0]])
        traj = solve_master(U0, Coupling.zero(1), DeterministicJump(1.0, AffineJump([[0.5]])), 1.0, 0.1)
        np.testing.assert_array_equal(traj.final.values, U0.values)
        self.assertEqual(len(traj.times), len(set(traj.times)))

    def test_cfl_violation(self):
        grid = build_grid((0.0,), (1.0,), (11,))
        U0 = ValueField.affine(grid, [[10.0]])
        coupling = Coupling.linear([[0.0]], [[0.0]], [[0.0]], [[1.0]])
        with self.assertRaises(CflException) as ctx:
            solve_master(U0, coupling, None, 1.0, 0.1)
        self.assertAlmostEqual(ctx.exception.max_drift, 10.0)
        self.assertAlmostEqual(ctx.exception.limit, 0.01)

    def test_blow_up(self):
        grid = _line(11, 1.0)
        U0 = ValueField.affine(grid, [[2.0]])
        coupling = Coupling.linear([[0.0]], [[5.0]], [[0.0]], [[0.0]], require_monotone=False)
        with self.assertRaises(BlowUpException) as ctx:
            solve_master(U0, coupling, None, 1.0, 0.01, blowup_factor=10.0)
        self.assertGreater(ctx.exception.time, 0.0)
        self.assertLessEqual(ctx.exception.time, 1.0)

    def test_invalid_arguments(self):
        grid = _line(5)
        U0 = ValueField.affine(grid, [[1.0]])
        with self.assertRaises(CflException):
            solve_master(U0, Coupling.zero(1), None, 1.0, 2.0)
        with self.assertRaises(NoiseException):
            solve_master(U0, Coupling.zero(1), None, 1.0, 0.1, discount=-1.0)
        with self.assertRaises(NoiseException):
            step_master(U0, Coupling.zero(1), None, 0.0, 0.1, discount=-1.0)

    def test_discount(self):
        grid = _line(5)
        U0 = ValueField.affine(grid, [[1.0]])
        after = step_master(U0, Coupling.zero(1), NoNoise(), 0.0, 0.1, discount=2.0)
        np.testing.assert_allclose(after.values, 0.8 * U0.values)

    def test_output_slices_are_bounded(self):
        grid = _line(5)
        U0 = ValueField.affine(grid, [[1.0]])
        traj = solve_master(U0, Coupling.zero(1), None, 1.0, 0.001)
        self.assertLessEqual(len(traj.times), 202)
        self.assertEqual(traj.scheme_meta["steps"], 1000)
        self.assertAlmostEqual(traj.times[-1], 1.0)


class AsymptoticTest(unittest.TestCase):
    def test_first_order_limit_of_small_jumps(self):
        grid = _line()
        S = np.array([[-0.5]])
        U0 = ValueField.affine(grid, [[1.0]])
        limit = solve_asymptotic(U0, Coupling.zero(1), S, "first", 1.0, 0.01)
        x = grid.flat_coordinates[:, 0]
        np.testing.assert_allclose(limit.final.flat[:, 0], 0.99 ** 100 * x, rtol=1e-10)

        gaps = []
        for eps in (0.2, 0.1, 0.05):
            noise = CommonPoisson(1.0 / eps, AffineJump(np.eye(1) + eps * S))
            traj = solve_master(U0, Coupling.zero(1), noise, 1.0, 0.01)
            gaps.append(float(np.max(np.abs(traj.final.values - limit.final.values))))
        self.assertGreater(gaps[0], gaps[1])
        self.assertGreater(gaps[1], gaps[2])
        for coarse, fine in zip(gaps, gaps[1:]):
            self.assertTrue(1.8 <= coarse / fine <= 2.2, gaps)

    def test_second_order_forms(self):
        grid = _line(21)
        U0 = ValueField.from_function(grid, lambda x: x ** 2)
        S = [[0.5]]
        displayed = solve_asymptotic(U0, Coupling.zero(1), S, "second", 0.1, 0.001)
        derived = solve_asymptotic(U0, Coupling.zero(1), S, "second", 0.1, 0.001, "derived")
        self.assertEqual(displayed.scheme_meta["second_order_form"], "displayed")
        self.assertFalse(np.allclose(displayed.final.values, derived.final.values))

    def test_invalid_order(self):
        U0 = ValueField.affine(_line(5), [[1.0]])
        with self.assertRaises(NoiseException):
            solve_asymptotic(U0, Coupling.zero(1), [[1.0]], "third", 1.0, 0.1)
        with self.assertRaises(NoiseException):
            solve_asymptotic(U0, Coupling.zero(1), [[1.0]], "second", 1.0, 0.1, "other")


if __name__ == "__main__":
    unittest.main()
