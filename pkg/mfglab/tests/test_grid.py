# -*- coding: utf-8 -*-
#
import unittest

import numpy as np

from mfglab._exceptions import FieldException, GridException
from mfglab._grid import (
    Grid,
    ScalarField1D,
    ValueField,
    build_grid,
    interpolate,
    interpolate_points,
    periodic_gradient,
    periodic_interpolate,
    periodic_laplacian,
    periodic_shift,
    upwind_transport,
    wasserstein1_periodic,
)

"""
test_grid.py
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


class GridTest(unittest.TestCase):
    def test_build_grid(self):
        grid = build_grid((0, 0), (1, 1), (3, 3))
        self.assertEqual(grid.size, 9)
        np.testing.assert_allclose(grid.spacing, [0.5, 0.5])

        grid = build_grid((0,), (2,), (5,))
        self.assertAlmostEqual(grid.spacing[0], 0.5)
        self.assertAlmostEqual(grid.node_coordinate((3,))[0], 1.5)

    def test_degenerate_axis(self):
        with self.assertRaises(GridException) as ctx:
            build_grid((0, 0), (1, 1), (1, 3))
        self.assertEqual(ctx.exception.axis, 0)
        with self.assertRaises(GridException) as ctx:
            build_grid((0, 1), (1, 1), (3, 3))
        self.assertEqual(ctx.exception.axis, 1)

    def test_spacing_reproduces_box(self):
        grid = Grid((-1.0, 0.5), (2.0, 0.75), (7, 4))
        np.testing.assert_allclose(grid.spacing * (np.array(grid.shape) - 1), grid.upper - grid.lower)
        np.testing.assert_allclose(grid.flat_coordinates[-1], grid.upper)

    def test_field_rejects_non_finite(self):
        grid = build_grid((0,), (1,), (3,))
        with self.assertRaises(FieldException):
            ValueField(grid, [[0.0], [np.nan], [1.0]])


class InterpolateTest(unittest.TestCase):
    def setUp(self):
        self.grid = build_grid((0.0, 0.0), (2.0, 3.0), (5, 7))
        self.M = np.array([[1.0, -2.0], [0.5, 3.0]])
        self.b = np.array([0.25, -1.0])
        self.field = ValueField.affine(self.grid, self.M, self.b)

    def test_exact_on_nodes(self):
        coords = self.grid.flat_coordinates
        np.testing.assert_allclose(interpolate_points(self.field, coords), self.field.flat, atol=1e-12)

    def test_exact_for_affine_fields(self):
        rng = np.random.default_rng(3)
        points = rng.uniform([0.0, 0.0], [2.0, 3.0], size=(50, 2))
        expected = points @ self.M.T + self.b
        np.testing.assert_allclose(interpolate_points(self.field, points), expected, atol=1e-12)

    def test_clamping(self):
        outside = interpolate(self.field, (5.0, -1.0))
        np.testing.assert_allclose(outside, self.M @ np.array([2.0, 0.0]) + self.b, atol=1e-12)

    def test_upwind_transport_is_exact_on_linear_fields(self):
        grid = build_grid((0.0,), (1.0,), (11,))
        field = ValueField.affine(grid, [[2.0]])
        drift = np.full(field.values.shape, 0.5)
        transport = upwind_transport(field.values, drift, grid.spacing)
        # backward differences, the first node has no upwind neighbour
        np.testing.assert_allclose(transport[1:, 0], 1.0)
        self.assertEqual(transport[0, 0], 0.0)


class TorusTest(unittest.TestCase):
    def test_density_normalisation(self):
        m = ScalarField1D.density(40, lambda x: 1.0 + np.sin(2 * np.pi * x))
        self.assertTrue(m.is_density())
        self.assertAlmostEqual(m.mass(), 1.0, places=12)
        with self.assertRaises(FieldException):
            ScalarField1D.density(10, lambda x: x - 0.5)

    def test_density_needs_mass(self):
        with self.assertRaises(FieldException):
            ScalarField1D.density(12, lambda x: np.zeros_like(x))

    def test_wasserstein_point_masses(self):
        n = 100
        h = 1.0 / n
        a = ScalarField1D.point_mass(n, 0.2)
        b = ScalarField1D.point_mass(n, 0.5)
        self.assertAlmostEqual(wasserstein1_periodic(a, a), 0.0)
        self.assertLessEqual(abs(wasserstein1_periodic(a, b) - 0.3), h)
        # the short way round the circle
        c = ScalarField1D.point_mass(n, 0.0)
        d = ScalarField1D.point_mass(n, 0.9)
        self.assertLessEqual(abs(wasserstein1_periodic(c, d) - 0.1), h)

    def test_wasserstein_shift_of_point_mass(self):
        n = 40
        m = ScalarField1D.point_mass(n, 0.25)
        for s in (1, 7, 20, 31, 39):
            self.assertAlmostEqual(wasserstein1_periodic(m, m.shifted(s)), min(s, n - s) / n, places=12)

    def test_wasserstein_shift_bound(self):
        n = 40
        uniform = ScalarField1D.uniform(n)
        self.assertAlmostEqual(wasserstein1_periodic(uniform, uniform.shifted(5)), 0.0, places=12)
        bump = ScalarField1D.density(n, lambda x: np.exp(-((x - 0.5) ** 2) / 0.01))
        for s in (3, 15, 27):
            self.assertLessEqual(wasserstein1_periodic(bump, bump.shifted(s)), min(s, n - s) / n + 1e-12)

    def test_wasserstein_metric_properties(self):
        rng = np.random.default_rng(11)
        n = 32
        for _ in range(20):
            a, b, c = (ScalarField1D.density(n, lambda x, w=rng.uniform(0.1, 1.0, n): w) for _ in range(3))
            ab = wasserstein1_periodic(a, b)
            self.assertAlmostEqual(ab, wasserstein1_periodic(b, a), places=12)
            self.assertGreaterEqual(ab, 0.0)
            self.assertLessEqual(ab, wasserstein1_periodic(a, c) + wasserstein1_periodic(c, b) + 1e-12)

    def test_wasserstein_mismatched_grids(self):
        with self.assertRaises(FieldException):
            wasserstein1_periodic(ScalarField1D.uniform(10), ScalarField1D.uniform(12))

    def test_periodic_operators(self):
        n = 64
        h = 1.0 / n
        x = np.arange(n) * h
        values = np.sin(2 * np.pi * x)
        np.testing.assert_allclose(periodic_gradient(values, h), 2 * np.pi * np.cos(2 * np.pi * x), atol=2e-2)
        np.testing.assert_allclose(periodic_laplacian(values, h), -(2 * np.pi) ** 2 * values, atol=1e-1)

    def test_periodic_shift(self):
        values = np.arange(10, dtype=float)
        np.testing.assert_allclose(periodic_shift(values, 0.3), np.roll(values, -3), atol=1e-12)
        np.testing.assert_allclose(periodic_shift(values, -1.0), values, atol=1e-12)

    def test_periodic_shift_half_cell_is_exact(self):
        n = 16
        x = np.arange(n) / n
        s = 0.5 / n
        shifted = periodic_shift(np.sin(2 * np.pi * x), s)
        np.testing.assert_allclose(shifted, np.sin(2 * np.pi * (x + s)), atol=1e-12)
        shifted = periodic_shift(np.cos(2 * np.pi * x) + 0.3 * np.sin(6 * np.pi * x), 0.137)
        expected = np.cos(2 * np.pi * (x + 0.137)) + 0.3 * np.sin(6 * np.pi * (x + 0.137))
        np.testing.assert_allclose(shifted, expected, atol=1e-12)

    def test_periodic_interpolate_is_linear(self):
        values = np.arange(10, dtype=float)
        half = periodic_interpolate(values, np.arange(10) / 10 + 0.05)
        self.assertAlmostEqual(half[0], 0.5)
        self.assertAlmostEqual(half[9], 4.5)


if __name__ == "__main__":
    unittest.main()
