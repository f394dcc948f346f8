# Copyright 2026 Google LLC
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import math
import unittest
from unittest.mock import patch

import numpy as np
import numpy.testing as npt

from bench.synth import CorrespondenceGroundTruth, rms_error
from estep import color_log_likelihoods
from pointset import ColoredPointSet, RegistrationConfig, RegistrationError
from registration import (
    CoherentPointDrift,
    ColorCoherentPointDrift,
    baseline_cpd_register,
    initial_sigma_shape,
    initialize,
    register,
    resolve_sigma_color,
)


def grid_cloud(rows=4, cols=3, spacing=0.3):
    xs, ys = np.meshgrid(np.arange(cols) * spacing, np.arange(rows) * spacing)
    positions = np.column_stack([xs.ravel(), ys.ravel()])
    hues = np.linspace(0.0, 0.9, len(positions))[:, None]
    return ColoredPointSet(positions=positions, colors=hues)


def random_pair(rng, m, n, dim):
    anchor = ColoredPointSet(
        positions=rng.uniform(size=(n, dim)), colors=rng.uniform(size=(n, 3))
    )
    model = ColoredPointSet(
        positions=rng.uniform(size=(m, dim)), colors=rng.uniform(size=(m, 3))
    )
    return anchor, model


class TestInitialize(unittest.TestCase):
    def test_single_pair_variance(self):
        self.assertAlmostEqual(
            initial_sigma_shape(np.array([[1.0, 0.0]]), np.array([[0.0, 0.0]])), 0.5
        )

    def test_two_point_hand_sum(self):
        points = np.array([[0.0, 0.0], [1.0, 0.0]])
        # Pairs: 0 + 1 + 1 + 0 over D_S * N * M = 8.
        self.assertAlmostEqual(initial_sigma_shape(points, points), 0.25)

    def test_coincident_pair_is_clamped(self):
        point_set = ColoredPointSet(positions=[[0.5, 0.5]], colors=[[0.2]])
        config = RegistrationConfig(sigma_floor=1e-9)
        state = initialize(point_set, point_set, config)
        self.assertEqual(state.sigma_shape_sq, 1e-9)

    def test_state(self):
        rng = np.random.default_rng(0)
        anchor, model = random_pair(rng, 5, 6, 3)
        config = RegistrationConfig(sigma_color=0.3)
        state = initialize(anchor, model, config)
        npt.assert_array_equal(state.coefficients, np.zeros((5, 3)))
        npt.assert_array_equal(state.transformed, model.positions)
        self.assertEqual(state.kernel.shape, (5, 5))
        self.assertEqual(state.sigma_color, 0.3)
        npt.assert_array_equal(state.log_color, color_log_likelihoods(anchor, model, 0.3))

    def test_auto_sigma_color(self):
        anchor = ColoredPointSet(positions=[[0.0, 0.0]], colors=[[0.0]])
        model = ColoredPointSet(positions=[[0.0, 0.0], [1.0, 0.0]], colors=[[0.0], [1.0]])
        # (0 + 1) / (D_C * N * M) = 1 / 2.
        self.assertAlmostEqual(
            resolve_sigma_color(anchor, model, RegistrationConfig()), math.sqrt(0.5)
        )

    def test_spatial_dimension_mismatch(self):
        anchor = ColoredPointSet.uncolored(np.zeros((2, 2)))
        model = ColoredPointSet.uncolored(np.zeros((2, 3)))
        with self.assertRaisesRegex(ValueError, "spatial dimensions differ"):
            initialize(anchor, model, RegistrationConfig(w_color=0.0))

    def test_color_dimension_mismatch(self):
        anchor = ColoredPointSet(positions=np.zeros((2, 2)), colors=np.zeros((2, 1)))
        model = ColoredPointSet(positions=np.zeros((2, 2)), colors=np.zeros((2, 3)))
        with self.assertRaisesRegex(ValueError, "color dimensions differ"):
            initialize(anchor, model, RegistrationConfig())

    def test_color_registration_needs_colors(self):
        point_set = ColoredPointSet.uncolored(np.random.default_rng(1).normal(size=(3, 2)))
        with self.assertRaises(ValueError):
            register(point_set, point_set, RegistrationConfig())


class TestRegister(unittest.TestCase):
    def test_identity_registration(self):
        cloud = grid_cloud()
        truth = CorrespondenceGroundTruth.identity(cloud.count)
        for runner in (register, baseline_cpd_register):
            report = runner(cloud, cloud, RegistrationConfig())
            self.assertLess(rms_error(report.transformed, cloud, truth), 1e-6)
            self.assertLessEqual(report.iterations, 30)

    def test_identity_registration_of_a_dense_cloud(self):
        rng = np.random.default_rng(0)
        cloud = ColoredPointSet(
            positions=rng.uniform(size=(200, 2)), colors=rng.uniform(size=(200, 3))
        )
        truth = CorrespondenceGroundTruth.identity(cloud.count)

        report = register(cloud, cloud, RegistrationConfig())
        self.assertLess(rms_error(report.transformed, cloud, truth), 1e-6)
        self.assertLessEqual(report.iterations, 30)

        # Without colour the posterior stays spread over neighbours for longer.
        baseline = baseline_cpd_register(cloud, cloud, RegistrationConfig())
        self.assertLess(rms_error(baseline.transformed, cloud, truth), 1e-6)
        self.assertLessEqual(baseline.iterations, 60)

    def test_report_contents(self):
        cloud = grid_cloud()
        report = register(cloud, cloud, RegistrationConfig(sigma_color=0.2))
        self.assertEqual(report.method, "ccpd")
        self.assertEqual(report.sigma_color, 0.2)
        self.assertEqual(report.posterior.weights.shape, (cloud.count, cloud.count))
        npt.assert_array_equal(report.transformed.colors, cloud.colors)
        npt.assert_allclose(
            report.transformed.positions,
            cloud.positions + report.field.displacement(),
        )
        self.assertIsNone(baseline_cpd_register(cloud, cloud).sigma_color)

    def test_reduces_to_cpd_without_color(self):
        rng = np.random.default_rng(2)
        config = RegistrationConfig(w_color=0.0, color_outlier_term=False, max_iterations=40)
        for index in range(20):
            dim = 2 if index % 2 == 0 else 3
            anchor, model = random_pair(rng, rng.integers(5, 61), rng.integers(5, 61), dim)
            ccpd = register(anchor, model, config)
            cpd = baseline_cpd_register(anchor, model, config)
            npt.assert_allclose(
                ccpd.transformed.positions, cpd.transformed.positions, rtol=0.0, atol=1e-9
            )

    def test_color_decides_between_clusters(self):
        rng = np.random.default_rng(3)
        red, blue = [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]

        def jitter():
            return rng.normal(scale=0.05, size=(10, 2))

        anchor = ColoredPointSet(
            positions=np.vstack([jitter(), jitter() + [1.0, 0.0]]),
            colors=[red] * 10 + [blue] * 10,
        )
        # Same layout, colours swapped.
        model = ColoredPointSet(
            positions=np.vstack([jitter() + [0.1, 0.0], jitter() + [0.9, 0.0]]),
            colors=[blue] * 10 + [red] * 10,
        )
        config = RegistrationConfig(sigma_color=0.1)

        ccpd = ColorCoherentPointDrift(anchor, model, config)
        ccpd_match = ccpd.posterior(ccpd.likelihoods()).weights.argmax(axis=0)
        npt.assert_array_equal(model.colors[ccpd_match], anchor.colors)

        cpd = CoherentPointDrift(anchor, model, config)
        cpd_match = cpd.posterior(cpd.likelihoods()).weights.argmax(axis=0)
        npt.assert_array_equal(cpd_match // 10, np.arange(20) // 10)

    def test_recovers_translation(self):
        rng = np.random.default_rng(4)
        model = ColoredPointSet(
            positions=rng.uniform(size=(50, 2)), colors=rng.uniform(size=(50, 1))
        )
        anchor = model.with_positions(model.positions + [0.3, -0.2])
        report = baseline_cpd_register(anchor, model, RegistrationConfig(alpha=0.0))
        truth = CorrespondenceGroundTruth.identity(50)
        self.assertLess(rms_error(report.transformed, anchor, truth), 1e-3)

    def test_translation_equivariance_of_one_cycle(self):
        rng = np.random.default_rng(5)
        anchor, model = random_pair(rng, 8, 9, 3)
        shift = np.array([2.0, -1.0, 0.5])
        config = RegistrationConfig()
        first = ColorCoherentPointDrift(anchor, model, config)
        moved = ColorCoherentPointDrift(
            anchor.with_positions(anchor.positions + shift),
            model.with_positions(model.positions + shift),
            config,
        )
        first.run_one_iteration()
        moved.run_one_iteration()
        npt.assert_allclose(moved.state.coefficients, first.state.coefficients, atol=1e-9)
        npt.assert_allclose(moved.state.transformed, first.state.transformed + shift, atol=1e-9)

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        anchor, model = random_pair(rng, 15, 12, 2)
        config = RegistrationConfig(max_iterations=25)
        first = register(anchor, model, config)
        second = register(anchor, model, config)
        npt.assert_array_equal(first.transformed.positions, second.transformed.positions)
        npt.assert_array_equal(first.objective_trace, second.objective_trace)
        npt.assert_array_equal(first.sigma_shape_trace, second.sigma_shape_trace)

    def test_traces(self):
        rng = np.random.default_rng(7)
        anchor, model = random_pair(rng, 15, 12, 2)
        initial = initial_sigma_shape(anchor.positions, model.positions)
        report = register(anchor, model, RegistrationConfig(max_iterations=60))
        self.assertEqual(len(report.objective_trace), report.iterations)
        self.assertTrue(np.all(np.isfinite(report.objective_trace)))
        self.assertTrue(np.all(report.sigma_shape_trace > 0.0))
        self.assertTrue(np.all(report.sigma_shape_trace <= 10.0 * initial))

    def test_converged_flag_is_sound(self):
        cloud = grid_cloud()
        config = RegistrationConfig(tolerance=1e-3)
        report = register(cloud, cloud.with_positions(cloud.positions * 1.05), config)
        if report.converged:
            last, previous = report.objective_trace[-1], report.objective_trace[-2]
            self.assertLess(abs(last - previous), config.tolerance * abs(previous))

    def test_max_iterations_caps_the_run(self):
        rng = np.random.default_rng(8)
        anchor, model = random_pair(rng, 10, 10, 2)
        report = register(anchor, model, RegistrationConfig(max_iterations=3))
        self.assertLessEqual(report.iterations, 3)

    def test_prenormalized_run_reports_in_input_frame(self):
        cloud = grid_cloud()
        scaled = cloud.with_positions(cloud.positions * 100.0 + 50.0)
        report = register(scaled, scaled, RegistrationConfig(prenormalize=True))
        truth = CorrespondenceGroundTruth.identity(cloud.count)
        self.assertLess(rms_error(report.transformed, scaled, truth), 1e-4)

    @patch('registration.negative_log_likelihood')
    def test_non_finite_objective_diverges(self, mock_objective):
        mock_objective.return_value = float("nan")
        cloud = grid_cloud()
        with self.assertRaisesRegex(RegistrationError, "diverged"):
            register(cloud, cloud)


if __name__ == '__main__':
    unittest.main()
