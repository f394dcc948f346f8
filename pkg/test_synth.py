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

import numpy as np
import numpy.testing as npt
import pydantic
from hypothesis import given, settings
from hypothesis import strategies as st

from bench.synth import (
    CorrespondenceGroundTruth,
    ExperimentSpec,
    Warp,
    add_color_noise,
    apply_warp,
    build_experiment,
    farthest_color,
    fish_shape,
    flow_field,
    fraction_count,
    inject_color_outliers,
    jet_hues,
    random_warp,
    remove_points,
    rms_error,
    square_shape,
    square_to_fish,
)
from pointset import ColoredPointSet


def colored_cloud(count, seed=0, dim=2, color_dim=3, high=1.0):
    rng = np.random.default_rng(seed)
    return ColoredPointSet(
        positions=rng.normal(size=(count, dim)),
        colors=rng.uniform(0.0, high, size=(count, color_dim)),
    )


class TestGroundTruth(unittest.TestCase):
    def test_identity(self):
        self.assertEqual(CorrespondenceGroundTruth.identity(3).pairs, [(0, 0), (1, 1), (2, 2)])

    def test_must_be_injective(self):
        with self.assertRaisesRegex(ValueError, "anchor indices must be unique"):
            CorrespondenceGroundTruth(pairs=[(0, 1), (1, 1)])
        with self.assertRaisesRegex(ValueError, "model indices must be unique"):
            CorrespondenceGroundTruth(pairs=[(0, 0), (0, 1)])

    def test_bounds(self):
        with self.assertRaises(ValueError):
            CorrespondenceGroundTruth(pairs=[(0, 5)]).check_bounds(1, 5)


class TestRemovePoints(unittest.TestCase):
    def test_fish_removal_counts(self):
        fish = fish_shape()
        truth = CorrespondenceGroundTruth.identity(fish.count)
        self.assertEqual(remove_points(fish, truth, 20 / 91, seed=1)[0].count, 71)
        self.assertEqual(remove_points(fish, truth, 53 / 91, seed=1)[0].count, 38)
        self.assertEqual(fraction_count(20 / 91, 91), 20)

    def test_zero_fraction_is_unchanged(self):
        cloud = colored_cloud(10)
        truth = CorrespondenceGroundTruth.identity(10)
        reduced, pruned = remove_points(cloud, truth, 0.0, seed=0)
        self.assertIs(reduced, cloud)
        self.assertEqual(pruned, truth)

    def test_emptying_is_an_error(self):
        cloud = colored_cloud(1)
        with self.assertRaisesRegex(ValueError, "empty"):
            remove_points(cloud, CorrespondenceGroundTruth.identity(1), 1.0 - 1e-12, seed=0)

    def test_fraction_range(self):
        cloud = colored_cloud(4)
        with self.assertRaises(ValueError):
            remove_points(cloud, CorrespondenceGroundTruth.identity(4), 1.0, seed=0)

    def test_survivors_and_truth_stay_consistent(self):
        for mode in ("uniform", "region"):
            for side in ("anchor", "model"):
                cloud = colored_cloud(40, seed=2)
                truth = CorrespondenceGroundTruth.identity(40)
                reduced, pruned = remove_points(cloud, truth, 0.3, 5, side, mode)
                self.assertEqual(reduced.count, 28)
                self.assertEqual(len(pruned.pairs), 28)
                for i, n in pruned.pairs:
                    kept, original = (n, i) if side == "anchor" else (i, n)
                    npt.assert_array_equal(reduced.positions[kept], cloud.positions[original])
                    npt.assert_array_equal(reduced.colors[kept], cloud.colors[original])

    def test_region_removal_is_contiguous(self):
        cloud = colored_cloud(50, seed=3)
        reduced, _ = remove_points(
            cloud, CorrespondenceGroundTruth.identity(50), 0.2, 7, mode="region"
        )
        kept = {tuple(p) for p in reduced.positions}
        removed = np.array([p for p in cloud.positions if tuple(p) not in kept])
        self.assertEqual(len(removed), 10)
        # Some removed point sees every other removed point before any survivor.
        self.assertTrue(
            any(
                np.linalg.norm(removed - centre, axis=1).max()
                <= np.linalg.norm(reduced.positions - centre, axis=1).min()
                for centre in removed
            )
        )

    def test_seeded(self):
        cloud = colored_cloud(30)
        truth = CorrespondenceGroundTruth.identity(30)
        first, _ = remove_points(cloud, truth, 0.5, seed=11)
        second, _ = remove_points(cloud, truth, 0.5, seed=11)
        npt.assert_array_equal(first.positions, second.positions)


class TestWarp(unittest.TestCase):
    def test_zero_amplitudes(self):
        cloud = colored_cloud(8)
        warp = Warp(control_points=[[0.0, 0.0]], amplitudes=[[0.0, 0.0]])
        npt.assert_array_equal(apply_warp(cloud, warp).positions, cloud.positions)

    def test_infinite_radius_translates(self):
        cloud = colored_cloud(8)
        warp = Warp(control_points=[[0.0, 0.0]], amplitudes=[[1.0, 0.0]], radius=math.inf)
        warped = apply_warp(cloud, warp)
        npt.assert_allclose(warped.positions, cloud.positions + [1.0, 0.0])
        npt.assert_array_equal(warped.colors, cloud.colors)

    def test_mismatched_amplitudes(self):
        with self.assertRaises(ValueError):
            Warp(control_points=[[0.0, 0.0]], amplitudes=[])

    def test_control_dimension_must_match_the_set(self):
        warp = Warp(control_points=[[0.0, 0.0, 0.0]], amplitudes=[[0.1, 0.0, 0.0]])
        with self.assertRaisesRegex(ValueError, "must have 2 columns"):
            apply_warp(colored_cloud(8), warp)
        planar_amplitudes = Warp(control_points=[[0.0, 0.0, 0.0]], amplitudes=[[0.1, 0.0]])
        with self.assertRaises(ValueError):
            apply_warp(colored_cloud(8, dim=3), planar_amplitudes)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_displacement_is_bounded(self, seed):
        cloud = colored_cloud(25, seed=seed % 1000)
        warp = random_warp(cloud, controls=4, amplitude=0.5, radius=0.7, seed=seed)
        bound = sum(np.linalg.norm(a) for a in warp.amplitudes)
        moved = np.linalg.norm(apply_warp(cloud, warp).positions - cloud.positions, axis=1)
        self.assertTrue(np.all(moved <= bound + 1e-12))

    def test_random_warp_is_seeded(self):
        cloud = colored_cloud(25)
        self.assertEqual(
            random_warp(cloud, 3, 0.2, 1.0, seed=4), random_warp(cloud, 3, 0.2, 1.0, seed=4)
        )


class TestColorCorruption(unittest.TestCase):
    def test_disabled_noise(self):
        cloud = colored_cloud(10)
        self.assertIs(add_color_noise(cloud, None, 0), cloud)
        self.assertIs(add_color_noise(cloud, math.inf, 0), cloud)

    def test_noise_level(self):
        cloud = ColoredPointSet(
            positions=np.zeros((10_000, 2)), colors=np.full((10_000, 1), 0.5)
        )
        noisy = add_color_noise(cloud, 20.0, seed=1)
        npt.assert_array_equal(noisy.positions, cloud.positions)
        self.assertAlmostEqual(np.std(noisy.colors - 0.5), 0.05, delta=0.005)

    def test_noise_ratio_between_levels(self):
        cloud = ColoredPointSet(positions=np.zeros((20, 2)), colors=np.full((20, 1), 0.5))
        loud = add_color_noise(cloud, 5.0, seed=2).colors[:, 0] - 0.5
        quiet = add_color_noise(cloud, 20.0, seed=2).colors[:, 0] - 0.5
        unclipped = np.abs(loud) < 0.5
        self.assertTrue(np.any(unclipped))
        npt.assert_allclose(
            loud[unclipped] / quiet[unclipped], math.sqrt(10.0**1.5), rtol=1e-9
        )

    def test_noise_stays_in_range(self):
        noisy = add_color_noise(colored_cloud(200), 0.0, seed=3)
        self.assertTrue(np.all((noisy.colors >= 0.0) & (noisy.colors <= 1.0)))

    def test_farthest_color_of_dark_palette_is_white(self):
        npt.assert_array_equal(farthest_color(np.array([[0.1, 0.2, 0.0], [0.0, 0.1, 0.3]])), [1.0, 1.0, 1.0])

    def test_outlier_fraction_zero(self):
        cloud = colored_cloud(10)
        self.assertIs(inject_color_outliers(cloud, 0.0, seed=0), cloud)

    def test_outlier_fraction_one(self):
        dark = colored_cloud(12, high=0.3)
        recolored = inject_color_outliers(dark, 1.0, seed=0)
        npt.assert_array_equal(recolored.colors, np.ones((12, 3)))
        npt.assert_array_equal(recolored.positions, dark.positions)

    def test_outlier_count(self):
        dark = colored_cloud(100, high=0.3)
        recolored = inject_color_outliers(dark, 0.25, seed=5)
        white = np.all(recolored.colors == 1.0, axis=1)
        self.assertEqual(int(white.sum()), 25)
        npt.assert_array_equal(recolored.colors[~white], dark.colors[~white])


class TestRmsError(unittest.TestCase):
    def test_perfect_alignment(self):
        cloud = colored_cloud(5)
        self.assertEqual(rms_error(cloud, cloud, CorrespondenceGroundTruth.identity(5)), 0.0)

    def test_single_pair(self):
        a = ColoredPointSet.uncolored([[0.0, 0.0]])
        b = ColoredPointSet.uncolored([[0.1, 0.0]])
        self.assertAlmostEqual(rms_error(b, a, CorrespondenceGroundTruth.identity(1)), 0.1)

    def test_two_pairs(self):
        transformed = ColoredPointSet.uncolored([[3.0, 0.0], [0.0, 4.0]])
        anchor = ColoredPointSet.uncolored([[0.0, 0.0], [0.0, 0.0]])
        value = rms_error(transformed, anchor, CorrespondenceGroundTruth.identity(2))
        self.assertAlmostEqual(value, math.sqrt(12.5))
        self.assertAlmostEqual(value, 3.5355, places=4)

    def test_empty_truth(self):
        cloud = colored_cloud(2)
        with self.assertRaises(ValueError):
            rms_error(cloud, cloud, CorrespondenceGroundTruth(pairs=[]))

    def test_invariances(self):
        rng = np.random.default_rng(6)
        transformed = colored_cloud(6, seed=7)
        anchor = colored_cloud(6, seed=8)
        truth = CorrespondenceGroundTruth(pairs=[(0, 3), (2, 1), (5, 0), (4, 4)])
        value = rms_error(transformed, anchor, truth)
        shuffled = CorrespondenceGroundTruth(pairs=list(reversed(truth.pairs)))
        self.assertAlmostEqual(rms_error(transformed, anchor, shuffled), value, places=12)
        angle = rng.uniform(0.0, 2.0 * math.pi)
        rotation = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
        offset = rng.normal(size=2)
        moved = rms_error(
            transformed.with_positions(transformed.positions @ rotation.T + offset),
            anchor.with_positions(anchor.positions @ rotation.T + offset),
            truth,
        )
        self.assertAlmostEqual(moved, value, places=12)


class TestFlowField(unittest.TestCase):
    def test_identity(self):
        cloud = colored_cloud(6)
        flow = flow_field(cloud, cloud)
        self.assertEqual(len(flow), 6)
        npt.assert_array_equal(flow.displacements, np.zeros((6, 2)))

    def test_translation(self):
        cloud = colored_cloud(6)
        flow = flow_field(cloud, cloud.with_positions(cloud.positions + [0.5, -1.0]))
        npt.assert_allclose(flow.displacements, np.tile([0.5, -1.0], (6, 1)))

    def test_count_mismatch(self):
        with self.assertRaises(ValueError):
            flow_field(colored_cloud(6), colored_cloud(5))


class TestExperiments(unittest.TestCase):
    def test_fish_shape(self):
        fish = fish_shape()
        self.assertEqual(fish.count, 91)
        self.assertEqual(fish.spatial_dim, 2)
        self.assertEqual(fish.color_dim, 1)
        self.assertEqual(len(np.unique(fish.colors)), 9)
        self.assertAlmostEqual(np.linalg.norm(fish.positions, axis=1).max(), 1.0)

    def test_jet_hues(self):
        hues = jet_hues(91)
        self.assertEqual(hues.shape, (91, 1))
        npt.assert_allclose(np.unique(hues), np.arange(17) / 16.0)
        self.assertTrue(np.all(np.diff(hues[:, 0]) >= 0.0))
        with self.assertRaises(ValueError):
            jet_hues(10, levels=1)

    def test_square_shape(self):
        square = square_shape()
        self.assertEqual(square.count, 91)
        self.assertEqual(len(np.unique(square.colors)), 17)
        norms = np.linalg.norm(square.positions, axis=1)
        self.assertLessEqual(norms.max(), 1.0 + 1e-12)
        self.assertGreaterEqual(norms.min(), 1.0 / math.sqrt(2.0) - 1e-12)
        npt.assert_allclose(square.positions[0], [1.0 / math.sqrt(2.0), 0.0])

    def test_square_corners_sit_at_unit_norm(self):
        square = square_shape(16)
        half = 1.0 / math.sqrt(2.0)
        npt.assert_allclose(
            square.positions[[2, 6, 10, 14]],
            [[half, half], [-half, half], [-half, -half], [half, -half]],
        )

    def test_square_to_fish(self):
        anchor, model, truth = square_to_fish()
        self.assertEqual((anchor.count, model.count), (91, 91))
        npt.assert_array_equal(anchor.colors, model.colors)
        npt.assert_array_equal(anchor.positions, fish_shape().positions)
        self.assertEqual(truth, CorrespondenceGroundTruth.identity(91))

    def test_spec_ranges(self):
        with self.assertRaises(pydantic.ValidationError):
            ExperimentSpec(missing_fraction=1.0)
        with self.assertRaises(pydantic.ValidationError):
            ExperimentSpec(color_snr_db=math.inf)
        with self.assertRaises(pydantic.ValidationError):
            ExperimentSpec(color_outlier_fraction=1.5)

    def test_null_spec(self):
        fish = fish_shape()
        anchor, model, truth = build_experiment(ExperimentSpec(), fish)
        npt.assert_array_equal(anchor.positions, model.positions)
        self.assertEqual(truth, CorrespondenceGroundTruth.identity(91))

    def test_deterministic(self):
        spec = ExperimentSpec(
            seed=3,
            missing_fraction=0.2,
            color_snr_db=10.0,
            color_outlier_fraction=0.1,
            warp=Warp(random_controls=3, random_amplitude=0.1, radius=0.5),
        )
        fish = fish_shape()
        first = build_experiment(spec, fish)
        second = build_experiment(spec, fish)
        for a, b in zip(first[:2], second[:2]):
            npt.assert_array_equal(a.positions, b.positions)
            npt.assert_array_equal(a.colors, b.colors)
        self.assertEqual(first[2], second[2])
        self.assertEqual(first[0].count, 91 - fraction_count(0.2, 91))

    def test_model_side_removal(self):
        spec = ExperimentSpec(missing_fraction=0.3, removal_side="model")
        anchor, model, truth = build_experiment(spec, fish_shape())
        self.assertEqual(anchor.count, 91)
        self.assertEqual(model.count, 91 - fraction_count(0.3, 91))
        truth.check_bounds(model.count, anchor.count)


if __name__ == '__main__':
    unittest.main()
