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
import itertools
import math
from typing import Literal, Optional

import numpy as np
import pydantic
from scipy.spatial.distance import cdist

from pointset import ColoredPointSet, FrozenArray

# Guards floor(fraction * count) against 20/91 * 91 landing just below 20.
_COUNT_EPSILON = 1e-9


def fraction_count(fraction: float, count: int) -> int:
    return int(math.floor(fraction * count + _COUNT_EPSILON))


class CorrespondenceGroundTruth(pydantic.BaseModel):
    """Known (model index, anchor index) matches, injective on both sides."""

    model_config = pydantic.ConfigDict(frozen=True)

    pairs: list[tuple[int, int]]

    @pydantic.model_validator(mode="after")
    def _check(self) -> "CorrespondenceGroundTruth":
        model_indices = [i for i, _ in self.pairs]
        anchor_indices = [n for _, n in self.pairs]
        if any(index < 0 for index in model_indices + anchor_indices):
            raise ValueError("correspondence indices must be nonnegative")
        if len(set(model_indices)) != len(model_indices):
            raise ValueError("model indices must be unique")
        if len(set(anchor_indices)) != len(anchor_indices):
            raise ValueError("anchor indices must be unique")
        return self

    @classmethod
    def identity(cls, count: int) -> "CorrespondenceGroundTruth":
        return cls(pairs=[(i, i) for i in range(count)])

    def check_bounds(self, model_count: int, anchor_count: int) -> None:
        for i, n in self.pairs:
            if i >= model_count or n >= anchor_count:
                raise ValueError(f"correspondence ({i}, {n}) is out of range")

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        pairs = np.array(self.pairs, dtype=np.intp).reshape(-1, 2)
        return pairs[:, 0], pairs[:, 1]


class Warp(pydantic.BaseModel):
    """Smooth displacement: sum_k amplitude_k * exp(-|p - c_k|^2 / (2 radius^2)).

    With no explicit control points, `random_controls` points of the set are
    drawn (seeded) as centres with amplitudes uniform in +-`random_amplitude`.
    """

    model_config = pydantic.ConfigDict(frozen=True)

    control_points: list[list[float]] = []
    amplitudes: list[list[float]] = []
    radius: pydantic.PositiveFloat = 1.0
    random_controls: pydantic.NonNegativeInt = 0
    random_amplitude: pydantic.NonNegativeFloat = 0.0

    @pydantic.model_validator(mode="after")
    def _check(self) -> "Warp":
        if len(self.control_points) != len(self.amplitudes):
            raise ValueError("each control point needs one amplitude vector")
        return self

    def resolve(
        self, point_set: ColoredPointSet, seed: int
    ) -> tuple[np.ndarray, np.ndarray]:
        dim = point_set.spatial_dim
        if self.control_points:
            centres = np.array(self.control_points, dtype=np.float64)
            amplitudes = np.array(self.amplitudes, dtype=np.float64)
            for array in (centres, amplitudes):
                if array.ndim != 2 or array.shape[1] != dim:
                    raise ValueError(f"control points and amplitudes must have {dim} columns")
            return centres, amplitudes
        if self.random_controls == 0:
            return np.zeros((0, dim)), np.zeros((0, dim))
        rng = np.random.default_rng(seed)
        centres = point_set.positions[
            rng.choice(point_set.count, size=min(self.random_controls, point_set.count), replace=False)
        ]
        amplitudes = rng.uniform(
            -self.random_amplitude, self.random_amplitude, size=centres.shape
        )
        return centres, amplitudes


class ExperimentSpec(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True, extra="forbid")

    seed: pydantic.NonNegativeInt = 0
    missing_fraction: float = pydantic.Field(default=0.0, ge=0.0, lt=1.0)
    removal_side: Literal["anchor", "model"] = "anchor"
    removal_mode: Literal["uniform", "region"] = "uniform"
    color_snr_db: Optional[pydantic.FiniteFloat] = None
    color_outlier_fraction: float = pydantic.Field(default=0.0, ge=0.0, le=1.0)
    warp: Warp = Warp()


def apply_warp(point_set: ColoredPointSet, warp: Warp, seed: int = 0) -> ColoredPointSet:
    """Displaces positions by the warp field; colours and point order are kept."""
    centres, amplitudes = warp.resolve(point_set, seed)
    if len(centres) == 0:
        return point_set
    weights = np.exp(
        -cdist(point_set.positions, centres, "sqeuclidean") / (2.0 * warp.radius**2)
    )
    return point_set.with_positions(point_set.positions + weights @ amplitudes)


def random_warp(
    point_set: ColoredPointSet,
    controls: int,
    amplitude: float,
    radius: float,
    seed: int,
) -> Warp:
    centres, amplitudes = Warp(
        random_controls=controls, random_amplitude=amplitude, radius=radius
    ).resolve(point_set, seed)
    return Warp(
        control_points=centres.tolist(), amplitudes=amplitudes.tolist(), radius=radius
    )


def remove_points(
    point_set: ColoredPointSet,
    truth: CorrespondenceGroundTruth,
    fraction: float,
    seed: int,
    side: Literal["anchor", "model"] = "anchor",
    mode: Literal["uniform", "region"] = "uniform",
) -> tuple[ColoredPointSet, CorrespondenceGroundTruth]:
    """Drops floor(fraction * count) points and re-indexes the surviving truth pairs.

    uniform: a seeded random subset.
    region: the points nearest to a seeded random point of the set.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"fraction must lie in [0, 1), got {fraction}")
    removed = fraction_count(fraction, point_set.count)
    if removed == 0:
        return point_set, truth
    if removed >= point_set.count:
        raise ValueError("removal would empty the point set")

    rng = np.random.default_rng(seed)
    if mode == "uniform":
        dropped = rng.choice(point_set.count, size=removed, replace=False)
    elif mode == "region":
        centre = point_set.positions[rng.integers(point_set.count)]
        distances = np.linalg.norm(point_set.positions - centre, axis=1)
        dropped = np.argsort(distances, kind="stable")[:removed]
    else:
        raise ValueError(f"Unknown removal mode: {mode}")

    keep = np.setdiff1d(np.arange(point_set.count), dropped)
    new_index = {int(old): new for new, old in enumerate(keep)}
    pairs = []
    for i, n in truth.pairs:
        if side == "anchor" and n in new_index:
            pairs.append((i, new_index[n]))
        elif side == "model" and i in new_index:
            pairs.append((new_index[i], n))
    return point_set.subset(keep), CorrespondenceGroundTruth(pairs=pairs)


def add_color_noise(
    point_set: ColoredPointSet, snr_db: Optional[float], seed: int
) -> ColoredPointSet:
    """Adds per-channel Gaussian noise with variance P_c / 10^(snr_db / 10).

    P_c is the channel's mean square over the set; results are clipped to
    [0, 1]. None or +inf disables the noise.
    """
    if snr_db is None or snr_db == math.inf or point_set.color_dim == 0:
        return point_set
    colors = point_set.colors
    power = np.mean(np.square(colors), axis=0)
    std = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    noisy = colors + rng.standard_normal(colors.shape) * std
    return point_set.with_colors(np.clip(noisy, 0.0, 1.0))


def farthest_color(colors: np.ndarray) -> np.ndarray:
    """Corner of the colour cube with the largest summed distance to `colors`.

    Corners are scanned in lexicographic order; the first maximum wins.
    """
    dim = colors.shape[1]
    corners = np.array(list(itertools.product((0.0, 1.0), repeat=dim)))
    summed = cdist(corners, colors).sum(axis=1)
    return corners[int(np.argmax(summed))]


def inject_color_outliers(
    point_set: ColoredPointSet, fraction: float, seed: int
) -> ColoredPointSet:
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    recolored = fraction_count(fraction, point_set.count)
    if recolored == 0 or point_set.color_dim == 0:
        return point_set
    outlier = farthest_color(point_set.colors)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(point_set.count, size=recolored, replace=False)
    colors = np.array(point_set.colors)
    colors[chosen] = outlier
    return point_set.with_colors(colors)


def rms_error(
    transformed: ColoredPointSet,
    anchor: ColoredPointSet,
    truth: CorrespondenceGroundTruth,
) -> float:
    """Root mean square distance over the known correspondences."""
    if not truth.pairs:
        raise ValueError("ground truth is empty")
    truth.check_bounds(transformed.count, anchor.count)
    model_indices, anchor_indices = truth.arrays()
    residuals = transformed.positions[model_indices] - anchor.positions[anchor_indices]
    return float(np.sqrt(np.mean(np.sum(np.square(residuals), axis=1))))


class FlowField(pydantic.BaseModel):
    """One arrow per model point, from y_i to t_i."""

    model_config = pydantic.ConfigDict(frozen=True, arbitrary_types_allowed=True)

    origins: FrozenArray
    displacements: FrozenArray

    def __len__(self) -> int:
        return int(self.origins.shape[0])


def flow_field(original_model: ColoredPointSet, transformed: ColoredPointSet) -> FlowField:
    if original_model.count != transformed.count:
        raise ValueError(
            f"point counts differ: model {original_model.count}, transformed {transformed.count}"
        )
    return FlowField(
        origins=original_model.positions,
        displacements=transformed.positions - original_model.positions,
    )


def fish_shape(count: int = 91, regions: int = 9) -> ColoredPointSet:
    """The planar fish curve, coloured by `regions` contiguous hue bands.

    x = cos t - sin^2 t / sqrt(2), y = cos t sin t, scaled to unit extent,
    with a single hue channel stepping by 1 / regions along the outline.
    """
    if count <= 0 or regions <= 0:
        raise ValueError("count and regions must be positive")
    t = 2.0 * math.pi * np.arange(count) / count
    positions = np.column_stack(
        [np.cos(t) - np.sin(t) ** 2 / math.sqrt(2.0), np.cos(t) * np.sin(t)]
    )
    positions = positions - positions.mean(axis=0)
    positions = positions / np.max(np.linalg.norm(positions, axis=1))
    bands = np.minimum(np.arange(count) * regions // count, regions - 1)
    return ColoredPointSet(positions=positions, colors=(bands / regions)[:, None])


def jet_hues(count: int, levels: int = 17) -> np.ndarray:
    """`levels` contiguous hue bands along the point index, evenly spaced over [0, 1]."""
    if count <= 0 or levels < 2:
        raise ValueError("count must be positive and levels at least 2")
    bands = np.minimum(np.arange(count) * levels // count, levels - 1)
    return (bands / (levels - 1))[:, None]


def square_shape(count: int = 91, hues: int = 17) -> ColoredPointSet:
    """Evenly spaced points on a square outline with corners at unit norm.

    Traversal starts at the middle of the right edge and runs counter-clockwise,
    so index i sits at the same fraction of the outline as index i of the fish.
    """
    half = 1.0 / math.sqrt(2.0)
    corners = np.array(
        [[half, 0.0], [half, half], [-half, half], [-half, -half], [half, -half], [half, 0.0]]
    )
    arc = np.array([0.0, 1.0, 3.0, 5.0, 7.0, 8.0]) * half
    s = arc[-1] * np.arange(count) / count
    positions = np.column_stack(
        [np.interp(s, arc, corners[:, 0]), np.interp(s, arc, corners[:, 1])]
    )
    return ColoredPointSet(positions=positions, colors=jet_hues(count, hues))


def square_to_fish(
    count: int = 91, hues: int = 17
) -> tuple[ColoredPointSet, ColoredPointSet, CorrespondenceGroundTruth]:
    """Anchor fish, model square, both in the same jet-hue bands; truth pairs equal indices."""
    anchor = fish_shape(count).with_colors(jet_hues(count, hues))
    return anchor, square_shape(count, hues), CorrespondenceGroundTruth.identity(count)


def build_experiment(
    spec: ExperimentSpec, base: ColoredPointSet
) -> tuple[ColoredPointSet, ColoredPointSet, CorrespondenceGroundTruth]:
    """Anchor, model and ground truth for one spec.

    The model is `base`; the anchor is the warped base. Removal hits the side
    named by `spec.removal_side`; colour noise and colour outliers hit the anchor.
    """
    truth = CorrespondenceGroundTruth.identity(base.count)
    model = base
    anchor = apply_warp(base, spec.warp, spec.seed)
    if spec.removal_side == "anchor":
        anchor, truth = remove_points(
            anchor, truth, spec.missing_fraction, spec.seed, "anchor", spec.removal_mode
        )
    else:
        model, truth = remove_points(
            model, truth, spec.missing_fraction, spec.seed, "model", spec.removal_mode
        )
    anchor = add_color_noise(anchor, spec.color_snr_db, spec.seed)
    anchor = inject_color_outliers(anchor, spec.color_outlier_fraction, spec.seed + 1)
    return anchor, model, truth
