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
from typing import Literal, Optional

import matplotlib.colors
import numpy as np
import pandas as pd
import pydantic

from pointset import ColoredPointSet, FrozenArray


def rgb_to_hue(colors: np.ndarray) -> np.ndarray:
    """Hue of each RGB row as a fraction of the HSV circle, shape (N, 1).

    Achromatic rows (max == min) get hue 0.
    """
    colors = np.asarray(colors, dtype=np.float64)
    if colors.ndim != 2 or colors.shape[1] != 3:
        raise ValueError("rgb_to_hue expects an N x 3 matrix")
    hsv = matplotlib.colors.rgb_to_hsv(colors)
    return hsv[:, :1] % 1.0


def hue_to_rgb(hues: np.ndarray) -> np.ndarray:
    """Fully saturated, full-value RGB rows for hue fractions."""
    hues = np.asarray(hues, dtype=np.float64).reshape(-1)
    hsv = np.column_stack([hues % 1.0, np.ones_like(hues), np.ones_like(hues)])
    return matplotlib.colors.hsv_to_rgb(hsv)


def downsample(
    point_set: ColoredPointSet,
    target: Optional[int] = None,
    strategy: Literal["uniform", "voxel"] = "uniform",
    seed: int = 0,
    cell_size: Optional[float] = None,
) -> ColoredPointSet:
    """Reduces a point set.

    uniform: exactly `target` points drawn without replacement (seeded), kept
        in their original order.
    voxel: one point per occupied cell of side `cell_size`, at the centroid
        of the cell with the mean colour of the cell.
    """
    if strategy == "uniform":
        if target is None or target <= 0:
            raise ValueError("uniform downsampling needs a positive target")
        if target > point_set.count:
            raise ValueError(
                f"target {target} exceeds the {point_set.count} available points"
            )
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(point_set.count, size=target, replace=False))
        return point_set.subset(keep)
    elif strategy == "voxel":
        if cell_size is None or not cell_size > 0.0:
            raise ValueError("voxel downsampling needs a positive cell size")
        cells = np.floor(point_set.positions / cell_size).astype(np.int64)
        frame = pd.DataFrame(
            np.hstack([point_set.positions, point_set.colors]),
        )
        keys = [pd.Series(cells[:, d]) for d in range(point_set.spatial_dim)]
        means = frame.groupby(keys, sort=True).mean().to_numpy()
        return ColoredPointSet(
            positions=means[:, : point_set.spatial_dim],
            colors=np.clip(means[:, point_set.spatial_dim :], 0.0, 1.0),
        )
    else:
        raise ValueError(f"Unknown downsampling strategy: {strategy}")


class Normalization(pydantic.BaseModel):
    """Joint zero-mean, unit-max-extent scaling shared by anchor and model."""

    model_config = pydantic.ConfigDict(frozen=True, arbitrary_types_allowed=True)

    mean: FrozenArray
    scale: pydantic.PositiveFloat

    def normalize(self, positions: np.ndarray) -> np.ndarray:
        return (np.asarray(positions) - self.mean) / self.scale

    def denormalize(self, positions: np.ndarray) -> np.ndarray:
        return np.asarray(positions) * self.scale + self.mean


def fit_normalization(
    anchor: ColoredPointSet, model: ColoredPointSet
) -> Normalization:
    joint = np.vstack([anchor.positions, model.positions])
    mean = joint.mean(axis=0)
    extent = float(np.max(np.linalg.norm(joint - mean, axis=1)))
    return Normalization(mean=mean, scale=extent if extent > 0.0 else 1.0)
