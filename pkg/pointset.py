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
from typing import Annotated, Any, Literal, Optional, Union

import numpy as np
import pydantic

SPATIAL_DIMS = (2, 3)
COLOR_DIMS = (0, 1, 3)


class RegistrationError(RuntimeError):
    """Raised when the EM iterations cannot continue numerically."""


def _frozen_array(value: Any) -> np.ndarray:
    array = np.array(value, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


FrozenArray = Annotated[np.ndarray, pydantic.BeforeValidator(_frozen_array)]


def _array_violations(positions: Any, colors: Any) -> list[str]:
    positions = np.asarray(positions, dtype=np.float64)
    colors = np.asarray(colors, dtype=np.float64)
    violations = []
    if positions.ndim != 2:
        violations.append("positions must be a matrix")
        return violations
    if colors.ndim != 2:
        violations.append("colors must be a matrix")
        return violations
    if positions.shape[0] == 0:
        violations.append("count must be positive")
    if positions.shape[0] != colors.shape[0]:
        violations.append("positions and colors have different row counts")
    if positions.shape[1] not in SPATIAL_DIMS:
        violations.append(f"position dimension must be one of {SPATIAL_DIMS}")
    if colors.shape[1] not in COLOR_DIMS:
        violations.append(f"color dimension must be one of {COLOR_DIMS}")
    if not np.all(np.isfinite(positions)):
        violations.append("non-finite position")
    if not np.all(np.isfinite(colors)):
        violations.append("non-finite color")
    elif np.any((colors < 0.0) | (colors > 1.0)):
        violations.append("color out of range")
    return violations


class ValidationResult(pydantic.BaseModel):
    violations: list[str] = []

    @property
    def ok(self) -> bool:
        return not self.violations


class ColoredPointSet(pydantic.BaseModel):
    """N points, each a position in R^D_S plus a colour in [0,1]^D_C.

    Instances are immutable: both arrays are copied and marked read-only.
    Construction rejects anything `validate` would flag; use
    `ColoredPointSet.model_construct` to build an unchecked set for diagnosis.
    """

    model_config = pydantic.ConfigDict(frozen=True, arbitrary_types_allowed=True)

    positions: FrozenArray
    colors: FrozenArray

    @pydantic.model_validator(mode="after")
    def _check(self) -> "ColoredPointSet":
        violations = _array_violations(self.positions, self.colors)
        if violations:
            raise ValueError("; ".join(violations))
        return self

    @classmethod
    def uncolored(cls, positions: Any) -> "ColoredPointSet":
        positions = np.asarray(positions, dtype=np.float64)
        return cls(positions=positions, colors=np.zeros((len(positions), 0)))

    @property
    def count(self) -> int:
        return int(self.positions.shape[0])

    @property
    def spatial_dim(self) -> int:
        return int(self.positions.shape[1])

    @property
    def color_dim(self) -> int:
        return int(self.colors.shape[1])

    def with_positions(self, positions: np.ndarray) -> "ColoredPointSet":
        return ColoredPointSet(positions=positions, colors=self.colors)

    def with_colors(self, colors: np.ndarray) -> "ColoredPointSet":
        return ColoredPointSet(positions=self.positions, colors=colors)

    def subset(self, indices: np.ndarray) -> "ColoredPointSet":
        indices = np.asarray(indices, dtype=np.intp)
        return ColoredPointSet(
            positions=self.positions[indices], colors=self.colors[indices]
        )


def validate(point_set: ColoredPointSet) -> ValidationResult:
    """Lists the violated invariants of a point set; an empty list means ok."""
    return ValidationResult(
        violations=_array_violations(point_set.positions, point_set.colors)
    )


def append_channels(point_set: ColoredPointSet) -> np.ndarray:
    """Row n is positions[n] followed by colors[n]."""
    return np.hstack([point_set.positions, point_set.colors])


def split_channels(matrix: np.ndarray, spatial_dim: int) -> ColoredPointSet:
    matrix = np.asarray(matrix, dtype=np.float64)
    return ColoredPointSet(
        positions=matrix[:, :spatial_dim], colors=matrix[:, spatial_dim:]
    )


class RegistrationConfig(pydantic.BaseModel):
    """Hyperparameters of a registration run.

    Defaults assume roughly unit-scale (or prenormalized) positions.
    Setting `w_color` to 0 turns the colour outlier term off, which makes the
    colour-aware E-step reduce to the plain CPD posterior.
    """

    model_config = pydantic.ConfigDict(
        frozen=True, extra="forbid", populate_by_name=True
    )

    alpha: float = pydantic.Field(default=0.1, ge=0.0, lt=1.0)
    beta: float = pydantic.Field(default=2.0, gt=0.0)
    lambda_: float = pydantic.Field(default=3.0, gt=0.0, alias="lambda")
    w_shape: float = pydantic.Field(default=1.0, ge=0.0)
    w_color: float = pydantic.Field(default=1.0, ge=0.0)
    sigma_color: Union[Literal["auto"], pydantic.PositiveFloat] = "auto"
    color_outlier_term: bool = True
    max_iterations: int = pydantic.Field(default=150, gt=0)
    tolerance: float = pydantic.Field(default=1e-8, gt=0.0)
    sigma_floor: float = pydantic.Field(default=1e-10, gt=0.0)
    prenormalize: bool = False

    @pydantic.model_validator(mode="after")
    def _check_weights(self) -> "RegistrationConfig":
        if self.w_shape + self.w_color <= 0.0:
            raise ValueError("w_shape + w_color must be positive")
        if self.w_color == 0.0 and self.color_outlier_term:
            # Frozen models refuse normal attribute assignment.
            object.__setattr__(self, "color_outlier_term", False)
        return self


class CoherentField(pydantic.BaseModel):
    """Gaussian kernel G and coefficients W of the displacement T = Y + GW."""

    model_config = pydantic.ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kernel: FrozenArray
    coefficients: FrozenArray

    @pydantic.model_validator(mode="after")
    def _check(self) -> "CoherentField":
        kernel = self.kernel
        if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
            raise ValueError("kernel must be square")
        if self.coefficients.ndim != 2 or self.coefficients.shape[0] != kernel.shape[0]:
            raise ValueError("coefficients must have one row per kernel row")
        if not np.allclose(kernel, kernel.T, rtol=1e-12, atol=0.0):
            raise ValueError("kernel is not symmetric")
        if not np.all(np.diag(kernel) == 1.0):
            raise ValueError("kernel diagonal must be exactly 1")
        # Entries of far-apart points underflow to exactly 0.
        if np.any(kernel < 0.0) or np.any(kernel > 1.0):
            raise ValueError("kernel entries must lie in [0, 1]")
        return self

    def displacement(self) -> np.ndarray:
        return self.kernel @ self.coefficients


class PosteriorMatrix(pydantic.BaseModel):
    """Soft correspondences P(m_i | a_n), model points by rows, anchors by columns."""

    model_config = pydantic.ConfigDict(frozen=True, arbitrary_types_allowed=True)

    weights: FrozenArray
    outlier_mass: FrozenArray

    @pydantic.model_validator(mode="after")
    def _check(self) -> "PosteriorMatrix":
        if self.weights.ndim != 2:
            raise ValueError("weights must be a matrix")
        if self.outlier_mass.shape != (self.weights.shape[1],):
            raise ValueError("outlier_mass must have one entry per anchor point")
        for name, values in (("weights", self.weights), ("outlier_mass", self.outlier_mass)):
            if not np.all(np.isfinite(values)):
                raise ValueError(f"{name} must be finite")
            if np.any(values < 0.0):
                raise ValueError(f"{name} must be nonnegative")
        return self

    @property
    def row_sums(self) -> np.ndarray:
        """P1: posterior mass received by each model point."""
        return self.weights.sum(axis=1)

    @property
    def column_sums(self) -> np.ndarray:
        """P^T 1: posterior mass assigned from each anchor point."""
        return self.weights.sum(axis=0)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())


class RegistrationReport(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True, arbitrary_types_allowed=True)

    method: Literal["ccpd", "cpd"]
    transformed: ColoredPointSet
    field: CoherentField
    posterior: PosteriorMatrix
    sigma_shape_trace: FrozenArray
    objective_trace: FrozenArray
    sigma_color: Optional[float] = None
    iterations: int
    converged: bool

    @pydantic.model_validator(mode="after")
    def _check(self) -> "RegistrationReport":
        if np.any(self.sigma_shape_trace <= 0.0):
            raise ValueError("sigma_shape_trace must be strictly positive")
        if len(self.objective_trace) != self.iterations:
            raise ValueError("objective_trace must have one entry per iteration")
        return self
