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
import logging
import warnings

import numpy as np
import pydantic
import scipy.linalg
from scipy.spatial.distance import cdist

from pointset import FrozenArray, PosteriorMatrix, RegistrationError

logger = logging.getLogger(__name__)

# Model points receiving less posterior mass than this are held in place.
MIN_ROW_MASS = 1e-12
RESIDUAL_RTOL = 1e-8


class MStepInputs(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True, arbitrary_types_allowed=True)

    posterior: PosteriorMatrix
    anchor_positions: FrozenArray
    model_positions: FrozenArray
    kernel: FrozenArray
    lambda_: pydantic.PositiveFloat
    sigma_shape_sq: pydantic.PositiveFloat

    @pydantic.model_validator(mode="after")
    def _check(self) -> "MStepInputs":
        m, n = self.posterior.weights.shape
        if self.anchor_positions.shape[0] != n:
            raise ValueError("posterior columns must match anchor points")
        if self.model_positions.shape[0] != m or self.kernel.shape != (m, m):
            raise ValueError("posterior rows, kernel and model points must agree")
        if self.anchor_positions.shape[1] != self.model_positions.shape[1]:
            raise ValueError("anchor and model positions have different dimensions")
        return self


def build_kernel(model_positions: np.ndarray, beta: float) -> np.ndarray:
    """G with g_ij = exp(-|y_i - y_j|^2 / (2 beta^2))."""
    if not beta > 0.0:
        raise ValueError("beta must be positive")
    positions = np.asarray(model_positions, dtype=np.float64)
    return np.exp(-cdist(positions, positions, "sqeuclidean") / (2.0 * beta**2))


def solve_coefficients(inputs: MStepInputs) -> np.ndarray:
    """Solves (d(P1) G + lambda sigma^2 I) W = P X - d(P1) Y for W.

    This is the literal system (G + lambda sigma^2 d(P1)^-1) W = d(P1)^-1 P X - Y
    multiplied through by d(P1), which stays well posed when a model point
    receives no posterior mass.
    """
    weights = inputs.posterior.weights
    row_mass = inputs.posterior.row_sums
    regularization = inputs.lambda_ * inputs.sigma_shape_sq
    model = inputs.model_positions

    system = row_mass[:, None] * inputs.kernel
    system[np.diag_indices_from(system)] += regularization
    rhs = weights @ inputs.anchor_positions - row_mass[:, None] * model

    starved = row_mass < MIN_ROW_MASS
    if np.any(starved):
        logger.debug("%d model points carry no posterior mass", int(starved.sum()))
        system[starved, :] = 0.0
        system[starved, starved] = regularization
        rhs[starved] = -row_mass[starved, None] * model[starved]

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            coefficients = scipy.linalg.solve(system, rhs, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise RegistrationError("M-step solve failed") from e
    if not np.all(np.isfinite(coefficients)):
        raise RegistrationError("M-step solve failed")

    residual = np.linalg.norm(system @ coefficients - rhs)
    bound = RESIDUAL_RTOL * (
        np.linalg.norm(system) * np.linalg.norm(coefficients) + np.linalg.norm(rhs)
    )
    if residual > bound:
        logger.warning("M-step residual %.3e exceeds %.3e", residual, bound)
    return coefficients


def apply_transform(
    model_positions: np.ndarray, kernel: np.ndarray, coefficients: np.ndarray
) -> np.ndarray:
    """T = Y + G W."""
    return np.asarray(model_positions) + np.asarray(kernel) @ np.asarray(coefficients)


def update_sigma_shape(
    posterior: PosteriorMatrix,
    anchor_positions: np.ndarray,
    transformed: np.ndarray,
    sigma_floor: float = 1e-10,
) -> float:
    """Weighted residual variance sum_in P_in |x_n - t_i|^2 / (N_P D_S), floored."""
    weights = posterior.weights
    total_mass = posterior.total_mass
    if not total_mass > 0.0:
        raise RegistrationError("posterior mass vanished")
    anchor_positions = np.asarray(anchor_positions, dtype=np.float64)
    transformed = np.asarray(transformed, dtype=np.float64)
    dim = anchor_positions.shape[1]

    anchor_term = posterior.column_sums @ np.sum(np.square(anchor_positions), axis=1)
    cross_term = np.sum((weights @ anchor_positions) * transformed)
    model_term = posterior.row_sums @ np.sum(np.square(transformed), axis=1)
    sigma_sq = (anchor_term - 2.0 * cross_term + model_term) / (total_mass * dim)
    return max(float(sigma_sq), sigma_floor)
