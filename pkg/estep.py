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
"""Likelihoods, posteriors and the objective of the shape/colour mixture.

All matrices are indexed (model point i, anchor point n). Likelihoods are kept
in log space; the posteriors shift every column by its largest exponent before
exponentiating, so columns whose raw Gaussians would underflow still produce
the same ratios.
"""
import math
from typing import Optional

import numpy as np
import pydantic
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from pointset import (
    ColoredPointSet,
    FrozenArray,
    PosteriorMatrix,
    RegistrationConfig,
    RegistrationError,
)

NLL_FLOOR = 1e-300
LOG_TWO_PI = math.log(2.0 * math.pi)


class LikelihoodMatrices(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True, arbitrary_types_allowed=True)

    log_shape: FrozenArray
    log_color: FrozenArray
    sigma_shape_sq: pydantic.PositiveFloat
    sigma_color: pydantic.PositiveFloat

    @pydantic.model_validator(mode="after")
    def _check(self) -> "LikelihoodMatrices":
        if self.log_shape.ndim != 2 or self.log_shape.shape != self.log_color.shape:
            raise ValueError("shape and color likelihoods must be matrices of equal size")
        return self

    @property
    def shape(self) -> np.ndarray:
        """p_S(a_n | m_i)."""
        return np.exp(self.log_shape)

    @property
    def color(self) -> np.ndarray:
        """p_C(a_n | m_i)."""
        return np.exp(self.log_color)

    @property
    def model_count(self) -> int:
        return int(self.log_shape.shape[0])

    @property
    def anchor_count(self) -> int:
        return int(self.log_shape.shape[1])


def log_gaussian(sq_dist: np.ndarray, variance: float, dim: int) -> np.ndarray:
    """Log density of an isotropic `dim`-variate Gaussian at squared distance `sq_dist`."""
    return -0.5 * dim * (LOG_TWO_PI + math.log(variance)) - sq_dist / (2.0 * variance)


def shape_log_likelihoods(
    anchor_positions: np.ndarray,
    transformed_model_positions: np.ndarray,
    sigma_shape_sq: float,
) -> np.ndarray:
    anchor_positions = np.asarray(anchor_positions, dtype=np.float64)
    transformed = np.asarray(transformed_model_positions, dtype=np.float64)
    if not (np.all(np.isfinite(anchor_positions)) and np.all(np.isfinite(transformed))):
        raise ValueError("non-finite position")
    if transformed.shape[1] != anchor_positions.shape[1]:
        raise ValueError("anchor and model positions have different dimensions")
    if not sigma_shape_sq > 0.0:
        raise ValueError("sigma_shape_sq must be positive")
    sq_dist = cdist(transformed, anchor_positions, "sqeuclidean")
    return log_gaussian(sq_dist, sigma_shape_sq, anchor_positions.shape[1])


def shape_likelihoods(
    anchor: ColoredPointSet,
    transformed_model_positions: np.ndarray,
    sigma_shape_sq: float,
) -> np.ndarray:
    return np.exp(
        shape_log_likelihoods(
            anchor.positions, transformed_model_positions, sigma_shape_sq
        )
    )


def color_log_likelihoods(
    anchor: ColoredPointSet, model: ColoredPointSet, sigma_color: float
) -> np.ndarray:
    if anchor.color_dim != model.color_dim:
        raise ValueError(
            f"color dimensions differ: anchor {anchor.color_dim}, model {model.color_dim}"
        )
    if not sigma_color > 0.0:
        raise ValueError("sigma_color must be positive")
    if anchor.color_dim == 0:
        return np.zeros((model.count, anchor.count))
    # Model colours are never transformed.
    sq_dist = cdist(model.colors, anchor.colors, "sqeuclidean")
    return log_gaussian(sq_dist, sigma_color**2, anchor.color_dim)


def color_likelihoods(
    anchor: ColoredPointSet, model: ColoredPointSet, sigma_color: float
) -> np.ndarray:
    return np.exp(color_log_likelihoods(anchor, model, sigma_color))


def location_outlier_term(alpha: float, m: int, n: int) -> float:
    """o_L = alpha / (1 - alpha) * M / N."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    if m <= 0 or n <= 0:
        raise ValueError("point counts must be positive")
    return alpha / (1.0 - alpha) * m / n


def _color_outlier_from_sums(
    color_sums: np.ndarray, sigma_color: float, m: int
) -> np.ndarray:
    peak = m / (sigma_color * math.sqrt(2.0 * math.pi))
    with np.errstate(over="ignore"):
        exponent = -(np.square(color_sums) / m) / (2.0 * sigma_color**2)
    return peak * np.exp(exponent)


def color_outlier_term(
    color_likelihood_column: np.ndarray, sigma_color: float, m: int
) -> float:
    """o_C for one anchor point, from its column of colour likelihoods."""
    if not sigma_color > 0.0:
        raise ValueError("sigma_color must be positive")
    total = np.sum(np.asarray(color_likelihood_column, dtype=np.float64))
    return float(_color_outlier_from_sums(total, sigma_color, m))


def color_outlier_terms(log_color: np.ndarray, sigma_color: float) -> np.ndarray:
    """o_C for every anchor column of a log colour-likelihood matrix."""
    sums = np.exp(logsumexp(log_color, axis=0))
    return _color_outlier_from_sums(sums, sigma_color, log_color.shape[0])


def _weighted_posterior(
    log_shape: np.ndarray,
    log_color: np.ndarray,
    w_shape: float,
    w_color: float,
    outlier: np.ndarray,
) -> PosteriorMatrix:
    """Evaluates p_S^wS p_C^wC / ((sum p_S)^wS (sum p_C)^wC + outlier) per column.

    Numerator and the product term of the denominator are both scaled by
    exp(-(wS * shift_S + wC * shift_C)); the outlier term is scaled alike.
    """
    shape_shift = log_shape.max(axis=0)
    color_shift = log_color.max(axis=0)
    relative_shape = np.exp(log_shape - shape_shift)
    relative_color = np.exp(log_color - color_shift)

    numerator = np.power(relative_shape, w_shape) * np.power(relative_color, w_color)
    product = np.power(relative_shape.sum(axis=0), w_shape) * np.power(
        relative_color.sum(axis=0), w_color
    )
    with np.errstate(divide="ignore", over="ignore"):
        log_scale = w_shape * shape_shift + w_color * color_shift
        scaled_outlier = np.exp(np.log(outlier) - log_scale)
        denominator = product + scaled_outlier
        weights = numerator / denominator
        outlier_mass = np.where(
            np.isinf(scaled_outlier), 1.0, scaled_outlier / denominator
        )

    if not (np.all(np.isfinite(weights)) and np.all(denominator > 0.0)):
        raise RegistrationError("degenerate posterior column")
    return PosteriorMatrix(weights=weights, outlier_mass=outlier_mass)


def ccpd_posterior(
    lik: LikelihoodMatrices, config: RegistrationConfig, m: int, n: int
) -> PosteriorMatrix:
    """Colour-and-shape posterior with the factorised denominator.

    D_n = (sum_j p_S)^wS * (sum_j p_C)^wC + o_C(n) + o_L, evaluated literally.
    """
    if lik.log_shape.shape != (m, n):
        raise ValueError(f"likelihoods are {lik.log_shape.shape}, expected {(m, n)}")
    outlier = np.full(n, location_outlier_term(config.alpha, m, n))
    if config.color_outlier_term:
        outlier = outlier + color_outlier_terms(lik.log_color, lik.sigma_color)
    return _weighted_posterior(
        lik.log_shape, lik.log_color, config.w_shape, config.w_color, outlier
    )


def cpd_posterior(lik: LikelihoodMatrices, alpha: float) -> PosteriorMatrix:
    """Shape-only posterior; each column plus its outlier mass sums to 1."""
    m, n = lik.log_shape.shape
    outlier = np.full(n, location_outlier_term(alpha, m, n))
    return _weighted_posterior(lik.log_shape, lik.log_color, 1.0, 0.0, outlier)


def negative_log_likelihood(
    lik: LikelihoodMatrices,
    config: RegistrationConfig,
    n: Optional[int] = None,
    with_color: bool = True,
) -> float:
    """-sum_n log(sum_i (1 - alpha) / M * q_in + alpha / N), inner sums floored at 1e-300."""
    m = lik.model_count
    n = lik.anchor_count if n is None else n
    if with_color:
        log_q = config.w_shape * lik.log_shape + config.w_color * lik.log_color
    else:
        log_q = lik.log_shape
    with np.errstate(divide="ignore"):
        log_mixture = logsumexp(log_q, axis=0) + np.log((1.0 - config.alpha) / m)
        log_inner = np.logaddexp(log_mixture, np.log(config.alpha / n))
    log_inner = np.maximum(log_inner, math.log(NLL_FLOOR))
    return float(-np.sum(log_inner))
