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
import math
from typing import Literal, Optional

import numpy as np
import pydantic
from scipy.spatial.distance import cdist

from estep import (
    LikelihoodMatrices,
    ccpd_posterior,
    color_log_likelihoods,
    cpd_posterior,
    negative_log_likelihood,
    shape_log_likelihoods,
)
from pointset import (
    CoherentField,
    ColoredPointSet,
    PosteriorMatrix,
    RegistrationConfig,
    RegistrationError,
    RegistrationReport,
)
from preprocess import Normalization, fit_normalization
from solver import (
    MStepInputs,
    apply_transform,
    build_kernel,
    solve_coefficients,
    update_sigma_shape,
)

logger = logging.getLogger(__name__)

IterationStatus = Literal["CONTINUE", "CONVERGED", "SIGMA_FLOOR"]


class RegistrationState(pydantic.BaseModel):
    """Mutable EM state owned by a single registration run."""

    model_config = pydantic.ConfigDict(arbitrary_types_allowed=True)

    coefficients: np.ndarray
    transformed: np.ndarray
    kernel: np.ndarray
    sigma_shape_sq: float
    sigma_color: float
    # log p_C, computed once: colours are never transformed.
    log_color: np.ndarray
    uses_color: bool
    posterior: Optional[PosteriorMatrix] = None
    sigma_shape_trace: list[float] = []
    objective_trace: list[float] = []


def initial_sigma_shape(
    anchor_positions: np.ndarray, model_positions: np.ndarray
) -> float:
    """sum_{n,i} |x_n - y_i|^2 / (D_S N M)."""
    n, dim = anchor_positions.shape
    m = model_positions.shape[0]
    return float(cdist(anchor_positions, model_positions, "sqeuclidean").sum()) / (
        dim * n * m
    )


def resolve_sigma_color(
    anchor: ColoredPointSet, model: ColoredPointSet, config: RegistrationConfig
) -> float:
    if config.sigma_color != "auto":
        return float(config.sigma_color)
    if anchor.color_dim == 0:
        return 1.0
    variance = float(cdist(anchor.colors, model.colors, "sqeuclidean").sum()) / (
        anchor.color_dim * anchor.count * model.count
    )
    return math.sqrt(max(variance, config.sigma_floor))


def initialize(
    anchor: ColoredPointSet,
    model: ColoredPointSet,
    config: RegistrationConfig,
    with_color: bool = True,
) -> RegistrationState:
    """W = 0, initial sigma_S^2, resolved sigma_C, kernel G and the colour cache."""
    if anchor.spatial_dim != model.spatial_dim:
        raise ValueError(
            f"spatial dimensions differ: anchor {anchor.spatial_dim}, model {model.spatial_dim}"
        )
    uses_color = with_color and config.w_color > 0.0
    if uses_color:
        if anchor.color_dim != model.color_dim:
            raise ValueError(
                f"color dimensions differ: anchor {anchor.color_dim}, model {model.color_dim}"
            )
        if anchor.color_dim == 0:
            raise ValueError("colour registration needs colour channels (w_color > 0)")

    sigma_shape_sq = max(
        initial_sigma_shape(anchor.positions, model.positions), config.sigma_floor
    )
    if uses_color:
        sigma_color = resolve_sigma_color(anchor, model, config)
        log_color = color_log_likelihoods(anchor, model, sigma_color)
    else:
        sigma_color = 1.0
        log_color = np.zeros((model.count, anchor.count))

    return RegistrationState(
        coefficients=np.zeros_like(model.positions),
        transformed=np.array(model.positions),
        kernel=build_kernel(model.positions, config.beta),
        sigma_shape_sq=sigma_shape_sq,
        sigma_color=sigma_color,
        log_color=log_color,
        uses_color=uses_color,
    )


class CoherentPointDrift:
    """Non-rigid Coherent Point Drift driven by shape alone.

    Colours are carried through to the report untouched.
    """

    method: Literal["ccpd", "cpd"] = "cpd"
    uses_color: bool = False

    def __init__(
        self,
        anchor: ColoredPointSet,
        model: ColoredPointSet,
        config: Optional[RegistrationConfig] = None,
    ):
        self._config = config or RegistrationConfig()
        self._model_colors = model.colors
        self._normalization: Optional[Normalization] = None
        if self._config.prenormalize:
            self._normalization = fit_normalization(anchor, model)
            anchor = anchor.with_positions(
                self._normalization.normalize(anchor.positions)
            )
            model = model.with_positions(self._normalization.normalize(model.positions))
        self._anchor = anchor
        self._model = model
        self._state = initialize(anchor, model, self._config, with_color=self.uses_color)

    @property
    def state(self) -> RegistrationState:
        return self._state

    def likelihoods(self) -> LikelihoodMatrices:
        state = self._state
        return LikelihoodMatrices(
            log_shape=shape_log_likelihoods(
                self._anchor.positions, state.transformed, state.sigma_shape_sq
            ),
            log_color=state.log_color,
            sigma_shape_sq=state.sigma_shape_sq,
            sigma_color=state.sigma_color,
        )

    def posterior(self, lik: LikelihoodMatrices) -> PosteriorMatrix:
        return cpd_posterior(lik, self._config.alpha)

    def objective(self, lik: LikelihoodMatrices) -> float:
        return negative_log_likelihood(
            lik, self._config, self._anchor.count, with_color=False
        )

    def run_one_iteration(self) -> IterationStatus:
        state = self._state
        config = self._config

        # E-step with the previous transform and variance.
        lik = self.likelihoods()
        objective = self.objective(lik)
        if not math.isfinite(objective):
            raise RegistrationError("diverged")
        posterior = self.posterior(lik)

        # M-step.
        coefficients = solve_coefficients(
            MStepInputs(
                posterior=posterior,
                anchor_positions=self._anchor.positions,
                model_positions=self._model.positions,
                kernel=state.kernel,
                lambda_=config.lambda_,
                sigma_shape_sq=state.sigma_shape_sq,
            )
        )
        transformed = apply_transform(self._model.positions, state.kernel, coefficients)
        if not np.all(np.isfinite(transformed)):
            raise RegistrationError("diverged")
        sigma_shape_sq = update_sigma_shape(
            posterior, self._anchor.positions, transformed, config.sigma_floor
        )

        previous = state.objective_trace[-1] if state.objective_trace else None
        state.coefficients = coefficients
        state.transformed = transformed
        state.sigma_shape_sq = sigma_shape_sq
        state.posterior = posterior
        state.objective_trace.append(objective)
        state.sigma_shape_trace.append(sigma_shape_sq)
        logger.debug(
            "%s iteration %d: objective=%.10e sigma_shape_sq=%.6e",
            self.method,
            len(state.objective_trace),
            objective,
            sigma_shape_sq,
        )

        if previous is not None and abs(objective - previous) < config.tolerance * abs(
            previous
        ):
            return "CONVERGED"
        if sigma_shape_sq <= config.sigma_floor:
            return "SIGMA_FLOOR"
        return "CONTINUE"

    def register(self) -> RegistrationReport:
        status: IterationStatus = "CONTINUE"
        while (
            status == "CONTINUE"
            and len(self._state.objective_trace) < self._config.max_iterations
        ):
            status = self.run_one_iteration()
        return self.report(converged=status == "CONVERGED")

    def report(self, converged: bool) -> RegistrationReport:
        state = self._state
        if state.posterior is None:
            raise RegistrationError("no iteration has run")
        transformed = state.transformed
        if self._normalization is not None:
            transformed = self._normalization.denormalize(transformed)
        iterations = len(state.objective_trace)
        logger.info(
            "%s finished after %d iterations (converged=%s, sigma_shape_sq=%.3e)",
            self.method,
            iterations,
            converged,
            state.sigma_shape_sq,
        )
        return RegistrationReport(
            method=self.method,
            transformed=ColoredPointSet(positions=transformed, colors=self._model_colors),
            field=CoherentField(kernel=state.kernel, coefficients=state.coefficients),
            posterior=state.posterior,
            sigma_shape_trace=np.array(state.sigma_shape_trace),
            objective_trace=np.array(state.objective_trace),
            sigma_color=state.sigma_color if state.uses_color else None,
            iterations=iterations,
            converged=converged,
        )


class ColorCoherentPointDrift(CoherentPointDrift):
    """CPD whose E-step weighs shape and colour likelihoods together."""

    method: Literal["ccpd", "cpd"] = "ccpd"
    uses_color: bool = True

    def posterior(self, lik: LikelihoodMatrices) -> PosteriorMatrix:
        return ccpd_posterior(lik, self._config, lik.model_count, lik.anchor_count)

    def objective(self, lik: LikelihoodMatrices) -> float:
        return negative_log_likelihood(
            lik, self._config, self._anchor.count, with_color=True
        )


def register(
    anchor: ColoredPointSet,
    model: ColoredPointSet,
    config: Optional[RegistrationConfig] = None,
) -> RegistrationReport:
    """Registers `model` onto `anchor` with the colour-aware E-step."""
    return ColorCoherentPointDrift(anchor, model, config).register()


def baseline_cpd_register(
    anchor: ColoredPointSet,
    model: ColoredPointSet,
    config: Optional[RegistrationConfig] = None,
) -> RegistrationReport:
    """Registers `model` onto `anchor` with the shape-only CPD E-step."""
    return CoherentPointDrift(anchor, model, config).register()
