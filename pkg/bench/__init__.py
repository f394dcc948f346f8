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
from .synth import (
    CorrespondenceGroundTruth,
    ExperimentSpec,
    FlowField,
    Warp,
    add_color_noise,
    apply_warp,
    build_experiment,
    fish_shape,
    flow_field,
    inject_color_outliers,
    jet_hues,
    random_warp,
    remove_points,
    rms_error,
    square_shape,
    square_to_fish,
)
from .experiment import (
    ComparisonRecord,
    MethodResult,
    aggregate_records,
    append_records,
    read_records,
    run_experiment,
    spec_hash,
)

__all__ = [
    "CorrespondenceGroundTruth",
    "ExperimentSpec",
    "FlowField",
    "Warp",
    "add_color_noise",
    "apply_warp",
    "build_experiment",
    "fish_shape",
    "flow_field",
    "inject_color_outliers",
    "jet_hues",
    "random_warp",
    "remove_points",
    "rms_error",
    "square_shape",
    "square_to_fish",
    "ComparisonRecord",
    "MethodResult",
    "aggregate_records",
    "append_records",
    "read_records",
    "run_experiment",
    "spec_hash",
]
