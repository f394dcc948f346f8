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
import hashlib
import io
import logging
import os
import time
from typing import Literal, Optional

import pandas as pd
import pydantic

from formats.format import atomic_write_text
from pointset import ColoredPointSet, RegistrationConfig
from registration import baseline_cpd_register, register

from .synth import ExperimentSpec, build_experiment, rms_error

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ["spec_hash", "seed", "method", "rms", "iterations", "milliseconds"]


def spec_hash(spec: ExperimentSpec) -> str:
    """Identifies a condition: every field except the seed."""
    payload = spec.model_dump_json(exclude={"seed"})
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


class MethodResult(pydantic.BaseModel):
    method: Literal["ccpd", "cpd"]
    rms: float
    iterations: int
    converged: bool
    milliseconds: float


class ComparisonRecord(pydantic.BaseModel):
    spec_hash: str
    seed: int
    ccpd: MethodResult
    cpd: MethodResult

    def rows(self) -> list[dict]:
        return [
            {
                "spec_hash": self.spec_hash,
                "seed": self.seed,
                "method": result.method,
                "rms": result.rms,
                "iterations": result.iterations,
                "milliseconds": result.milliseconds,
            }
            for result in (self.ccpd, self.cpd)
        ]


def run_experiment(
    spec: ExperimentSpec,
    base: ColoredPointSet,
    config: Optional[RegistrationConfig] = None,
    cpd_config: Optional[RegistrationConfig] = None,
) -> ComparisonRecord:
    """Registers one generated instance with both methods and scores them.

    `cpd_config` defaults to `config`; each method may be tuned separately.
    """
    config = config or RegistrationConfig()
    anchor, model, truth = build_experiment(spec, base)

    results = {}
    for method, runner, method_config in (
        ("ccpd", register, config),
        ("cpd", baseline_cpd_register, cpd_config or config),
    ):
        start = time.perf_counter()
        report = runner(anchor, model, method_config)
        elapsed = (time.perf_counter() - start) * 1000.0
        results[method] = MethodResult(
            method=method,
            rms=rms_error(report.transformed, anchor, truth),
            iterations=report.iterations,
            converged=report.converged,
            milliseconds=elapsed,
        )
        logger.info(
            "seed %d %s: rms=%.4e iterations=%d",
            spec.seed,
            method,
            results[method].rms,
            report.iterations,
        )
    return ComparisonRecord(
        spec_hash=spec_hash(spec), seed=spec.seed, ccpd=results["ccpd"], cpd=results["cpd"]
    )


def records_frame(records: list[ComparisonRecord]) -> pd.DataFrame:
    rows = [row for record in records for row in record.rows()]
    return pd.DataFrame(rows, columns=RECORD_COLUMNS)


def read_records(path: str) -> pd.DataFrame:
    frame = pd.read_csv(path, sep="\t", dtype={"spec_hash": str})
    missing = set(RECORD_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(f"{path}: missing record columns {sorted(missing)}")
    return frame[RECORD_COLUMNS]


def append_records(path: str, records: list[ComparisonRecord]) -> pd.DataFrame:
    """Appends rows to a tab-separated record file, rewriting it atomically."""
    frame = records_frame(records)
    if os.path.exists(path):
        frame = pd.concat([read_records(path), frame], ignore_index=True)
    buffer = io.StringIO()
    frame.to_csv(buffer, sep="\t", index=False)
    atomic_write_text(path, buffer.getvalue())
    return frame


def aggregate_records(frame: pd.DataFrame) -> pd.DataFrame:
    """Per-(spec_hash, method) means over seeds."""
    grouped = frame.groupby(["spec_hash", "method"], sort=True)
    summary = grouped.agg(
        runs=("seed", "count"),
        rms=("rms", "mean"),
        iterations=("iterations", "mean"),
        milliseconds=("milliseconds", "mean"),
    )
    return summary.reset_index()
