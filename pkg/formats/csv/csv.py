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
import io

import numpy as np
import pandas as pd

from bench.synth import CorrespondenceGroundTruth, FlowField
from pointset import ColoredPointSet

from ..format import (
    PointCloudFormat,
    PointCloudParseError,
    atomic_write_text,
    checked_point_set,
    parse_rows,
    read_lines,
)

# Column layouts of header-less files, by field count.
HEADERLESS_LAYOUTS = {
    2: ("x", "y"),
    3: ("x", "y", "h"),
    4: ("x", "y", "z", "h"),
    5: ("x", "y", "r", "g", "b"),
    6: ("x", "y", "z", "r", "g", "b"),
}

COLUMN_ALIASES = {
    "x": "x",
    "y": "y",
    "z": "z",
    "r": "r",
    "red": "r",
    "g": "g",
    "green": "g",
    "b": "b",
    "blue": "b",
    "h": "h",
    "hue": "h",
}

FLOAT_FORMAT = "%.17g"


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _header_columns(path: str, number: int, text: str) -> tuple[str, ...]:
    columns = []
    for token in text.split(","):
        name = token.strip().lower()
        if name not in COLUMN_ALIASES:
            raise PointCloudParseError(path, number, f"unknown column {token.strip()!r}")
        columns.append(COLUMN_ALIASES[name])
    layout = tuple(columns)
    if layout not in set(HEADERLESS_LAYOUTS.values()) | {("x", "y", "z")}:
        raise PointCloudParseError(path, number, f"unsupported column layout {text!r}")
    return layout


class CsvFormat(PointCloudFormat):
    """Comma-separated points: x, y[, z] then r, g, b in 0..255, or a hue fraction.

    A header row naming the columns is optional. Without one the layout follows
    from the field count; three fields mean a planar point with a hue.
    """

    name = "csv"
    suffixes = (".csv", ".txt")

    def read(self, path: str) -> ColoredPointSet:
        lines = read_lines(path, comment="#")
        if not lines:
            raise PointCloudParseError(path, None, "no data rows")
        first = lines[0]
        if all(_is_number(token) for token in first.text.split(",")):
            width = len(first.text.split(","))
            if width not in HEADERLESS_LAYOUTS:
                raise PointCloudParseError(
                    path, first.number, f"cannot infer a layout from {width} columns"
                )
            layout = HEADERLESS_LAYOUTS[width]
        else:
            layout = _header_columns(path, first.number, first.text)
            lines = lines[1:]

        frame = parse_rows(path, lines, len(layout), separator=",")
        frame.columns = list(layout)
        spatial = [axis for axis in ("x", "y", "z") if axis in layout]
        if "r" in layout:
            colors = frame[["r", "g", "b"]].to_numpy() / 255.0
        elif "h" in layout:
            colors = frame[["h"]].to_numpy()
        else:
            colors = np.zeros((len(frame), 0))
        return checked_point_set(path, frame[spatial].to_numpy(), colors)

    def write(self, point_set: ColoredPointSet, path: str) -> None:
        axes = ["x", "y", "z"][: point_set.spatial_dim]
        frame = pd.DataFrame(point_set.positions, columns=axes)
        if point_set.color_dim == 3:
            rgb = np.rint(point_set.colors * 255.0).astype(np.int64)
            for column, values in zip(("r", "g", "b"), rgb.T):
                frame[column] = values
        elif point_set.color_dim == 1:
            frame["h"] = point_set.colors[:, 0]
        buffer = io.StringIO()
        frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        atomic_write_text(path, buffer.getvalue())


def read_truth(path: str) -> CorrespondenceGroundTruth:
    """Reads (model, anchor) index pairs; the header row `model,anchor` is optional."""
    lines = read_lines(path)
    if lines and not _is_number(lines[0].text.split(",")[0]):
        header = [token.strip().lower() for token in lines[0].text.split(",")]
        if header != ["model", "anchor"]:
            raise PointCloudParseError(
                path, lines[0].number, "truth header must be 'model,anchor'"
            )
        lines = lines[1:]
    if not lines:
        return CorrespondenceGroundTruth(pairs=[])
    values = parse_rows(path, lines, 2, separator=",").to_numpy()
    fractional = np.any(values != np.round(values), axis=1)
    if np.any(fractional):
        raise PointCloudParseError(
            path, lines[int(np.argmax(fractional))].number, "indices must be integers"
        )
    pairs = [(int(i), int(n)) for i, n in values]
    try:
        return CorrespondenceGroundTruth(pairs=pairs)
    except ValueError as e:
        raise PointCloudParseError(path, None, str(e)) from e


def write_truth(truth: CorrespondenceGroundTruth, path: str) -> None:
    rows = ["model,anchor"] + [f"{i},{n}" for i, n in truth.pairs]
    atomic_write_text(path, "\n".join(rows) + "\n")


def write_flow(flow: FlowField, path: str) -> None:
    """One arrow per row: origin columns ox, oy[, oz] then displacement dx, dy[, dz]."""
    axes = ["x", "y", "z"][: flow.origins.shape[1]]
    frame = pd.DataFrame(
        np.hstack([flow.origins, flow.displacements]),
        columns=[f"o{axis}" for axis in axes] + [f"d{axis}" for axis in axes],
    )
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    atomic_write_text(path, buffer.getvalue())
