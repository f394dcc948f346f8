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
import abc
import os
import tempfile
from typing import NamedTuple, Optional

import numpy as np
import pandas as pd

from pointset import ColoredPointSet, validate


class PointCloudParseError(ValueError):
    """A point-cloud or index file could not be parsed."""

    def __init__(self, path: str, line: Optional[int], message: str):
        self.path = path
        self.line = line
        self.message = message
        location = f"{path}:{line}" if line is not None else path
        super().__init__(f"{location}: {message}")


class SourceLine(NamedTuple):
    number: int
    text: str


def read_lines(path: str, comment: Optional[str] = None) -> list[SourceLine]:
    """Non-blank lines of a text file with their 1-based line numbers."""
    lines = []
    with open(path, "r", encoding="utf-8") as f:
        for number, raw in enumerate(f, start=1):
            text = raw.strip()
            if not text or (comment is not None and text.startswith(comment)):
                continue
            lines.append(SourceLine(number, text))
    return lines


def parse_rows(
    path: str,
    lines: list[SourceLine],
    width: int,
    separator: Optional[str] = None,
) -> pd.DataFrame:
    """Parses `lines` into a float frame of `width` columns.

    The first row with the wrong field count or a non-numeric field raises a
    PointCloudParseError naming its line.
    """
    if not lines:
        raise PointCloudParseError(path, None, "no data rows")
    rows = []
    for line in lines:
        fields = [field.strip() for field in line.text.split(separator)]
        if len(fields) != width:
            raise PointCloudParseError(
                path, line.number, f"expected {width} fields, found {len(fields)}"
            )
        rows.append(fields)
    frame = pd.DataFrame(rows, columns=range(width), dtype=str)
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1).to_numpy()
    if np.any(bad):
        row = int(np.argmax(bad))
        raise PointCloudParseError(path, lines[row].number, "non-numeric field")
    return numeric.astype(np.float64)


def checked_point_set(
    path: str, positions: np.ndarray, colors: np.ndarray
) -> ColoredPointSet:
    point_set = ColoredPointSet.model_construct(
        positions=np.asarray(positions, dtype=np.float64),
        colors=np.asarray(colors, dtype=np.float64),
    )
    result = validate(point_set)
    if not result.ok:
        raise PointCloudParseError(path, None, "; ".join(result.violations))
    return ColoredPointSet(positions=point_set.positions, colors=point_set.colors)


def atomic_write_text(path: str, text: str) -> None:
    """Writes `text` to a temporary sibling of `path`, then renames it into place."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, temp_path = tempfile.mkstemp(
        dir=directory, prefix=f".{os.path.basename(path)}.", suffix=".tmp"
    )
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(temp_path, path)
    except BaseException:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise


def format_float(value: float) -> str:
    return "%.17g" % value


class PointCloudFormat(abc.ABC):
    """Defines an interface for point-cloud file formats."""

    name: str
    suffixes: tuple[str, ...]

    @abc.abstractmethod
    def read(self, path: str) -> ColoredPointSet:
        """Reads a point set, colours normalized to [0, 1]."""

    @abc.abstractmethod
    def write(self, point_set: ColoredPointSet, path: str) -> None:
        """Writes a point set atomically."""
