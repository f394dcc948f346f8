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
import os
from typing import Optional

from pointset import ColoredPointSet

from .format import PointCloudFormat, PointCloudParseError, atomic_write_text
from .csv.csv import CsvFormat, read_truth, write_flow, write_truth
from .ply.ply import PlyFormat
from .pcd.pcd import PcdFormat

FORMATS: dict[str, PointCloudFormat] = {
    fmt.name: fmt for fmt in (CsvFormat(), PlyFormat(), PcdFormat())
}


def format_for(path: str, format_hint: Optional[str] = None) -> PointCloudFormat:
    """Picks a format by explicit name, else by file suffix."""
    if format_hint is not None:
        if format_hint.lower() not in FORMATS:
            raise ValueError(f"Unknown point cloud format: {format_hint}")
        return FORMATS[format_hint.lower()]
    suffix = os.path.splitext(path)[1].lower()
    for fmt in FORMATS.values():
        if suffix in fmt.suffixes:
            return fmt
    raise ValueError(f"Cannot infer a point cloud format for {path}")


def read_point_cloud(path: str, format_hint: Optional[str] = None) -> ColoredPointSet:
    return format_for(path, format_hint).read(path)


def write_point_cloud(
    point_set: ColoredPointSet, path: str, format: Optional[str] = None
) -> None:
    format_for(path, format).write(point_set, path)


__all__ = [
    "FORMATS",
    "PointCloudFormat",
    "PointCloudParseError",
    "CsvFormat",
    "PlyFormat",
    "PcdFormat",
    "atomic_write_text",
    "format_for",
    "read_point_cloud",
    "write_point_cloud",
    "read_truth",
    "write_truth",
    "write_flow",
]
