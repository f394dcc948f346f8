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

import numpy as np

from pointset import ColoredPointSet
from preprocess import hue_to_rgb

from ..format import (
    PointCloudFormat,
    PointCloudParseError,
    atomic_write_text,
    checked_point_set,
    format_float,
    parse_rows,
    read_lines,
)

logger = logging.getLogger(__name__)

HEADER_KEYS = ("VERSION", "FIELDS", "SIZE", "TYPE", "COUNT", "WIDTH", "HEIGHT",
               "VIEWPOINT", "POINTS", "DATA")


def pack_rgb(colors: np.ndarray) -> np.ndarray:
    """Packs [0, 1] RGB rows into 0x00RRGGBB integers."""
    channels = np.rint(np.asarray(colors) * 255.0).astype(np.uint32)
    return (channels[:, 0] << 16) | (channels[:, 1] << 8) | channels[:, 2]


def unpack_rgb(packed: np.ndarray) -> np.ndarray:
    packed = np.asarray(packed, dtype=np.uint32)
    channels = np.column_stack(
        [(packed >> 16) & 0xFF, (packed >> 8) & 0xFF, packed & 0xFF]
    )
    return channels.astype(np.float64) / 255.0


def float_bits(values: np.ndarray) -> np.ndarray:
    """Reinterprets single-precision floats as their 32-bit patterns."""
    return np.asarray(values, dtype=np.float32).view(np.uint32)


class PcdFormat(PointCloudFormat):
    """ASCII PCD with x y z and an optional packed rgb (or rgba) field.

    A packed colour stored as TYPE F is decoded from the float's bit pattern,
    TYPE U or I from the integer value. Writes use TYPE U.
    """

    name = "pcd"
    suffixes = (".pcd",)

    def read(self, path: str) -> ColoredPointSet:
        lines = read_lines(path, comment="#")
        header: dict[str, list[str]] = {}
        body_start = None
        for index, line in enumerate(lines):
            key, *values = line.text.split()
            if key not in HEADER_KEYS:
                raise PointCloudParseError(path, line.number, f"unexpected header key {key!r}")
            header[key] = values
            if key == "DATA":
                if values != ["ascii"]:
                    raise PointCloudParseError(
                        path, line.number, "only ASCII PCD is supported"
                    )
                body_start = index + 1
                break
        if body_start is None:
            raise PointCloudParseError(path, None, "missing DATA line")

        fields = header.get("FIELDS", [])
        types = header.get("TYPE", ["F"] * len(fields))
        counts = header.get("COUNT", ["1"] * len(fields))
        if len(types) != len(fields) or len(counts) != len(fields):
            raise PointCloudParseError(path, None, "FIELDS, TYPE and COUNT disagree")
        if any(count != "1" for count in counts):
            raise PointCloudParseError(path, None, "multi-count fields are not supported")
        if not {"x", "y", "z"} <= set(fields):
            raise PointCloudParseError(path, None, "points need x, y and z")

        body = lines[body_start:]
        points = header.get("POINTS")
        if points is not None and int(points[0]) != len(body):
            raise PointCloudParseError(
                path, None, f"POINTS says {points[0]}, found {len(body)} rows"
            )
        frame = parse_rows(path, body, len(fields))
        frame.columns = fields
        positions = frame[["x", "y", "z"]].to_numpy()

        color_field = next((name for name in ("rgb", "rgba") if name in fields), None)
        if color_field is None:
            colors = np.zeros((len(frame), 0))
        else:
            raw = frame[color_field].to_numpy()
            if types[fields.index(color_field)] == "F":
                packed = float_bits(raw)
            else:
                packed = raw.astype(np.uint64).astype(np.uint32)
            colors = unpack_rgb(packed & 0x00FFFFFF)
        return checked_point_set(path, positions, colors)

    def write(self, point_set: ColoredPointSet, path: str) -> None:
        if point_set.spatial_dim != 3:
            raise ValueError("PCD requires 3D")
        colors = point_set.colors
        if point_set.color_dim == 1:
            logger.warning("%s: storing hues as saturated RGB", path)
            colors = hue_to_rgb(colors[:, 0])
        has_color = point_set.color_dim > 0

        fields = ["x", "y", "z"] + (["rgb"] if has_color else [])
        header = [
            "# .PCD v0.7 - Point Cloud Data file format",
            "VERSION 0.7",
            "FIELDS " + " ".join(fields),
            "SIZE " + " ".join(["8", "8", "8"] + (["4"] if has_color else [])),
            "TYPE " + " ".join(["F", "F", "F"] + (["U"] if has_color else [])),
            "COUNT " + " ".join(["1"] * len(fields)),
            f"WIDTH {point_set.count}",
            "HEIGHT 1",
            "VIEWPOINT 0 0 0 1 0 0 0",
            f"POINTS {point_set.count}",
            "DATA ascii",
        ]
        packed = pack_rgb(colors) if has_color else None
        rows = []
        for index, position in enumerate(point_set.positions):
            fields_out = [format_float(v) for v in position]
            if packed is not None:
                fields_out.append(str(int(packed[index])))
            rows.append(" ".join(fields_out))
        atomic_write_text(path, "\n".join(header + rows) + "\n")
