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
import numpy as np
import pydantic

from pointset import ColoredPointSet

from ..format import (
    PointCloudFormat,
    PointCloudParseError,
    atomic_write_text,
    checked_point_set,
    format_float,
    parse_rows,
    read_lines,
)

INTEGER_TYPES = {"char", "uchar", "short", "ushort", "int", "uint",
                 "int8", "uint8", "int16", "uint16", "int32", "uint32"}
FLOAT_TYPES = {"float", "double", "float32", "float64"}


class PlyElement(pydantic.BaseModel):
    name: str
    count: int
    # (property name, scalar type); list properties are kept as ("list", ...).
    properties: list[tuple[str, str]] = []


class PlyHeader(pydantic.BaseModel):
    elements: list[PlyElement]
    # Index into the file's meaningful lines where the body starts.
    body_start: int


def _parse_header(path: str, lines) -> PlyHeader:
    if not lines or lines[0].text != "ply":
        raise PointCloudParseError(path, lines[0].number if lines else None, "not a PLY file")
    elements: list[PlyElement] = []
    for index, line in enumerate(lines[1:], start=1):
        tokens = line.text.split()
        keyword = tokens[0]
        if keyword == "format":
            if len(tokens) < 2 or tokens[1] != "ascii":
                raise PointCloudParseError(
                    path, line.number, "only ASCII PLY is supported"
                )
        elif keyword in ("comment", "obj_info"):
            continue
        elif keyword == "element":
            if len(tokens) != 3 or not tokens[2].isdigit():
                raise PointCloudParseError(path, line.number, "malformed element line")
            elements.append(PlyElement(name=tokens[1], count=int(tokens[2])))
        elif keyword == "property":
            if not elements:
                raise PointCloudParseError(path, line.number, "property before element")
            if len(tokens) == 5 and tokens[1] == "list":
                elements[-1].properties.append((tokens[4], "list"))
            elif len(tokens) == 3:
                elements[-1].properties.append((tokens[2], tokens[1]))
            else:
                raise PointCloudParseError(path, line.number, "malformed property line")
        elif keyword == "end_header":
            return PlyHeader(elements=elements, body_start=index + 1)
        else:
            raise PointCloudParseError(path, line.number, f"unexpected header line {line.text!r}")
    raise PointCloudParseError(path, None, "missing end_header")


def _color_scale(path: str, kind: str) -> float:
    if kind in INTEGER_TYPES:
        return 255.0
    if kind in FLOAT_TYPES:
        return 1.0
    raise PointCloudParseError(path, None, f"unsupported colour property type {kind!r}")


class PlyFormat(PointCloudFormat):
    """ASCII PLY vertices with x, y, z and optional red/green/blue or hue properties."""

    name = "ply"
    suffixes = (".ply",)

    def read(self, path: str) -> ColoredPointSet:
        lines = read_lines(path)
        header = _parse_header(path, lines)
        body = lines[header.body_start :]

        offset = 0
        vertex = None
        for element in header.elements:
            if element.name == "vertex":
                vertex = element
                break
            offset += element.count
        if vertex is None:
            raise PointCloudParseError(path, None, "no vertex element")
        if any(kind == "list" for _, kind in vertex.properties):
            raise PointCloudParseError(path, None, "list properties on vertices")
        if len(body) < offset + vertex.count:
            raise PointCloudParseError(
                path, None, f"expected {vertex.count} vertices, file ends early"
            )

        frame = parse_rows(
            path, body[offset : offset + vertex.count], len(vertex.properties)
        )
        names = [name for name, _ in vertex.properties]
        kinds = dict(vertex.properties)
        frame.columns = names
        if not {"x", "y", "z"} <= set(names):
            raise PointCloudParseError(path, None, "vertices need x, y and z")
        positions = frame[["x", "y", "z"]].to_numpy()

        if {"red", "green", "blue"} <= set(names):
            scale = _color_scale(path, kinds["red"])
            colors = frame[["red", "green", "blue"]].to_numpy() / scale
        elif "hue" in names:
            colors = frame[["hue"]].to_numpy()
        else:
            colors = np.zeros((vertex.count, 0))
        return checked_point_set(path, positions, colors)

    def write(self, point_set: ColoredPointSet, path: str) -> None:
        if point_set.spatial_dim != 3:
            raise ValueError("PLY requires 3D")
        header = [
            "ply",
            "format ascii 1.0",
            f"element vertex {point_set.count}",
            "property double x",
            "property double y",
            "property double z",
        ]
        if point_set.color_dim == 3:
            header += ["property uchar red", "property uchar green", "property uchar blue"]
        elif point_set.color_dim == 1:
            header.append("property double hue")
        header.append("end_header")

        rows = []
        rgb = np.rint(point_set.colors * 255.0).astype(np.int64)
        for position, color, channels in zip(point_set.positions, point_set.colors, rgb):
            fields = [format_float(v) for v in position]
            if point_set.color_dim == 3:
                fields += [str(v) for v in channels]
            elif point_set.color_dim == 1:
                fields.append(format_float(color[0]))
            rows.append(" ".join(fields))
        atomic_write_text(path, "\n".join(header + rows) + "\n")
