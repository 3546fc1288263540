"""File formats: ASCII PLY clouds/meshes, JSON transforms and rigs, CSV streams.

Floats are written with 17 significant digits so that a write/read round trip
reproduces the exact same doubles, which keeps seeded pipelines byte-stable.
"""

from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path

import numpy as np

from .geometry import PointCloud, RigidTransform, TriangleMesh

_FLOAT_FMT = "%.17g"


def _format_row(values) -> str:
    return " ".join(_FLOAT_FMT % v for v in values)


def write_ply_cloud(pc: PointCloud, path) -> None:
    """Write a point cloud as ASCII PLY (xyz, plus nxnynz when normals exist)."""
    lines = ["ply", "format ascii 1.0", f"element vertex {len(pc)}"]
    lines += [f"property double {c}" for c in ("x", "y", "z")]
    if pc.normals is not None:
        lines += [f"property double {c}" for c in ("nx", "ny", "nz")]
    lines.append("end_header")
    if pc.normals is not None:
        data = np.hstack([pc.points, pc.normals])
    else:
        data = pc.points
    lines += [_format_row(row) for row in data]
    Path(path).write_text("\n".join(lines) + "\n")


def write_ply_mesh(mesh: TriangleMesh, path) -> None:
    """Write a triangle mesh as ASCII PLY with a vertex_indices face list."""
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(mesh.vertices)}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {len(mesh.faces)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    lines += [_format_row(row) for row in mesh.vertices]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_ply(text: str):
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "ply":
        raise ValueError("not a PLY file")
    elements: list[tuple[str, int, list[str]]] = []
    idx = 1
    while idx < len(lines):
        ln = lines[idx]
        idx += 1
        if ln == "end_header":
            break
        parts = ln.split()
        if parts[0] == "format":
            if parts[1] != "ascii":
                raise ValueError("only ASCII PLY is supported")
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise ValueError("property before element in PLY header")
            elements[-1][2].append(parts[-1])
    else:
        raise ValueError("PLY header missing end_header")

    parsed: dict[str, tuple[list[str], list[list[str]]]] = {}
    for name, count, props in elements:
        rows = [lines[idx + k].split() for k in range(count)]
        idx += count
        parsed[name] = (props, rows)
    return parsed


def read_ply_cloud(path) -> PointCloud:
    """Read an ASCII PLY vertex element into a PointCloud."""
    parsed = _parse_ply(Path(path).read_text())
    if "vertex" not in parsed:
        raise ValueError("PLY file has no vertex element")
    props, rows = parsed["vertex"]
    cols = {p: i for i, p in enumerate(props)}
    data = np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
    if len(data) == 0:
        data = data.reshape(0, max(len(props), 3))
    points = data[:, [cols["x"], cols["y"], cols["z"]]]
    normals = None
    if all(k in cols for k in ("nx", "ny", "nz")):
        normals = data[:, [cols["nx"], cols["ny"], cols["nz"]]]
    return PointCloud(points, normals)


def read_ply_mesh(path) -> TriangleMesh:
    """Read an ASCII PLY vertex + face file into a TriangleMesh."""
    parsed = _parse_ply(Path(path).read_text())
    if "vertex" not in parsed or "face" not in parsed:
        raise ValueError("mesh PLY needs vertex and face elements")
    props, rows = parsed["vertex"]
    cols = {p: i for i, p in enumerate(props)}
    vertices = np.array(
        [[float(row[cols[c]]) for c in ("x", "y", "z")] for row in rows], dtype=np.float64
    )
    faces = []
    for row in parsed["face"][1]:
        n = int(row[0])
        if n != 3:
            raise ValueError("only triangle faces are supported")
        faces.append([int(v) for v in row[1:4]])
    return TriangleMesh(vertices, np.array(faces, dtype=np.int64))


def transform_to_dict(t: RigidTransform) -> dict:
    return {
        "rotation": [float(v) for v in t.rotation.reshape(9)],
        "translation_mm": [float(v) for v in t.translation],
    }


def transform_from_dict(d: dict) -> RigidTransform:
    rot = np.array(d["rotation"], dtype=np.float64).reshape(3, 3)
    return RigidTransform(rot, np.array(d["translation_mm"], dtype=np.float64))


def write_transform(t: RigidTransform, path) -> None:
    write_json(transform_to_dict(t), path)


def read_transform(path) -> RigidTransform:
    return transform_from_dict(json.loads(Path(path).read_text()))


def write_json(obj, path) -> None:
    """Write JSON with sorted keys so reruns are byte-identical."""
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def write_observations_csv(records, path) -> None:
    """Write corner observations: timestamp_s, camera (L|R), corner_id, u_px, v_px."""
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["timestamp_s", "camera", "corner_id", "u_px", "v_px"])
    for rec in records:
        writer.writerow(
            [
                _FLOAT_FMT % rec.timestamp_s,
                rec.camera,
                rec.corner_id,
                _FLOAT_FMT % rec.u_px,
                _FLOAT_FMT % rec.v_px,
            ]
        )
    Path(path).write_text(buf.getvalue())


def read_observations_csv(path):
    """Read a corner observation stream written by write_observations_csv."""
    from .tracking import ObservationRecord

    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            records.append(
                ObservationRecord(
                    timestamp_s=float(row["timestamp_s"]),
                    camera=row["camera"],
                    corner_id=int(row["corner_id"]),
                    u_px=float(row["u_px"]),
                    v_px=float(row["v_px"]),
                )
            )
    return records
