"""OBJ and PLY mesh file I/O.

Supported surface formats:

* Wavefront OBJ: `v` (with optional vertex-color extension `v x y z r g b`),
  `vn`, `vt`, `f` records; polygonal faces are fan-triangulated; other
  records are ignored.
* PLY: ascii 1.0 and binary_little_endian 1.0, vertex properties
  x/y/z [nx/ny/nz] [red/green/blue as uchar], one face list property.

Colors are uint8 in files and float in [0, 1] in memory. Parse failures
raise MeshParseError naming the file line (text) or byte offset (binary).
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .mesh import MeshError, TriMesh, vertex_normals


class MeshParseError(ValueError):
    def __init__(self, path, message, line: Optional[int] = None,
                 offset: Optional[int] = None):
        where = f"{path}"
        if line is not None:
            where += f":{line}"
        if offset is not None:
            where += f" (byte offset {offset})"
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line
        self.offset = offset


def load_mesh(path) -> TriMesh:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return _load_obj(path)
    if suffix == ".ply":
        return _load_ply(path)
    raise MeshParseError(path, f"unsupported mesh format '{suffix}'")


def save_mesh(path, mesh: TriMesh, binary: bool = True) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        _save_obj(path, mesh)
    elif suffix == ".ply":
        _save_ply(path, mesh, binary=binary)
    else:
        raise MeshParseError(path, f"unsupported mesh format '{suffix}'")


# ---------------------------------------------------------------- OBJ

def _load_obj(path: Path) -> TriMesh:
    verts: list[list[float]] = []
    colors: list[list[float]] = []
    normals: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            try:
                if tag == "v":
                    if len(parts) not in (4, 7):
                        raise ValueError("expected 3 or 6 numbers after 'v'")
                    verts.append([float(x) for x in parts[1:4]])
                    if len(parts) == 7:
                        colors.append([float(x) for x in parts[4:7]])
                elif tag == "vn":
                    if len(parts) != 4:
                        raise ValueError("expected 3 numbers after 'vn'")
                    normals.append([float(x) for x in parts[1:4]])
                elif tag == "f":
                    if len(parts) < 4:
                        raise ValueError("face needs at least 3 vertices")
                    idx = [_obj_vertex_index(p, len(verts)) for p in parts[1:]]
                    for k in range(1, len(idx) - 1):  # fan triangulation
                        faces.append([idx[0], idx[k], idx[k + 1]])
                # vt and all other records are ignored
            except ValueError as exc:
                raise MeshParseError(path, str(exc), line=lineno) from exc
    if not verts:
        raise MeshParseError(path, "no vertices found")
    col = None
    if colors:
        if len(colors) != len(verts):
            raise MeshParseError(
                path, f"{len(colors)} colored of {len(verts)} vertices; "
                "vertex colors must be all-or-none")
        col = np.array(colors)
    nrm = None
    if normals and len(normals) == len(verts):
        nrm = np.array(normals)
        ln = np.linalg.norm(nrm, axis=1)
        nz = ln > 0
        nrm[nz] /= ln[nz, None]
    try:
        return TriMesh(np.array(verts), np.array(faces, dtype=np.int64).reshape(-1, 3),
                       colors=col, normals=nrm)
    except MeshError as exc:
        raise MeshParseError(path, str(exc)) from exc


def _obj_vertex_index(token: str, n_verts: int) -> int:
    head = token.split("/")[0]
    i = int(head)
    if i < 0:
        i = n_verts + i  # relative indexing
    else:
        i = i - 1  # OBJ is 1-based
    if i < 0 or i >= n_verts:
        raise ValueError(f"face references vertex {token} of {n_verts}")
    return i


def _save_obj(path: Path, mesh: TriMesh) -> None:
    lines = []
    cols = mesh.colors
    for i, v in enumerate(mesh.vertices):
        if cols is not None:
            c = cols[i]
            lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g} "
                         f"{c[0]:.9g} {c[1]:.9g} {c[2]:.9g}")
        else:
            lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    if mesh.normals is not None:
        for n in mesh.normals:
            lines.append(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- PLY

_PLY_SCALARS = {
    "char": ("b", 1), "int8": ("b", 1),
    "uchar": ("B", 1), "uint8": ("B", 1),
    "short": ("h", 2), "int16": ("h", 2),
    "ushort": ("H", 2), "uint16": ("H", 2),
    "int": ("i", 4), "int32": ("i", 4),
    "uint": ("I", 4), "uint32": ("I", 4),
    "float": ("f", 4), "float32": ("f", 4),
    "double": ("d", 8), "float64": ("d", 8),
}


class _PlyProp:
    def __init__(self, name, dtype, is_list=False, count_dtype=None):
        self.name = name
        self.dtype = dtype
        self.is_list = is_list
        self.count_dtype = count_dtype


def _load_ply(path: Path) -> TriMesh:
    data = path.read_bytes()
    # header is ascii text terminated by "end_header"
    try:
        header_end = data.index(b"end_header")
    except ValueError:
        raise MeshParseError(path, "missing end_header")
    nl = data.index(b"\n", header_end)
    header = data[:nl].decode("ascii", errors="replace")
    body = data[nl + 1:]

    fmt = None
    elements: list[tuple[str, int, list[_PlyProp]]] = []
    for lineno, line in enumerate(header.splitlines(), start=1):
        parts = line.strip().split()
        if not parts:
            continue
        if parts[0] == "ply":
            continue
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] not in ("ascii", "binary_little_endian"):
                raise MeshParseError(path, f"unsupported PLY format {parts[1:]}",
                                     line=lineno)
            fmt = parts[1]
        elif parts[0] == "comment":
            continue
        elif parts[0] == "element":
            if len(parts) != 3:
                raise MeshParseError(path, "malformed element record", line=lineno)
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MeshParseError(path, "property before element", line=lineno)
            if parts[1] == "list":
                if len(parts) != 5:
                    raise MeshParseError(path, "malformed list property", line=lineno)
                elements[-1][2].append(
                    _PlyProp(parts[4], parts[3], is_list=True, count_dtype=parts[2]))
            else:
                if len(parts) != 3:
                    raise MeshParseError(path, "malformed property", line=lineno)
                elements[-1][2].append(_PlyProp(parts[2], parts[1]))
        elif parts[0] == "end_header":
            break
        else:
            raise MeshParseError(path, f"unknown header record '{parts[0]}'",
                                 line=lineno)
    if fmt is None:
        raise MeshParseError(path, "missing format record")

    if fmt == "ascii":
        parsed = _parse_ply_ascii(path, body, elements, header_lines=header.count("\n") + 2)
    else:
        parsed = _parse_ply_binary(path, body, elements, base_offset=nl + 1)

    vert = parsed.get("vertex")
    face = parsed.get("face")
    if vert is None:
        raise MeshParseError(path, "no vertex element")
    for key in ("x", "y", "z"):
        if key not in vert:
            raise MeshParseError(path, f"vertex element missing property '{key}'")
    verts = np.stack([vert["x"], vert["y"], vert["z"]], axis=1).astype(np.float64)
    normals = None
    if all(k in vert for k in ("nx", "ny", "nz")):
        normals = np.stack([vert["nx"], vert["ny"], vert["nz"]], axis=1).astype(np.float64)
        ln = np.linalg.norm(normals, axis=1)
        nz = ln > 0
        normals[nz] /= ln[nz, None]
    colors = None
    if all(k in vert for k in ("red", "green", "blue")):
        colors = np.stack([vert["red"], vert["green"], vert["blue"]], axis=1)
        colors = colors.astype(np.float64) / 255.0
    faces = []
    if face is not None:
        lists = face.get("vertex_indices", face.get("vertex_index"))
        if lists is None:
            raise MeshParseError(path, "face element missing vertex_indices")
        for poly in lists:
            if len(poly) < 3:
                raise MeshParseError(path, f"face with {len(poly)} vertices")
            for k in range(1, len(poly) - 1):
                faces.append([poly[0], poly[k], poly[k + 1]])
    try:
        return TriMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3),
                       colors=colors, normals=normals)
    except MeshError as exc:
        raise MeshParseError(path, str(exc)) from exc


def _parse_ply_ascii(path, body: bytes, elements, header_lines: int):
    text = body.decode("ascii", errors="replace").splitlines()
    out = {}
    cursor = 0
    for name, count, props in elements:
        columns: dict[str, list] = {p.name: [] for p in props}
        for row in range(count):
            if cursor >= len(text):
                raise MeshParseError(path, f"truncated '{name}' element",
                                     line=header_lines + cursor)
            tokens = text[cursor].split()
            cursor += 1
            ti = 0
            try:
                for p in props:
                    if p.is_list:
                        k = int(tokens[ti]); ti += 1
                        vals = [float(tokens[ti + j]) for j in range(k)]
                        ti += k
                        columns[p.name].append([int(v) for v in vals])
                    else:
                        columns[p.name].append(float(tokens[ti])); ti += 1
            except (IndexError, ValueError) as exc:
                raise MeshParseError(path, f"malformed '{name}' row",
                                     line=header_lines + cursor - 1) from exc
        out[name] = {
            k: (v if props[[p.name for p in props].index(k)].is_list
                else np.array(v)) for k, v in columns.items()
        }
    return out


def _parse_ply_binary(path, body: bytes, elements, base_offset: int):
    out = {}
    off = 0
    for name, count, props in elements:
        if all(not p.is_list for p in props):
            # fixed-stride element: bulk read via structured dtype
            dt = np.dtype([(p.name, "<" + _np_code(path, p.dtype, off + base_offset))
                           for p in props])
            need = dt.itemsize * count
            if off + need > len(body):
                raise MeshParseError(path, f"truncated '{name}' element",
                                     offset=base_offset + len(body))
            arr = np.frombuffer(body, dtype=dt, count=count, offset=off)
            off += need
            out[name] = {p.name: np.ascontiguousarray(arr[p.name]) for p in props}
        else:
            columns: dict[str, list] = {p.name: [] for p in props}
            for _ in range(count):
                for p in props:
                    if p.is_list:
                        cfmt, csz = _scalar(path, p.count_dtype, base_offset + off)
                        if off + csz > len(body):
                            raise MeshParseError(path, f"truncated '{name}' element",
                                                 offset=base_offset + off)
                        k = struct.unpack_from("<" + cfmt, body, off)[0]
                        off += csz
                        vfmt, vsz = _scalar(path, p.dtype, base_offset + off)
                        if off + vsz * k > len(body):
                            raise MeshParseError(path, f"truncated '{name}' element",
                                                 offset=base_offset + off)
                        vals = struct.unpack_from("<" + vfmt * k, body, off)
                        off += vsz * k
                        columns[p.name].append(list(vals))
                    else:
                        vfmt, vsz = _scalar(path, p.dtype, base_offset + off)
                        if off + vsz > len(body):
                            raise MeshParseError(path, f"truncated '{name}' element",
                                                 offset=base_offset + off)
                        columns[p.name].append(struct.unpack_from("<" + vfmt, body, off)[0])
                        off += vsz
            out[name] = {
                k: (v if props[[p.name for p in props].index(k)].is_list
                    else np.array(v)) for k, v in columns.items()
            }
    return out


def _scalar(path, dtype_name, offset):
    try:
        return _PLY_SCALARS[dtype_name]
    except KeyError:
        raise MeshParseError(path, f"unsupported PLY scalar type '{dtype_name}'",
                             offset=offset)


def _np_code(path, dtype_name, offset):
    code, size = _scalar(path, dtype_name, offset)
    kind = {"b": "i1", "B": "u1", "h": "i2", "H": "u2",
            "i": "i4", "I": "u4", "f": "f4", "d": "f8"}
    return kind[code]


def _save_ply(path: Path, mesh: TriMesh, binary: bool) -> None:
    has_col = mesh.colors is not None
    has_nrm = mesh.normals is not None
    header = ["ply",
              "format binary_little_endian 1.0" if binary else "format ascii 1.0",
              f"element vertex {mesh.n_vertices}",
              "property float x", "property float y", "property float z"]
    if has_nrm:
        header += ["property float nx", "property float ny", "property float nz"]
    if has_col:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header += [f"element face {mesh.n_faces}",
               "property list uchar int vertex_indices",
               "end_header"]

    if has_col:
        col8 = np.clip(np.rint(mesh.colors * 255.0), 0, 255).astype(np.uint8)
    if binary:
        fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
        if has_nrm:
            fields += [("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4")]
        if has_col:
            fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
        vdata = np.zeros(mesh.n_vertices, dtype=np.dtype(fields))
        for k, ax in zip(("x", "y", "z"), range(3)):
            vdata[k] = mesh.vertices[:, ax].astype(np.float32)
        if has_nrm:
            for k, ax in zip(("nx", "ny", "nz"), range(3)):
                vdata[k] = mesh.normals[:, ax].astype(np.float32)
        if has_col:
            for k, ax in zip(("red", "green", "blue"), range(3)):
                vdata[k] = col8[:, ax]
        with open(path, "wb") as fh:
            fh.write(("\n".join(header) + "\n").encode("ascii"))
            fh.write(vdata.tobytes())
            fdt = np.dtype([("n", "u1"), ("i", "<i4", (3,))])
            fdata = np.zeros(mesh.n_faces, dtype=fdt)
            fdata["n"] = 3
            fdata["i"] = mesh.faces.astype(np.int32)
            fh.write(fdata.tobytes())
    else:
        rows = []
        for i in range(mesh.n_vertices):
            row = [f"{x:.9g}" for x in mesh.vertices[i].astype(np.float32)]
            if has_nrm:
                row += [f"{x:.9g}" for x in mesh.normals[i].astype(np.float32)]
            if has_col:
                row += [str(int(x)) for x in col8[i]]
            rows.append(" ".join(row))
        for f in mesh.faces:
            rows.append(f"3 {f[0]} {f[1]} {f[2]}")
        with open(path, "w", encoding="ascii") as fh:
            fh.write("\n".join(header) + "\n")
            fh.write("\n".join(rows) + "\n")


def ensure_normals(mesh: TriMesh) -> TriMesh:
    """Mesh with normals present (computed area-weighted when absent)."""
    if mesh.normals is not None:
        return mesh
    import dataclasses
    return dataclasses.replace(mesh, normals=vertex_normals(mesh))
