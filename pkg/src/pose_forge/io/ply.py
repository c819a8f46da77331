"""PLY meshes with per-vertex color. Writes ASCII; reads ASCII and binary little-endian."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from ..errors import FormatError

_TYPES = {"char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1", "short": "i2", "int16": "i2",
          "ushort": "u2", "uint16": "u2", "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
          "float": "f4", "float32": "f4", "double": "f8", "float64": "f8"}


@dataclass(frozen=True, eq=False)
class PlyMesh:
    vertices: NDArray[np.float64]
    triangles: NDArray[np.int64]
    colors: Optional[NDArray[np.uint8]]  # None when the file has no vertex colors


@dataclass
class _Element:
    name: str
    count: int
    props: list  # (name, dtype) or (name, count dtype, item dtype) for lists


def _parse_header(buf: bytes) -> tuple[str, list[_Element], int]:
    end = buf.find(b"end_header")
    if not buf.startswith(b"ply") or end < 0:
        raise FormatError("not a PLY file")
    body = buf.index(b"\n", end) + 1
    fmt = None
    elements: list[_Element] = []
    for line in buf[:end].decode("ascii", "replace").splitlines()[1:]:
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append(_Element(tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise FormatError("property before element")
            try:
                if tok[1] == "list":
                    elements[-1].props.append((tok[4], _TYPES[tok[2]], _TYPES[tok[3]]))
                else:
                    elements[-1].props.append((tok[2], _TYPES[tok[1]]))
            except (KeyError, IndexError) as e:
                raise FormatError(f"bad PLY property line {line!r}") from e
    if fmt not in ("ascii", "binary_little_endian"):
        raise FormatError(f"unsupported PLY format {fmt!r}")
    return fmt, elements, body


def _read_ascii(text: list[bytes], elements: list[_Element]) -> dict:
    out = {}
    i = 0
    for el in elements:
        rows = []
        for _ in range(el.count):
            if i >= len(text):
                raise FormatError(f"truncated PLY element {el.name}")
            vals = text[i].split()
            i += 1
            rec, j = {}, 0
            for p in el.props:
                if len(p) == 3:
                    n = int(vals[j])
                    rec[p[0]] = [float(v) for v in vals[j + 1:j + 1 + n]]
                    j += 1 + n
                else:
                    rec[p[0]] = vals[j]
                    j += 1
            rows.append(rec)
        out[el.name] = rows
    return out


def _read_binary(buf: bytes, pos: int, elements: list[_Element]) -> dict:
    out = {}
    for el in elements:
        if all(len(p) == 2 for p in el.props):
            dt = np.dtype([(p[0], "<" + p[1]) for p in el.props])
            arr = np.frombuffer(buf, dt, el.count, pos)
            pos += el.count * dt.itemsize
            out[el.name] = [{k: arr[k][r] for k in dt.names} for r in range(el.count)]
            continue
        rows = []
        for _ in range(el.count):
            rec = {}
            for p in el.props:
                if len(p) == 3:
                    cdt, idt = np.dtype("<" + p[1]), np.dtype("<" + p[2])
                    n = int(np.frombuffer(buf, cdt, 1, pos)[0])
                    pos += cdt.itemsize
                    rec[p[0]] = np.frombuffer(buf, idt, n, pos).tolist()
                    pos += n * idt.itemsize
                else:
                    dt = np.dtype("<" + p[1])
                    rec[p[0]] = np.frombuffer(buf, dt, 1, pos)[0]
                    pos += dt.itemsize
            rows.append(rec)
        out[el.name] = rows
    return out


def decode_ply(buf: bytes) -> PlyMesh:
    fmt, elements, body = _parse_header(buf)
    try:
        data = (_read_ascii(buf[body:].splitlines(), elements) if fmt == "ascii"
                else _read_binary(buf, body, elements))
    except (ValueError, IndexError) as e:
        raise FormatError(f"malformed PLY body: {e}") from e
    verts = data.get("vertex")
    if not verts:
        raise FormatError("PLY has no vertices")
    try:
        v = np.array([[float(r["x"]), float(r["y"]), float(r["z"])] for r in verts])
    except KeyError as e:
        raise FormatError("PLY vertices need x, y, z") from e
    colors = None
    if all(k in verts[0] for k in ("red", "green", "blue")):
        colors = np.array([[int(float(r[c])) for c in ("red", "green", "blue")] for r in verts], dtype=np.uint8)
    tris = []
    for r in data.get("face", []):
        idx = r.get("vertex_indices", r.get("vertex_index"))
        if idx is None:
            raise FormatError("PLY faces need vertex_indices")
        idx = [int(x) for x in idx]
        tris.extend([idx[0], idx[k], idx[k + 1]] for k in range(1, len(idx) - 1))  # fan
    f = np.array(tris, dtype=np.int64).reshape(-1, 3)
    if len(f) and (f.min() < 0 or f.max() >= len(v)):
        raise FormatError("face index out of range")
    return PlyMesh(v, f, colors)


def encode_ply(vertices: NDArray, triangles: NDArray, colors: Optional[NDArray] = None) -> bytes:
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    f = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    head = ["ply", "format ascii 1.0", f"element vertex {len(v)}",
            "property double x", "property double y", "property double z"]
    if colors is not None:
        c = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
        if len(c) != len(v):
            raise FormatError("one color per vertex required")
        head += ["property uchar red", "property uchar green", "property uchar blue"]
    head += [f"element face {len(f)}", "property list uchar int vertex_indices", "end_header"]
    lines = head
    for i, p in enumerate(v.tolist()):
        row = " ".join(repr(x) for x in p)
        if colors is not None:
            row += " %d %d %d" % tuple(c[i])
        lines.append(row)
    lines += ["3 %d %d %d" % tuple(t) for t in f.tolist()]
    return ("\n".join(lines) + "\n").encode("ascii")


def read_ply(path) -> PlyMesh:
    p = Path(path)
    try:
        buf = p.read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read {p}: {e.strerror}") from e
    try:
        return decode_ply(buf)
    except FormatError as e:
        raise FormatError(f"{p}: {e}") from e


def write_ply(path, vertices: NDArray, triangles: NDArray, colors: Optional[NDArray] = None) -> None:
    Path(path).write_bytes(encode_ply(vertices, triangles, colors))
