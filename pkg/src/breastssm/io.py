"""OBJ / PLY mesh files and the landmark JSON sidecar."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .errors import ConfigError, MeshFormatError
from .mesh import LANDMARK_NAMES, TriangleMesh

logger = logging.getLogger(__name__)

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _infer_format(path: Path, format: str | None) -> str:
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt not in ("obj", "ply"):
        raise MeshFormatError(f"{path}: unsupported mesh format {fmt!r} (expected OBJ or PLY)")
    return fmt


def landmark_sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".landmarks.json")


# OBJ


def read_obj(path) -> tuple[np.ndarray, np.ndarray]:
    verts, faces = [], []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            try:
                if tag == "v":
                    verts.append([float(x) for x in parts[1:4]])
                    if len(verts[-1]) != 3:
                        raise ValueError("vertex needs three coordinates")
                elif tag == "f":
                    idx = []
                    for tok in parts[1:]:
                        k = int(tok.split("/")[0])
                        if k == 0:
                            raise ValueError("OBJ indices are 1-based; found 0")
                        idx.append(k - 1 if k > 0 else len(verts) + k)
                    if len(idx) < 3:
                        raise ValueError("face needs at least three vertices")
                    for j in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[j], idx[j + 1]])
            except ValueError as exc:
                raise MeshFormatError(f"{path}:{lineno}: {exc}") from None
    return np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def write_obj(path, vertices, faces):
    with open(path, "w") as fh:
        for v in vertices:
            fh.write("v {!r} {!r} {!r}\n".format(*map(float, v)))
        for f in np.asarray(faces) + 1:
            fh.write("f {} {} {}\n".format(*f))


# PLY


def _read_ply_header(fh, path):
    if fh.readline().strip() != b"ply":
        raise MeshFormatError(f"{path}: missing 'ply' magic")
    fmt = None
    elements = []
    offset = 0
    while True:
        raw = fh.readline()
        offset += 1
        if not raw:
            raise MeshFormatError(f"{path}: header ended before end_header")
        parts = raw.decode("ascii", "replace").split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MeshFormatError(f"{path}: header line {offset + 1}: property before element")
            if parts[1] == "list":
                elements[-1][2].append((parts[4], "list", parts[2], parts[3]))
            else:
                if parts[1] not in _PLY_TYPES:
                    raise MeshFormatError(f"{path}: header line {offset + 1}: unknown type {parts[1]}")
                elements[-1][2].append((parts[2], parts[1]))
        elif parts[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
        raise MeshFormatError(f"{path}: unsupported PLY format {fmt!r}")
    return fmt, elements


def read_ply(path) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
    """Read a PLY file; returns vertices, faces and any extra vertex scalars."""
    path = Path(path)
    with open(path, "rb") as fh:
        fmt, elements = _read_ply_header(fh, path)
        body = fh.read()
    data: dict[str, dict[str, np.ndarray]] = {}
    if fmt == "ascii":
        tokens = body.split()
        pos = 0
        for name, count, props in elements:
            cols = {p[0]: [] for p in props}
            for row in range(count):
                for p in props:
                    try:
                        if p[1] == "list":
                            n = int(tokens[pos])
                            cols[p[0]].append([int(t) for t in tokens[pos + 1 : pos + 1 + n]])
                            pos += n + 1
                        else:
                            cols[p[0]].append(float(tokens[pos]))
                            pos += 1
                    except (IndexError, ValueError):
                        raise MeshFormatError(f"{path}: element {name} row {row}: malformed data") from None
            data[name] = cols
    else:
        end = "<" if fmt == "binary_little_endian" else ">"
        pos = 0
        for name, count, props in elements:
            if all(p[1] != "list" for p in props):
                dt = np.dtype([(p[0], end + _PLY_TYPES[p[1]]) for p in props])
                nbytes = dt.itemsize * count
                if pos + nbytes > len(body):
                    raise MeshFormatError(f"{path}: byte offset {pos}: truncated {name} block")
                arr = np.frombuffer(body, dtype=dt, count=count, offset=pos)
                pos += nbytes
                data[name] = {p[0]: arr[p[0]] for p in props}
                continue
            cols = {p[0]: [] for p in props}
            for row in range(count):
                for p in props:
                    try:
                        if p[1] == "list":
                            ct = np.dtype(end + _PLY_TYPES[p[2]])
                            it = np.dtype(end + _PLY_TYPES[p[3]])
                            n = int(np.frombuffer(body, ct, 1, pos)[0])
                            pos += ct.itemsize
                            cols[p[0]].append(np.frombuffer(body, it, n, pos).tolist())
                            pos += n * it.itemsize
                        else:
                            t = np.dtype(end + _PLY_TYPES[p[1]])
                            cols[p[0]].append(np.frombuffer(body, t, 1, pos)[0])
                            pos += t.itemsize
                    except ValueError:
                        raise MeshFormatError(f"{path}: byte offset {pos}: truncated {name} block") from None
            data[name] = cols

    if "vertex" not in data:
        raise MeshFormatError(f"{path}: no vertex element")
    vd = data["vertex"]
    try:
        vertices = np.column_stack([np.asarray(vd[c], dtype=np.float64) for c in "xyz"])
    except KeyError:
        raise MeshFormatError(f"{path}: vertex element lacks x/y/z") from None
    faces = []
    fd = data.get("face", {})
    key = "vertex_indices" if "vertex_indices" in fd else ("vertex_index" if "vertex_index" in fd else None)
    if key is not None:
        for poly in fd[key]:
            poly = list(poly)
            for j in range(1, len(poly) - 1):
                faces.append([poly[0], poly[j], poly[j + 1]])
    extras = {k: np.asarray(v, dtype=np.float64) for k, v in vd.items() if k not in ("x", "y", "z")}
    return vertices.reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3), extras


def write_ply(path, vertices, faces, vertex_scalars: dict | None = None, binary: bool = False):
    """Write a PLY file; ``vertex_scalars`` adds float64 per-vertex properties."""
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    scalars = {k: np.asarray(v, dtype=np.float64) for k, v in (vertex_scalars or {}).items()}
    fmt = "binary_little_endian" if binary else "ascii"
    header = ["ply", f"format {fmt} 1.0", f"element vertex {len(vertices)}",
              "property double x", "property double y", "property double z"]
    header += [f"property double {k}" for k in scalars]
    header += [f"element face {len(faces)}", "property list uchar int vertex_indices", "end_header"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            vdt = np.dtype([("x", "<f8"), ("y", "<f8"), ("z", "<f8")] + [(k, "<f8") for k in scalars])
            varr = np.empty(len(vertices), dtype=vdt)
            varr["x"], varr["y"], varr["z"] = vertices.T
            for k, v in scalars.items():
                varr[k] = v
            fh.write(varr.tobytes())
            fdt = np.dtype([("n", "u1"), ("i", "<i4", (3,))])
            farr = np.empty(len(faces), dtype=fdt)
            farr["n"] = 3
            farr["i"] = faces
            fh.write(farr.tobytes())
        else:
            cols = [vertices] + [v[:, None] for v in scalars.values()]
            table = np.hstack(cols) if cols else vertices
            for row in table:
                fh.write((" ".join(repr(float(x)) for x in row) + "\n").encode("ascii"))
            for f in faces:
                fh.write(f"3 {f[0]} {f[1]} {f[2]}\n".encode("ascii"))


# landmarks


def read_landmarks(path, vertices: np.ndarray) -> dict[str, int]:
    """Parse a landmark sidecar; 3D points are snapped to the nearest vertex."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid landmark JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: landmark file must map names to indices or points")
    out = {}
    for name, value in raw.items():
        if name not in LANDMARK_NAMES:
            raise ConfigError(f"{path}: unknown landmark {name!r}")
        if isinstance(value, int):
            out[name] = value
        elif isinstance(value, (list, tuple)) and len(value) == 3:
            p = np.asarray(value, dtype=np.float64)
            d = np.linalg.norm(vertices - p, axis=1)
            out[name] = int(np.argmin(d))
            logger.info("landmark %s snapped to vertex %d (distance %.4g mm)", name, out[name], d[out[name]])
        else:
            raise ConfigError(f"{path}: landmark {name} must be a vertex index or a 3D point")
    return out


def write_landmarks(path, landmarks: dict[str, int]):
    with open(path, "w") as fh:
        json.dump({k: int(v) for k, v in landmarks.items()}, fh, indent=2)


def load_mesh(path, format: str | None = None, landmarks=None) -> TriangleMesh:
    """Load an OBJ or PLY mesh.

    Landmarks come from ``landmarks`` (a sidecar path) if given, otherwise
    from ``<stem>.landmarks.json`` next to the mesh when it exists.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    fmt = _infer_format(path, format)
    if fmt == "obj":
        v, f = read_obj(path)
    else:
        v, f, _ = read_ply(path)
    lm_path = Path(landmarks) if landmarks is not None else landmark_sidecar_path(path)
    if landmarks is not None and not lm_path.exists():
        raise ConfigError(f"{lm_path}: landmark file not found")
    lm = read_landmarks(lm_path, v) if lm_path.exists() else {}
    return TriangleMesh(v, f, lm)


def save_mesh(mesh: TriangleMesh, path, format: str | None = None, binary: bool = False,
              vertex_scalars: dict | None = None, landmarks: bool = True):
    """Write ``mesh`` (and its landmark sidecar, when it has landmarks)."""
    path = Path(path)
    fmt = _infer_format(path, format)
    if fmt == "obj":
        write_obj(path, mesh.vertices, mesh.faces)
    else:
        write_ply(path, mesh.vertices, mesh.faces, vertex_scalars=vertex_scalars, binary=binary)
    if landmarks and mesh.landmarks:
        write_landmarks(landmark_sidecar_path(path), mesh.landmarks)


def save_mask_ply(path, mesh: TriangleMesh, mask: np.ndarray, binary: bool = False):
    """Export a per-vertex probability field as the PLY ``quality`` property."""
    write_ply(path, mesh.vertices, mesh.faces, vertex_scalars={"quality": mask}, binary=binary)
