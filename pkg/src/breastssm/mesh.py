"""Triangle mesh container and discrete-geometry primitives.

Coordinates are millimetres in float64. Meshes are immutable: the vertex and
face arrays are flagged read-only and derived quantities are cached.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import NumericalError, ValidationError

LANDMARK_NAMES = ("NL", "NR", "LBP_L", "LBP_R", "LaBP_L", "LaBP_R", "SN", "XI")
GUIDANCE_LANDMARKS = ("NL", "NR", "LBP_L", "LBP_R")

# cached properties that depend on the faces only
_TOPOLOGY_CACHE = ("directed_edges", "_edge_data", "adjacency", "boundary_edges", "boundary_vertices", "vertex_faces")


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Vertices, counter-clockwise faces and optional named landmark vertices.

    Parameters
    ----------
    vertices : array_like, shape (n, 3)
    faces : array_like of int, shape (m, 3)
    landmarks : mapping of landmark name to vertex index, optional
    """

    vertices: np.ndarray
    faces: np.ndarray
    landmarks: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64)
        f = np.array(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValidationError(f"vertices must have shape (n, 3), got {v.shape}")
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValidationError(f"faces must have shape (m, 3), got {f.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("vertices contain non-finite coordinates")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "landmarks", {str(k): int(i) for k, i in dict(self.landmarks).items()})
        self._validate()

    def _validate(self):
        n = len(self.vertices)
        f = self.faces
        if len(f) == 0:
            return
        if f.min() < 0 or f.max() >= n:
            bad = int(np.nonzero((f < 0) | (f >= n))[0][0])
            raise ValidationError(f"face {bad} references a vertex index outside [0, {n})")
        degenerate = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])
        if degenerate.any():
            raise ValidationError(f"face {int(np.nonzero(degenerate)[0][0])} repeats a vertex index")
        directed = self.directed_edges
        keys = directed[:, 0] * n + directed[:, 1]
        uniq, counts = np.unique(keys, return_counts=True)
        if (counts > 1).any():
            k = uniq[counts > 1][0]
            raise ValidationError(
                f"directed edge ({k // n}, {k % n}) used by several faces: "
                "mesh is non-manifold or inconsistently oriented"
            )
        if (self.edge_face_count > 2).any():
            e = self.edges[np.argmax(self.edge_face_count)]
            raise ValidationError(f"edge ({e[0]}, {e[1]}) borders more than two faces")
        for name, idx in self.landmarks.items():
            if name not in LANDMARK_NAMES:
                raise ValidationError(f"unknown landmark name {name!r}; expected one of {LANDMARK_NAMES}")
            if not 0 <= idx < n:
                raise ValidationError(f"landmark {name} index {idx} out of range")

    # construction helpers

    def with_vertices(self, vertices) -> "TriangleMesh":
        """Same topology and landmarks, new vertex positions.

        The faces were validated when ``self`` was built, so only the new
        coordinates are checked and topology caches are shared.
        """
        v = np.array(vertices, dtype=np.float64)
        if v.shape != self.vertices.shape:
            raise ValidationError(f"expected vertices of shape {self.vertices.shape}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("vertices contain non-finite coordinates")
        v.setflags(write=False)
        new = object.__new__(TriangleMesh)
        object.__setattr__(new, "vertices", v)
        object.__setattr__(new, "faces", self.faces)
        object.__setattr__(new, "landmarks", dict(self.landmarks))
        for key in _TOPOLOGY_CACHE:
            if key in self.__dict__:
                new.__dict__[key] = self.__dict__[key]
        return new

    def with_landmarks(self, landmarks: Mapping[str, int]) -> "TriangleMesh":
        return TriangleMesh(self.vertices, self.faces, landmarks)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def landmark_points(self, names=GUIDANCE_LANDMARKS) -> np.ndarray:
        missing = [n for n in names if n not in self.landmarks]
        if missing:
            from .errors import ConfigError

            raise ConfigError(f"missing landmark(s): {', '.join(missing)}")
        return self.vertices[[self.landmarks[n] for n in names]]

    # topology

    @cached_property
    def directed_edges(self) -> np.ndarray:
        """Directed half-edges (a, b) of every face, shape (3m, 2), ordered face by face."""
        f = self.faces
        return np.stack([f, np.roll(f, -1, axis=1)], axis=-1).reshape(-1, 2)

    @cached_property
    def _edge_data(self):
        d = np.sort(self.directed_edges, axis=1)
        edges, inverse, counts = np.unique(d, axis=0, return_inverse=True, return_counts=True)
        return edges, inverse.reshape(-1), counts

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, shape (E, 2), each row sorted ascending."""
        return self._edge_data[0]

    @property
    def face_edge_index(self) -> np.ndarray:
        """Index into :attr:`edges` of each face's edge (a->b, b->c, c->a), shape (m, 3)."""
        return self._edge_data[1].reshape(-1, 3)

    @property
    def edge_face_count(self) -> np.ndarray:
        return self._edge_data[2]

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Binary symmetric vertex adjacency."""
        e = self.edges
        n = self.n_vertices
        data = np.ones(2 * len(e))
        a = sparse.coo_matrix((data, (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n))
        return a.tocsr()

    def neighbors(self, i: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[i] : a.indptr[i + 1]]

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return self.edges[self.edge_face_count == 1]

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    @cached_property
    def vertex_faces(self) -> sparse.csr_matrix:
        """Incidence matrix, rows = vertices, columns = faces."""
        m = self.n_faces
        rows = self.faces.reshape(-1)
        cols = np.repeat(np.arange(m), 3)
        return sparse.csr_matrix((np.ones(3 * m), (rows, cols)), shape=(self.n_vertices, m))

    # geometry

    @cached_property
    def face_normals(self) -> np.ndarray:
        """Unit face normals (zero for zero-area faces)."""
        cross = self._face_cross
        norm = np.linalg.norm(cross, axis=1, keepdims=True)
        return np.divide(cross, norm, out=np.zeros_like(cross), where=norm > 0)

    @cached_property
    def _face_cross(self) -> np.ndarray:
        p = self.vertices[self.faces]
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._face_cross, axis=1)

    @property
    def area(self) -> float:
        return float(self.face_areas.sum())

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted unit vertex normals."""
        n = self.vertex_faces @ self._face_cross
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)

    @property
    def mean_edge_length(self) -> float:
        return float(self.edge_lengths.mean())

    def bounding_box_diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))


def face_angles(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Interior angle (radians) at each corner of each face, shape (m, 3)."""
    p = vertices[faces]
    out = np.empty(faces.shape)
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cos = np.einsum("ij,ij->i", a, b)
        sin = np.linalg.norm(np.cross(a, b), axis=1)
        out[:, k] = np.arctan2(sin, cos)
    return out


def _check_face_areas(mesh: TriangleMesh, rel_tol: float = 1e-12):
    p = mesh.vertices[mesh.faces]
    longest = np.max(
        [np.sum((p[:, (k + 1) % 3] - p[:, k]) ** 2, axis=1) for k in range(3)], axis=0
    )
    bad = 2.0 * mesh.face_areas <= rel_tol * longest
    if bad.any():
        raise ValidationError(f"face {int(np.nonzero(bad)[0][0])} has zero area")


def cotangent_weights(mesh: TriangleMesh, clamp: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Cotangent weight of every undirected edge.

    Returns ``(edges, weights)`` with ``edges`` equal to ``mesh.edges``.
    Interior edges get ``(cot a + cot b) / 2`` from the two opposite angles,
    boundary edges ``cot a / 2``. Negative weights are clamped to zero unless
    ``clamp`` is false.
    """
    _check_face_areas(mesh)
    p = mesh.vertices[mesh.faces]
    cross_norm = 2.0 * mesh.face_areas
    w = np.zeros(len(mesh.edges))
    fe = mesh.face_edge_index
    for k in range(3):
        # corner k is opposite edge (k+1 -> k+2), stored as face_edge_index[:, (k+1) % 3]
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cot = np.einsum("ij,ij->i", a, b) / cross_norm
        np.add.at(w, fe[:, (k + 1) % 3], 0.5 * cot)
    if clamp:
        np.maximum(w, 0.0, out=w)
    return mesh.edges, w


def weight_matrix(n: int, edges: np.ndarray, weights: np.ndarray) -> sparse.csr_matrix:
    """Symmetric sparse matrix with ``W[i, j] = W[j, i] = weight`` per edge."""
    i, j = edges[:, 0], edges[:, 1]
    w = sparse.coo_matrix((np.r_[weights, weights], (np.r_[i, j], np.r_[j, i])), shape=(n, n))
    return w.tocsr()


def laplacian_matrix(mesh: TriangleMesh) -> sparse.csr_matrix:
    """Cotangent Laplacian ``L = D - W`` (positive semi-definite, zero row sums)."""
    edges, w = cotangent_weights(mesh)
    W = weight_matrix(mesh.n_vertices, edges, w)
    d = np.asarray(W.sum(axis=1)).ravel()
    return (sparse.diags(d) - W).tocsr()


def _edge_graph(mesh: TriangleMesh) -> sparse.csr_matrix:
    return weight_matrix(mesh.n_vertices, mesh.edges, mesh.edge_lengths)


def geodesic_distances(mesh: TriangleMesh, sources) -> np.ndarray:
    """Shortest edge-path lengths from each source vertex to all vertices.

    Returns shape ``(len(sources), n)``; unreachable vertices are ``inf``.
    """
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    return csgraph.dijkstra(_edge_graph(mesh), directed=False, indices=sources)


def geodesic_distance(mesh: TriangleMesh, a: int, b: int) -> float:
    """Dijkstra approximation of the surface geodesic between vertices ``a`` and ``b``."""
    n = mesh.n_vertices
    for v in (a, b):
        if not 0 <= v < n:
            raise ValidationError(f"vertex index {v} out of range")
    d = float(geodesic_distances(mesh, [a])[0, b])
    if not np.isfinite(d):
        raise NumericalError(f"vertices {a} and {b} lie in different connected components")
    return d


def opposite_vertices(mesh: TriangleMesh) -> np.ndarray:
    """For each undirected edge, the vertices opposite to it in its faces.

    Returns an ``(E, 2)`` int array aligned with ``mesh.edges``; the second
    column is ``-1`` for boundary edges.
    """
    out = np.full((len(mesh.edges), 2), -1, dtype=np.int64)
    e = mesh.face_edge_index.reshape(-1)
    # edge k of a face runs corner k -> k+1, so corner k+2 is opposite
    opp = np.roll(mesh.faces, -2, axis=1).reshape(-1)
    order = np.argsort(e, kind="stable")
    e, opp = e[order], opp[order]
    first = np.r_[True, e[1:] != e[:-1]]
    out[e[first], 0] = opp[first]
    out[e[~first], 1] = opp[~first]
    return out


def greedy_coloring(adjacency: sparse.csr_matrix) -> np.ndarray:
    """Colour vertices so that no two adjacent vertices share a colour."""
    n = adjacency.shape[0]
    colors = np.full(n, -1, dtype=np.int64)
    indptr, indices = adjacency.indptr, adjacency.indices
    order = np.argsort(-np.diff(indptr), kind="stable")
    for v in order:
        used = set(colors[indices[indptr[v] : indptr[v + 1]]].tolist())
        c = 0
        while c in used:
            c += 1
        colors[v] = c
    return colors


def vertex_normals(vertices: np.ndarray, faces: np.ndarray, vertex_faces: sparse.csr_matrix | None = None) -> np.ndarray:
    """Area-weighted unit vertex normals for arbitrary positions on a fixed topology."""
    p = vertices[faces]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    if vertex_faces is None:
        m = len(faces)
        vertex_faces = sparse.csr_matrix(
            (np.ones(3 * m), (faces.reshape(-1), np.repeat(np.arange(m), 3))), shape=(len(vertices), m)
        )
    n = vertex_faces @ cross
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)
