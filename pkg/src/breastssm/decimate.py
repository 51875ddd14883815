"""Quadric-error edge-collapse decimation with protected vertices."""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .mesh import TriangleMesh

logger = logging.getLogger(__name__)

_BOUNDARY_WEIGHT = 100.0


@dataclass
class DecimationResult:
    mesh: TriangleMesh
    vertex_map: np.ndarray  # input index of every surviving vertex (its position, for subset placement)


def _plane_quadric(n, p, weight=1.0):
    d = -float(n @ p)
    q = np.append(n, d)
    return weight * np.outer(q, q)


def _initial_quadrics(mesh: TriangleMesh) -> np.ndarray:
    V, F = mesh.vertices, mesh.faces
    Q = np.zeros((len(V), 4, 4))
    n = mesh.face_normals
    d = -np.einsum("ij,ij->i", n, V[F[:, 0]])
    plane = np.c_[n, d]
    fq = plane[:, :, None] * plane[:, None, :]
    for k in range(3):
        np.add.at(Q, F[:, k], fq)
    # boundary edges: penalise motion away from a plane perpendicular to the face
    be = set(map(tuple, mesh.boundary_edges))
    scale = mesh.mean_edge_length**2
    for f_idx, face in enumerate(F):
        for k in range(3):
            a, b = face[k], face[(k + 1) % 3]
            if (min(a, b), max(a, b)) in be:
                e = V[b] - V[a]
                bn = np.cross(e, n[f_idx])
                norm = np.linalg.norm(bn)
                if norm > 0:
                    q = _plane_quadric(bn / norm, V[a], _BOUNDARY_WEIGHT * scale)
                    Q[a] += q
                    Q[b] += q
    return Q


def _quadric_cost(Q, x):
    h = np.append(x, 1.0)
    return float(h @ Q @ h)


def decimate(mesh: TriangleMesh, target_vertices: int, protected=None, placement: str = "optimal") -> DecimationResult:
    """Collapse edges in order of quadric error until ``target_vertices`` remain.

    ``placement="optimal"`` puts the merged vertex at the quadric minimiser;
    ``"subset"`` keeps whichever endpoint is cheaper, so every output vertex
    is an input vertex.

    Landmark vertices (plus any in ``protected``) are never removed or
    moved. Collapses that would break manifoldness (link condition), pinch
    the boundary, or flip a face are skipped. If no legal collapse is left
    the loop stops early with a warning.
    """
    if placement not in ("optimal", "subset"):
        raise ConfigError(f"unknown placement {placement!r}; use 'optimal' or 'subset'")
    n = mesh.n_vertices
    keep = set(int(i) for i in mesh.landmarks.values())
    if protected is not None:
        keep |= set(int(i) for i in protected)
    if target_vertices >= n:
        return DecimationResult(mesh, np.arange(n))
    if target_vertices < max(4, len(keep) + 1):
        raise ConfigError(f"cannot decimate to {target_vertices} vertices: need at least "
                          f"{max(4, len(keep) + 1)} to keep {len(keep)} protected vertices and a valid surface")

    V = mesh.vertices.copy()
    faces = mesh.faces.copy()
    alive_f = np.ones(len(faces), dtype=bool)
    alive_v = np.ones(n, dtype=bool)
    vf = [set() for _ in range(n)]
    for fi, f in enumerate(faces):
        for v in f:
            vf[v].add(fi)
    boundary = np.zeros(n, dtype=bool)
    boundary[mesh.boundary_vertices] = True
    Q = _initial_quadrics(mesh)
    stamp = np.zeros(n, dtype=np.int64)

    def neighbours(v):
        out = set()
        for fi in vf[v]:
            out.update(faces[fi].tolist())
        out.discard(v)
        return out

    def edge_faces(a, b):
        return [fi for fi in vf[a] if b in faces[fi]]

    def candidate(a, b):
        if a in keep and b in keep:
            return None
        q = Q[a] + Q[b]
        if a in keep:
            x = V[a]
        elif b in keep:
            x = V[b]
        elif placement == "subset":
            x = min((V[a], V[b]), key=lambda p: _quadric_cost(q, p))
        else:
            A = q.copy()
            A[3] = [0, 0, 0, 1]
            try:
                if np.linalg.cond(A) > 1e10:
                    raise np.linalg.LinAlgError
                x = np.linalg.solve(A, [0, 0, 0, 1])[:3]
            except np.linalg.LinAlgError:
                opts = [V[a], V[b], 0.5 * (V[a] + V[b])]
                x = min(opts, key=lambda p: _quadric_cost(q, p))
        return _quadric_cost(q, x), x

    heap = []

    def push(a, b):
        c = candidate(a, b)
        if c is not None:
            heapq.heappush(heap, (c[0], int(a), int(b), int(stamp[a]), int(stamp[b]), c[1]))

    for a, b in mesh.edges:
        push(a, b)

    remaining = n
    while remaining > target_vertices and heap:
        cost, a, b, sa, sb, x = heapq.heappop(heap)
        if not (alive_v[a] and alive_v[b]) or stamp[a] != sa or stamp[b] != sb:
            continue
        shared = edge_faces(a, b)
        if not shared:
            continue
        # link condition: common neighbours are exactly the opposite vertices
        opp = {int(v) for fi in shared for v in faces[fi] if v != a and v != b}
        if (neighbours(a) & neighbours(b)) != opp:
            continue
        is_boundary_edge = len(shared) == 1
        if boundary[a] and boundary[b] and not is_boundary_edge:
            continue
        if remaining <= 4:
            break
        # survivor: the protected vertex if any, else a
        keep_v, drop_v = (b, a) if a in keep else (a, b)
        if placement == "subset" and drop_v not in keep and np.array_equal(x, V[drop_v]):
            keep_v, drop_v = drop_v, keep_v
        if drop_v in keep:
            continue
        if not _collapse_ok(V, faces, vf, keep_v, drop_v, x, shared):
            continue
        for fi in shared:
            alive_f[fi] = False
            for v in faces[fi]:
                vf[v].discard(fi)
        for fi in vf[drop_v]:
            faces[fi][faces[fi] == drop_v] = keep_v
            vf[keep_v].add(fi)
        vf[drop_v] = set()
        alive_v[drop_v] = False
        V[keep_v] = x
        Q[keep_v] = Q[keep_v] + Q[drop_v]
        boundary[keep_v] = boundary[keep_v] or boundary[drop_v]
        stamp[keep_v] += 1
        remaining -= 1
        for u in neighbours(keep_v):
            push(keep_v, u)
    if remaining > target_vertices:
        logger.warning("decimation stopped at %d vertices (target %d): no legal collapse left", remaining, target_vertices)

    index = np.full(n, -1, dtype=np.int64)
    kept = np.nonzero(alive_v)[0]
    index[kept] = np.arange(len(kept))
    new_faces = index[faces[alive_f]]
    landmarks = {name: int(index[i]) for name, i in mesh.landmarks.items()}
    return DecimationResult(TriangleMesh(V[kept], new_faces, landmarks), kept)


def _collapse_ok(V, faces, vf, keep_v, drop_v, x, shared, min_cos=0.2):
    """Reject collapses that flip or nearly degenerate any surviving face."""
    shared = set(shared)
    for v in (keep_v, drop_v):
        for fi in vf[v]:
            if fi in shared:
                continue
            f = faces[fi]
            p = V[f]
            old = np.cross(p[1] - p[0], p[2] - p[0])
            q = p.copy()
            q[(f == keep_v) | (f == drop_v)] = x
            new = np.cross(q[1] - q[0], q[2] - q[0])
            no, nn = np.linalg.norm(old), np.linalg.norm(new)
            if nn <= 1e-12 * max(no, 1e-300):
                return False
            if old @ new < min_cos * no * nn:
                return False
    return True
