"""Transfer of a coarse-mesh deformation to a fine mesh through per-node affine maps."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ValidationError
from .mesh import TriangleMesh

logger = logging.getLogger(__name__)


@dataclass
class DeformationGraph:
    rest: np.ndarray  # node rest positions g_j, (k, 3)
    matrices: np.ndarray  # A_j, (k, 3, 3)
    translations: np.ndarray  # t_j, (k, 3)
    influence_nodes: np.ndarray  # (n_fine, k) node indices
    influence_weights: np.ndarray  # (n_fine, k), rows sum to 1


def _rigid_fit(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Best rotation (about the origin) taking ``src`` rows onto ``dst`` rows."""
    H = src.T @ dst
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    return Vt.T @ np.diag([1.0, 1.0, d]) @ U.T


def fit_node_transforms(before: TriangleMesh, after: TriangleMesh) -> np.ndarray:
    """Least-squares affine per node from its one-ring edges plus a scaled-normal constraint.

    The normal row maps ``l * n`` to ``l' * n'`` (``l`` the mean one-ring
    edge length), which makes every fit well posed and exact for similarity
    transforms.
    """
    if before.n_vertices != after.n_vertices or not np.array_equal(before.faces, after.faces):
        raise ValidationError("coarse meshes before and after deformation must share topology")
    G, Gd = before.vertices, after.vertices
    n_rest, n_def = before.vertex_normals, after.vertex_normals
    adj = before.adjacency
    out = np.empty((len(G), 3, 3))
    for j in range(len(G)):
        nbrs = adj.indices[adj.indptr[j]:adj.indptr[j + 1]]
        src = G[nbrs] - G[j]
        dst = Gd[nbrs] - Gd[j]
        ell = np.linalg.norm(src, axis=1).mean() if len(nbrs) else 1.0
        ell_d = np.linalg.norm(dst, axis=1).mean() if len(nbrs) else 1.0
        src = np.vstack([src, ell * n_rest[j]])
        dst = np.vstack([dst, ell_d * n_def[j]])
        sol, _, rank, _ = np.linalg.lstsq(src, dst, rcond=None)
        if rank < 3:
            logger.info("node %d has a degenerate one-ring; using a rigid fit", j)
            out[j] = _rigid_fit(src, dst)
        else:
            out[j] = sol.T
    return out


def build_graph(coarse_before: TriangleMesh, coarse_after: TriangleMesh, fine: TriangleMesh,
                k: int = 4) -> DeformationGraph:
    """Every coarse vertex is a node; fine vertices blend their ``k`` nearest nodes by inverse distance."""
    if k < 1:
        raise ValidationError("each fine vertex needs at least one influencing node")
    A = fit_node_transforms(coarse_before, coarse_after)
    g = coarse_before.vertices
    k = min(k, len(g))
    dist, idx = cKDTree(g).query(fine.vertices, k=k)
    dist, idx = dist.reshape(len(fine.vertices), k), idx.reshape(len(fine.vertices), k)
    tiny = 1e-12 * max(coarse_before.bounding_box_diagonal(), 1.0)
    w = 1.0 / np.maximum(dist, tiny)
    w /= w.sum(axis=1, keepdims=True)
    return DeformationGraph(g.copy(), A, coarse_after.vertices - g, idx, w)


def apply_graph(graph: DeformationGraph, fine: TriangleMesh) -> TriangleMesh:
    """``v' = sum_j w_j (A_j (v - g_j) + g_j + t_j)``."""
    v = fine.vertices
    if graph.influence_nodes.shape[0] != len(v):
        raise ValidationError("deformation graph was built for a different fine mesh")
    idx, w = graph.influence_nodes, graph.influence_weights
    g = graph.rest[idx]
    local = np.einsum("nkab,nkb->nka", graph.matrices[idx], v[:, None, :] - g)
    moved = local + g + graph.translations[idx]
    return fine.with_vertices(np.einsum("nk,nka->na", w, moved))
