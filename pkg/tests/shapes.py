"""Small reference meshes for tests."""

import numpy as np

from breastssm.mesh import TriangleMesh


def icosphere(subdivisions: int = 0, radius: float = 1.0) -> TriangleMesh:
    t = (1 + 5**0.5) / 2
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in v]
    faces = list(f)
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriangleMesh(radius * np.array(verts), np.array(faces))


def grid_patch(nx: int = 6, ny: int = 5, size: float = 1.0, seed: int | None = None, jitter: float = 0.0,
               bend: float = 0.0) -> TriangleMesh:
    """Open triangulated square patch, optionally jittered and bent."""
    xs, ys = np.meshgrid(np.linspace(0, size, nx), np.linspace(0, size, ny))
    pts = np.c_[xs.ravel(), ys.ravel(), np.zeros(nx * ny)]
    if seed is not None and jitter:
        rng = np.random.default_rng(seed)
        pts[:, :2] += rng.uniform(-jitter, jitter, (nx * ny, 2)) * size / max(nx, ny)
    pts[:, 2] = bend * (pts[:, 0] - size / 2) ** 2
    faces = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            a = j * nx + i
            faces += [(a, a + 1, a + nx + 1), (a, a + nx + 1, a + nx)]
    return TriangleMesh(pts, np.array(faces))
