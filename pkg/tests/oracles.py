"""Independent reference computations used by several test modules."""

import mpmath
import numpy as np
from scipy.spatial.transform import Rotation

from breastssm.casap import RegistrationState
from breastssm.mesh import cotangent_weights
from shapes import grid_patch


def random_rotations(count, seed):
    return Rotation.random(count, random_state=seed).as_matrix()


def golden_section_scale(rest, deformed, weights, digits=40):
    """Minimise ``sum w (|e'|^2 / s + s |e|^2)`` over s > 0 by golden-section search in high precision."""
    mpmath.mp.dps = digits
    a2 = [mpmath.mpf(float(x)) for x in np.sum(np.square(deformed), axis=1)]
    b2 = [mpmath.mpf(float(x)) for x in np.sum(np.square(rest), axis=1)]
    w = [mpmath.mpf(float(x)) for x in weights]

    def f(s):
        return mpmath.fsum(wi * (ai / s + s * bi) for wi, ai, bi in zip(w, a2, b2))

    lo, hi = mpmath.mpf("1e-6"), mpmath.mpf(1)
    while f(hi * 2) < f(hi):
        hi *= 2
    hi *= 2
    g = (mpmath.sqrt(5) - 1) / 2
    x1, x2 = hi - g * (hi - lo), lo + g * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > mpmath.mpf(10) ** (-25):
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - g * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + g * (hi - lo)
            f2 = f(x2)
    return float((lo + hi) / 2)


def naive_regularizer(mesh, state):
    """Symmetric-scale CASAP regulariser summed vertex by vertex over spokes-and-rims edge sets."""
    edges, w = cotangent_weights(mesh)
    cot = {(int(a), int(b)): float(x) for (a, b), x in zip(edges, w)}
    V, P = mesh.vertices, state.points
    total = 0.0
    for i in range(mesh.n_vertices):
        R, s, wi = state.rotations[i], state.scales[i], state.weights[i]
        for f in mesh.faces:
            if i not in f:
                continue
            for k in range(3):
                a, b = int(f[k]), int(f[(k + 1) % 3])
                e, e2 = V[a] - V[b], P[a] - P[b]
                r = e2 - s * R @ e
                total += 0.5 * wi * cot[(min(a, b), max(a, b))] / s * float(r @ r)
        for l in mesh.neighbors(i):
            d = R - state.rotations[l]
            total += 0.5 * state.lam * wi * cot[(min(i, l), max(i, l))] * float(np.sum(d * d))
    return total


def random_mesh(seed, max_vertices=200):
    rng = np.random.default_rng(seed)
    nx = int(rng.integers(3, 15))
    ny = int(rng.integers(3, max(4, min(15, max_vertices // nx + 1))))
    return grid_patch(nx, ny, size=rng.uniform(1, 50), seed=seed, jitter=0.35, bend=rng.uniform(-0.05, 0.05))


def random_state(mesh, seed, lam=None):
    rng = np.random.default_rng(seed)
    n = mesh.n_vertices
    size = float(np.ptp(mesh.vertices, axis=0).max())
    P = mesh.vertices + rng.normal(scale=0.05 * size, size=(n, 3))
    st = RegistrationState.initial(P, weights=rng.uniform(0.5, 1.0, n), lam=rng.uniform(0, 2) if lam is None else lam)
    st.scales = rng.uniform(0.7, 1.4, n)
    st.rotations = random_rotations(n, seed)
    return st


def brute_point_to_surface(points, mesh):
    """Distance from each point to the nearest triangle, checking every triangle."""
    T = mesh.vertices[mesh.faces]
    a, b, c = T[:, 0], T[:, 1], T[:, 2]
    n = np.cross(b - a, c - a)
    nn = np.einsum("ij,ij->i", n, n)
    out = np.empty(len(points))

    def seg(p, u, v):
        d = v - u
        t = np.clip(np.einsum("ij,ij->i", p - u, d) / np.einsum("ij,ij->i", d, d), 0, 1)
        return np.linalg.norm(u + t[:, None] * d - p, axis=1)

    for idx, p in enumerate(points):
        h = np.einsum("ij,ij->i", p - a, n) / nn
        q = p - h[:, None] * n
        # barycentric coordinates of the projection by sub-triangle areas
        def area(x, y, z):
            return np.einsum("ij,ij->i", np.cross(y - x, z - x), n) / nn
        l0, l1, l2 = area(q, b, c), area(a, q, c), area(a, b, q)
        inside = (l0 >= 0) & (l1 >= 0) & (l2 >= 0)
        d = np.where(inside, np.abs(h) * np.sqrt(nn), np.inf)
        edge = np.minimum(np.minimum(seg(p[None].repeat(len(a), 0), a, b), seg(p[None].repeat(len(a), 0), b, c)),
                          seg(p[None].repeat(len(a), 0), c, a))
        out[idx] = np.min(np.minimum(d, edge))
    return out


def naive_gpa(shapes, iterations=500):
    """Textbook GPA: rotate+scale every shape onto the running mean, renormalise, repeat."""
    X = [np.asarray(s, float) - np.mean(s, axis=0) for s in shapes]
    mean = X[0] / np.linalg.norm(X[0])
    for _ in range(iterations):
        fitted = []
        for x in X:
            M = x.T @ mean
            U, S, Vt = np.linalg.svd(M)
            D = np.diag([1, 1, np.sign(np.linalg.det(U @ Vt))])
            R = U @ D @ Vt
            s = np.trace(np.diag(S) @ D) / np.sum(x * x)
            fitted.append(s * x @ R)
        mean = np.mean(fitted, axis=0)
        mean /= np.linalg.norm(mean)
    return mean


def planted_linear_shapes(n_vertices, variances, seed):
    """Shapes whose sample covariance has exactly the given nonzero eigenvalues."""
    rng = np.random.default_rng(seed)
    q = len(variances)
    k = q + 1
    basis = np.linalg.qr(rng.normal(size=(3 * n_vertices, q)))[0].T
    # centred, mutually orthogonal score columns from a regular simplex
    simplex = np.eye(k) - 1.0 / k
    scores = np.linalg.svd(simplex)[0][:, :q]
    scores *= np.sqrt((k - 1) * np.asarray(variances, float))
    mean = rng.normal(size=3 * n_vertices) * 10
    return mean + scores @ basis, basis
