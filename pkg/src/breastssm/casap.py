"""Mask-weighted non-rigid registration with a consistent as-similar-as-possible regulariser.

Energy, for deformed template points ``P'``::

    F = F_D + alpha * F_R + beta * F_L
    F_D = 1/2 sum_i c_i^2 |p'_i - q_i|^2
    F_R = 1/2 sum_v sum_{(j,k) in E_v} (w_v w_jk / s_v) |e'_jk - s_v R_v e_jk|^2
          + lambda/2 sum_v w_v sum_{l in N_v} w_vl |R_v - R_l|_F^2
    F_L = 1/2 sum_m |p'_{I_m} - Q_L,m|^2

``E_v`` holds the directed edges of every triangle incident to ``v``
(spokes and rims), ``w_jk`` are clamped cotangent weights of the rest
template, ``w_v = 1 / ((h - 1) c_v + 1)`` is the mask-driven stiffness.

Minimisation alternates exact block minimisers: closest points, per-vertex
scales (closed form), per-vertex rotations (SVD, Gauss-Seidel over a graph
colouring), and all points (one sparse least-squares solve). Every block
therefore lowers ``F``, which :func:`register` asserts.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import ConfigError, NumericalError, ValidationError
from .mesh import (GUIDANCE_LANDMARKS, TriangleMesh, cotangent_weights, greedy_coloring,
                   opposite_vertices)
from .query import SurfaceLocator

logger = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = ("stage", "alpha", "iteration", "F", "F_D", "F_R", "F_L", "mean_corr_dist")


def geometric_schedule(start: float, stop: float, steps: int) -> tuple[float, ...]:
    return tuple(float(a) for a in np.geomspace(start, stop, steps))


@dataclass
class CasapConfig:
    """Solver settings.

    ``alpha_schedule`` is expressed relative to the data term: the
    regulariser is rescaled so that alpha = 1 gives it the same mean
    per-vertex stiffness as a unit-confidence data term.
    """

    alpha_schedule: tuple = field(default_factory=lambda: geometric_schedule(100.0, 1.0, 8))
    beta: float = 1.0
    h: int = 2
    lambda_factor: float = 0.02
    am_iterations_per_alpha: int = 30
    convergence_tol: float = 1e-4
    prune_factor: float | None = 4.0  # None disables distance pruning
    prune_floor: float = 0.5  # minimum pruning radius, in target mean edge lengths
    prune_normals: bool = True
    descent_tol: float = 1e-10
    check_descent: bool = True

    def __post_init__(self):
        a = np.asarray(self.alpha_schedule, dtype=np.float64)
        self.alpha_schedule = tuple(float(x) for x in a)
        if a.ndim != 1 or len(a) == 0 or np.any(a <= 0) or np.any(np.diff(a) >= 0):
            raise ConfigError("alpha_schedule must be a non-empty, strictly decreasing sequence of positive numbers")
        if self.beta < 0:
            raise ConfigError("beta must be non-negative")
        if int(self.h) != self.h or self.h < 1:
            raise ConfigError("h must be a positive integer")
        if self.lambda_factor < 0:
            raise ConfigError("lambda_factor must be non-negative")
        if self.am_iterations_per_alpha < 1:
            raise ConfigError("am_iterations_per_alpha must be at least 1")
        if self.convergence_tol < 0:
            raise ConfigError("convergence_tol must be non-negative")
        if self.prune_factor is not None and self.prune_factor <= 0:
            raise ConfigError("prune_factor must be positive (or null to disable pruning)")


# ---------------------------------------------------------------------------
# correspondences and weights


@dataclass
class CorrespondenceSet:
    points: np.ndarray  # q_i
    confidence: np.ndarray  # c_i (0 where pruned)
    distances: np.ndarray
    pruned: np.ndarray  # bool

    @property
    def mean_distance(self) -> float:
        return float(self.distances.mean())


def find_correspondences(deformed: TriangleMesh, target: TriangleMesh, mask_s, mask_t,
                         locator: SurfaceLocator | None = None, prune_factor: float | None = None,
                         prune_floor: float = 0.5, prune_normals: bool = False) -> CorrespondenceSet:
    """Closest target point and match confidence for every deformed template vertex.

    ``c_i = (mask_s[i] + mask_t(q_i)) / 2`` with ``mask_t`` interpolated
    barycentrically. Pruning (off by default) zeroes ``c_i`` for pairs
    farther than ``prune_factor`` times the median distance (but never
    below ``prune_floor`` target edge lengths) or whose normals point in
    opposite directions.
    """
    if target.n_faces == 0:
        raise ValidationError("target mesh has no faces")
    mask_s = np.asarray(mask_s, dtype=np.float64)
    mask_t = np.asarray(mask_t, dtype=np.float64)
    if mask_s.shape != (deformed.n_vertices,) or mask_t.shape != (target.n_vertices,):
        raise ValidationError("masks must have one value per vertex of their mesh")
    locator = locator or SurfaceLocator(target)
    cp = locator.query(deformed.vertices)
    conf = 0.5 * (mask_s + cp.interpolate(target, mask_t))
    pruned = np.zeros(deformed.n_vertices, dtype=bool)
    if prune_factor is not None:
        radius = max(prune_factor * float(np.median(cp.distances)), prune_floor * target.mean_edge_length)
        pruned |= cp.distances > radius
    if prune_normals:
        ns = deformed.vertex_normals
        nt = cp.interpolate(target, target.vertex_normals)
        pruned |= np.einsum("ij,ij->i", ns, nt) < 0.0
    conf = np.where(pruned, 0.0, conf)
    return CorrespondenceSet(cp.points, conf, cp.distances, pruned)


def stiffness_weights(confidence, h: int) -> np.ndarray:
    """``w_i = 1 / ((h - 1) c_i + 1)``: stiff where matches are unreliable."""
    if h < 1:
        raise ConfigError("h must be at least 1")
    c = np.asarray(confidence, dtype=np.float64)
    return 1.0 / ((h - 1) * c + 1.0)


# ---------------------------------------------------------------------------
# template structure


class Neighborhoods:
    """Spokes-and-rims edge sets, coupling edges and colour classes of a rest template.

    Every (face, corner, face edge) triple is one regulariser *term*:
    ``term_vertex`` is the owning vertex ``v``, ``term_edges`` the directed
    edge ``(j, k)``, ``rest`` the rest vector ``p_j - p_k`` and
    ``term_weight`` its cotangent weight.
    """

    def __init__(self, template: TriangleMesh):
        self.template = template
        self.n = template.n_vertices
        edges, w = cotangent_weights(template)
        self.edges = edges
        self.edge_weights = w
        f = template.faces
        directed = template.directed_edges.reshape(-1, 3, 2)  # (m, 3 edges, 2)
        fe = template.face_edge_index  # (m, 3)
        m = len(f)
        # term (face, corner c, edge k)
        self.term_vertex = np.repeat(f, 3, axis=1).reshape(-1)
        self.term_edges = np.tile(directed, (1, 3, 1)).reshape(-1, 2)
        self.term_weight = np.tile(w[fe], (1, 3)).reshape(-1)
        V = template.vertices
        self.rest = V[self.term_edges[:, 0]] - V[self.term_edges[:, 1]]
        self.n_terms = 9 * m
        # incidence G: row t has +1 at j, -1 at k
        rows = np.repeat(np.arange(self.n_terms), 2)
        cols = self.term_edges.reshape(-1)
        vals = np.tile([1.0, -1.0], self.n_terms)
        self.incidence = sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_terms, self.n))
        self.rest_norm2 = np.bincount(self.term_vertex, self.term_weight * np.einsum("ij,ij->i", self.rest, self.rest),
                                      minlength=self.n)
        colors = greedy_coloring(template.adjacency)
        self.color_classes = [np.nonzero(colors == c)[0] for c in range(colors.max() + 1)]
        self.area = template.area
        unit = self.incidence.T @ sparse.diags(self.term_weight) @ self.incidence
        diag = unit.diagonal()
        self.alpha_unit = float(self.n / diag.sum()) if diag.sum() > 0 else 1.0

    def deformed_edges(self, points: np.ndarray) -> np.ndarray:
        return points[self.term_edges[:, 0]] - points[self.term_edges[:, 1]]

    def coupling_matrix(self, w: np.ndarray) -> sparse.csr_matrix:
        """Symmetric matrix with entries ``w_vl (w_v + w_l)`` on template edges."""
        a, b = self.edges[:, 0], self.edges[:, 1]
        vals = self.edge_weights * (w[a] + w[b])
        return sparse.csr_matrix((np.r_[vals, vals], (np.r_[a, b], np.r_[b, a])), shape=(self.n, self.n))


@dataclass
class RegistrationState:
    points: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray  # (n, 3, 3)
    weights: np.ndarray  # stiffness w_i
    lam: float

    @classmethod
    def initial(cls, points, weights=None, lam: float = 0.0) -> "RegistrationState":
        points = np.array(points, dtype=np.float64)
        n = len(points)
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
        return cls(points, np.ones(n), np.tile(np.eye(3), (n, 1, 1)), w, float(lam))

    def copy(self) -> "RegistrationState":
        return RegistrationState(self.points.copy(), self.scales.copy(), self.rotations.copy(),
                                 self.weights.copy(), self.lam)


@dataclass
class LandmarkTerm:
    indices: np.ndarray  # template vertex indices
    targets: np.ndarray  # target positions, (L, 3)

    @classmethod
    def empty(cls) -> "LandmarkTerm":
        return cls(np.zeros(0, dtype=np.int64), np.zeros((0, 3)))


# ---------------------------------------------------------------------------
# energy


def regularizer_residuals(nb: Neighborhoods, state: RegistrationState) -> np.ndarray:
    """``e'_jk - s_v R_v e_jk`` for every term."""
    v = nb.term_vertex
    target = np.einsum("tij,tj->ti", state.rotations[v], nb.rest) * state.scales[v, None]
    return nb.deformed_edges(state.points) - target


def _term_weights(nb: Neighborhoods, state: RegistrationState) -> np.ndarray:
    v = nb.term_vertex
    return state.weights[v] * nb.term_weight / state.scales[v]


def regularizer_energy(nb: Neighborhoods, state: RegistrationState) -> float:
    r = regularizer_residuals(nb, state)
    edge_part = 0.5 * np.sum(_term_weights(nb, state) * np.einsum("ij,ij->i", r, r))
    if state.lam == 0.0:
        return float(edge_part)
    a, b = nb.edges[:, 0], nb.edges[:, 1]
    d = state.rotations[a] - state.rotations[b]
    coupling = 0.5 * state.lam * np.sum(nb.edge_weights * (state.weights[a] + state.weights[b])
                                        * np.einsum("kij,kij->k", d, d))
    return float(edge_part + coupling)


def energy(nb: Neighborhoods, state: RegistrationState, corr: CorrespondenceSet,
           landmarks: LandmarkTerm, alpha: float, beta: float) -> dict:
    """All terms and the weighted total; ``alpha`` is the effective (unscaled) weight."""
    diff = state.points - corr.points
    f_d = 0.5 * float(np.sum(corr.confidence**2 * np.einsum("ij,ij->i", diff, diff)))
    f_r = regularizer_energy(nb, state)
    if len(landmarks.indices):
        dl = state.points[landmarks.indices] - landmarks.targets
        f_l = 0.5 * float(np.sum(dl * dl))
    else:
        f_l = 0.0
    return {"F": f_d + alpha * f_r + beta * f_l, "F_D": f_d, "F_R": f_r, "F_L": f_l}


def regularizer_gradient(nb: Neighborhoods, state: RegistrationState) -> np.ndarray:
    """Exact gradient of ``F_R`` with respect to the points (scales, rotations fixed)."""
    r = regularizer_residuals(nb, state) * _term_weights(nb, state)[:, None]
    return np.asarray(nb.incidence.T @ r)


def edge_gradient(nb: Neighborhoods, state: RegistrationState) -> np.ndarray:
    """Same gradient assembled edge by edge from the opposite-vertex sets.

    Undirected edge ``(i, j)`` with opposite vertices ``G`` appears ``|G|``
    times in each of ``E_i`` and ``E_j`` and once in ``E_k`` for ``k`` in
    ``G``. With uniform stiffness and unit scales on interior edges this is
    ``2 w w_ij [3 e'_ij - (R_i + R_j + (R_k1 + R_k2) / 2) e_ij]``.
    """
    mesh = nb.template
    edges = mesh.edges
    opp = opposite_vertices(mesh)
    P, V = state.points, mesh.vertices
    grad = np.zeros_like(P)
    i, j = edges[:, 0], edges[:, 1]
    e_def = P[i] - P[j]
    e_rest = V[i] - V[j]
    g_count = (opp >= 0).sum(axis=1).astype(np.float64)

    def contrib(v, mult, sel=slice(None)):
        coef = mult * state.weights[v] / state.scales[v]
        rot = np.einsum("kab,kb->ka", state.rotations[v], e_rest[sel]) * state.scales[v, None]
        return coef[:, None] * (e_def[sel] - rot)

    total = contrib(i, g_count) + contrib(j, g_count)
    for col in range(2):
        k = opp[:, col]
        has = k >= 0
        total[has] += contrib(k[has], 1.0, has)
    total *= nb.edge_weights[:, None]
    np.add.at(grad, i, total)
    np.add.at(grad, j, -total)
    return grad


# ---------------------------------------------------------------------------
# block minimisers


def optimal_scale(rest_edges, deformed_edges, weights) -> float:
    """``sqrt(sum w |e'|^2 / sum w |e|^2)``, minimiser of ``sum w (|e'|^2 / s + s |e|^2)``."""
    w = np.asarray(weights, dtype=np.float64)
    num = np.sum(w * np.sum(np.square(deformed_edges), axis=1))
    den = np.sum(w * np.sum(np.square(rest_edges), axis=1))
    if not den > 0:
        raise NumericalError("degenerate neighbourhood: all weighted rest edges have zero length")
    return float(np.sqrt(num / den))


def optimal_scales(nb: Neighborhoods, points: np.ndarray) -> np.ndarray:
    ed = nb.deformed_edges(points)
    num = np.bincount(nb.term_vertex, nb.term_weight * np.einsum("ij,ij->i", ed, ed), minlength=nb.n)
    den = nb.rest_norm2
    if np.any(den <= 0):
        bad = int(np.nonzero(den <= 0)[0][0])
        raise NumericalError(f"degenerate neighbourhood at vertex {bad}: all weighted rest edges have zero length")
    s = np.sqrt(num / den)
    # a neighbourhood collapsed to a point has no minimiser with s > 0
    return np.maximum(s, 1e-12)


def optimal_rotation(S, previous=None) -> np.ndarray:
    """Proper rotation(s) maximising ``tr(R S)``; accepts ``(3, 3)`` or ``(k, 3, 3)``.

    Uses ``S = U diag(sigma) V^T``, ``R = V diag(1, 1, det(V U^T)) U^T``.
    When ``S`` has rank below two the maximiser is not unique; a tiny pull
    towards ``previous`` selects the nearest one.
    """
    S = np.asarray(S, dtype=np.float64)
    single = S.ndim == 2
    S = S.reshape(-1, 3, 3)
    U, sv, Vt = np.linalg.svd(S)
    if previous is not None:
        weak = sv[:, 1] <= 1e-9 * np.maximum(sv[:, 0], 1e-300)
        if weak.any():
            prev = np.asarray(previous, dtype=np.float64).reshape(-1, 3, 3)
            Sw = S[weak] + 1e-10 * np.maximum(sv[weak, 0], 1.0)[:, None, None] * np.swapaxes(prev[weak], 1, 2)
            U, Vt = U.copy(), Vt.copy()
            U[weak], _, Vt[weak] = np.linalg.svd(Sw)
    V = np.swapaxes(Vt, 1, 2)
    Ut = np.swapaxes(U, 1, 2)
    d = np.sign(np.linalg.det(V @ Ut))
    d[d == 0] = 1.0
    V = V.copy()
    V[:, :, 2] *= d[:, None]
    R = V @ Ut
    return R[0] if single else R


def rotation_targets(nb: Neighborhoods, state: RegistrationState, vertices=None) -> np.ndarray:
    """``S_v = w_v sum w_jk e_jk e'_jk^T + lambda sum_l w_vl (w_v + w_l) R_l^T`` for the given vertices."""
    ed = nb.deformed_edges(state.points)
    outer = nb.term_weight[:, None, None] * nb.rest[:, :, None] * ed[:, None, :]
    S = np.zeros((nb.n, 9))
    for c in range(9):
        S[:, c] = np.bincount(nb.term_vertex, outer.reshape(-1, 9)[:, c], minlength=nb.n)
    S *= state.weights[:, None]
    if state.lam:
        Rt = np.swapaxes(state.rotations, 1, 2).reshape(-1, 9)
        S += state.lam * (nb.coupling_matrix(state.weights) @ Rt)
    S = S.reshape(-1, 3, 3)
    return S if vertices is None else S[vertices]


def update_rotations(nb: Neighborhoods, state: RegistrationState) -> np.ndarray:
    """One Gauss-Seidel pass over colour classes; returns the new rotation array."""
    R = state.rotations.copy()
    if not state.lam:
        S = rotation_targets(nb, state)
        return optimal_rotation(S, R)
    ed = nb.deformed_edges(state.points)
    outer = nb.term_weight[:, None, None] * nb.rest[:, :, None] * ed[:, None, :]
    base = np.zeros((nb.n, 9))
    for c in range(9):
        base[:, c] = np.bincount(nb.term_vertex, outer.reshape(-1, 9)[:, c], minlength=nb.n)
    base *= state.weights[:, None]
    coupling = nb.coupling_matrix(state.weights)
    for cls in nb.color_classes:
        Rt = np.swapaxes(R, 1, 2).reshape(-1, 9)
        S = base[cls] + state.lam * (coupling[cls] @ Rt)
        R[cls] = optimal_rotation(S.reshape(-1, 3, 3), R[cls])
    return R


def stacked_system(nb: Neighborhoods, state: RegistrationState, corr: CorrespondenceSet,
                   landmarks: LandmarkTerm, alpha: float, beta: float):
    """Sparse ``A`` and dense ``B`` with ``F(P') = 1/2 |A P' - B|^2 + const``."""
    omega = _term_weights(nb, state)
    sq = np.sqrt(alpha * omega)
    v = nb.term_vertex
    rhs_reg = np.einsum("tij,tj->ti", state.rotations[v], nb.rest) * state.scales[v, None]
    blocks = [sparse.diags(corr.confidence), sparse.diags(sq) @ nb.incidence]
    rhs = [corr.confidence[:, None] * corr.points, sq[:, None] * rhs_reg]
    L = len(landmarks.indices)
    if L and beta > 0:
        D = sparse.csr_matrix((np.full(L, np.sqrt(beta)), (np.arange(L), landmarks.indices)), shape=(L, nb.n))
        blocks.append(D)
        rhs.append(np.sqrt(beta) * landmarks.targets)
    return sparse.vstack(blocks).tocsr(), np.vstack(rhs)


def solve_points(nb: Neighborhoods, state: RegistrationState, corr: CorrespondenceSet,
                 landmarks: LandmarkTerm, alpha: float, beta: float) -> np.ndarray:
    """Global minimiser over ``P'`` via the normal equations of :func:`stacked_system`."""
    if not np.any(corr.confidence > 0) and not (beta > 0 and len(landmarks.indices)):
        raise NumericalError("point system is singular: every correspondence has zero confidence and "
                             "there is no landmark term; add landmarks or use nonzero data weights")
    A, B = stacked_system(nb, state, corr, landmarks, alpha, beta)
    N = (A.T @ A).tocsc()
    rhs = np.asarray(A.T @ B)
    try:
        lu = splu(N, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise NumericalError(f"point system is singular ({exc}); add landmarks or use nonzero data weights") from None
    P = lu.solve(rhs)
    if not np.all(np.isfinite(P)):
        raise NumericalError("point solve produced non-finite coordinates")
    return P


# ---------------------------------------------------------------------------
# driver


@dataclass
class RegistrationResult:
    mesh: TriangleMesh
    state: RegistrationState
    trace: list  # rows keyed by DIAGNOSTIC_COLUMNS

    @property
    def final_energy(self) -> float:
        return self.trace[-1]["F"] if self.trace else 0.0


def guidance_landmarks(template: TriangleMesh, target: TriangleMesh, names=GUIDANCE_LANDMARKS) -> LandmarkTerm:
    for mesh, role in ((template, "template"), (target, "target")):
        missing = [n for n in names if n not in mesh.landmarks]
        if missing:
            raise ConfigError(f"{role} mesh lacks guidance landmark(s): {', '.join(missing)}")
    return LandmarkTerm(np.array([template.landmarks[n] for n in names], dtype=np.int64),
                        target.landmark_points(names))


def _check_step(before: float, after: float, step: str, stage: str, alpha: float, it: int, tol: float,
                floor: float = 0.0):
    if after > before + max(tol * abs(before), floor):
        raise NumericalError(
            f"stage {stage!r}, alpha={alpha:g}, iteration {it}: energy rose in the {step} step "
            f"({before:.17g} -> {after:.17g})"
        )


def register(template: TriangleMesh, target: TriangleMesh, masks=None, landmarks: LandmarkTerm | None = None,
             cfg: CasapConfig | None = None, stage: str = "casap", locator: SurfaceLocator | None = None,
             neighborhoods: Neighborhoods | None = None, initial=None) -> RegistrationResult:
    """Deform ``template`` towards ``target``.

    ``masks`` is ``(mask_template, mask_target)`` or ``None`` for unit
    confidence everywhere. ``landmarks`` defaults to the guidance landmarks
    of both meshes. Confidences and stiffness weights are refreshed at the
    start of each alpha level and held fixed within it, so every step of
    the inner loop (including the closest-point update) lowers ``F``.
    ``initial`` optionally gives starting points; the regulariser always
    measures deformation relative to ``template``.
    """
    cfg = cfg or CasapConfig()
    if landmarks is None:
        landmarks = guidance_landmarks(template, target)
    if masks is None:
        mask_s, mask_t = np.ones(template.n_vertices), np.ones(target.n_vertices)
    else:
        mask_s, mask_t = masks
    nb = neighborhoods or Neighborhoods(template)
    locator = locator or SurfaceLocator(target)
    lam = cfg.lambda_factor * nb.area
    start = template.vertices if initial is None else np.asarray(initial, dtype=np.float64)
    if start.shape != template.vertices.shape:
        raise ValidationError("initial points must match the template vertex array")
    state = RegistrationState.initial(start, lam=lam)
    trace = []
    tol = cfg.descent_tol
    # round-off allowance for energies near zero
    floor = np.finfo(np.float64).eps * template.n_vertices * template.mean_edge_length**2

    def correspond(points, conf=None):
        cs = find_correspondences(template.with_vertices(points), target, mask_s, mask_t, locator,
                                  cfg.prune_factor, cfg.prune_floor, cfg.prune_normals)
        if conf is not None:
            cs.confidence = conf
        return cs

    for alpha_rel in cfg.alpha_schedule:
        alpha = alpha_rel * nb.alpha_unit
        corr = correspond(state.points)
        state.weights = stiffness_weights(corr.confidence, cfg.h)
        conf = corr.confidence
        prev = None
        for it in range(1, cfg.am_iterations_per_alpha + 1):
            if it > 1:
                corr = correspond(state.points, conf)
            f0 = energy(nb, state, corr, landmarks, alpha, cfg.beta)["F"]
            if cfg.check_descent and prev is not None:
                _check_step(prev, f0, "correspondence", stage, alpha_rel, it, tol, floor)
            state.scales = optimal_scales(nb, state.points)
            if cfg.check_descent:
                f1 = energy(nb, state, corr, landmarks, alpha, cfg.beta)["F"]
                _check_step(f0, f1, "scale", stage, alpha_rel, it, tol, floor)
            state.rotations = update_rotations(nb, state)
            if cfg.check_descent:
                f2 = energy(nb, state, corr, landmarks, alpha, cfg.beta)["F"]
                _check_step(f1, f2, "rotation", stage, alpha_rel, it, tol, floor)
            state.points = solve_points(nb, state, corr, landmarks, alpha, cfg.beta)
            terms = energy(nb, state, corr, landmarks, alpha, cfg.beta)
            if cfg.check_descent:
                _check_step(f2, terms["F"], "point", stage, alpha_rel, it, tol, floor)
            dist = float(np.mean(np.linalg.norm(state.points - corr.points, axis=1)))
            trace.append({"stage": stage, "alpha": alpha_rel, "iteration": it, **terms, "mean_corr_dist": dist})
            f = terms["F"]
            if prev is not None and abs(prev - f) <= max(cfg.convergence_tol * abs(prev), floor):
                break
            prev = f
    return RegistrationResult(template.with_vertices(state.points), state, trace)


def write_diagnostics(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=DIAGNOSTIC_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
