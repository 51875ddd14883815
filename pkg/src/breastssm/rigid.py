"""Scaled ICP with mask-based rejection and rotation about the x-axis only."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError, ValidationError
from .mesh import TriangleMesh
from .query import SurfaceLocator

logger = logging.getLogger(__name__)


def rotation_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


@dataclass
class SimilarityTransform:
    """``x -> scale * R_x(angle_x) @ x + translation``."""

    scale: float = 1.0
    angle_x: float = 0.0
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not self.scale > 0:
            raise ValidationError(f"similarity scale must be positive, got {self.scale}")

    @property
    def rotation(self) -> np.ndarray:
        return rotation_x(self.angle_x)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.scale * self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return self.scale * points @ self.rotation.T + self.translation

    def inverse(self) -> "SimilarityTransform":
        s = 1.0 / self.scale
        t = -s * self.rotation.T @ self.translation
        return SimilarityTransform(s, -self.angle_x, t)

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """``self ∘ other`` (apply ``other`` first)."""
        return SimilarityTransform(
            self.scale * other.scale,
            self.angle_x + other.angle_x,
            self.scale * self.rotation @ other.translation + self.translation,
        )

    def to_dict(self) -> dict:
        return {"scale": float(self.scale), "angle_x_rad": float(self.angle_x),
                "translation": [float(v) for v in self.translation]}

    @classmethod
    def from_dict(cls, d: dict) -> "SimilarityTransform":
        try:
            return cls(float(d["scale"]), float(d["angle_x_rad"]), np.asarray(d["translation"], dtype=np.float64))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed transform record: {exc}") from None


@dataclass
class RigidConfig:
    mask_threshold: float = 0.3
    max_iterations: int = 200
    convergence_tol: float = 1e-7  # mean vertex motion (mm) between iterations
    trim_fraction: float | None = None  # keep only this fraction of the closest pairs
    center_init: bool = False  # translate template centroid onto target centroid first
    extrapolate: bool = True  # line search along consistent update directions

    def __post_init__(self):
        if not 0.0 < self.mask_threshold < 1.0:
            raise ConfigError("mask_threshold must lie in (0, 1)")
        if self.trim_fraction is not None and not 0.0 < self.trim_fraction <= 1.0:
            raise ConfigError("trim_fraction must lie in (0, 1]")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be at least 1")


def fit_similarity_x(src: np.ndarray, dst: np.ndarray, weights=None) -> SimilarityTransform:
    """Weighted least-squares similarity ``src -> dst`` with rotation about the x-axis.

    The angle solves a 2D Procrustes problem in the yz-plane (it does not
    depend on the scale); the scale is then the least-squares ratio
    ``sum w b.(R a) / sum w |a|^2`` of the centred point sets.
    """
    w = np.ones(len(src)) if weights is None else np.asarray(weights, dtype=np.float64)
    wsum = w.sum()
    if len(src) < 3 or wsum <= 0:
        raise ValidationError("similarity fit needs at least three weighted pairs")
    ca = (w[:, None] * src).sum(0) / wsum
    cb = (w[:, None] * dst).sum(0) / wsum
    a, b = src - ca, dst - cb
    num = np.sum(w * (a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1]))
    den = np.sum(w * (a[:, 1] * b[:, 1] + a[:, 2] * b[:, 2]))
    angle = float(np.arctan2(num, den))
    R = rotation_x(angle)
    spread = np.sum(w * np.sum(a * a, axis=1))
    if spread <= 0:
        raise ValidationError("source points are coincident")
    scale = float(np.sum(w * np.einsum("ij,ij->i", b, a @ R.T)) / spread)
    if not np.isfinite(scale) or scale <= 0:
        raise NumericalError(f"similarity fit produced scale {scale}")
    t = cb - scale * R @ ca
    if not np.all(np.isfinite(t)):
        raise NumericalError("similarity fit produced non-finite values")
    return SimilarityTransform(scale, angle, t)


@dataclass
class RigidResult:
    transform: SimilarityTransform
    iterations: int
    mse_trace: list  # filtered mean squared correspondence distance per iteration
    kept_fraction: float


def _params(tf: SimilarityTransform, radius: float) -> np.ndarray:
    return np.r_[tf.scale * radius, tf.angle_x * radius, tf.translation]


def _from_params(q: np.ndarray, radius: float) -> SimilarityTransform | None:
    if q[0] <= 0:
        return None
    return SimilarityTransform(q[0] / radius, q[1] / radius, q[2:])


def rigid_align(template: TriangleMesh, target: TriangleMesh, mask_s=None, mask_t=None,
                cfg: RigidConfig | None = None, init: SimilarityTransform | None = None) -> RigidResult:
    """Align ``template`` to ``target`` with mask-filtered scaled ICP.

    Pairs where both the template vertex and its closest target point have a
    mask value above ``cfg.mask_threshold`` are discarded (the breast region is
    not rigid). Masks default to all zeros, i.e. no rejection.

    Plain ICP crawls along near-symmetries of the surface (an open torso
    slides almost freely along its axis). When two successive updates point
    the same way, the step is extended by doubling as long as the filtered
    error keeps dropping, which keeps every accepted step a descent step.
    """
    cfg = cfg or RigidConfig()
    n = template.n_vertices
    mask_s = np.zeros(n) if mask_s is None else np.asarray(mask_s, dtype=np.float64)
    mask_t = np.zeros(target.n_vertices) if mask_t is None else np.asarray(mask_t, dtype=np.float64)
    if len(mask_s) != n or len(mask_t) != target.n_vertices:
        raise ValidationError("mask sizes must match their meshes")
    src = template.vertices
    radius = float(np.sqrt(np.mean(np.sum((src - src.mean(0)) ** 2, axis=1)))) or 1.0
    tf = init or SimilarityTransform()
    if init is None and cfg.center_init:
        tf = SimilarityTransform(1.0, 0.0, target.vertices.mean(0) - src.mean(0))
    locator = SurfaceLocator(target)

    def evaluate(t: SimilarityTransform):
        pts = t.apply(src)
        cp = locator.query(pts)
        mt = cp.interpolate(target, mask_t)
        keep = ~((mask_s > cfg.mask_threshold) & (mt > cfg.mask_threshold))
        if cfg.trim_fraction is not None and cfg.trim_fraction < 1.0:
            idx = np.nonzero(keep)[0]
            nkeep = max(3, int(np.ceil(cfg.trim_fraction * len(idx))))
            order = np.argsort(cp.distances[idx], kind="stable")
            keep = np.zeros(n, dtype=bool)
            keep[idx[order[:nkeep]]] = True
        if keep.sum() < 3:
            raise ValidationError("all correspondences were rejected; lower the mask threshold")
        return float(np.mean(cp.distances[keep] ** 2)), pts, cp, keep

    mse, current, cp, keep = evaluate(tf)
    trace = [mse]
    prev_step = None
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        new = fit_similarity_x(src[keep], cp.points[keep])
        state = evaluate(new)
        q0, q1 = _params(tf, radius), _params(new, radius)
        step = q1 - q0
        if cfg.extrapolate and prev_step is not None:
            cos = step @ prev_step / (np.linalg.norm(step) * np.linalg.norm(prev_step) + 1e-300)
            gamma = 2.0
            while cos > 0.99 and gamma <= 1024:
                cand = _from_params(q0 + gamma * step, radius)
                if cand is None:
                    break
                trial = evaluate(cand)
                if trial[0] >= state[0]:
                    break
                new, state = cand, trial
                gamma *= 2.0
        prev_step = _params(new, radius) - q0
        mse, moved, cp, keep = state
        motion = float(np.mean(np.linalg.norm(moved - current, axis=1)))
        tf, current = new, moved
        trace.append(mse)
        if motion < cfg.convergence_tol:
            break
    else:
        logger.info("rigid alignment stopped after %d iterations without converging", it)
    return RigidResult(tf, it, trace, float(keep.mean()))
