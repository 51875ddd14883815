"""Generalized Procrustes alignment and PCA shape models.

Shapes are handled either as ``(n, 3)`` vertex arrays or as flattened
``3n`` vectors ``(x1, y1, z1, x2, ...)``; :func:`as_vectors` and
:func:`as_points` convert between the two.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericalError, ValidationError
from .io import load_mesh, save_mesh
from .mesh import TriangleMesh

logger = logging.getLogger(__name__)

BUNDLE_VERSION = 1


def as_points(shape) -> np.ndarray:
    a = np.asarray(shape, dtype=np.float64)
    if a.ndim == 1:
        if a.size % 3:
            raise ValidationError(f"shape vector length {a.size} is not divisible by 3")
        a = a.reshape(-1, 3)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ValidationError(f"expected (n, 3) points or a 3n vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("shape contains non-finite coordinates")
    return a


def as_vectors(shapes) -> np.ndarray:
    """Stack shapes into a ``(k, 3n)`` matrix."""
    rows = [as_points(s).reshape(-1) for s in shapes]
    if len({len(r) for r in rows}) > 1:
        raise ValidationError("all shapes must have the same number of vertices")
    return np.stack(rows)


# ---------------------------------------------------------------------------
# Procrustes


@dataclass
class Similarity:
    """``x -> scale * x @ rotation + translation`` acting on point rows."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points) -> np.ndarray:
        return self.scale * as_points(points) @ self.rotation + self.translation

    def inverse(self) -> "Similarity":
        rt = self.rotation.T
        return Similarity(1.0 / self.scale, rt, -self.translation @ rt / self.scale)


def procrustes(source, reference) -> Similarity:
    """Least-squares similarity mapping ``source`` onto ``reference`` (proper rotation, uniform scale)."""
    X, Y = as_points(source), as_points(reference)
    if X.shape != Y.shape:
        raise ValidationError("Procrustes needs shapes with the same number of vertices")
    cx, cy = X.mean(0), Y.mean(0)
    A, B = X - cx, Y - cy
    norm = np.sum(A * A)
    if norm <= 0:
        raise ValidationError("degenerate shape: all vertices coincide")
    U, S, Vt = np.linalg.svd(A.T @ B)
    d = np.ones(3)
    d[2] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    R = (U * d) @ Vt
    s = float(np.sum(S * d) / norm)
    return Similarity(s, R, cy - s * cx @ R)


def centroid_size(points) -> float:
    p = as_points(points)
    return float(np.sqrt(np.sum((p - p.mean(0)) ** 2)))


@dataclass
class GPAResult:
    aligned: np.ndarray  # (k, n, 3), in mm
    mean: np.ndarray  # (n, 3)
    transforms: list  # Similarity per input shape
    iterations: int
    mean_changes: list  # relative mean movement per iteration


def gpa(shapes, tol: float = 1e-9, max_iterations: int = 100) -> GPAResult:
    """Align all shapes to their evolving mean by similarity transforms.

    The mean is kept centred with unit centroid size while iterating; the
    result is rescaled by the average input centroid size so distances
    stay in millimetres, and every shape is re-fitted to that final mean.
    """
    pts = [as_points(s) for s in shapes]
    if len(pts) < 2:
        raise ValidationError("GPA needs at least two shapes")
    if len({p.shape for p in pts}) > 1:
        raise ValidationError("all shapes must have the same number of vertices")
    sizes = np.array([centroid_size(p) for p in pts])
    if np.any(sizes <= 0):
        raise ValidationError(f"shape {int(np.argmin(sizes))} is degenerate (all vertices coincide)")

    def normalise(p):
        c = p - p.mean(0)
        return c / np.sqrt(np.sum(c * c))

    mean = normalise(pts[0])
    changes = []
    for it in range(1, max_iterations + 1):
        aligned = [procrustes(p, mean).apply(p) for p in pts]
        new = normalise(np.mean(aligned, axis=0))
        # keep the orientation of the running mean fixed
        new = procrustes(new, mean).apply(new)
        new = normalise(new)
        change = float(np.linalg.norm(new - mean) / np.linalg.norm(mean))
        changes.append(change)
        mean = new
        if change < tol:
            break
    else:
        raise NumericalError(f"GPA did not converge within {max_iterations} iterations "
                             f"(last relative mean change {changes[-1]:.3g})")
    mean = mean * sizes.mean()
    transforms = [procrustes(p, mean) for p in pts]
    aligned = np.stack([t.apply(p) for t, p in zip(transforms, pts)])
    return GPAResult(aligned, mean, transforms, it, changes)


# ---------------------------------------------------------------------------
# PCA model


@dataclass
class ShapeModel:
    mean: np.ndarray  # (3n,)
    eigenvalues: np.ndarray  # (q,), mm^2, descending
    components: np.ndarray  # (q, 3n), orthonormal rows
    faces: np.ndarray
    total_variance: float  # sum of the full nonzero spectrum
    n_train: int
    landmarks: dict | None = None

    @property
    def q(self) -> int:
        return len(self.eigenvalues)

    @property
    def n_vertices(self) -> int:
        return len(self.mean) // 3

    @property
    def retained_variance(self) -> float:
        return float(self.eigenvalues.sum() / self.total_variance)

    def mesh(self, shape=None) -> TriangleMesh:
        v = self.mean if shape is None else shape
        return TriangleMesh(as_points(v), self.faces, self.landmarks or {})

    def truncated(self, m: int) -> "ShapeModel":
        if not 0 <= m <= self.q:
            raise ConfigError(f"cannot keep {m} of {self.q} components")
        return ShapeModel(self.mean, self.eigenvalues[:m], self.components[:m], self.faces,
                          self.total_variance, self.n_train, self.landmarks)


def _fix_signs(components: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def build(shapes, faces, variance_target: float | None = None, landmarks=None) -> ShapeModel:
    """PCA of aligned shapes through the ``k x k`` Gram matrix.

    ``variance_target`` keeps the fewest components whose eigenvalues reach
    that fraction of the total; ``None`` keeps every nonzero component.
    """
    X = as_vectors(shapes)
    k = len(X)
    if k < 2:
        raise ValidationError("a shape model needs at least two training shapes")
    if variance_target is not None and not 0.0 < variance_target <= 1.0:
        raise ConfigError("variance_target must lie in (0, 1]")
    mean = X.mean(axis=0)
    D = X - mean
    gram = D @ D.T / (k - 1)
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    if evals[0] <= 0:
        raise NumericalError("training shapes have zero total variance")
    keep = evals > evals[0] * 1e-12 * k
    evals, evecs = evals[keep], evecs[:, keep]
    U = (D.T @ evecs).T
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    U = _fix_signs(U)
    total = float(evals.sum())
    q = len(evals)
    if variance_target is not None:
        frac = np.cumsum(evals) / total
        q = int(np.searchsorted(frac, variance_target * (1 - 1e-12)) + 1)
        q = min(q, len(evals))
    return ShapeModel(mean, evals[:q].copy(), U[:q].copy(), np.asarray(faces, dtype=np.int64), total, k,
                      dict(landmarks) if landmarks else None)


def _coefficients(model: ShapeModel, alpha) -> np.ndarray:
    a = np.asarray(alpha, dtype=np.float64).reshape(-1)
    if len(a) > model.q:
        raise ValidationError(f"got {len(a)} coefficients for a model with {model.q} components")
    return np.pad(a, (0, model.q - len(a)))


def sample(model: ShapeModel, alpha, clamp: bool = False) -> np.ndarray:
    """``mean + alpha @ U``; shorter ``alpha`` vectors are zero-padded."""
    a = _coefficients(model, alpha)
    if clamp:
        lim = 3.0 * np.sqrt(model.eigenvalues)
        a = np.clip(a, -lim, lim)
    return model.mean + a @ model.components


def reconstruct(model: ShapeModel, shape, align: bool = False) -> np.ndarray:
    """Projection coefficients of ``shape``; with ``align`` it is first similarity-fitted to the mean."""
    x = as_points(shape)
    if x.shape[0] != model.n_vertices:
        raise ValidationError(f"shape has {x.shape[0]} vertices, model has {model.n_vertices}")
    if align:
        x = procrustes(x, model.mean).apply(x)
    return model.components @ (x.reshape(-1) - model.mean)


# ---------------------------------------------------------------------------
# bundle


def save_model(model: ShapeModel, directory) -> Path:
    """Write ``meta.json``, ``mean.f64``, ``evals.f64``, ``components.f64`` and ``topology.ply``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"format_version": BUNDLE_VERSION, "n": model.n_vertices, "q": model.q, "k": model.n_train,
            "retained_variance": model.retained_variance, "total_variance": model.total_variance,
            "topology": "topology.ply", "dtype": "<f8"}
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    for name, arr in (("mean", model.mean), ("evals", model.eigenvalues), ("components", model.components)):
        (out / f"{name}.f64").write_bytes(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    save_mesh(model.mesh(), out / "topology.ply", binary=True)
    return out


def load_model(directory) -> ShapeModel:
    d = Path(directory)
    try:
        with open(d / "meta.json") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{d}: not a model bundle (meta.json missing)") from None
    if meta.get("format_version") != BUNDLE_VERSION:
        raise ConfigError(f"{d}: unsupported bundle version {meta.get('format_version')}")
    n, q = int(meta["n"]), int(meta["q"])

    def read(name, count):
        raw = (d / f"{name}.f64").read_bytes()
        if len(raw) != 8 * count:
            raise ValidationError(f"{d / (name + '.f64')}: expected {count} values, found {len(raw) // 8}")
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)

    mean = read("mean", 3 * n)
    evals = read("evals", q)
    comps = read("components", q * 3 * n).reshape(q, 3 * n)
    topo = load_mesh(d / meta["topology"])
    return ShapeModel(mean, evals, comps, np.array(topo.faces), float(meta["total_variance"]), int(meta["k"]),
                      dict(topo.landmarks) or None)
