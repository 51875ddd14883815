"""Shape-model quality curves and registration accuracy measures."""

from __future__ import annotations

import csv
import logging

import numpy as np

from .errors import ConfigError, ValidationError
from .mesh import TriangleMesh, face_angles
from .model import ShapeModel, as_vectors, build, procrustes, reconstruct, sample
from .query import point_to_surface_distance

logger = logging.getLogger(__name__)


def compactness(model: ShapeModel, m: int) -> float:
    """Fraction of the full spectrum's variance captured by the first ``m`` components."""
    if not 1 <= m <= model.q:
        raise ConfigError(f"m must lie in [1, {model.q}], got {m}")
    return float(model.eigenvalues[:m].sum() / model.total_variance)


def _mean_vertex_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.linalg.norm((a - b).reshape(-1, 3), axis=1)))


def _reconstruction_error(model: ShapeModel, x: np.ndarray, m: int, align: bool) -> float:
    if align:
        x = procrustes(x, model.mean).apply(x).reshape(-1)
    sub = model.truncated(m)
    return _mean_vertex_error(sample(sub, reconstruct(sub, x)), x)


def generalization(shapes, m: int, align: bool = False) -> float:
    """Leave-one-out mean per-vertex reconstruction error (mm) with ``m`` components.

    Folds whose model has fewer than ``m`` components use all they have
    (logged). ``align`` similarity-fits each left-out shape to the fold
    mean before projecting.
    """
    X = as_vectors(shapes)
    k = len(X)
    if k < 3:
        raise ValidationError("leave-one-out generalization needs at least three shapes")
    if m < 0:
        raise ConfigError("m must be non-negative")
    errors = []
    capped = []
    faces = np.zeros((0, 3), dtype=np.int64)
    for i in range(k):
        model = build(np.delete(X, i, axis=0), faces)
        if m > model.q:
            capped.append(model.q)
        errors.append(_reconstruction_error(model, X[i], min(m, model.q), align))
    if capped:
        logger.info("%d fold(s) have fewer than %d components and used all of theirs (at most %d)",
                    len(capped), m, max(capped))
    return float(np.mean(errors))


def generalization_split(train, test, m: int, align: bool = False) -> float:
    """Mean reconstruction error of ``test`` shapes under a model built from ``train``."""
    model = build(train, np.zeros((0, 3), dtype=np.int64))
    if m > model.q:
        logger.warning("model has %d components, using them instead of %d", model.q, m)
        m = model.q
    return float(np.mean([_reconstruction_error(model, x, m, align) for x in as_vectors(test)]))


def _truncated_normal(rng, sd: np.ndarray, limit: float = 3.0) -> np.ndarray:
    out = rng.standard_normal(len(sd))
    bad = np.abs(out) > limit
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > limit
    return out * sd


def specificity(model: ShapeModel, training, m: int, samples: int = 100, seed: int = 0) -> float:
    """Average distance (mm) from model samples to their nearest training shape.

    Coefficients ``alpha_i ~ N(0, lambda_i)`` truncated at three standard
    deviations for ``i <= m``, zero beyond.
    """
    if samples < 1:
        raise ConfigError("samples must be at least 1")
    if not 0 <= m <= model.q:
        raise ConfigError(f"m must lie in [0, {model.q}]")
    T = as_vectors(training)
    rng = np.random.default_rng(seed)
    sd = np.sqrt(model.eigenvalues[:m])
    dists = []
    for _ in range(samples):
        x = sample(model, _truncated_normal(rng, sd))
        d = np.linalg.norm((T - x).reshape(len(T), -1, 3), axis=2).mean(axis=1)
        dists.append(d.min())
    return float(np.mean(dists))


def registration_mse(deformed: TriangleMesh, target: TriangleMesh, restrict_mask=None,
                     threshold: float = 0.5) -> float:
    """Mean squared point-to-surface distance (mm^2) of deformed vertices to the target.

    With ``restrict_mask`` only vertices whose mask value exceeds
    ``threshold`` count.
    """
    pts = deformed.vertices
    if restrict_mask is not None:
        mask = np.asarray(restrict_mask, dtype=np.float64)
        if mask.shape != (deformed.n_vertices,):
            raise ValidationError("restrict_mask needs one value per deformed vertex")
        pts = pts[mask > threshold]
    if len(pts) == 0:
        raise ValidationError("no vertex passes the mask threshold")
    d = point_to_surface_distance(target, pts)
    return float(np.mean(d * d))


def angle_distortion(original: TriangleMesh, deformed: TriangleMesh) -> float:
    """Mean absolute inner-angle change per triangle, in degrees."""
    if not np.array_equal(original.faces, deformed.faces):
        raise ValidationError("angle distortion needs meshes with identical faces")
    a = face_angles(original.vertices, original.faces)
    b = face_angles(deformed.vertices, deformed.faces)
    return float(np.degrees(np.abs(a - b).mean()))


DEFAULT_DISTANCE_PAIRS = (("SN", "NL"), ("SN", "NR"), ("NL", "NR"))


def landmark_distances(mesh: TriangleMesh, pairs=DEFAULT_DISTANCE_PAIRS) -> dict[str, float]:
    out = {}
    for a, b in pairs:
        pa, pb = mesh.landmark_points((a, b))
        out[f"{a}-{b}"] = float(np.linalg.norm(pa - pb))
    return out


def model_curves(model: ShapeModel, shapes, samples: int = 100, seed: int = 0, align: bool = False) -> list[dict]:
    """Compactness, generalization and specificity for ``m = 1..q``."""
    rows = []
    for m in range(1, model.q + 1):
        rows.append({"m": m, "compactness": compactness(model, m),
                     "generalization": generalization(shapes, m, align=align),
                     "specificity": specificity(model, shapes, m, samples, seed)})
    return rows


def write_curves(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()) if rows else ["m"])
        writer.writeheader()
        writer.writerows(rows)
