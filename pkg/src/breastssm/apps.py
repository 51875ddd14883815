"""Model applications: linear feature editing and completion of a missing region."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError, ValidationError
from .model import ShapeModel, as_points, procrustes

logger = logging.getLogger(__name__)


@dataclass
class FeatureMatrix:
    """Features as columns, one per subject, with a trailing row of ones: shape ``(l + 1, k)``."""

    values: np.ndarray
    names: list

    @classmethod
    def from_table(cls, features, names=None) -> "FeatureMatrix":
        """``features`` is ``(k, l)``: one row per subject."""
        f = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if f.size == 0:
            f = f.reshape(f.shape[0], 0)
        names = list(names) if names is not None else [f"f{i + 1}" for i in range(f.shape[1])]
        if len(names) != f.shape[1]:
            raise ValidationError("one name per feature column is required")
        return cls(np.vstack([f.T, np.ones(f.shape[0])]), names)

    @property
    def n_features(self) -> int:
        return self.values.shape[0] - 1

    @property
    def n_subjects(self) -> int:
        return self.values.shape[1]


def read_feature_csv(path) -> tuple[list, FeatureMatrix]:
    """CSV with a subject id column followed by numeric feature columns."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ConfigError(f"{path}: feature table needs a header and at least one row")
    header, body = rows[0], rows[1:]
    try:
        values = [[float(x) for x in r[1:]] for r in body]
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric feature value ({exc})") from None
    return [r[0] for r in body], FeatureMatrix.from_table(values, header[1:])


@dataclass
class EditMap:
    matrix: np.ndarray  # M, (q, l + 1)
    rank: int
    names: list


def fit_edit_map(coefficients, features: FeatureMatrix) -> EditMap:
    """Least-squares ``M`` with ``M F ~ A``: ``M = A F^+``.

    ``coefficients`` is ``A`` with one column per training subject.
    """
    A = np.asarray(coefficients, dtype=np.float64)
    F = features.values
    if A.ndim != 2 or A.shape[1] != F.shape[1]:
        raise ValidationError(f"coefficient matrix {A.shape} does not match {F.shape[1]} subjects")
    rank = int(np.linalg.matrix_rank(F))
    if rank < F.shape[0]:
        logger.warning("feature matrix is rank deficient (rank %d < %d); using the minimum-norm map", rank, F.shape[0])
    return EditMap(A @ np.linalg.pinv(F), rank, list(features.names))


def edit(model: ShapeModel, emap: EditMap, alpha, delta_f) -> np.ndarray:
    """``alpha + M [delta_f; 0]``."""
    a = np.asarray(alpha, dtype=np.float64).reshape(-1)
    d = np.asarray(delta_f, dtype=np.float64).reshape(-1)
    q, cols = emap.matrix.shape
    if len(a) != q or q != model.q:
        raise ValidationError(f"coefficient vector has length {len(a)}, edit map expects {q}, model has {model.q}")
    if len(d) != cols - 1:
        raise ValidationError(f"feature delta has length {len(d)}, expected {cols - 1}")
    return a + emap.matrix[:, :-1] @ d


def posterior_predict(model: ShapeModel, observed, missing, sigma2: float = 1.0, align: bool = False) -> np.ndarray:
    """Most likely full shape given the vertices outside ``missing``.

    ``mean + U^T (U* U*^T + sigma2 I)^-1 U* (x* - mean*)`` where starred
    quantities keep only the observed coordinates. ``observed`` is a full
    ``(n, 3)`` array whose rows at ``missing`` are ignored. With ``align``
    the observed vertices are first similarity-fitted to the mean and the
    prediction is mapped back to the input frame.
    """
    if sigma2 < 0:
        raise ConfigError("sigma2 must be non-negative")
    x = as_points(observed)
    n = model.n_vertices
    if x.shape[0] != n:
        raise ValidationError(f"observed shape has {x.shape[0]} vertices, model has {n}")
    miss = np.zeros(n, dtype=bool)
    idx = np.asarray(missing, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValidationError("missing vertex index out of range")
    miss[idx] = True
    mean = model.mean.reshape(-1, 3)
    if miss.all():
        logger.warning("every vertex is missing; returning the model mean")
        return model.mean.copy()
    obs = ~miss
    tf = None
    if align:
        tf = procrustes(x[obs], mean[obs])
        x = tf.apply(x)
    cols = np.repeat(obs, 3)
    Us = model.components[:, cols]
    r = x[obs].reshape(-1) - model.mean[cols]
    G = Us @ Us.T + sigma2 * np.eye(model.q)
    rhs = Us @ r
    if sigma2 > 0:
        coef = cho_solve(cho_factor(G), rhs)
    else:
        coef = np.linalg.pinv(G) @ rhs
    pred = model.mean + coef @ model.components
    if tf is not None:
        pred = tf.inverse().apply(pred).reshape(-1)
    return pred
