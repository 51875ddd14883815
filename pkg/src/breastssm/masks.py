"""Breast probability masks built from elliptical basis functions.

A mask assigns every vertex a value in (0, 1]: the mean of four Gaussian-type
elliptical basis functions, one centred at each nipple and one at each nipple
shifted upwards along the vertical axis.

Frame convention: x is transversal (left-right), y vertical (cranial
positive), z anterior. The covariance slots below carry anatomical meaning in
that frame, so meshes must be pre-aligned accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ValidationError
from .mesh import TriangleMesh, geodesic_distances

MASK_LANDMARKS = ("NL", "NR", "LBP_L", "LBP_R", "LaBP_L", "LaBP_R", "SN", "XI")


@dataclass(frozen=True)
class EllipsoidParams:
    center: np.ndarray
    covariance: np.ndarray
    label: str

    def __post_init__(self):
        c = np.asarray(self.covariance, dtype=np.float64)
        if c.shape != (3, 3) or not np.allclose(c, c.T) or np.any(np.diag(c) <= 0):
            raise ValidationError(f"ellipsoid {self.label}: covariance must be 3x3 SPD with positive diagonal")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        object.__setattr__(self, "covariance", c)


def mahalanobis(x, c, S) -> np.ndarray | float:
    """Mahalanobis distance ``sqrt((x-c)^T S^-1 (x-c))`` for one or many points."""
    S = np.asarray(S, dtype=np.float64)
    if S.shape != (3, 3) or np.any(np.diag(S) <= 0) or not np.allclose(S, S.T):
        raise ValidationError("covariance must be a symmetric 3x3 matrix with positive diagonal")
    try:
        chol = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise ValidationError("covariance is not positive definite") from None
    diff = np.asarray(x, dtype=np.float64) - np.asarray(c, dtype=np.float64)
    flat = diff.reshape(-1, 3)
    z = np.linalg.solve(chol, flat.T)
    d = np.sqrt(np.sum(z * z, axis=0))
    return float(d[0]) if diff.ndim == 1 else d


def ebf(d):
    """Elliptical basis profile ``exp(-d^2)``."""
    return np.exp(-np.square(d))


def derive_params(mesh: TriangleMesh, squared_axes: bool = False) -> tuple[EllipsoidParams, ...]:
    """Mask parameters for both breasts from the eight anatomical landmarks.

    Diagonal covariances are half-sums of landmark geodesics:

    - x: (lateral pole -> nipple + nipple -> xiphoid) / 2
    - y: nipple -> lower pole / 2 (main), nipple -> sternal notch / 2 (shifted)
    - z: lateral pole -> nipple / 2

    The shifted centre is the nipple moved up by a fifth of the nipple to
    sternal-notch geodesic. With ``squared_axes`` the half-sums are treated as
    standard deviations (variances are their squares), which makes the mask
    independent of the length unit.

    Returns ``(S_L, S_R, S_L_shifted, S_R_shifted)``.
    """
    missing = [n for n in MASK_LANDMARKS if n not in mesh.landmarks]
    if missing:
        raise ConfigError(f"mask parameters need landmark(s): {', '.join(missing)}")
    lm = mesh.landmarks
    names = list(MASK_LANDMARKS)
    d = geodesic_distances(mesh, [lm[n] for n in names])

    def dg(a, b):
        val = d[names.index(a), lm[b]]
        if not np.isfinite(val):
            raise ValidationError(f"landmarks {a} and {b} are not connected on the surface")
        return float(val)

    main, shifted = [], []
    for side in ("L", "R"):
        n, lat, low = f"N{side}", f"LaBP_{side}", f"LBP_{side}"
        sx = 0.5 * (dg(lat, n) + dg(n, "XI"))
        sy = 0.5 * dg(n, low)
        sy_hat = 0.5 * dg(n, "SN")
        sz = 0.5 * dg(lat, n)
        diag = np.array([sx, sy, sz])
        diag_hat = np.array([sx, sy_hat, sz])
        if squared_axes:
            diag, diag_hat = diag**2, diag_hat**2
        centre = mesh.vertices[lm[n]]
        offset = np.array([0.0, dg(n, "SN") / 5.0, 0.0])
        main.append(EllipsoidParams(centre, np.diag(diag), side))
        shifted.append(EllipsoidParams(centre + offset, np.diag(diag_hat), f"{side}-shifted"))
    return main[0], main[1], shifted[0], shifted[1]


def component_masks(points: np.ndarray, params) -> np.ndarray:
    """Each ellipsoid's basis value at ``points``, shape (len(params), n)."""
    return np.stack([ebf(mahalanobis(points, p.center, p.covariance)) for p in params])


def compute_mask(mesh: TriangleMesh, params) -> np.ndarray:
    """Per-vertex probability: mean of the four elliptical basis functions."""
    if len(params) != 4:
        raise ValidationError("a breast probability mask needs exactly four ellipsoids")
    values = component_masks(mesh.vertices, params).mean(axis=0)
    # exp underflows to 0 beyond ~27 Mahalanobis units; the mask is defined on (0, 1]
    return np.maximum(values, np.finfo(np.float64).tiny)


def mask_for(mesh: TriangleMesh, squared_axes: bool = False) -> np.ndarray:
    """Convenience: derive parameters from the landmarks and evaluate the mask."""
    return compute_mask(mesh, derive_params(mesh, squared_axes=squared_axes))
