"""Deterministic synthetic torsos with two breast-like bumps.

Each subject is an open, front-facing elliptic half-cylinder sampled on a
fixed (angle, height) grid, so all subjects are in exact dense
correspondence. Bumps are elliptical basis functions applied along the
surface normal; the eight anatomical landmarks sit at analytically defined
grid nodes.

Frame: x transversal (subject's left is +x), y vertical, z anterior.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .io import save_mesh
from .mesh import TriangleMesh
from .rigid import SimilarityTransform


@dataclass(frozen=True)
class SubjectParams:
    """Shape and pose parameters of one synthetic subject (lengths in mm)."""

    width: float = 150.0  # half-axis of the torso cross-section along x
    depth: float = 110.0  # half-axis along z
    height: float = 340.0
    theta_max: float = 1.75  # angular extent either side of the midline (rad)
    n_theta: int = 41  # grid columns (odd, so the midline is a grid column)
    n_height: int = 41

    # breast bumps, left (+x) and right (-x)
    center_s: float = 95.0  # arc-length-like distance of the nipple from the midline
    center_y: float = 210.0
    amp_L: float = 35.0
    amp_R: float = 35.0
    sigma_s_L: float = 45.0
    sigma_s_R: float = 45.0
    sigma_up_L: float = 38.0  # vertical extent above the nipple
    sigma_up_R: float = 38.0
    sigma_low_L: float = 45.0  # vertical extent below the nipple (teardrop)
    sigma_low_R: float = 45.0

    # thorax variation outside the breasts
    shoulder_amp: float = 0.0  # bulges at the two upper lateral corners
    abdomen_amp: float = 0.0  # bulge at the lower midline
    chest_wave: float = 0.0  # broad low-frequency undulation of the thorax

    # pose jitter applied after construction
    scale: float = 1.0
    angle_x: float = 0.0  # radians
    translation: tuple = (0.0, 0.0, 0.0)

    def mirrored(self) -> "SubjectParams":
        """Parameters of the sagittal mirror image (left and right swapped)."""
        swap = {}
        for stem in ("amp", "sigma_s", "sigma_up", "sigma_low"):
            swap[f"{stem}_L"] = getattr(self, f"{stem}_R")
            swap[f"{stem}_R"] = getattr(self, f"{stem}_L")
        return replace(self, **swap)

    def validate(self):
        if self.n_theta < 5 or self.n_theta % 2 == 0 or self.n_height < 5:
            raise ConfigError("n_theta must be odd and >= 5, n_height >= 5")
        if min(self.width, self.depth, self.height) <= 0 or not 0.2 < self.theta_max < np.pi:
            raise ConfigError("torso dimensions must be positive and theta_max within (0.2, pi)")
        r = 0.5 * (self.width + self.depth)
        for side in "LR":
            amp = getattr(self, f"amp_{side}")
            sig = [getattr(self, f"{s}_{side}") for s in ("sigma_s", "sigma_up", "sigma_low")]
            if not 0.0 <= amp <= min(2.0 * min(sig), self.depth):
                raise ConfigError(f"bump amplitude {amp} out of range for side {side} (self-intersection risk)")
            if min(sig) <= 5.0:
                raise ConfigError(f"bump extents for side {side} must exceed 5 mm")
            if self.center_s + 2 * sig[0] >= self.theta_max * r or self.center_s <= 0:
                raise ConfigError(f"bump {side} too wide for the torso")
            if self.center_y + 2 * sig[1] >= self.height or self.center_y - 2 * sig[2] <= 0:
                raise ConfigError(f"bump {side} extends past the torso height")
        if not 0.5 <= self.scale <= 2.0:
            raise ConfigError("pose scale must lie in [0.5, 2]")


@dataclass
class Subject:
    mesh: TriangleMesh
    params: SubjectParams
    transform: SimilarityTransform
    displacement: np.ndarray  # vertex offsets from the canonical subject

    @property
    def landmarks(self) -> dict[str, int]:
        return self.mesh.landmarks


def grid_faces(n_theta: int, n_height: int) -> np.ndarray:
    """Mirror-symmetric triangulation of the (angle, height) grid."""
    half = (n_theta - 1) // 2
    faces = []
    for j in range(n_height - 1):
        for i in range(n_theta - 1):
            a = j * n_theta + i
            b, c, d = a + 1, a + n_theta + 1, a + n_theta
            if i < half:
                faces += [(a, b, c), (a, c, d)]
            else:
                faces += [(a, b, d), (b, c, d)]
    return np.array(faces, dtype=np.int64)


def mirror_index(n_theta: int, n_height: int) -> np.ndarray:
    """Vertex permutation realising the sagittal mirror on the grid."""
    j, i = np.divmod(np.arange(n_theta * n_height), n_theta)
    return j * n_theta + (n_theta - 1 - i)


def _grid(p: SubjectParams):
    half = np.linspace(0.0, p.theta_max, (p.n_theta - 1) // 2 + 1)
    theta = np.concatenate([-half[::-1], half[1:]])
    y = np.linspace(0.0, p.height, p.n_height)
    tt, yy = np.meshgrid(theta, y)
    return tt.ravel(), yy.ravel()


def _bump(s, y, cs, cy, amp, sig_s, sig_up, sig_low):
    sig_y = np.where(y >= cy, sig_up, sig_low)
    return amp * np.exp(-(((s - cs) / sig_s) ** 2 + ((y - cy) / sig_y) ** 2))


def _surface(p: SubjectParams, theta, y):
    r = 0.5 * (p.width + p.depth)
    s = theta * r
    base = np.c_[p.width * np.sin(theta), y, p.depth * np.cos(theta)]
    normal = np.c_[p.depth * np.sin(theta), np.zeros_like(theta), p.width * np.cos(theta)]
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    h = _bump(s, y, p.center_s, p.center_y, p.amp_L, p.sigma_s_L, p.sigma_up_L, p.sigma_low_L)
    h = h + _bump(s, y, -p.center_s, p.center_y, p.amp_R, p.sigma_s_R, p.sigma_up_R, p.sigma_low_R)
    smax = p.theta_max * r
    if p.shoulder_amp:
        for sign in (1, -1):
            h = h + p.shoulder_amp * np.exp(-(((s - sign * 0.85 * smax) / 45.0) ** 2 + ((y - 0.9 * p.height) / 50.0) ** 2))
    if p.abdomen_amp:
        h = h + p.abdomen_amp * np.exp(-((s / 70.0) ** 2 + ((y - 0.12 * p.height) / 50.0) ** 2))
    if p.chest_wave:
        h = h + p.chest_wave * np.cos(np.pi * s / smax) * np.sin(np.pi * y / p.height)
    return base + h[:, None] * normal


def landmark_params(p: SubjectParams) -> dict[str, tuple[float, float]]:
    """Analytic (arc length, height) location of every landmark."""
    out = {"SN": (0.0, p.height - 15.0), "XI": (0.0, p.center_y - 55.0)}
    for side, sign in (("L", 1.0), ("R", -1.0)):
        cs = sign * p.center_s
        out[f"N{side}"] = (cs, p.center_y)
        out[f"LBP_{side}"] = (cs, p.center_y - 2.0 * getattr(p, f"sigma_low_{side}"))
        out[f"LaBP_{side}"] = (cs + sign * 2.0 * getattr(p, f"sigma_s_{side}"), p.center_y)
    return out


def _snap_landmarks(p: SubjectParams, theta, y) -> dict[str, int]:
    r = 0.5 * (p.width + p.depth)
    s = theta * r
    out = {}
    for name, (ls, ly) in landmark_params(p).items():
        out[name] = int(np.argmin((s - ls) ** 2 + (y - ly) ** 2))
    return out


def generate_subject(params: SubjectParams | None = None, seed: int | None = None,
                     canonical: SubjectParams | None = None) -> Subject:
    """Build one subject.

    ``seed`` is accepted for interface symmetry; construction itself is
    deterministic in ``params``. ``canonical`` sets the reference for the
    returned ground-truth displacement (defaults to ``SubjectParams()`` at the
    same resolution).
    """
    p = params or SubjectParams()
    p.validate()
    theta, y = _grid(p)
    pts = _surface(p, theta, y)
    tf = SimilarityTransform(p.scale, p.angle_x, np.asarray(p.translation, dtype=np.float64))
    pts = tf.apply(pts)
    mesh = TriangleMesh(pts, grid_faces(p.n_theta, p.n_height), _snap_landmarks(p, theta, y))
    ref = canonical or SubjectParams(n_theta=p.n_theta, n_height=p.n_height, width=p.width,
                                     depth=p.depth, height=p.height, theta_max=p.theta_max)
    ref_pts = _surface(ref, *_grid(ref))
    return Subject(mesh, p, tf, pts - ref_pts)


@dataclass
class Variation:
    """Random variation around a base subject.

    ``modes`` are linear parameter directions; subject ``i`` gets
    ``base + sum_j z_ij * modes[j]`` with ``z_ij ~ N(0, 1)``. ``pose`` maps
    ``scale``/``angle_x``/``translation`` to the half-width of a uniform
    jitter.
    """

    modes: list = field(default_factory=list)
    pose: dict = field(default_factory=dict)
    truncate: float = 2.0  # clip mode scores to +-truncate


BREAST_MODES = [
    {"amp_L": 6.0, "amp_R": 6.0, "sigma_low_L": 4.0, "sigma_low_R": 4.0},
    {"amp_L": 4.0, "amp_R": -4.0},
    {"sigma_s_L": 5.0, "sigma_s_R": 5.0, "sigma_up_L": 3.0, "sigma_up_R": 3.0},
]
THORAX_MODES = [
    {"shoulder_amp": 8.0},
    {"abdomen_amp": 7.0},
    {"chest_wave": 5.0},
]


def generate_dataset(k: int, variation: Variation | None = None, seed: int = 0,
                     base: SubjectParams | None = None) -> list[Subject]:
    """``k`` subjects sharing the grid parameterisation of ``base``."""
    if k < 1:
        raise ConfigError("dataset size must be at least 1")
    base = base or SubjectParams()
    variation = variation or Variation(modes=BREAST_MODES)
    rng = np.random.default_rng(seed)
    subjects = []
    for _ in range(k):
        values = asdict(base)
        for mode in variation.modes:
            z = float(np.clip(rng.standard_normal(), -variation.truncate, variation.truncate))
            for name, coef in mode.items():
                values[name] = values[name] + z * coef
        pose = variation.pose
        if pose:
            values["scale"] = base.scale + rng.uniform(-1, 1) * pose.get("scale", 0.0)
            values["angle_x"] = base.angle_x + rng.uniform(-1, 1) * pose.get("angle_x", 0.0)
            t = np.asarray(base.translation) + rng.uniform(-1, 1, 3) * pose.get("translation", 0.0)
            values["translation"] = tuple(float(v) for v in t)
        values["translation"] = tuple(values["translation"])
        p = SubjectParams(**values)
        subjects.append(generate_subject(p, canonical=base))
    return subjects


def write_dataset(subjects: list[Subject], out_dir, seed: int | None = None, binary: bool = False) -> Path:
    """Write ``subject_XXX.ply`` + landmark sidecars and ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, sub in enumerate(subjects):
        name = f"subject_{i:03d}.ply"
        save_mesh(sub.mesh, out / name, binary=binary)
        params = asdict(sub.params)
        params["translation"] = list(params["translation"])
        entries.append({"mesh": name, "landmarks": f"subject_{i:03d}.landmarks.json",
                        "params": params, "transform": sub.transform.to_dict()})
    manifest = {"format_version": 1, "seed": seed, "count": len(subjects), "subjects": entries}
    path = out / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path
