import json

import numpy as np
import pytest

from breastssm.errors import ConfigError
from breastssm.model import build
from breastssm.synth import (BREAST_MODES, SubjectParams, Variation, generate_dataset, generate_subject,
                             landmark_params, mirror_index, write_dataset)

SMALL = dict(n_theta=25, n_height=25)


def test_same_seed_bit_identical():
    var = Variation(modes=BREAST_MODES, pose={"scale": 0.05, "angle_x": 0.1, "translation": 5})
    a = generate_dataset(3, var, seed=11, base=SubjectParams(**SMALL))
    b = generate_dataset(3, var, seed=11, base=SubjectParams(**SMALL))
    for x, y in zip(a, b):
        assert np.array_equal(x.mesh.vertices, y.mesh.vertices)
        assert x.landmarks == y.landmarks


def test_identical_params_give_identical_meshes():
    a, b = generate_dataset(2, Variation(), seed=0, base=SubjectParams(**SMALL))
    assert np.array_equal(a.mesh.vertices, b.mesh.vertices)


def test_flat_torso_landmarks_at_bump_centres():
    p = SubjectParams(amp_L=0.0, amp_R=0.0, **SMALL)
    sub = generate_subject(p)
    r = 0.5 * (p.width + p.depth)
    for side, sign in (("L", 1), ("R", -1)):
        v = sub.mesh.vertices[sub.landmarks[f"N{side}"]]
        theta = np.arctan2(v[0] / p.width, v[2] / p.depth)
        # snapped to the nearest grid node of the analytic position
        spacing = p.theta_max * r / ((p.n_theta - 1) // 2)
        assert abs(theta * r - sign * p.center_s) <= spacing / 2 + 1e-9
        assert abs(v[1] - p.center_y) <= p.height / (p.n_height - 1) / 2 + 1e-9
        # on the bare ellipse
        assert (v[0] / p.width) ** 2 + (v[2] / p.depth) ** 2 == pytest.approx(1.0)


def test_mirrored_params_give_mirrored_mesh():
    p = SubjectParams(amp_L=20.0, amp_R=40.0, sigma_up_R=30.0, **SMALL)
    a, b = generate_subject(p).mesh, generate_subject(p.mirrored()).mesh
    perm = mirror_index(p.n_theta, p.n_height)
    assert np.abs(b.vertices - a.vertices[perm] * [-1, 1, 1]).max() < 1e-12
    assert b.landmarks["NL"] == perm[a.landmarks["NR"]]


def test_nipple_is_local_maximum_of_bump():
    p = SubjectParams(n_theta=81, n_height=81, center_s=96.25)
    sub = generate_subject(p)
    base = generate_subject(SubjectParams(amp_L=0, amp_R=0, n_theta=81, n_height=81, center_s=96.25))
    h = np.linalg.norm(sub.mesh.vertices - base.mesh.vertices, axis=1)
    for side in "LR":
        i = sub.landmarks[f"N{side}"]
        assert h[i] >= h[sub.mesh.neighbors(i)].max()
        lbp = sub.landmarks[f"LBP_{side}"]
        assert sub.mesh.vertices[lbp, 1] < sub.mesh.vertices[i, 1]


def test_landmark_definitions():
    lp = landmark_params(SubjectParams())
    assert lp["SN"][0] == 0 and lp["XI"][0] == 0
    assert lp["NL"][0] == -lp["NR"][0] > 0
    assert lp["LaBP_L"][0] > lp["NL"][0]


@pytest.mark.parametrize("bad", [dict(amp_L=500.0), dict(sigma_s_R=2.0), dict(n_theta=20), dict(center_y=320.0),
                                 dict(scale=3.0), dict(center_s=250.0)])
def test_rejects_out_of_range(bad):
    with pytest.raises(ConfigError):
        generate_subject(SubjectParams(**bad))


def test_planted_two_mode_pca():
    # bump amplitudes enter the surface linearly, so two amplitude modes span a 2D space
    subs = generate_dataset(8, Variation(modes=[{"amp_L": 5.0}, {"amp_R": 3.0}]), seed=2,
                            base=SubjectParams(**SMALL))
    X = np.stack([s.mesh.vertices.reshape(-1) for s in subs])
    ev = np.linalg.svd(X - X.mean(0), compute_uv=False) ** 2
    assert ev[1] > 1e-3 * ev[0]
    assert np.all(ev[2:] < 1e-10 * ev[0])
    assert build(X, subs[0].mesh.faces).q == 2


def test_displacement_is_relative_to_canonical():
    sub = generate_subject(SubjectParams(amp_L=30.0, **SMALL))
    base = generate_subject(SubjectParams(**SMALL))
    assert np.allclose(sub.displacement, sub.mesh.vertices - base.mesh.vertices)


def test_write_dataset(tmp_path):
    subs = generate_dataset(2, Variation(modes=BREAST_MODES), seed=1, base=SubjectParams(**SMALL))
    manifest = json.loads(write_dataset(subs, tmp_path, seed=1).read_text())
    assert len(manifest["subjects"]) == 2
    assert (tmp_path / "subject_000.ply").exists() and (tmp_path / "subject_001.landmarks.json").exists()
