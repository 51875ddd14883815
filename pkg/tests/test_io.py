import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from breastssm.errors import ConfigError, MeshFormatError
from breastssm.io import load_mesh, read_ply, save_mask_ply, save_mesh
from breastssm.mesh import TriangleMesh
from shapes import grid_patch, icosphere


@pytest.mark.parametrize("name,binary", [("m.obj", False), ("m.ply", False), ("m.ply", True)])
def test_roundtrip_is_bitwise(tmp_path, name, binary):
    m = grid_patch(5, 4, seed=7, jitter=0.3, bend=0.7).with_landmarks({"NL": 3, "SN": 11})
    save_mesh(m, tmp_path / name, binary=binary)
    back = load_mesh(tmp_path / name)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.faces, m.faces)
    assert back.landmarks == m.landmarks


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.booleans(), st.sampled_from(["obj", "ply"]))
def test_roundtrip_random_coordinates(tmp_path_factory, seed, binary, fmt):
    rng = np.random.default_rng(seed)
    base = icosphere(1)
    scale = 10.0 ** rng.uniform(-6, 6)
    m = base.with_vertices(base.vertices * scale + rng.normal(size=base.vertices.shape) * scale * 1e-3)
    path = tmp_path_factory.mktemp("rt") / f"x.{fmt}"
    save_mesh(m, path, binary=binary)
    back = load_mesh(path)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.faces, m.faces)


def test_obj_polygons_are_fanned_and_negative_indices(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\nf -4 -2 -1\n")
    v, f = __import__("breastssm.io", fromlist=["read_obj"]).read_obj(p)
    assert f.tolist() == [[0, 1, 2], [0, 2, 3], [0, 2, 3]]


def test_obj_zero_index_reports_line(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n")
    with pytest.raises(MeshFormatError, match=r"bad.obj:4"):
        load_mesh(p)


def test_truncated_binary_ply_reports_offset(tmp_path):
    m = icosphere(1)
    p = tmp_path / "t.ply"
    save_mesh(m, p, binary=True)
    raw = p.read_bytes()
    p.write_bytes(raw[:-40])
    with pytest.raises(MeshFormatError, match="byte offset"):
        load_mesh(p)


def test_unknown_extension(tmp_path):
    p = tmp_path / "mesh.stl"
    p.write_text("solid")
    with pytest.raises(MeshFormatError, match="unsupported"):
        load_mesh(p)


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_mesh(tmp_path / "nope.ply")


def test_ply_without_magic(tmp_path):
    p = tmp_path / "x.ply"
    p.write_bytes(b"plx\nend_header\n")
    with pytest.raises(MeshFormatError, match="magic"):
        load_mesh(p)


def test_big_endian_float_ply(tmp_path):
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], ">f4")
    header = ("ply\nformat binary_big_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
              "property float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n")
    body = v.tobytes() + bytes([3]) + np.array([0, 1, 2], ">i4").tobytes()
    p = tmp_path / "be.ply"
    p.write_bytes(header.encode() + body)
    m = load_mesh(p)
    assert np.array_equal(m.vertices, v.astype(float))
    assert m.faces.tolist() == [[0, 1, 2]]


def test_landmark_points_snap_to_nearest_vertex(tmp_path):
    m = grid_patch(4, 4)
    save_mesh(m, tmp_path / "g.ply", landmarks=False)
    target = m.vertices[6] + [0.01, -0.02, 0.0]
    (tmp_path / "lm.json").write_text(json.dumps({"NR": target.tolist(), "SN": 2}))
    back = load_mesh(tmp_path / "g.ply", landmarks=tmp_path / "lm.json")
    assert back.landmarks == {"NR": 6, "SN": 2}


def test_bad_landmark_name(tmp_path):
    m = grid_patch(3, 3)
    save_mesh(m, tmp_path / "g.obj")
    (tmp_path / "g.landmarks.json").write_text('{"elbow": 1}')
    with pytest.raises(ConfigError, match="elbow"):
        load_mesh(tmp_path / "g.obj")


def test_mask_scalar_export(tmp_path):
    m = icosphere(1)
    mask = np.linspace(0, 1, m.n_vertices)
    save_mask_ply(tmp_path / "mask.ply", m, mask, binary=True)
    v, f, extras = read_ply(tmp_path / "mask.ply")
    assert np.array_equal(extras["quality"], mask)
    assert isinstance(load_mesh(tmp_path / "mask.ply"), TriangleMesh)
