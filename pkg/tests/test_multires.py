import numpy as np
import pytest

from breastssm.casap import CasapConfig
from breastssm.errors import ConfigError, NumericalError
from breastssm.multires import STAGES, PipelineConfig, run_pipeline
from breastssm.query import point_to_surface_distance
from breastssm.rigid import SimilarityTransform
from breastssm.synth import SubjectParams, generate_subject

SMALL = dict(n_theta=21, n_height=21)


@pytest.fixture(scope="module")
def template():
    return generate_subject(SubjectParams(**SMALL)).mesh


@pytest.fixture(scope="module")
def pair_result(template):
    target = generate_subject(SubjectParams(amp_L=42.0, amp_R=30.0, angle_x=0.05, translation=(2.0, -3.0, 1.0),
                                            **SMALL)).mesh
    return target, run_pipeline(template, target)


def test_identity_pipeline(template, tmp_path):
    res = run_pipeline(template, template, PipelineConfig(dump_dir=str(tmp_path)))
    assert np.abs(res.mesh.vertices - template.vertices).max() < 1e-5
    names = sorted(p.name for p in tmp_path.glob("*.ply"))
    assert names == [f"stage{i}_{s}.ply" for i, s in enumerate(STAGES, 1)]


def test_four_stages_with_descending_energies(pair_result):
    _, res = pair_result
    assert [s.name for s in res.stages] == list(STAGES)
    for st in res.stages:
        if st.name == "upsample":
            continue
        for alpha in {r["alpha"] for r in st.trace}:
            f = np.array([r["F"] for r in st.trace if r["alpha"] == alpha])
            assert np.all(np.diff(f) <= 1e-10 * np.abs(f[:-1]))
    assert len(res.diagnostics) == sum(len(s.trace) for s in res.stages)


def test_output_keeps_topology_and_fits_target(pair_result, template):
    target, res = pair_result
    assert np.array_equal(res.mesh.faces, template.faces)
    assert res.mesh.n_vertices == template.n_vertices
    d = point_to_surface_distance(target, res.mesh.vertices)
    assert d.mean() < template.mean_edge_length / 5


def test_coarse_stage_is_smaller(pair_result, template):
    _, res = pair_result
    coarse = res.stages[1].mesh
    assert coarse.n_vertices == pytest.approx(0.2 * template.n_vertices, abs=len(template.landmarks) + 4)
    assert res.stages[2].mesh.n_vertices == template.n_vertices


def test_rigid_step_recovers_pose(template):
    pose = SimilarityTransform(1.03, 0.08, [4.0, -2.0, 3.0])
    target = template.with_vertices(pose.apply(template.vertices))
    res = run_pipeline(template, target)
    assert res.rigid.transform.scale == pytest.approx(1.03, abs=1e-6)
    assert np.abs(res.mesh.vertices - target.vertices).max() < 1e-4


def test_stage_errors_are_annotated(template):
    cfg = PipelineConfig(coarse=CasapConfig(alpha_schedule=(1.0,), beta=0.0, prune_factor=1e-9, prune_floor=0.0))
    target = generate_subject(SubjectParams(amp_L=42.0, **SMALL)).mesh
    with pytest.raises(NumericalError, match=r"^\[coarse\]"):
        run_pipeline(template, target, cfg)


def test_config_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(coarse_fraction=0.0)
    with pytest.raises(ConfigError):
        PipelineConfig(influences=0)
