import logging

import numpy as np
import pytest

from breastssm.apps import EditMap, FeatureMatrix, edit, fit_edit_map, posterior_predict, read_feature_csv
from breastssm.errors import ConfigError, ValidationError
from breastssm.model import Similarity, build, reconstruct, sample
from oracles import random_rotations

NOFACES = np.zeros((0, 3), int)


@pytest.fixture(scope="module")
def planted():
    """Shapes x_i = m0 + W f_i: features are exact linear functionals of the shape."""
    rng = np.random.default_rng(3)
    n, k, l = 40, 7, 2
    W = rng.normal(size=(3 * n, l))
    m0 = rng.normal(size=3 * n) * 5
    feats = rng.normal(size=(k, l)) * [3.0, 1.0]
    X = m0 + feats @ W.T
    model = build(X, NOFACES)
    A = np.stack([reconstruct(model, x) for x in X], axis=1)
    measure = np.linalg.pinv(W)

    def features_of(x):
        return measure @ (x - m0)

    return model, A, FeatureMatrix.from_table(feats, ["height", "volume"]), features_of, X


def test_feature_matrix_layout():
    F = FeatureMatrix.from_table([[1, 2], [3, 4], [5, 6]], ["a", "b"])
    assert F.values.shape == (3, 3)
    assert np.array_equal(F.values[-1], np.ones(3))
    assert F.n_features == 2 and F.n_subjects == 3
    with pytest.raises(ValidationError):
        FeatureMatrix.from_table([[1, 2]], ["a"])


def test_edit_map_fits_planted_relation(planted):
    model, A, F, _, _ = planted
    emap = fit_edit_map(A, F)
    assert emap.matrix.shape == (model.q, 3)
    assert np.allclose(emap.matrix @ F.values, A, atol=1e-8)
    assert np.allclose((emap.matrix @ F.values - A) @ F.values.T, 0, atol=1e-8)


def test_intercept_only_map_is_mean():
    A = np.random.default_rng(0).normal(size=(4, 6))
    emap = fit_edit_map(A, FeatureMatrix.from_table(np.zeros((6, 0)), []))
    assert np.allclose(emap.matrix[:, 0], A.mean(axis=1))


def test_rank_deficient_features_warn(caplog):
    A = np.random.default_rng(0).normal(size=(3, 4))
    F = FeatureMatrix.from_table([[1, 2], [2, 4], [3, 6], [4, 8]], ["a", "b"])
    with caplog.at_level(logging.WARNING):
        emap = fit_edit_map(A, F)
    assert emap.rank == 2
    assert "rank" in caplog.text


def test_edit_realises_requested_feature_change(planted):
    model, A, F, features_of, X = planted
    emap = fit_edit_map(A, F)
    alpha = A[:, 2]
    delta = np.array([1.5, -0.7])
    edited = sample(model, edit(model, emap, alpha, delta))
    assert np.allclose(features_of(edited) - features_of(X[2]), delta, atol=1e-6)


def test_edit_identity_and_additivity(planted):
    model, A, F, _, _ = planted
    emap = fit_edit_map(A, F)
    a = A[:, 0]
    assert np.array_equal(edit(model, emap, a, np.zeros(2)), a)
    d1, d2 = np.array([1.0, 2.0]), np.array([-0.5, 0.3])
    assert np.allclose(edit(model, emap, edit(model, emap, a, d1), d2), edit(model, emap, a, d1 + d2))
    with pytest.raises(ValidationError):
        edit(model, emap, a, np.zeros(3))
    with pytest.raises(ValidationError):
        edit(model, EditMap(emap.matrix[:1], 1, []), a, np.zeros(2))


def test_feature_csv(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("id,height,volume\ns0,1,2\ns1,3,4\n")
    ids, F = read_feature_csv(p)
    assert ids == ["s0", "s1"] and F.names == ["height", "volume"]
    assert np.array_equal(F.values, [[1, 3], [2, 4], [1, 1]])
    p.write_text("id,h\ns0,tall\n")
    with pytest.raises(ConfigError):
        read_feature_csv(p)


@pytest.fixture(scope="module")
def span_model():
    rng = np.random.default_rng(8)
    n, k = 60, 6
    X = rng.normal(size=3 * n) + rng.normal(size=(k, 3)) @ rng.normal(size=(3, 3 * n)) * 4
    return build(X, NOFACES)


def test_full_observation_reproduces_in_span_shape(span_model):
    x = sample(span_model, [2.0, -1.0, 0.5])
    assert np.allclose(posterior_predict(span_model, x, [], sigma2=0.0), x, atol=1e-6)
    assert np.allclose(posterior_predict(span_model, x, [], sigma2=0.0),
                       sample(span_model, reconstruct(span_model, x)), atol=1e-8)


def test_half_missing_recovers_shape(span_model):
    x = sample(span_model, [3.0, 1.0, -2.0])
    n = span_model.n_vertices
    missing = np.arange(n // 2, n)
    corrupted = x.reshape(-1, 3).copy()
    corrupted[missing] = 1e6
    pred = posterior_predict(span_model, corrupted, missing, sigma2=1e-6).reshape(-1, 3)
    err = np.linalg.norm(pred[missing] - x.reshape(-1, 3)[missing], axis=1).mean()
    assert err < 1e-3


def test_everything_missing_gives_mean(span_model, caplog):
    n = span_model.n_vertices
    with caplog.at_level(logging.WARNING):
        pred = posterior_predict(span_model, np.zeros((n, 3)), np.arange(n))
    assert np.array_equal(pred, span_model.mean)
    assert "missing" in caplog.text


def test_large_noise_gives_mean(span_model):
    x = sample(span_model, [3.0, 1.0, -2.0])
    pred = posterior_predict(span_model, x, [0, 1, 2], sigma2=1e12)
    assert np.allclose(pred, span_model.mean, rtol=1e-6, atol=1e-6 * np.abs(span_model.mean).max())


def test_alignment_is_pose_equivariant(span_model):
    x = sample(span_model, [1.0, 2.0, 0.0]).reshape(-1, 3)
    pose = Similarity(1.2, random_rotations(1, 4)[0], np.array([10.0, -5.0, 2.0]))
    missing = np.arange(0, span_model.n_vertices, 3)
    plain = posterior_predict(span_model, x, missing, sigma2=1e-3, align=True).reshape(-1, 3)
    moved = posterior_predict(span_model, pose.apply(x), missing, sigma2=1e-3, align=True).reshape(-1, 3)
    assert np.allclose(moved, pose.apply(plain), atol=1e-8)
    mean_moved = pose.apply(span_model.mean.reshape(-1, 3))
    pred = posterior_predict(span_model, mean_moved, missing, sigma2=1e-3, align=True).reshape(-1, 3)
    assert np.allclose(pred, mean_moved, atol=1e-8)


def test_posterior_errors(span_model):
    n = span_model.n_vertices
    with pytest.raises(ConfigError):
        posterior_predict(span_model, np.zeros((n, 3)), [], sigma2=-1.0)
    with pytest.raises(ValidationError):
        posterior_predict(span_model, np.zeros((n, 3)), [n])
    with pytest.raises(ValidationError):
        posterior_predict(span_model, np.zeros((n - 1, 3)), [])
