import numpy as np
import pytest

from breastssm.decimate import decimate
from breastssm.embedded import apply_graph, build_graph, fit_node_transforms
from breastssm.errors import ValidationError
from oracles import random_rotations
from shapes import grid_patch, icosphere


def _bend(points, kappa=0.3):
    x, y, z = points.T
    return np.c_[x, y, z + kappa * x**2]


@pytest.fixture(scope="module")
def sphere_pair():
    fine = icosphere(3, radius=50.0)
    return fine, decimate(fine, 150, placement="subset").mesh


def test_identity_transfer(sphere_pair):
    fine, coarse = sphere_pair
    g = build_graph(coarse, coarse, fine)
    assert np.allclose(g.matrices, np.eye(3), atol=1e-12)
    assert np.allclose(apply_graph(g, fine).vertices, fine.vertices, atol=1e-9)


def test_weights_normalised(sphere_pair):
    fine, coarse = sphere_pair
    g = build_graph(coarse, coarse, fine, k=4)
    assert g.influence_nodes.shape == (fine.n_vertices, 4)
    assert np.allclose(g.influence_weights.sum(axis=1), 1.0)
    assert np.all(g.influence_weights > 0)


@pytest.mark.parametrize("seed", range(3))
def test_similarity_is_reproduced_exactly(sphere_pair, seed):
    fine, coarse = sphere_pair
    rng = np.random.default_rng(seed)
    R = random_rotations(1, seed)[0]
    s, t = rng.uniform(0.5, 2.0), rng.normal(size=3) * 20

    def sim(p):
        return s * p @ R.T + t

    g = build_graph(coarse, coarse.with_vertices(sim(coarse.vertices)), fine)
    assert np.allclose(g.matrices, s * R, atol=1e-9)
    assert np.allclose(apply_graph(g, fine).vertices, sim(fine.vertices), atol=1e-9)


def test_quadratic_bend_error_is_second_order():
    fine = icosphere(4, radius=10.0)
    kappa = 0.02
    truth = _bend(fine.vertices, kappa)
    errors = []
    for n in (100, 400):
        coarse = decimate(fine, n, placement="subset").mesh
        g = build_graph(coarse, coarse.with_vertices(_bend(coarse.vertices, kappa)), fine)
        err = np.abs(apply_graph(g, fine).vertices - truth).max()
        # the bend's second derivative is 2 kappa, so C h^2 with C ~ kappa bounds the transfer error
        assert err < kappa * coarse.mean_edge_length**2
        errors.append(err)
    assert errors[1] < errors[0] / 2


def test_degenerate_one_ring_falls_back_to_rigid(caplog):
    # a flat patch deformed into a flat patch: the normal row keeps fits full rank
    m = grid_patch(4, 4)
    A = fit_node_transforms(m, m)
    assert np.allclose(A, np.eye(3))


def test_topology_mismatch_rejected():
    a, b = grid_patch(4, 4), grid_patch(5, 4)
    with pytest.raises(ValidationError):
        fit_node_transforms(a, b)
    g = build_graph(a, a, a)
    with pytest.raises(ValidationError):
        apply_graph(g, b)
