import numpy as np
import pytest

from quadrl.errors import EmptyCorpusError, EmptyMeshError
from quadrl.mesh import Mesh
from quadrl.metrics import BrokenCheckConfig, broken_check, broken_ratio, quad_ratio
from quadrl.shapes import box, box_with_hole, flipped, quad_grid, torus, uv_sphere


def test_watertight_sphere_not_broken():
    sphere = uv_sphere(18, 20)
    assert sphere.n_faces >= 320
    score, is_broken = broken_check(sphere)
    assert score < 0.001 and not is_broken


def test_watertight_cube_and_torus_not_broken():
    for mesh in (box(), torus()):
        score, is_broken = broken_check(mesh)
        assert score == 0.0 and not is_broken


def test_fully_flipped_cube_scores_high():
    mesh = flipped(box(), range(6))
    score, is_broken = broken_check(mesh)
    assert score > 0.9 and is_broken


def test_open_cube_classified_broken():
    score, is_broken = broken_check(box_with_hole())
    assert is_broken and 0.0 < score < 1.0


def test_single_flipped_face_detected():
    score, is_broken = broken_check(flipped(box(), [0]))
    assert is_broken and score > 0.01


def test_broken_check_scale_invariant():
    mesh = box()
    big = Mesh(mesh.vertices * 1000.0, mesh.faces)
    assert broken_check(big) == broken_check(mesh)


def test_broken_check_empty_mesh():
    with pytest.raises(EmptyMeshError):
        broken_check(Mesh(np.zeros((0, 3)), []))


def test_config_validation():
    with pytest.raises(ValueError):
        BrokenCheckConfig(theta_succ=0.0)
    with pytest.raises(ValueError):
        BrokenCheckConfig(per_axis=0)


def test_broken_ratio_mixed_corpus():
    corpus = [box(), torus(), box_with_hole(), flipped(box(), range(6))]
    assert broken_ratio(corpus) == 0.5


def test_broken_ratio_monotone_under_progressive_corruption():
    """Flipping more faces of each cube never lowers the corpus ratio."""
    ratios = []
    for n_flipped in range(0, 7):
        corpus = [flipped(box(), range(n_flipped)) for _ in range(8)]
        ratios.append(broken_ratio(corpus, seed=3))
    assert ratios[0] == 0.0 and ratios[-1] == 1.0
    assert all(b >= a for a, b in zip(ratios, ratios[1:]))


def test_broken_ratio_empty_corpus():
    with pytest.raises(EmptyCorpusError):
        broken_ratio([])


def test_quad_ratio_values():
    assert quad_ratio(box()) == 1.0
    tri = Mesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]), [(0, 1, 2)])
    assert quad_ratio(tri) == 0.0
    mixed = Mesh(
        np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [2, 0, 0]]),
        [(0, 1, 2, 3), (1, 4, 2)],
    )
    assert quad_ratio(mixed) == 0.5
    assert quad_ratio(quad_grid(2, 2)) == 1.0
    with pytest.raises(EmptyMeshError):
        quad_ratio(Mesh(np.zeros((1, 3)), []))
