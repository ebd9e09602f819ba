"""Synthetic geometry and stream generators."""
import numpy as np
import pytest

from lbspc.synthetic import (
    add_bump,
    add_noise,
    bump_vertex_mask,
    icosahedron,
    icosphere,
    punctured_icosphere,
    spectra_stream,
)


def test_icosahedron_basics():
    m = icosahedron()
    m.validate()
    assert m.n_vertices == 12 and m.n_faces == 20
    np.testing.assert_allclose(np.linalg.norm(m.vertices, axis=1), 1.0, rtol=1e-12)


@pytest.mark.parametrize("s,n", [(0, 12), (1, 42), (2, 162), (3, 642)])
def test_icosphere_vertex_counts(s, n):
    m = icosphere(s)
    m.validate()
    assert m.n_vertices == n  # 10 * 4^s + 2
    np.testing.assert_allclose(np.linalg.norm(m.vertices, axis=1), 1.0, rtol=1e-12)
    assert len(m.boundary_vertices()) == 0


def test_icosphere_radius():
    m = icosphere(2, radius=3.5)
    np.testing.assert_allclose(np.linalg.norm(m.vertices, axis=1), 3.5, rtol=1e-12)


def test_add_noise_deterministic_and_scaled(sphere2):
    a = add_noise(sphere2, 0.01, seed=5)
    b = add_noise(sphere2, 0.01, seed=5)
    np.testing.assert_array_equal(a.vertices, b.vertices)
    assert add_noise(sphere2, 0.0, seed=5) is sphere2
    d = a.vertices - sphere2.vertices
    assert np.std(d) == pytest.approx(0.01, rel=0.1)
    with pytest.raises(ValueError):
        add_noise(sphere2, -1.0, seed=0)


def test_add_bump_displaces_only_masked_vertices(sphere3):
    center = sphere3.vertices[0]
    mask = bump_vertex_mask(sphere3, center, 0.4)
    bumped = add_bump(sphere3, center, 0.4, height=0.1)
    moved = np.linalg.norm(bumped.vertices - sphere3.vertices, axis=1) > 1e-12
    assert (moved == mask).all()
    # peak displacement equals the bump height at the center vertex
    assert np.linalg.norm(bumped.vertices[0] - sphere3.vertices[0]) == pytest.approx(
        0.1, rel=1e-6
    )


def test_add_bump_rejects_global_radius(sphere2):
    with pytest.raises(ValueError):
        add_bump(sphere2, [0, 0, 0], radius=10.0, height=0.1)


def test_punctured_icosphere_has_boundary():
    m = punctured_icosphere(2)
    m.validate()
    assert len(m.boundary_vertices()) > 0
    assert m.n_vertices < icosphere(2).n_vertices


def test_spectra_stream_shift_semantics():
    x = spectra_stream(3, 10, shift_time=4, shift_vector=[5.0, 0.0, 0.0], seed=0)
    y = spectra_stream(3, 10, shift_time=None, shift_vector=None, seed=0)
    np.testing.assert_array_equal(x[:3], y[:3])
    np.testing.assert_allclose(x[3:, 0] - y[3:, 0], 5.0)
    np.testing.assert_array_equal(x[3:, 1:], y[3:, 1:])
    with pytest.raises(ValueError):
        spectra_stream(3, 10, shift_time=11, shift_vector=None, seed=0)
