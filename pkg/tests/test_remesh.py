"""Isotropic remeshing: edge-length targets, quality, and invariants."""
import numpy as np
import pytest

from lbspc.mesh import MeshError, aspect_ratios, connected_components
from lbspc.proximity import deviation_map
from lbspc.remesh import (
    RemeshParams,
    isotropic_remesh,
    target_edge_length,
    working_edge_length,
)
from lbspc.synthetic import add_noise, icosphere, punctured_icosphere

from conftest import make_grid_strip


def edge_lengths(mesh):
    e = mesh.edges()
    return np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)


def test_target_edge_length_formula(sphere2):
    ell = target_edge_length(sphere2, 1000)
    assert ell == pytest.approx(np.sqrt(4 * sphere2.area() / (np.sqrt(3) * 1000)))
    assert working_edge_length(sphere2, 1000) == pytest.approx(ell / np.sqrt(2))


def test_params_validation():
    with pytest.raises(ValueError):
        RemeshParams(target_vertex_count=50)
    with pytest.raises(ValueError):
        RemeshParams(iterations=0)
    with pytest.raises(ValueError):
        RemeshParams(smoothing_weight=0.0)


def test_refuses_extreme_upsampling(sphere2):
    with pytest.raises(MeshError):
        isotropic_remesh(
            sphere2, RemeshParams(target_vertex_count=sphere2.n_vertices * 5)
        )


@pytest.fixture(scope="module")
def remeshed_noisy_sphere():
    noisy = add_noise(icosphere(3), 0.01, seed=4)
    params = RemeshParams(target_vertex_count=800, iterations=5)
    return noisy, isotropic_remesh(noisy, params)


def test_vertex_budget(remeshed_noisy_sphere):
    _, out = remeshed_noisy_sphere
    assert 0.85 * 800 <= out.n_vertices <= 1.15 * 800


def test_output_is_valid_closed_mesh(remeshed_noisy_sphere):
    _, out = remeshed_noisy_sphere
    out.validate()
    assert len(out.boundary_vertices()) == 0
    assert len(connected_components(out)) == 1


def test_edge_lengths_cluster_around_working_length(remeshed_noisy_sphere):
    noisy, out = remeshed_noisy_sphere
    ell = working_edge_length(noisy, 800)
    lens = edge_lengths(out)
    in_band = ((lens > 0.8 * ell) & (lens < 4.0 / 3.0 * ell)).mean()
    assert in_band > 0.8


def test_aspect_ratio_improves(remeshed_noisy_sphere):
    noisy, out = remeshed_noisy_sphere
    before = np.quantile(aspect_ratios(noisy), 0.95)
    after = np.quantile(aspect_ratios(out), 0.95)
    assert after < before


def test_geometry_preserved(remeshed_noisy_sphere):
    noisy, out = remeshed_noisy_sphere
    dev = deviation_map(out, noisy)
    # back-projection keeps vertices essentially on the original surface
    assert np.quantile(dev, 0.95) < 0.01 * noisy.bbox_diag()


def test_deterministic(remeshed_noisy_sphere):
    noisy, out = remeshed_noisy_sphere
    again = isotropic_remesh(noisy, RemeshParams(target_vertex_count=800, iterations=5))
    np.testing.assert_array_equal(out.vertices, again.vertices)
    np.testing.assert_array_equal(out.faces, again.faces)


def test_boundary_preserved_on_open_mesh():
    m = punctured_icosphere(3, hole_cos=0.8)
    out = isotropic_remesh(m, RemeshParams(target_vertex_count=500, iterations=4))
    out.validate()
    assert len(out.boundary_vertices()) > 0


def test_uniform_equilateral_grid_is_near_fixed_point():
    # A grid already at the working edge length should barely change.
    g = make_grid_strip(20, 20, dx=1.0, dy=1.0)
    ell = working_edge_length(g, g.n_vertices)
    scale = 1.0 / ell  # rescale so the working length equals the grid pitch
    from lbspc.mesh import TriangleMesh

    g2 = TriangleMesh(g.vertices * scale, g.faces)
    out = isotropic_remesh(g2, RemeshParams(target_vertex_count=g.n_vertices, iterations=2))
    assert abs(out.n_vertices - g2.n_vertices) <= 0.15 * g2.n_vertices
    dev = deviation_map(out, g2)
    assert dev.max() < 1e-6 * g2.bbox_diag()
