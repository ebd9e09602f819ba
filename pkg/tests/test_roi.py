"""Recursive spectral bisection for region-of-interest search."""
import numpy as np
import pytest

import lbspc.roi as roi_mod
from lbspc.fem import spectrum_of
from lbspc.roi import (
    RoiError,
    correspondence_distances,
    find_roi,
    nodal_partition,
)
from lbspc.synthetic import add_bump, bump_vertex_mask, icosphere


@pytest.fixture(scope="module")
def bump_setup():
    cad = icosphere(3)
    center = cad.vertices[0]
    radius = 0.5
    part = add_bump(cad, center, radius, height=0.3)
    mask = bump_vertex_mask(cad, center, radius)
    return cad, part, mask


def test_nodal_partition_covers_mesh(sphere3):
    (pos, pos_ids), (neg, neg_ids) = nodal_partition(sphere3)
    assert pos.n_vertices + neg.n_vertices >= sphere3.n_vertices
    # every original face is assigned to exactly one side
    assert pos.n_faces + neg.n_faces == sphere3.n_faces
    # id maps point back at identical coordinates
    np.testing.assert_allclose(pos.vertices, sphere3.vertices[pos_ids])
    np.testing.assert_allclose(neg.vertices, sphere3.vertices[neg_ids])


def test_nodal_partition_respects_phi2_sign(sphere3):
    phi2 = sphere3.vertices[:, 2]  # mimic a first nontrivial eigenfunction
    (pos, pos_ids), (neg, neg_ids) = nodal_partition(sphere3, phi2=phi2)
    assert (sphere3.vertices[pos_ids][:, 2] >= -0.2).all()
    assert (sphere3.vertices[neg_ids][:, 2] <= 0.2).all()


def test_nodal_partition_rejects_tiny_or_constant():
    small = icosphere(0)
    with pytest.raises(RoiError):
        nodal_partition(small)
    with pytest.raises(RoiError):
        nodal_partition(icosphere(2), phi2=np.zeros(icosphere(2).n_vertices))


def test_correspondence_distances_identical_sides(sphere3):
    (pos, _), (neg, _) = nodal_partition(sphere3)
    sp = spectrum_of(pos, 16)
    sn = spectrum_of(neg, 16)
    d = correspondence_distances(sp, sn, sp, sn)
    assert d[0] == pytest.approx(0.0, abs=1e-12)  # A+ vs B+ identical
    assert d[3] == pytest.approx(0.0, abs=1e-12)  # A- vs B- identical
    assert d[1] == d[2]  # symmetry of the cross pairings


def test_find_roi_contains_bump(bump_setup):
    cad, part, mask = bump_setup
    trace = find_roi(part, cad, min_vertices=400, seed=0)
    assert 1 <= len(trace.iterations) <= 3
    covered = np.intersect1d(trace.roi_vertex_ids, np.where(mask)[0])
    assert len(covered) >= 0.95 * mask.sum()
    assert not trace.no_asymmetry
    # the kept side is the complement of the best-matching pair
    it = trace.iterations[0]
    assert it.selected == {1: "A-,B-", 2: "A-,B+", 3: "A+,B-", 4: "A+,B+"}[it.argmin_pair]


def test_find_roi_sign_flip_invariance(bump_setup, monkeypatch):
    cad, part, mask = bump_setup
    ref = find_roi(part, cad, min_vertices=400, seed=0)

    original = roi_mod.nodal_partition

    def flipped(mesh, seed=0, phi2=None):
        if phi2 is None:
            spec = spectrum_of(mesh, k=2, seed=seed)
            phi2 = -spec.eigenvectors[:, 1]
        return original(mesh, seed=seed, phi2=phi2)

    monkeypatch.setattr(roi_mod, "nodal_partition", flipped)
    alt = find_roi(part, cad, min_vertices=400, seed=0)
    assert set(alt.roi_vertex_ids) == set(ref.roi_vertex_ids)


def test_find_roi_no_asymmetry_flag(sphere3):
    trace = find_roi(sphere3, sphere3, min_vertices=400, seed=0)
    assert trace.no_asymmetry


def test_find_roi_respects_min_vertices(bump_setup):
    cad, part, _ = bump_setup
    trace = find_roi(part, cad, min_vertices=part.n_vertices, seed=0)
    assert len(trace.iterations) <= 1  # stops as soon as ROI falls below the floor


def test_report_renders(bump_setup):
    cad, part, _ = bump_setup
    trace = find_roi(part, cad, min_vertices=400, seed=0)
    text = trace.report()
    assert "ROI:" in text and "selected" in text
