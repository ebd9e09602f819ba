"""Recursive region-of-interest search by nodal-domain bisection.

Both part and reference meshes are split by the sign of their second
Laplace-Beltrami eigenvector; the four cross-pair scaled-spectrum distances
decide which complement pair to recurse on, so the surviving submesh is the
most dissimilar corresponding region (likely to contain the abnormality).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import BoundaryCondition, scaled_spectrum, spectrum_of
from .mesh import TriangleMesh, submesh


class RoiError(Exception):
    pass


@dataclass
class RoiIteration:
    d: tuple[float, float, float, float]
    argmin_pair: int  # 1..4, pair with the smallest distance
    selected: str  # which (part, reference) sides were kept, e.g. "A-,B-"
    part_sizes: tuple[int, int]  # (A+, A-) vertex counts
    ref_sizes: tuple[int, int]


@dataclass
class RoiTrace:
    iterations: list[RoiIteration]
    roi: TriangleMesh
    roi_vertex_ids: np.ndarray  # indices into the original part mesh
    no_asymmetry: bool = False

    def report(self) -> str:
        lines = ["iter  d1            d2            d3            d4            selected"]
        for i, it in enumerate(self.iterations, 1):
            d = "  ".join(f"{x:<12.6g}" for x in it.d)
            lines.append(f"{i:<4}  {d}  {it.selected}")
        lines.append(
            f"ROI: {self.roi.n_vertices} vertices"
            + ("  [no significant asymmetry]" if self.no_asymmetry else "")
        )
        return "\n".join(lines)


def nodal_partition(
    mesh: TriangleMesh, seed: int = 0, phi2: np.ndarray | None = None
) -> tuple[tuple[TriangleMesh, np.ndarray], tuple[TriangleMesh, np.ndarray]]:
    """Split by the sign of the second LB eigenvector.

    Faces go to the side holding the majority of their vertices, ties to the
    positive side. Returns ((M+, ids+), (M-, ids-)) with ids referring to the
    input mesh vertex numbering.
    """
    if mesh.n_vertices < 50:
        raise RoiError(f"mesh too small to partition ({mesh.n_vertices} vertices)")
    if phi2 is None:
        spec = spectrum_of(mesh, k=2, bc=BoundaryCondition.NEUMANN, seed=seed)
        phi2 = spec.eigenvectors[:, 1]
    spread = np.abs(phi2).max()
    if spread < 1e-12 or np.abs(phi2 - phi2.mean()).max() < 1e-10 * max(spread, 1.0):
        raise RoiError("second eigenvector numerically constant")
    vsign = phi2 >= 0
    votes = vsign[mesh.faces].sum(axis=1)
    pos_faces = np.where(votes >= 2)[0]
    neg_faces = np.where(votes < 2)[0]
    if len(pos_faces) == 0 or len(neg_faces) == 0:
        raise RoiError("nodal partition produced an empty side")
    return submesh(mesh, pos_faces), submesh(mesh, neg_faces)


def correspondence_distances(
    spec_a_pos, spec_a_neg, spec_b_pos, spec_b_neg, lo: int = 2, hi: int = 15
) -> tuple[float, float, float, float]:
    """Scaled-spectrum L1 distances for all four cross pairings.

    Order: (A+B+, A+B-, A-B+, A-B-).
    """
    sap = scaled_spectrum(spec_a_pos, lo, hi)
    san = scaled_spectrum(spec_a_neg, lo, hi)
    sbp = scaled_spectrum(spec_b_pos, lo, hi)
    sbn = scaled_spectrum(spec_b_neg, lo, hi)
    return (
        float(np.abs(sap - sbp).sum()),
        float(np.abs(sap - sbn).sum()),
        float(np.abs(san - sbp).sum()),
        float(np.abs(san - sbn).sum()),
    )


# complement of the argmin pair: which sides to keep (part_side, ref_side)
_COMPLEMENT = {1: ("-", "-"), 2: ("-", "+"), 3: ("+", "-"), 4: ("+", "+")}


def find_roi(
    part: TriangleMesh,
    cad: TriangleMesh,
    k: int = 16,
    max_iter: int = 3,
    min_vertices: int = 2000,
    lo: int = 2,
    hi: int = 15,
    seed: int = 0,
    flag_tol: float = 1e-6,
) -> RoiTrace:
    """Run the recursive bisection and return the trace plus the final ROI."""
    if hi + 1 > k:
        k = hi + 1
    a_mesh, a_ids = part, np.arange(part.n_vertices)
    b_mesh = cad
    iterations: list[RoiIteration] = []
    no_asym = True
    for _ in range(max_iter):
        if a_mesh.n_vertices < 2 * 50 or b_mesh.n_vertices < 2 * 50:
            break
        try:
            (a_pos, a_pos_ids), (a_neg, a_neg_ids) = nodal_partition(a_mesh, seed=seed)
            (b_pos, _), (b_neg, _) = nodal_partition(b_mesh, seed=seed)
        except RoiError:
            break
        sides = (a_pos, a_neg, b_pos, b_neg)
        if min(s.n_vertices for s in sides) < 50:
            break
        specs = [
            spectrum_of(s, k=min(k, s.n_vertices - 2), seed=seed) for s in sides
        ]
        if any(sp.k < hi for sp in specs):
            break
        d = correspondence_distances(*specs, lo=lo, hi=hi)
        if min(d) >= flag_tol:
            no_asym = False
        # smallest index wins ties within 1e-12
        dmin = min(d)
        argmin = next(i for i, x in enumerate(d, 1) if x <= dmin + 1e-12)
        part_side, ref_side = _COMPLEMENT[argmin]
        new_a, new_a_local = (a_pos, a_pos_ids) if part_side == "+" else (a_neg, a_neg_ids)
        new_b = b_pos if ref_side == "+" else b_neg
        iterations.append(
            RoiIteration(
                d=d,
                argmin_pair=argmin,
                selected=f"A{part_side},B{ref_side}",
                part_sizes=(a_pos.n_vertices, a_neg.n_vertices),
                ref_sizes=(b_pos.n_vertices, b_neg.n_vertices),
            )
        )
        a_ids = a_ids[new_a_local]
        a_mesh, b_mesh = new_a, new_b
        if a_mesh.n_vertices < min_vertices:
            break
    return RoiTrace(iterations, a_mesh, a_ids, no_asymmetry=no_asym)
