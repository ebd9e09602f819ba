"""Incremental isotropic remeshing: split / collapse / flip / smooth.

Drives edge lengths toward a common target derived from a vertex budget,
with tangential smoothing back-projected onto the original surface so the
geometry is preserved. Edits are applied in ascending edge-index order, so
the output is reproducible bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import MeshError, TriangleMesh, validate_and_repair
from .proximity import SurfaceIndex


@dataclass
class RemeshParams:
    target_vertex_count: int = 15000
    iterations: int = 5
    smoothing_weight: float = 1.0

    def __post_init__(self):
        if self.target_vertex_count < 100:
            raise ValueError("target_vertex_count must be >= 100")
        if not (1 <= self.iterations <= 20):
            raise ValueError("iterations must be in [1, 20]")
        if not (0 < self.smoothing_weight <= 1):
            raise ValueError("smoothing_weight must be in (0, 1]")


def target_edge_length(mesh: TriangleMesh, target_vertex_count: int) -> float:
    """Edge length of an equilateral tiling with the requested vertex budget."""
    return float(np.sqrt(4.0 * mesh.area() / (np.sqrt(3.0) * target_vertex_count)))


def working_edge_length(mesh: TriangleMesh, target_vertex_count: int) -> float:
    """Edge length that actually yields the vertex budget on a closed
    triangulation (two triangles of area per vertex, not one)."""
    return target_edge_length(mesh, target_vertex_count) / np.sqrt(2.0)


class _EditableMesh:
    """Mutable face list with rebuildable adjacency for one remeshing run."""

    def __init__(self, mesh: TriangleMesh):
        self.verts: list[np.ndarray] = [v.copy() for v in mesh.vertices]
        self.faces: list[list[int] | None] = [list(f) for f in mesh.faces]

    def live_faces(self):
        return [(i, f) for i, f in enumerate(self.faces) if f is not None]

    def edge_map(self):
        """(u,v) sorted -> list of (face_idx, opposite_vertex)."""
        em: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for fi, f in enumerate(self.faces):
            if f is None:
                continue
            a, b, c = f
            for u, v, w in ((a, b, c), (b, c, a), (c, a, b)):
                key = (u, v) if u < v else (v, u)
                em.setdefault(key, []).append((fi, w))
        return em

    def vertex_faces(self):
        vf: dict[int, list[int]] = {}
        for fi, f in enumerate(self.faces):
            if f is None:
                continue
            for v in f:
                vf.setdefault(v, []).append(fi)
        return vf

    def boundary_vertices(self) -> set[int]:
        return {
            v for key, adj in self.edge_map().items() if len(adj) == 1 for v in key
        }

    def to_mesh(self) -> TriangleMesh:
        faces = [f for f in self.faces if f is not None]
        v = np.asarray(self.verts)
        f = np.asarray(faces, dtype=np.int64)
        used = np.zeros(len(v), dtype=bool)
        used[f.ravel()] = True
        remap = np.cumsum(used) - 1
        return TriangleMesh(v[used], remap[f])


def _edge_len(em_key, verts):
    return float(np.linalg.norm(verts[em_key[0]] - verts[em_key[1]]))


def _split_pass(m: _EditableMesh, max_len: float) -> int:
    em = m.edge_map()
    todo = sorted(
        k for k in em if _edge_len(k, m.verts) > max_len
    )
    dirty: set[int] = set()
    n_split = 0
    for key in todo:
        adj = em[key]
        if any(fi in dirty for fi, _ in adj):
            continue
        u, v = key
        mid = 0.5 * (m.verts[u] + m.verts[v])
        m.verts.append(mid)
        nw = len(m.verts) - 1
        for fi, _w in adj:
            f = m.faces[fi]
            # preserve orientation: replace (u..v) occurrence
            a, b, c = f
            m.faces[fi] = None
            dirty.add(fi)
            for x, y, z in ((a, b, c), (b, c, a), (c, a, b)):
                if {x, y} == {u, v}:
                    m.faces.append([x, nw, z])
                    m.faces.append([nw, y, z])
                    dirty.add(len(m.faces) - 1)
                    dirty.add(len(m.faces) - 2)
                    break
        n_split += 1
    return n_split


def _collapse_pass(m: _EditableMesh, min_len: float, max_len: float) -> int:
    em = m.edge_map()
    vf = m.vertex_faces()
    boundary = {v for key, adj in em.items() if len(adj) == 1 for v in key}
    todo = sorted(k for k in em if _edge_len(k, m.verts) < min_len)
    touched: set[int] = set()
    n_coll = 0
    for key in todo:
        u, v = key
        if u in touched or v in touched:
            continue
        if u in boundary or v in boundary:
            continue
        adj = em.get(key)
        if adj is None or len(adj) != 2:
            continue
        if any(m.faces[fi] is None for fi, _ in adj):
            continue
        opposite = {w for _, w in adj}
        ring_u = {x for fi in vf[u] if m.faces[fi] is not None for x in m.faces[fi]} - {u}
        ring_v = {x for fi in vf[v] if m.faces[fi] is not None for x in m.faces[fi]} - {v}
        if ring_u & ring_v != opposite:
            continue  # link condition would pinch the surface
        mid = 0.5 * (m.verts[u] + m.verts[v])
        # avoid creating edges that the split pass would immediately cut
        if any(
            np.linalg.norm(mid - m.verts[x]) > max_len
            for x in (ring_u | ring_v) - {u, v}
        ):
            continue
        m.verts[u] = mid
        for fi in set(vf[u] + vf[v]):
            f = m.faces[fi]
            if f is None:
                continue
            if u in f and v in f:
                m.faces[fi] = None
                continue
            if v in f:
                f[f.index(v)] = u
                vf.setdefault(u, []).append(fi)
        touched |= ring_u | ring_v | {u, v}
        n_coll += 1
    return n_coll


def _flip_pass(m: _EditableMesh) -> int:
    em = m.edge_map()
    boundary = {v for key, adj in em.items() if len(adj) == 1 for v in key}
    valence: dict[int, int] = {}
    for (u, v), _adj in em.items():
        valence[u] = valence.get(u, 0) + 1
        valence[v] = valence.get(v, 0) + 1
    target = lambda x: 4 if x in boundary else 6  # noqa: E731
    edge_set = set(em)
    dirty: set[int] = set()
    n_flip = 0
    for key in sorted(em):
        adj = em[key]
        if len(adj) != 2:
            continue
        (f1, a), (f2, b) = adj
        if f1 in dirty or f2 in dirty:
            continue
        u, v = key
        ekey = (a, b) if a < b else (b, a)
        if ekey in edge_set:
            continue
        before = sum((valence[x] - target(x)) ** 2 for x in (u, v, a, b))
        after = (
            (valence[u] - 1 - target(u)) ** 2
            + (valence[v] - 1 - target(v)) ** 2
            + (valence[a] + 1 - target(a)) ** 2
            + (valence[b] + 1 - target(b)) ** 2
        )
        if after >= before:
            continue
        if not _flip_geometry_ok(m.verts, u, v, a, b):
            continue
        # faces (u,v,a-side) and (v,u,b-side) -> (u,b,a) and (v,a,b) keeping CCW
        fa, fb = m.faces[f1], m.faces[f2]
        new1, new2 = _flipped_faces(fa, fb, u, v, a, b)
        if new1 is None:
            continue
        m.faces[f1] = None
        m.faces[f2] = None
        m.faces.append(new1)
        m.faces.append(new2)
        dirty.update({f1, f2, len(m.faces) - 1, len(m.faces) - 2})
        edge_set.discard(key)
        edge_set.add(ekey)
        valence[u] -= 1
        valence[v] -= 1
        valence[a] += 1
        valence[b] += 1
        n_flip += 1
    return n_flip


def _flipped_faces(fa, fb, u, v, a, b):
    """New CCW faces after flipping shared edge (u,v) to (a,b)."""
    # orientation of u->v within fa tells which side a is on
    def follows(f, x, y):
        i = f.index(x)
        return f[(i + 1) % 3] == y

    if follows(fa, u, v) and follows(fb, v, u):
        return [u, b, a], [v, a, b]
    if follows(fa, v, u) and follows(fb, u, v):
        return [v, b, a], [u, a, b]
    return None, None


def _flip_geometry_ok(verts, u, v, a, b) -> bool:
    """Reject flips creating degenerate or folded triangle pairs."""
    pu, pv, pa, pb = verts[u], verts[v], verts[a], verts[b]
    n_old = np.cross(pv - pu, pa - pu) + np.cross(pu - pv, pb - pv)
    t1 = np.cross(pb - pu, pa - pu)
    t2 = np.cross(pa - pv, pb - pv)
    a1 = np.linalg.norm(t1)
    a2 = np.linalg.norm(t2)
    scale = max(np.linalg.norm(pv - pu) ** 2, 1e-300)
    if a1 < 1e-10 * scale or a2 < 1e-10 * scale:
        return False
    nn = np.linalg.norm(n_old)
    if nn > 0:
        if np.dot(t1, n_old) <= 0 or np.dot(t2, n_old) <= 0:
            return False
    return True


def _smooth_pass(m: _EditableMesh, weight: float, index: SurfaceIndex) -> None:
    em = m.edge_map()
    boundary = {v for key, adj in em.items() if len(adj) == 1 for v in key}
    neighbors: dict[int, list[int]] = {}
    for (u, v) in em:
        neighbors.setdefault(u, []).append(v)
        neighbors.setdefault(v, []).append(u)
    vf = m.vertex_faces()
    verts = np.asarray(m.verts)
    new = verts.copy()
    for vi, nbrs in neighbors.items():
        if vi in boundary or not nbrs:
            continue
        centroid = verts[np.asarray(nbrs)].mean(axis=0)
        # area-weighted normal from incident faces
        normal = np.zeros(3)
        for fi in vf.get(vi, []):
            f = m.faces[fi]
            if f is None:
                continue
            p0, p1, p2 = (verts[x] for x in f)
            normal += np.cross(p1 - p0, p2 - p0)
        nn = np.linalg.norm(normal)
        d = centroid - verts[vi]
        if nn > 0:
            normal /= nn
            d = d - np.dot(d, normal) * normal  # tangential component only
        new[vi] = verts[vi] + weight * d
    movable = np.asarray(sorted(set(neighbors) - boundary), dtype=np.int64)
    if len(movable):
        _, proj, _ = index.query(new[movable])
        new[movable] = proj
    for i in range(len(m.verts)):
        m.verts[i] = new[i]


def isotropic_remesh(mesh: TriangleMesh, params: RemeshParams | None = None) -> TriangleMesh:
    """Remesh toward uniform equilateral triangles at a target vertex budget."""
    params = params or RemeshParams()
    mesh.validate()
    if params.target_vertex_count > 4 * mesh.n_vertices:
        raise MeshError(
            f"target {params.target_vertex_count} exceeds input resolution "
            f"capacity (> 4 x {mesh.n_vertices} vertices)"
        )
    original = SurfaceIndex(mesh)
    ell = working_edge_length(mesh, params.target_vertex_count)

    m = _EditableMesh(mesh)
    for _round in range(4):
        for _ in range(params.iterations):
            _split_pass(m, 4.0 / 3.0 * ell)
            _collapse_pass(m, 0.8 * ell, 4.0 / 3.0 * ell)
            _flip_pass(m)
            _smooth_pass(m, params.smoothing_weight, original)
        out = m.to_mesh()
        ratio = out.n_vertices / params.target_vertex_count
        if 0.85 <= ratio <= 1.15:
            break
        ell *= float(np.sqrt(ratio))
        m = _EditableMesh(out)
    out, _report = validate_and_repair(out)
    out.validate()
    return out
