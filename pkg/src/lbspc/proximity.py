"""Exact point-to-surface queries and deviation maps.

The hot kernel (closest point on any triangle, for many query points) has two
implementations: a numba-compiled uniform-grid search and a numpy/scipy
fallback using KD-tree candidate pruning. Both are exact; LBSPC_NUMBA selects
the backend (see lbspc._backend).
"""

from __future__ import annotations

import numpy as np

from ._backend import NUMBA_ENABLED
from .mesh import TriangleMesh

if NUMBA_ENABLED:
    from numba import njit, prange
else:  # identity decorators so the kernel source stays importable
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

    prange = range


# ---------------------------------------------------------------------------
# scalar kernel (numba path)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _closest_on_tri(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Closest point to p on triangle abc (Ericson's region method)."""
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        t = d1 / (d1 - d3)
        return ax + t * abx, ay + t * aby, az + t * abz
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        t = d2 / (d2 - d6)
        return ax + t * acx, ay + t * acy, az + t * acz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return (bx + t * (cx - bx), by + t * (cy - by), bz + t * (cz - bz))
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return (ax + abx * v + acx * w, ay + aby * v + acy * w, az + abz * v + acz * w)


@njit(cache=True)
def _build_grid(tri_lo, tri_hi, origin, cell, dims):
    nx, ny, nz = dims[0], dims[1], dims[2]
    ncell = nx * ny * nz
    nf = tri_lo.shape[0]
    counts = np.zeros(ncell + 1, dtype=np.int64)
    for t in range(nf):
        i0 = int((tri_lo[t, 0] - origin[0]) / cell)
        j0 = int((tri_lo[t, 1] - origin[1]) / cell)
        k0 = int((tri_lo[t, 2] - origin[2]) / cell)
        i1 = int((tri_hi[t, 0] - origin[0]) / cell)
        j1 = int((tri_hi[t, 1] - origin[1]) / cell)
        k1 = int((tri_hi[t, 2] - origin[2]) / cell)
        i0 = max(0, min(i0, nx - 1)); i1 = max(0, min(i1, nx - 1))
        j0 = max(0, min(j0, ny - 1)); j1 = max(0, min(j1, ny - 1))
        k0 = max(0, min(k0, nz - 1)); k1 = max(0, min(k1, nz - 1))
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                for k in range(k0, k1 + 1):
                    counts[(i * ny + j) * nz + k + 1] += 1
    starts = np.cumsum(counts)
    items = np.empty(starts[-1], dtype=np.int64)
    fill = starts[:-1].copy()
    for t in range(nf):
        i0 = int((tri_lo[t, 0] - origin[0]) / cell)
        j0 = int((tri_lo[t, 1] - origin[1]) / cell)
        k0 = int((tri_lo[t, 2] - origin[2]) / cell)
        i1 = int((tri_hi[t, 0] - origin[0]) / cell)
        j1 = int((tri_hi[t, 1] - origin[1]) / cell)
        k1 = int((tri_hi[t, 2] - origin[2]) / cell)
        i0 = max(0, min(i0, nx - 1)); i1 = max(0, min(i1, nx - 1))
        j0 = max(0, min(j0, ny - 1)); j1 = max(0, min(j1, ny - 1))
        k0 = max(0, min(k0, nz - 1)); k1 = max(0, min(k1, nz - 1))
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                for k in range(k0, k1 + 1):
                    c = (i * ny + j) * nz + k
                    items[fill[c]] = t
                    fill[c] += 1
    return starts[:-1], starts[1:], items


@njit(cache=True, parallel=True)
def _query_grid(points, tris, starts, ends, items, origin, cell, dims):
    nx, ny, nz = dims[0], dims[1], dims[2]
    npts = points.shape[0]
    out_d = np.empty(npts, dtype=np.float64)
    out_p = np.empty((npts, 3), dtype=np.float64)
    out_t = np.empty(npts, dtype=np.int64)
    max_ring = nx
    if ny > max_ring:
        max_ring = ny
    if nz > max_ring:
        max_ring = nz
    for q in prange(npts):
        px, py, pz = points[q, 0], points[q, 1], points[q, 2]
        ci = int((px - origin[0]) / cell)
        cj = int((py - origin[1]) / cell)
        ck = int((pz - origin[2]) / cell)
        ci = max(0, min(ci, nx - 1))
        cj = max(0, min(cj, ny - 1))
        ck = max(0, min(ck, nz - 1))
        best = 1e300
        bt = -1
        bx = by = bz = 0.0
        for ring in range(max_ring + 1):
            if bt >= 0 and best <= ((ring - 1) * cell) ** 2 and ring >= 1:
                break
            i0, i1 = max(0, ci - ring), min(nx - 1, ci + ring)
            j0, j1 = max(0, cj - ring), min(ny - 1, cj + ring)
            k0, k1 = max(0, ck - ring), min(nz - 1, ck + ring)
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    for k in range(k0, k1 + 1):
                        # only the shell of this ring
                        if ring > 0 and (
                            abs(i - ci) != ring
                            and abs(j - cj) != ring
                            and abs(k - ck) != ring
                        ):
                            continue
                        c = (i * ny + j) * nz + k
                        for idx in range(starts[c], ends[c]):
                            t = items[idx]
                            qx, qy, qz = _closest_on_tri(
                                px, py, pz,
                                tris[t, 0, 0], tris[t, 0, 1], tris[t, 0, 2],
                                tris[t, 1, 0], tris[t, 1, 1], tris[t, 1, 2],
                                tris[t, 2, 0], tris[t, 2, 1], tris[t, 2, 2],
                            )
                            d2 = (px - qx) ** 2 + (py - qy) ** 2 + (pz - qz) ** 2
                            if d2 < best:
                                best = d2
                                bt = t
                                bx, by, bz = qx, qy, qz
        out_d[q] = np.sqrt(best)
        out_p[q, 0], out_p[q, 1], out_p[q, 2] = bx, by, bz
        out_t[q] = bt
    return out_d, out_p, out_t


class _GridIndex:
    """Uniform grid over triangle AABBs for the numba query kernel."""

    def __init__(self, mesh: TriangleMesh):
        v, f = mesh.vertices, mesh.faces
        self.tris = np.ascontiguousarray(v[f])  # (F, 3, 3)
        tri_lo = self.tris.min(axis=1)
        tri_hi = self.tris.max(axis=1)
        lo = tri_lo.min(axis=0)
        hi = tri_hi.max(axis=0)
        extent = hi - lo
        diag = float(np.linalg.norm(extent))
        # aim for a few triangles per cell
        target = max(1.0, len(f) ** (1.0 / 3.0))
        cell = max(float(extent.max()) / target, 1e-12 * max(diag, 1.0))
        avg_edge = float(np.mean(tri_hi - tri_lo))
        cell = max(cell, 2.0 * avg_edge if avg_edge > 0 else cell)
        dims = np.maximum(1, np.ceil(extent / cell).astype(np.int64))
        self.origin = lo.astype(np.float64)
        self.cell = float(cell)
        self.dims = dims
        starts, ends, items = _build_grid(
            tri_lo, tri_hi, self.origin, self.cell, dims
        )
        self.starts, self.ends, self.items = starts, ends, items

    def query(self, points: np.ndarray):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        return _query_grid(
            pts, self.tris, self.starts, self.ends, self.items,
            self.origin, self.cell, self.dims,
        )


# ---------------------------------------------------------------------------
# numpy fallback: KD-tree candidate pruning + vectorized exact distances
# ---------------------------------------------------------------------------

def _closest_on_tri_batch(p: np.ndarray, a, b, c):
    """Vectorized closest point on triangles; all inputs (M, 3)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4
    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    m = (d1 <= 0) & (d2 <= 0)
    out[m] = a[m]
    done |= m
    m = ~done & (d3 >= 0) & (d4 <= d3)
    out[m] = b[m]
    done |= m
    m = ~done & (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    t = np.where(d1 - d3 != 0, d1 / np.where(d1 - d3 == 0, 1, d1 - d3), 0.0)
    out[m] = a[m] + t[m, None] * ab[m]
    done |= m
    m = ~done & (d6 >= 0) & (d5 <= d6)
    out[m] = c[m]
    done |= m
    m = ~done & (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    t = np.where(d2 - d6 != 0, d2 / np.where(d2 - d6 == 0, 1, d2 - d6), 0.0)
    out[m] = a[m] + t[m, None] * ac[m]
    done |= m
    m = ~done & (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    denom = (d4 - d3) + (d5 - d6)
    t = np.where(denom != 0, (d4 - d3) / np.where(denom == 0, 1, denom), 0.0)
    out[m] = b[m] + t[m, None] * (c[m] - b[m])
    done |= m
    m = ~done
    denom = va + vb + vc
    denom = np.where(denom == 0, 1.0, denom)
    v = vb / denom
    w = vc / denom
    out[m] = a[m] + v[m, None] * ab[m] + w[m, None] * ac[m]
    return out


class _KDTreeIndex:
    """Fallback index: candidate triangles from KD-trees, then exact test."""

    def __init__(self, mesh: TriangleMesh):
        from scipy.spatial import cKDTree

        v, f = mesh.vertices, mesh.faces
        self.tris = v[f]
        self.centroids = self.tris.mean(axis=1)
        self.radii = np.linalg.norm(
            self.tris - self.centroids[:, None, :], axis=2
        ).max(axis=1)
        self.r_max = float(self.radii.max())
        self.vtree = cKDTree(v)
        self.ctree = cKDTree(self.centroids)

    def query(self, points: np.ndarray):
        pts = np.asarray(points, dtype=np.float64)
        d_ub, _ = self.vtree.query(pts)
        pad = self.r_max + 1e-12 * (1.0 + self.r_max)
        out_d = np.empty(len(pts))
        out_p = np.empty((len(pts), 3))
        out_t = np.empty(len(pts), dtype=np.int64)
        groups = self.ctree.query_ball_point(pts, d_ub + pad)
        for i, cand in enumerate(groups):
            cand = np.asarray(cand, dtype=np.int64)
            if len(cand) == 0:  # numerical corner: fall back to all faces
                cand = np.arange(len(self.tris))
            t = self.tris[cand]
            p = np.broadcast_to(pts[i], (len(cand), 3))
            cp = _closest_on_tri_batch(p, t[:, 0], t[:, 1], t[:, 2])
            d2 = np.einsum("ij,ij->i", cp - pts[i], cp - pts[i])
            j = int(np.argmin(d2))
            out_d[i] = np.sqrt(d2[j])
            out_p[i] = cp[j]
            out_t[i] = cand[j]
        return out_d, out_p, out_t


class SurfaceIndex:
    """Spatial index answering exact closest-point-on-surface queries."""

    def __init__(self, mesh: TriangleMesh):
        self.mesh = mesh
        self._impl = _GridIndex(mesh) if NUMBA_ENABLED else _KDTreeIndex(mesh)

    def query(self, points: np.ndarray):
        """Return (distances, closest_points, triangle_ids) for query points."""
        return self._impl.query(np.atleast_2d(points))


def deviation_map(x: TriangleMesh, y: TriangleMesh, index: SurfaceIndex | None = None) -> np.ndarray:
    """Distance from each vertex of x to the nearest point on the surface of y."""
    idx = index if index is not None else SurfaceIndex(y)
    d, _, _ = idx.query(x.vertices)
    return d
