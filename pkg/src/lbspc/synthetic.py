"""Deterministic generators of test geometry and spectra streams."""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh


def icosahedron(radius: float = 1.0) -> TriangleMesh:
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts *= radius / np.linalg.norm(verts[0])
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return TriangleMesh(verts, faces)


def icosphere(subdivisions: int, radius: float = 1.0) -> TriangleMesh:
    """Subdivided icosahedron projected onto the sphere; N = 10*4^s + 2."""
    if not (0 <= subdivisions <= 7):
        raise ValueError("subdivisions must be in [0, 7]")
    mesh = icosahedron(radius)
    verts = [tuple(p) for p in mesh.vertices]
    faces = mesh.faces.tolist()
    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}
        new_faces = []

        def mid(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in midpoint:
                p = np.asarray(verts[i]) + np.asarray(verts[j])
                p *= radius / np.linalg.norm(p)
                midpoint[key] = len(verts)
                verts.append(tuple(p))
            return midpoint[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    v = np.asarray(verts, dtype=np.float64)
    v *= radius / np.linalg.norm(v, axis=1)[:, None]
    return TriangleMesh(v, np.asarray(faces, dtype=np.int64))


def add_noise(mesh: TriangleMesh, sigma: float, seed: int) -> TriangleMesh:
    """Perturb every coordinate with i.i.d. N(0, sigma^2) noise."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return mesh
    rng = np.random.default_rng(seed)
    v = mesh.vertices + rng.normal(0.0, sigma, size=mesh.vertices.shape)
    return TriangleMesh(v, mesh.faces)


def add_bump(
    mesh: TriangleMesh, center, radius: float, height: float
) -> TriangleMesh:
    """Displace vertices near center along their normals with a cosine taper."""
    center = np.asarray(center, dtype=np.float64)
    d = np.linalg.norm(mesh.vertices - center, axis=1)
    if (d < radius).all():
        raise ValueError("bump radius covers the whole mesh")
    if height == 0:
        return mesh
    normals = mesh.vertex_normals()
    amp = np.where(d < radius, height * (1.0 + np.cos(np.pi * d / radius)) / 2.0, 0.0)
    return TriangleMesh(mesh.vertices + amp[:, None] * normals, mesh.faces)


def bump_vertex_mask(mesh: TriangleMesh, center, radius: float) -> np.ndarray:
    """Vertices a bump at (center, radius) would displace."""
    center = np.asarray(center, dtype=np.float64)
    return np.linalg.norm(mesh.vertices - center, axis=1) < radius


def punctured_icosphere(
    subdivisions: int, radius: float = 1.0, hole_axis=(0.0, 0.0, -1.0),
    hole_cos: float = 0.9,
) -> TriangleMesh:
    """Icosphere with a cap removed, leaving an open boundary."""
    sph = icosphere(subdivisions, radius)
    axis = np.asarray(hole_axis, dtype=np.float64)
    axis /= np.linalg.norm(axis)
    proj = (sph.vertices / radius) @ axis
    keep_face = ~(proj[sph.faces] > hole_cos).all(axis=1)
    from .mesh import submesh

    out, _ = submesh(sph, np.where(keep_face)[0])
    return out


def spectra_stream(
    p: int, m: int, shift_time: int | None, shift_vector, seed: int
) -> np.ndarray:
    """i.i.d. standard-normal rows with a sustained mean shift from shift_time.

    shift_time is 1-based; rows shift_time..m receive shift_vector.
    """
    if p < 1 or m < 1:
        raise ValueError("p and m must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((m, p))
    if shift_time is not None:
        if shift_time > m:
            raise ValueError("shift_time exceeds stream length")
        shift = np.zeros(p) if shift_vector is None else np.asarray(shift_vector, dtype=np.float64)
        x[shift_time - 1:] += shift
    return x
