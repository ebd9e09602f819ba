"""Triangle mesh container, file IO, validation/repair and geometric metrics."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshError(Exception):
    """Raised for malformed files or invariant violations."""


class NonManifoldError(MeshError):
    def __init__(self, edges):
        self.edges = list(edges)
        super().__init__(
            f"non-manifold mesh: {len(self.edges)} edge(s) shared by >2 faces, "
            f"first offenders {self.edges[:10]}"
        )


@dataclass(frozen=True)
class TriangleMesh:
    """Immutable triangle mesh: N x 3 float vertices, F x 3 int faces (CCW)."""

    vertices: np.ndarray
    faces: np.ndarray
    attribute: np.ndarray | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must be Nx3, got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError(f"faces must be Fx3, got {f.shape}")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if self.attribute is not None:
            a = np.ascontiguousarray(np.asarray(self.attribute, dtype=np.float64))
            if a.shape != (len(v),):
                raise MeshError("attribute length must equal vertex count")
            a.setflags(write=False)
            object.__setattr__(self, "attribute", a)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def bbox_diag(self) -> float:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def face_areas(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        e1 = v[f[:, 1]] - v[f[:, 0]]
        e2 = v[f[:, 2]] - v[f[:, 0]]
        return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum())

    def edges(self, unique: bool = True) -> np.ndarray:
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e = np.sort(e, axis=1)
        if unique:
            e = np.unique(e, axis=0)
        return e

    def boundary_vertices(self) -> np.ndarray:
        """Vertices incident to an edge with exactly one adjacent face."""
        e = self.edges(unique=False)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return np.unique(uniq[counts == 1])

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals (unit where nonzero)."""
        v, f = self.vertices, self.faces
        fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        n = np.zeros_like(v)
        for k in range(3):
            np.add.at(n, f[:, k], fn)
        norms = np.linalg.norm(n, axis=1)
        norms[norms == 0] = 1.0
        return n / norms[:, None]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.vertices.tobytes())
        h.update(self.faces.tobytes())
        return h.hexdigest()

    def validate(self) -> None:
        """Check all structural invariants; raise MeshError on violation."""
        n, f = self.n_vertices, self.faces
        if n < 3:
            raise MeshError(f"vertex count {n} < 3")
        if len(f) < 1:
            raise MeshError("mesh has no faces")
        if f.min(initial=0) < 0 or f.max(initial=0) >= n:
            bad = np.where((f < 0) | (f >= n))[0]
            raise MeshError(f"face index out of range in faces {bad[:10].tolist()}")
        same = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if same.any():
            raise MeshError(f"degenerate faces (repeated index): {np.where(same)[0][:10].tolist()}")
        tol = 1e-12 * self.bbox_diag() ** 2
        areas = self.face_areas()
        if (areas <= tol).any():
            raise MeshError(
                f"zero-area faces below tolerance: {np.where(areas <= tol)[0][:10].tolist()}"
            )
        e = self.edges(unique=False)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        if (counts > 2).any():
            raise NonManifoldError([tuple(x) for x in uniq[counts > 2]])


def aspect_ratios(mesh: TriangleMesh) -> np.ndarray:
    """Per-face ratio of longest to shortest edge length (1 = equilateral)."""
    v, f = mesh.vertices, mesh.faces
    l0 = np.linalg.norm(v[f[:, 1]] - v[f[:, 0]], axis=1)
    l1 = np.linalg.norm(v[f[:, 2]] - v[f[:, 1]], axis=1)
    l2 = np.linalg.norm(v[f[:, 0]] - v[f[:, 2]], axis=1)
    ls = np.stack([l0, l1, l2])
    return ls.max(axis=0) / ls.min(axis=0)


def connected_components(mesh: TriangleMesh) -> list[np.ndarray]:
    """Partition vertex indices by face-adjacency reachability."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components as cc

    e = mesh.edges()
    n = mesh.n_vertices
    adj = coo_matrix(
        (np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)
    )
    ncomp, labels = cc(adj, directed=False)
    return [np.where(labels == i)[0] for i in range(ncomp)]


@dataclass
class RepairPolicy:
    merge_tolerance_rel: float = 1e-9
    keep_largest_component: bool = True
    crop_bbox: tuple | None = None  # ((xmin,ymin,zmin), (xmax,ymax,zmax))


@dataclass
class RepairReport:
    vertices_merged: int = 0
    degenerate_faces_removed: int = 0
    duplicate_faces_removed: int = 0
    components_removed: int = 0
    unreferenced_vertices_removed: int = 0
    faces_cropped: int = 0

    def is_empty(self) -> bool:
        return not any(vars(self).values())

    def as_dict(self) -> dict:
        return dict(vars(self))


def validate_and_repair(
    mesh: TriangleMesh, policy: RepairPolicy | None = None
) -> tuple[TriangleMesh, RepairReport]:
    """Clean a parsed mesh: merge duplicates, drop degenerates, prune islands."""
    policy = policy or RepairPolicy()
    report = RepairReport()
    v = np.asarray(mesh.vertices, dtype=np.float64)
    f = np.asarray(mesh.faces, dtype=np.int64)

    if policy.crop_bbox is not None:
        lo, hi = (np.asarray(x, dtype=np.float64) for x in policy.crop_bbox)
        inside = np.all((v >= lo) & (v <= hi), axis=1)
        keep = inside[f].all(axis=1)
        report.faces_cropped = int((~keep).sum())
        f = f[keep]

    diag = float(np.linalg.norm(v.max(axis=0) - v.min(axis=0))) if len(v) else 0.0
    tol = policy.merge_tolerance_rel * diag

    # duplicate-vertex merge on a quantized grid
    if tol > 0 and len(v):
        keys = np.round(v / tol).astype(np.int64)
        _, first_idx, inverse = np.unique(
            keys, axis=0, return_index=True, return_inverse=True
        )
        if len(first_idx) < len(v):
            report.vertices_merged = len(v) - len(first_idx)
            v = v[np.sort(first_idx)]
            order = np.argsort(first_idx)
            remap = np.empty(len(first_idx), dtype=np.int64)
            remap[order] = np.arange(len(first_idx))
            f = remap[inverse][f]

    # degenerate faces: repeated indices or area below tolerance
    if len(f):
        same = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        e1 = v[f[:, 1]] - v[f[:, 0]]
        e2 = v[f[:, 2]] - v[f[:, 0]]
        areas = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
        bad = same | (areas <= 1e-12 * diag**2)
        report.degenerate_faces_removed = int(bad.sum())
        f = f[~bad]

    # duplicate faces (same vertex set)
    if len(f):
        key = np.sort(f, axis=1)
        _, idx = np.unique(key, axis=0, return_index=True)
        if len(idx) < len(f):
            report.duplicate_faces_removed = len(f) - len(idx)
            f = f[np.sort(idx)]

    if policy.keep_largest_component and len(f):
        tmp = TriangleMesh(v, f)
        comps = connected_components_of_faces(tmp)
        if len(comps) > 1:
            sizes = [len(np.unique(f[c])) for c in comps]
            best = int(np.argmax(sizes))
            report.components_removed = len(comps) - 1
            f = f[comps[best]]

    # unreferenced vertices
    used = np.zeros(len(v), dtype=bool)
    if len(f):
        used[f.ravel()] = True
    if not used.all():
        report.unreferenced_vertices_removed = int((~used).sum())
        remap = np.cumsum(used) - 1
        v = v[used]
        f = remap[f]

    if len(v) < 3 or len(f) < 1:
        raise MeshError("repair left fewer than 3 vertices or no faces")
    out = TriangleMesh(v, f)
    return out, report


def connected_components_of_faces(mesh: TriangleMesh) -> list[np.ndarray]:
    """Face index groups, one per vertex-connected component."""
    comps = connected_components(mesh)
    label = np.empty(mesh.n_vertices, dtype=np.int64)
    for i, c in enumerate(comps):
        label[c] = i
    face_label = label[mesh.faces[:, 0]]
    return [np.where(face_label == i)[0] for i in range(len(comps))]


def submesh(mesh: TriangleMesh, face_indices: np.ndarray) -> tuple[TriangleMesh, np.ndarray]:
    """Extract faces, re-indexing vertices. Returns (mesh, original vertex ids)."""
    f = mesh.faces[np.asarray(face_indices, dtype=np.int64)]
    used = np.unique(f)
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriangleMesh(mesh.vertices[used], remap[f]), used


# ---------------------------------------------------------------------------
# File IO
# ---------------------------------------------------------------------------

FORMATS = ("off", "ply", "obj", "stl")


def _detect_format(path: Path) -> str:
    ext = path.suffix.lower().lstrip(".")
    if ext not in FORMATS:
        raise MeshError(f"cannot infer mesh format from extension {path.suffix!r}")
    return ext


def load_mesh(path, fmt: str | None = None, validate: bool = True) -> TriangleMesh:
    path = Path(path)
    if not path.exists():
        raise MeshError(f"no such file: {path}")
    fmt = (fmt or _detect_format(path)).lower()
    if fmt == "off":
        mesh = _load_off(path)
    elif fmt == "ply":
        mesh = _load_ply(path)
    elif fmt == "obj":
        mesh = _load_obj(path)
    elif fmt == "stl":
        mesh = _load_stl(path)
    else:
        raise MeshError(f"unsupported format {fmt!r}")
    if validate:
        mesh.validate()
    return mesh


def save_mesh(mesh: TriangleMesh, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = (fmt or _detect_format(path)).lower()
    if fmt == "off":
        _save_off(mesh, path)
    elif fmt == "ply":
        _save_ply(mesh, path)
    elif fmt == "obj":
        _save_obj(mesh, path)
    elif fmt == "stl":
        _save_stl(mesh, path)
    else:
        raise MeshError(f"unsupported format {fmt!r}")


def _tokens(path: Path):
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                yield from line.split()


def _load_off(path: Path) -> TriangleMesh:
    tok = _tokens(path)
    try:
        magic = next(tok)
        if magic.upper() != "OFF":
            raise MeshError(f"{path}: missing OFF header (got {magic!r})")
        nv, nf, _ne = int(next(tok)), int(next(tok)), int(next(tok))
        verts = np.fromiter(
            (float(next(tok)) for _ in range(3 * nv)), dtype=np.float64, count=3 * nv
        ).reshape(nv, 3)
        faces = []
        for _ in range(nf):
            cnt = int(next(tok))
            idx = [int(next(tok)) for _ in range(cnt)]
            if cnt == 3:
                faces.append(idx)
            elif cnt > 3:  # fan-triangulate
                faces.extend([idx[0], idx[i], idx[i + 1]] for i in range(1, cnt - 1))
            else:
                raise MeshError(f"{path}: face with {cnt} vertices")
    except (StopIteration, ValueError) as exc:
        raise MeshError(f"{path}: malformed OFF file ({exc})") from exc
    return TriangleMesh(verts, np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def _save_off(mesh: TriangleMesh, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_faces} 0\n")
        for x, y, z in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        for a, b, c in mesh.faces:
            fh.write(f"3 {a} {b} {c}\n")


def _load_obj(path: Path) -> TriangleMesh:
    verts, faces = [], []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshError(f"{path}:{ln}: short vertex record")
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                if len(idx) < 3:
                    raise MeshError(f"{path}:{ln}: face with <3 vertices")
                for i in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[i], idx[i + 1]])
    if not verts or not faces:
        raise MeshError(f"{path}: empty OBJ mesh")
    return TriangleMesh(np.asarray(verts), np.asarray(faces, dtype=np.int64))


def _save_obj(mesh: TriangleMesh, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
        for a, b, c in mesh.faces:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _load_ply(path: Path) -> TriangleMesh:
    with open(path, "rb") as fh:
        header = []
        while True:
            line = fh.readline()
            if not line:
                raise MeshError(f"{path}: truncated PLY header")
            header.append(line.decode("ascii", errors="replace").strip())
            if header[-1] == "end_header":
                break
        if not header or header[0] != "ply":
            raise MeshError(f"{path}: not a PLY file")
        fmt_lines = [h for h in header if h.startswith("format")]
        if not fmt_lines:
            raise MeshError(f"{path}: PLY missing format line")
        fmt = fmt_lines[0].split()[1]
        if fmt not in ("ascii", "binary_little_endian"):
            raise MeshError(f"{path}: unsupported PLY format {fmt!r}")

        elements = []  # (name, count, [(proptype, name) | ('list', ctype, itype, name)])
        cur = None
        for h in header:
            parts = h.split()
            if parts[0] == "element":
                cur = (parts[1], int(parts[2]), [])
                elements.append(cur)
            elif parts[0] == "property" and cur is not None:
                if parts[1] == "list":
                    cur[2].append(("list", parts[2], parts[3], parts[4]))
                else:
                    cur[2].append((parts[1], parts[2]))

        verts = faces = quality = None
        if fmt == "ascii":
            data = fh.read().decode("ascii", errors="replace").split()
            pos = 0
            for name, count, props in elements:
                if name == "vertex":
                    width = len(props)
                    arr = np.asarray(
                        data[pos:pos + count * width], dtype=np.float64
                    ).reshape(count, width)
                    pos += count * width
                    names = [p[-1] for p in props]
                    try:
                        cols = [names.index(c) for c in ("x", "y", "z")]
                    except ValueError as exc:
                        raise MeshError(f"{path}: PLY vertex lacks x/y/z") from exc
                    verts = arr[:, cols]
                    if "quality" in names:
                        quality = arr[:, names.index("quality")]
                elif name == "face":
                    faces = []
                    for _ in range(count):
                        cnt = int(data[pos]); pos += 1
                        idx = [int(x) for x in data[pos:pos + cnt]]; pos += cnt
                        for i in range(1, cnt - 1):
                            faces.append([idx[0], idx[i], idx[i + 1]])
                    faces = np.asarray(faces, dtype=np.int64)
                else:
                    width = len(props)
                    pos += count * width  # skip unknown fixed-width element
        else:
            for name, count, props in elements:
                if name == "vertex":
                    dt = np.dtype([(p[-1], "<" + _PLY_TYPES[p[0]]) for p in props])
                    raw = np.frombuffer(fh.read(dt.itemsize * count), dtype=dt)
                    verts = np.stack(
                        [raw["x"], raw["y"], raw["z"]], axis=1
                    ).astype(np.float64)
                    if "quality" in raw.dtype.names:
                        quality = raw["quality"].astype(np.float64)
                elif name == "face":
                    faces = []
                    (kind, ctype, itype, _pname) = props[0]
                    assert kind == "list"
                    cdt = np.dtype("<" + _PLY_TYPES[ctype])
                    idt = np.dtype("<" + _PLY_TYPES[itype])
                    for _ in range(count):
                        cnt = int(np.frombuffer(fh.read(cdt.itemsize), dtype=cdt)[0])
                        idx = np.frombuffer(fh.read(idt.itemsize * cnt), dtype=idt)
                        for i in range(1, cnt - 1):
                            faces.append([int(idx[0]), int(idx[i]), int(idx[i + 1])])
                    faces = np.asarray(faces, dtype=np.int64)
        if verts is None or faces is None or len(faces) == 0:
            raise MeshError(f"{path}: PLY missing vertex or face element")
    return TriangleMesh(verts, faces, attribute=quality)


def _save_ply(mesh: TriangleMesh, path: Path, colormap: bool = False) -> None:
    has_q = mesh.attribute is not None
    with open(path, "wb") as fh:
        lines = ["ply", "format ascii 1.0", f"element vertex {mesh.n_vertices}",
                 "property double x", "property double y", "property double z"]
        if has_q:
            lines.append("property float quality")
            if colormap:
                lines += ["property uchar red", "property uchar green",
                          "property uchar blue"]
        lines += [f"element face {mesh.n_faces}",
                  "property list uchar int vertex_indices", "end_header"]
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        if has_q:
            q = mesh.attribute
            rng = q.max() - q.min()
            t = (q - q.min()) / rng if rng > 0 else np.zeros_like(q)
            # dark = low deviation, light = high deviation
            rgb = np.clip(np.round(255 * t), 0, 255).astype(int)
            for i, (x, y, z) in enumerate(mesh.vertices):
                row = f"{x:.17g} {y:.17g} {z:.17g} {q[i]:.9g}"
                if colormap:
                    row += f" {rgb[i]} {rgb[i]} {rgb[i] // 2 + 128}"
                fh.write((row + "\n").encode("ascii"))
        else:
            for x, y, z in mesh.vertices:
                fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n".encode("ascii"))
        for a, b, c in mesh.faces:
            fh.write(f"3 {a} {b} {c}\n".encode("ascii"))


def save_deviation_ply(mesh: TriangleMesh, deviations: np.ndarray, path) -> None:
    """Write mesh + per-vertex 'quality' deviations with an 8-bit colormap."""
    m = TriangleMesh(mesh.vertices, mesh.faces, attribute=np.asarray(deviations))
    _save_ply(m, Path(path), colormap=True)


def _load_stl(path: Path) -> TriangleMesh:
    with open(path, "rb") as fh:
        head = fh.read(80)
        if len(head) < 80:
            raise MeshError(f"{path}: truncated STL header")
        (ntri,) = struct.unpack("<I", fh.read(4))
        body = fh.read(50 * ntri)
        if len(body) < 50 * ntri:
            raise MeshError(f"{path}: truncated STL body")
    rec = np.frombuffer(body, dtype=np.dtype(
        [("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")]
    ))
    tri = rec["v"].reshape(-1, 3).astype(np.float64)
    # merge coincident vertices by exact coordinate match
    uniq, inverse = np.unique(tri, axis=0, return_inverse=True)
    faces = inverse.reshape(-1, 3).astype(np.int64)
    return TriangleMesh(uniq, faces)


def _save_stl(mesh: TriangleMesh, path: Path) -> None:
    v, f = mesh.vertices, mesh.faces
    n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    lens = np.linalg.norm(n, axis=1)
    lens[lens == 0] = 1.0
    n = (n / lens[:, None]).astype(np.float32)
    with open(path, "wb") as fh:
        fh.write(b"\0" * 80)
        fh.write(struct.pack("<I", len(f)))
        tri = v[f].astype(np.float32)
        for i in range(len(f)):
            fh.write(n[i].tobytes())
            fh.write(tri[i].tobytes())
            fh.write(struct.pack("<H", 0))
