"""Rigid registration (Procrustes + ICP) and post-alarm deviation maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TriangleMesh
from .proximity import SurfaceIndex, deviation_map


class RegistrationError(Exception):
    pass


class LocalMinimumWarning(RegistrationError):
    """ICP converged but the residual indicates a wrong basin; retry with
    correspondence seeding."""


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray  # 3x3, det +1
    translation: np.ndarray  # 3

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-8:
            raise ValueError("rotation not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-8:
            raise ValueError("rotation must have det +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: x -> self(other(x))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def to_flat(self) -> np.ndarray:
        """Row-major rotation followed by translation (12 reals)."""
        return np.concatenate([self.rotation.ravel(), self.translation])

    @staticmethod
    def from_flat(vals) -> "RigidTransform":
        vals = np.asarray(vals, dtype=np.float64).ravel()
        return RigidTransform(vals[:9].reshape(3, 3), vals[9:12])


def procrustes(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform mapping source points onto target points."""
    s = np.asarray(source, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    cs, ct = s.mean(axis=0), t.mean(axis=0)
    H = (s - cs).T @ (t - ct)
    U, _S, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    D = np.diag([1.0, 1.0, d])
    R = Vt.T @ D @ U.T
    return RigidTransform(R, ct - R @ cs)


def initial_align(correspondences: np.ndarray) -> RigidTransform:
    """Rigid transform from >= 3 (source xyz, target xyz) point pairs."""
    corr = np.atleast_2d(np.asarray(correspondences, dtype=np.float64))
    if corr.shape[0] < 3 or corr.shape[1] != 6:
        raise RegistrationError("need >= 3 correspondence pairs of 6 reals each")
    src, dst = corr[:, :3], corr[:, 3:]
    centered = src - src.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-10 * max(1.0, np.abs(src).max())) < 2:
        raise RegistrationError("source correspondence points are collinear")
    return procrustes(src, dst)


def load_correspondences(path) -> np.ndarray:
    """Text file, six reals per line: source xyz then target xyz."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 6:
                raise RegistrationError(f"{path}:{ln}: expected 6 reals per line")
            rows.append([float(x) for x in parts])
    return np.asarray(rows, dtype=np.float64)


def icp_register(
    source: TriangleMesh,
    target: TriangleMesh,
    init: RigidTransform | None = None,
    max_iter: int = 100,
    tol: float | None = None,
    failure_rms_rel: float = 0.2,
) -> tuple[RigidTransform, list[float]]:
    """Point-to-triangle ICP aligning source onto target.

    Returns (transform, rms_history). Raises LocalMinimumWarning when the
    final rms exceeds failure_rms_rel * bbox_diag, i.e. the iteration
    converged into the wrong basin and a correspondence-seeded retry is due.
    """
    transform = init or RigidTransform.identity()
    diag = target.bbox_diag()
    tol = tol if tol is not None else 1e-8 * diag
    index = SurfaceIndex(target)
    pts = source.vertices
    rms_history: list[float] = []
    prev = np.inf
    for _ in range(max_iter):
        moved = transform.apply(pts)
        d, closest, _ = index.query(moved)
        rms = float(np.sqrt(np.mean(d**2)))
        rms_history.append(rms)
        if prev - rms < tol:
            break
        prev = rms
        step = procrustes(moved, closest)
        transform = step.compose(transform)
    if rms_history and rms_history[-1] > failure_rms_rel * diag:
        raise LocalMinimumWarning(
            f"ICP rms {rms_history[-1]:.4g} > {failure_rms_rel} x bbox diagonal: "
            "probable local minimum; provide correspondence points and retry"
        )
    return transform, rms_history


def localize(
    cad: TriangleMesh, part: TriangleMesh, transform: RigidTransform
) -> np.ndarray:
    """Per-vertex deviation of the registered CAD surface from the part."""
    moved = TriangleMesh(transform.apply(cad.vertices), cad.faces)
    return deviation_map(moved, part)
