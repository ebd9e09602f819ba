"""Pick the monitored spectrum length k via coordinate reconstruction.

Eigenvectors are orthonormalized, the vertex coordinate matrix is projected
onto the leading k of them, and the Frobenius distance to the original
coordinates is traced over k; the curve's elbow gives the selected k.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ScreeCurve:
    k_values: np.ndarray
    distances: np.ndarray
    selected_k: int
    reference: str = "cad"  # or "first-in-control"

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("k,frobenius_distance,selected\n")
            for k, d in zip(self.k_values, self.distances):
                fh.write(f"{k},{d:.17g},{1 if k == self.selected_k else 0}\n")


def orthonormal_basis(eigenvectors: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Modified Gram-Schmidt; rank-deficient columns are dropped with a warning."""
    V = np.array(eigenvectors, dtype=np.float64)
    n, k = V.shape
    cols = []
    for j in range(k):
        u = V[:, j].copy()
        for c in cols:
            u -= (c @ u) * c
        # second pass for numerical orthogonality
        for c in cols:
            u -= (c @ u) * c
        norm = np.linalg.norm(u)
        if norm <= tol * max(1.0, np.linalg.norm(V[:, j])):
            warnings.warn(f"dropping rank-deficient eigenvector column {j}")
            continue
        cols.append(u / norm)
    return np.stack(cols, axis=1)


def reconstruct(P0: np.ndarray, U_k: np.ndarray) -> np.ndarray:
    """Project coordinates onto span(U_k): P_k = U_k U_k^T P0."""
    P0 = np.asarray(P0, dtype=np.float64)
    return U_k @ (U_k.T @ P0)


def frobenius_distance(P_k: np.ndarray, P0: np.ndarray) -> float:
    D = np.asarray(P_k, dtype=np.float64) - np.asarray(P0, dtype=np.float64)
    return float(np.linalg.norm(D, "fro"))


def scree_curve(P0: np.ndarray, eigenvectors: np.ndarray, k_values=None) -> ScreeCurve:
    """Distance curve over nested leading-eigenvector subspaces."""
    U = orthonormal_basis(eigenvectors)
    kmax = U.shape[1]
    if k_values is None:
        k_values = np.arange(2, kmax + 1)
    k_values = np.asarray(k_values, dtype=np.int64)
    # incremental projection: coefficients per column, subtract cumulatively
    coef = U.T @ P0  # (kmax, 3)
    res2 = float(np.sum(P0 * P0)) - np.cumsum(np.sum(coef**2, axis=1))
    dists = np.sqrt(np.maximum(res2[k_values - 1], 0.0))
    sel = select_k(dists, int(k_values[-1]), k_values=k_values)
    return ScreeCurve(k_values, dists, sel)


def select_k(distances, k_max: int, k_values=None, window: int = 5, frac: float = 0.02) -> int:
    """Smallest k whose forward drop over the next `window` points is under
    `frac` of the total drop; clamped to [2, k_max]."""
    d = np.asarray(distances, dtype=np.float64)
    if len(d) < 8:
        raise ValueError("need at least 8 curve points to locate an elbow")
    if np.any(d[1:] > d[:-1] + 1e-10 * max(d.max(), 1.0)):
        raise ValueError("distance curve must be non-increasing")
    if k_values is None:
        k_values = np.arange(2, 2 + len(d))
    k_values = np.asarray(k_values, dtype=np.int64)
    total_drop = d[0] - d.min()
    if total_drop <= 0:
        return 2
    for i in range(len(d)):
        j = min(i + window, len(d) - 1)
        if (d[i] - d[j]) < frac * total_drop:
            return int(np.clip(k_values[i], 2, k_max))
    return int(np.clip(k_values[-1], 2, k_max))
