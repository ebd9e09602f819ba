"""Linear FEM Laplace-Beltrami operator: assembly and generalized eigensolve.

Stiffness uses the cotangent weights, mass the consistent linear-element
matrix, so eigenpairs of A phi = lambda B phi approximate the surface
Laplacian spectrum. Eigenvectors come out B-orthonormal.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import MeshError, TriangleMesh


class BoundaryCondition(str, Enum):
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"


class EigensolveError(Exception):
    pass


def assemble(mesh: TriangleMesh) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Cotangent stiffness A and consistent mass B for a triangle mesh."""
    v, f = mesh.vertices, mesh.faces
    n = mesh.n_vertices

    e0 = v[f[:, 2]] - v[f[:, 1]]  # edge opposite vertex 0
    e1 = v[f[:, 0]] - v[f[:, 2]]
    e2 = v[f[:, 1]] - v[f[:, 0]]
    areas = 0.5 * np.linalg.norm(np.cross(e2, -e1), axis=1)
    bad = np.where(areas <= 0)[0]
    if len(bad):
        raise MeshError(f"assembly refused: zero-area faces {bad[:10].tolist()}")

    # cot(angle at vertex k) = (e_i . e_j) / (2 * area), signs via opposite edges
    cot0 = np.einsum("ij,ij->i", -e1, e2) / (2.0 * areas)
    cot1 = np.einsum("ij,ij->i", -e2, e0) / (2.0 * areas)
    cot2 = np.einsum("ij,ij->i", -e0, e1) / (2.0 * areas)

    # off-diagonal -cot(opposite)/2 accumulated symmetrically, diagonal balances rows
    ii = np.concatenate([f[:, 1], f[:, 2], f[:, 2], f[:, 0], f[:, 0], f[:, 1]])
    jj = np.concatenate([f[:, 2], f[:, 1], f[:, 0], f[:, 2], f[:, 1], f[:, 0]])
    ww = np.concatenate([cot0, cot0, cot1, cot1, cot2, cot2]) * 0.5
    A = sp.coo_matrix((-ww, (ii, jj)), shape=(n, n)).tocsr()
    A = A - sp.diags(np.asarray(A.sum(axis=1)).ravel())

    # consistent mass: (area/12) * [[2,1,1],[1,2,1],[1,1,2]]
    mi = np.concatenate([f[:, 0], f[:, 1], f[:, 2],
                         f[:, 0], f[:, 1], f[:, 0],
                         f[:, 1], f[:, 2], f[:, 2]])
    mj = np.concatenate([f[:, 0], f[:, 1], f[:, 2],
                         f[:, 1], f[:, 0], f[:, 2],
                         f[:, 2], f[:, 1], f[:, 0]])
    diag = areas / 6.0
    off = areas / 12.0
    mv = np.concatenate([diag, diag, diag, off, off, off, off, off, off])
    B = sp.coo_matrix((mv, (mi, mj)), shape=(n, n)).tocsr()
    return A, B


@dataclass(frozen=True)
class LBSpectrum:
    """Lowest-k spectrum of the discrete Laplace-Beltrami operator."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    boundary_condition: BoundaryCondition
    mesh_fingerprint: str

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    def count_near_zero(self, eps_rel: float = 1e-6) -> int:
        """Eigenvalues below eps_rel * lambda_2 (connected-component count)."""
        if self.k < 2:
            return int(self.eigenvalues[0] < 1e-12)
        eps = eps_rel * abs(self.eigenvalues[1])
        return int(np.sum(self.eigenvalues < max(eps, 1e-300)))


def _sign_normalize(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def solve_lowest(
    A: sp.spmatrix,
    B: sp.spmatrix,
    k: int,
    bc: BoundaryCondition = BoundaryCondition.NEUMANN,
    boundary: np.ndarray | None = None,
    mesh_fingerprint: str = "",
    seed: int = 0,
    tol: float = 0.0,  # machine precision: looser tolerances can drop
    # members of the tight eigenvalue clusters produced by symmetric shapes
) -> LBSpectrum:
    """k smallest eigenpairs of A phi = lambda B phi via shift-invert Lanczos."""
    n = A.shape[0]
    bc = BoundaryCondition(bc)
    if bc is BoundaryCondition.DIRICHLET:
        if boundary is None or len(boundary) == 0:
            raise EigensolveError("Dirichlet requires a nonempty boundary vertex set")
        keep = np.setdiff1d(np.arange(n), np.asarray(boundary, dtype=np.int64))
        Ar = A[keep][:, keep].tocsc()
        Br = B[keep][:, keep].tocsc()
        vals, vecs_r = _solve_core(Ar, Br, k, seed, tol)
        vecs = np.zeros((n, k))
        vecs[keep] = vecs_r
    else:
        vals, vecs = _solve_core(A.tocsc(), B.tocsc(), k, seed, tol)

    order = np.argsort(vals)
    vals = vals[order]
    vecs = _sign_normalize(vecs[:, order])
    return LBSpectrum(vals, vecs, bc, mesh_fingerprint)


def _solve_core(A, B, k, seed, tol):
    n = A.shape[0]
    if k >= n:
        raise EigensolveError(f"k={k} must be < matrix dimension {n}")
    sigma = -1e-8 * A.diagonal().sum() / n
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    last_exc = None
    for attempt in range(2):
        try:
            # generous subspace: tight eigenvalue clusters (symmetry
            # multiplicities) are missed with the minimal Lanczos basis
            ncv = max(min(n, max(4 * k + 1, 40)), k + 1)
            vals, vecs = spla.eigsh(
                A, k=k, M=B, sigma=sigma, which="LM", v0=v0,
                maxiter=max(50 * k, 1000), tol=tol, ncv=ncv,
            )
            _check_residuals(A, B, vals, vecs)
            return vals, vecs
        except (spla.ArpackError, EigensolveError, RuntimeError) as exc:
            last_exc = exc
            sigma /= 10.0
    raise EigensolveError(f"eigensolve failed after shift retry: {last_exc}")


def _check_residuals(A, B, vals, vecs, limit: float = 1e-8):
    scale = max(abs(vals).max(), 1.0)
    for i in range(len(vals)):
        r = A @ vecs[:, i] - vals[i] * (B @ vecs[:, i])
        denom = np.linalg.norm(B @ vecs[:, i])
        if denom > 0 and np.linalg.norm(r) / denom > limit * scale:
            raise EigensolveError(
                f"residual too large for eigenpair {i}: "
                f"{np.linalg.norm(r) / denom:.3e}"
            )


def spectrum_of(
    mesh: TriangleMesh,
    k: int,
    bc: BoundaryCondition = BoundaryCondition.NEUMANN,
    seed: int = 0,
) -> LBSpectrum:
    """Assemble and solve in one call; boundary detected from open edges."""
    A, B = assemble(mesh)
    boundary = None
    if BoundaryCondition(bc) is BoundaryCondition.DIRICHLET:
        boundary = mesh.boundary_vertices()
    return solve_lowest(
        A, B, k, bc, boundary, mesh_fingerprint=mesh.fingerprint(), seed=seed
    )


def scaled_spectrum(spec: LBSpectrum, lo: int = 2, hi: int = 15) -> np.ndarray:
    """Eigenvalues lo..hi (1-based) divided by their geometric mean."""
    if lo < 2:
        raise ValueError("lo must be >= 2 (lambda_1 is near zero)")
    if hi > spec.k:
        raise ValueError(f"hi={hi} exceeds available eigenvalues k={spec.k}")
    lam = spec.eigenvalues[lo - 1:hi]
    if (lam <= 0).any():
        raise ValueError("nonpositive eigenvalue in scaling range")
    mu = np.exp(np.mean(np.log(lam)))
    return lam / mu


def save_spectra_csv(path, part_ids, spectra: np.ndarray) -> None:
    spectra = np.atleast_2d(np.asarray(spectra, dtype=np.float64))
    k = spectra.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("part_id," + ",".join(f"lambda_{i + 1}" for i in range(k)) + "\n")
        for pid, row in zip(part_ids, spectra):
            fh.write(str(pid) + "," + ",".join(f"{x:.17g}" for x in row) + "\n")


def load_spectra_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("part_id"):
            raise ValueError(f"{path}: missing spectra CSV header")
        ids, rows = [], []
        for line in fh:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            ids.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    return ids, np.asarray(rows, dtype=np.float64)


def save_matrix_coordinate(path, M: sp.spmatrix) -> None:
    """1-based `row col value` text dump for external verification."""
    coo = M.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        order = np.lexsort((coo.col, coo.row))
        for i in order:
            fh.write(f"{coo.row[i] + 1} {coo.col[i] + 1} {coo.data[i]:.17g}\n")
