"""Symmetric normalized Laplacian and its smallest non-trivial eigenpairs.

The eigensolver is in-house: cyclic Jacobi rotations for graphs up to 512
nodes, Lanczos with full reorthogonalization (deflating the exact zero
eigenspace, one vector per connected component) above. Every returned pair
is certified by its residual; failures raise rather than degrade.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..graph import ProvGraph, undirected_pairs

JACOBI_MAX_N = 512
ZERO_EIG_THRESHOLD = 1e-8
RESIDUAL_TOL = 1e-8


class EigenError(RuntimeError):
    pass


def normalized_laplacian(g: ProvGraph, weighted: bool = False) -> sp.csr_matrix:
    """L = I - D^{-1/2} A D^{-1/2} over the symmetrized adjacency.

    Rows and columns of isolated nodes are all zero (diagonal included).
    The adjacency is binary by default; ``weighted`` sums multiplicities.
    """
    n = g.n_nodes
    pairs = undirected_pairs(g, weighted=weighted)
    deg = np.zeros(n)
    for (u, v), w in pairs.items():
        deg[u] += w
        deg[v] += w
    inv_sqrt = np.zeros(n)
    pos = deg > 0
    inv_sqrt[pos] = 1.0 / np.sqrt(deg[pos])
    rows, cols, vals = [], [], []
    for v in np.flatnonzero(pos):
        rows.append(v)
        cols.append(v)
        vals.append(1.0)
    for (u, v), w in pairs.items():
        x = -w * inv_sqrt[u] * inv_sqrt[v]
        rows += [u, v]
        cols += [v, u]
        vals += [x, x]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _components_from_laplacian(L: sp.csr_matrix) -> np.ndarray:
    """Component label per node from off-diagonal structure (union-find)."""
    n = L.shape[0]
    parent = np.arange(n)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    coo = L.tocoo()
    for i, j in zip(coo.row, coo.col):
        if i != j:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[ri] = rj
    return np.array([find(i) for i in range(n)])


def jacobi_eigh(A: np.ndarray, tol: float = 1e-12, max_sweeps: int = 64):
    """Full eigendecomposition of a dense symmetric matrix by cyclic Jacobi.

    Returns eigenvalues ascending and eigenvectors as matching columns.
    """
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    if n > 1:
        scale = max(1.0, np.abs(A).max())
        diag_mask = ~np.eye(n, dtype=bool)
        for _ in range(max_sweeps):
            # direct off-diagonal norm; a sum-minus-diagonal formulation
            # cancels catastrophically near convergence
            off = np.sqrt((A[diag_mask] ** 2).sum())
            if off <= tol * scale:
                break
            thresh = off / (n * n)
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = A[p, q]
                    if abs(apq) <= thresh * 1e-3:
                        continue
                    theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) \
                        if theta != 0.0 else 1.0
                    c = 1.0 / np.sqrt(t * t + 1.0)
                    s = t * c
                    col_p, col_q = A[:, p].copy(), A[:, q].copy()
                    A[:, p] = c * col_p - s * col_q
                    A[:, q] = s * col_p + c * col_q
                    row_p, row_q = A[p, :].copy(), A[q, :].copy()
                    A[p, :] = c * row_p - s * row_q
                    A[q, :] = s * row_p + c * row_q
                    vp, vq = V[:, p].copy(), V[:, q].copy()
                    V[:, p] = c * vp - s * vq
                    V[:, q] = s * vp + c * vq
        else:
            raise EigenError(f"Jacobi did not converge in {max_sweeps} sweeps")
    vals = np.diag(A).copy()
    order = np.argsort(vals, kind="stable")
    return vals[order], V[:, order]


def _zero_space_basis(L: sp.csr_matrix, labels: np.ndarray,
                      degrees: np.ndarray | None) -> np.ndarray:
    """Exact orthonormal basis of the zero eigenspace, one column per
    component: sqrt(degree) restricted to the component (the coordinate
    vector for isolated nodes).

    Without explicit degrees the sqrt-degree ratios are recovered from the
    Laplacian entries along a spanning tree; exact for binary adjacency.
    """
    n = L.shape[0]
    comp_ids = list(dict.fromkeys(labels.tolist()))
    if degrees is None:
        # binary adjacency: degree = off-diagonal nonzero count per row
        coo = L.tocoo()
        degrees = np.zeros(n)
        np.add.at(degrees, coo.row[coo.row != coo.col], 1.0)
    y = np.sqrt(np.asarray(degrees, dtype=np.float64))
    y[y == 0.0] = 1.0  # isolated nodes: coordinate vector
    Z = np.zeros((n, len(comp_ids)))
    for j, cid in enumerate(comp_ids):
        members = np.flatnonzero(labels == cid)
        col = y[members]
        Z[members, j] = col / np.linalg.norm(col)
    return Z


def _lanczos_smallest(L: sp.csr_matrix, k: int, Z: np.ndarray, seed: int = 12345):
    """Bottom-k non-trivial eigenpairs via Lanczos with full
    reorthogonalization against both the Krylov basis and the deflated
    zero space."""
    n = L.shape[0]
    c = Z.shape[1]
    limit = n - c
    rng = np.random.default_rng(seed)
    m = min(limit, max(4 * k + 32, 64))
    while True:
        Q = np.zeros((n, m))
        alphas = np.zeros(m)
        betas = np.zeros(m)
        v = rng.normal(size=n)
        v -= Z @ (Z.T @ v)
        v /= np.linalg.norm(v)
        Q[:, 0] = v
        j_used = m
        for j in range(m):
            w = L @ Q[:, j]
            alphas[j] = Q[:, j] @ w
            w -= alphas[j] * Q[:, j]
            if j > 0:
                w -= betas[j - 1] * Q[:, j - 1]
            # full reorthogonalization, twice for float safety
            for _ in range(2):
                w -= Z @ (Z.T @ w)
                w -= Q[:, :j + 1] @ (Q[:, :j + 1].T @ w)
            b = np.linalg.norm(w)
            if j + 1 == m:
                break
            if b < 1e-13:
                # Krylov space exhausted; the projected problem is exact
                j_used = j + 1
                break
            betas[j] = b
            Q[:, j + 1] = w / b
        T = (np.diag(alphas[:j_used])
             + np.diag(betas[:j_used - 1], 1)
             + np.diag(betas[:j_used - 1], -1))
        tvals, tvecs = np.linalg.eigh(T)
        take = min(k, j_used)
        vals = tvals[:take]
        vecs = Q[:, :j_used] @ tvecs[:, :take]
        res = np.array([np.linalg.norm(L @ vecs[:, i] - vals[i] * vecs[:, i])
                        for i in range(take)])
        if take == k and (res <= RESIDUAL_TOL).all():
            return vals, vecs
        if m >= limit:
            raise EigenError(f"Lanczos failed to certify {k} eigenpairs "
                             f"(max residual {res.max():.2e})")
        m = min(limit, m * 2)


def sign_normalize(vecs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Flip each column so its first entry above tol is positive."""
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.flatnonzero(np.abs(col) > tol)
        if nz.size and col[nz[0]] < 0:
            out[:, j] = -col
    return out


def smallest_k_eigenvectors(L: sp.csr_matrix, k: int,
                            degrees: np.ndarray | None = None):
    """The k smallest NON-trivial eigenpairs of the normalized Laplacian.

    Trivial pairs (one per connected component, eigenvalue below 1e-8) are
    excluded. Returns (eigenvalues, eigenvectors as columns); vectors are
    unit-norm and sign-normalized, residuals certified to 1e-8. ``degrees``
    sharpens the zero-space deflation for weighted adjacency.
    """
    n = L.shape[0]
    labels = _components_from_laplacian(L)
    c = len(set(labels.tolist()))
    if k > n - c:
        raise ValueError(f"k={k} too large: graph has {n} nodes and {c} "
                         f"connected components, only {n - c} non-trivial eigenpairs")
    if n <= JACOBI_MAX_N:
        vals, vecs = jacobi_eigh(L.toarray())
        keep = vals > ZERO_EIG_THRESHOLD
        if int(keep.sum()) < k:
            raise EigenError(f"only {int(keep.sum())} eigenvalues above the "
                             f"trivial threshold; cannot return k={k} pairs")
        vals, vecs = vals[keep][:k], vecs[:, keep][:, :k]
    else:
        Z = _zero_space_basis(L, labels, degrees)
        vals, vecs = _lanczos_smallest(L, k, Z)
    vecs = vecs / np.linalg.norm(vecs, axis=0, keepdims=True)
    res = np.array([np.linalg.norm(L @ vecs[:, i] - vals[i] * vecs[:, i])
                    for i in range(k)])
    if (res > RESIDUAL_TOL).any():
        raise EigenError(f"eigen residual check failed: max {res.max():.2e}")
    if vals.size and vals.min() > -1e-10 and vals.max() < 2.0 + 1e-10:
        vals = np.clip(vals, 0.0, 2.0)
    return vals, sign_normalize(vecs)


def laplacian_degrees(g: ProvGraph, weighted: bool = False) -> np.ndarray:
    """Degrees consistent with the adjacency normalized_laplacian uses."""
    deg = np.zeros(g.n_nodes)
    for (u, v), w in undirected_pairs(g, weighted=weighted).items():
        deg[u] += w
        deg[v] += w
    return deg


def positional_encoding(g: ProvGraph, k: int, weighted: bool = False):
    """Per-node spectral coordinates: rows of the k smallest non-trivial
    eigenvectors, plus the eigenvalues for diagnostics."""
    L = normalized_laplacian(g, weighted=weighted)
    vals, vecs = smallest_k_eigenvectors(L, k, degrees=laplacian_degrees(g, weighted))
    return vecs, vals
