"""Shared numerical kernels.

SVD and symmetric eigendecomposition wrap LAPACK through numpy; graph
shortest paths use scipy's Dijkstra. RBF interpolation is implemented here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial.distance import cdist

from .errors import NumericalError, ValidationError

__all__ = [
    "svd",
    "sym_eig",
    "pairwise_distances",
    "NeighborGraph",
    "knn_graph",
    "geodesic_distances",
    "RbfModel",
    "rbf_fit",
    "rbf_predict",
    "rbf_select_shape",
]


def _finite(A, name="matrix"):
    A = np.asarray(A, dtype=np.float64)
    if not np.isfinite(A).all():
        raise NumericalError(f"{name} has non-finite entries")
    return A


def svd(A):
    """Thin SVD ``A = U diag(sigma) Vt`` with descending singular values."""
    A = _finite(A)
    U, sigma, Vt = np.linalg.svd(A, full_matrices=False)
    return U, sigma, Vt


def sym_eig(B):
    """Eigenpairs of a symmetric matrix, eigenvalues sorted descending."""
    B = _finite(B)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValidationError(f"sym_eig needs a square matrix, got {B.shape}")
    scale = np.linalg.norm(B)
    if np.linalg.norm(B - B.T) > 1e-9 * max(scale, np.finfo(float).tiny):
        raise ValidationError("sym_eig: matrix is not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (B + B.T))
    order = np.argsort(vals, kind="stable")[::-1]
    return vals[order], vecs[:, order]


def pairwise_distances(P, Q=None):
    """Euclidean distances between rows of P and rows of Q (default P)."""
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    Q = P if Q is None else np.atleast_2d(np.asarray(Q, dtype=np.float64))
    return cdist(P, Q)


@dataclass(frozen=True, eq=False)
class NeighborGraph:
    """Undirected weighted graph stored as per-node adjacency lists."""

    n: int
    adjacency: tuple

    def to_csr(self) -> csr_matrix:
        rows, cols, vals = [], [], []
        for i, nbrs in enumerate(self.adjacency):
            for j, d in nbrs:
                rows.append(i)
                cols.append(j)
                vals.append(d)
        return csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency])


def knn_graph(points, k: int) -> NeighborGraph:
    """Symmetrized (union) k-nearest-neighbor graph; ties go to the lower index.

    Raises NumericalError when the graph is disconnected.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not 1 <= k < n:
        raise ValidationError(f"knn_graph needs 1 <= k < n, got k={k}, n={n}")
    D = pairwise_distances(X)
    np.fill_diagonal(D, np.inf)
    edges: list[dict[int, float]] = [dict() for _ in range(n)]
    for i in range(n):
        for j in np.argsort(D[i], kind="stable")[:k]:
            j = int(j)
            edges[i][j] = D[i, j]
            edges[j][i] = D[i, j]
    graph = NeighborGraph(n, tuple(tuple(sorted(e.items())) for e in edges))
    # explicit zeros would vanish from the sparse matrix; count components on a pattern matrix
    pattern = graph.to_csr()
    pattern.data = np.ones_like(pattern.data)
    n_comp, _ = connected_components(pattern, directed=False)
    if n_comp != 1:
        raise NumericalError(f"k-NN graph with k={k} is disconnected ({n_comp} components); increase k")
    return graph


def geodesic_distances(g: NeighborGraph) -> np.ndarray:
    """All-pairs shortest-path lengths (Dijkstra from every source)."""
    W = g.to_csr()
    # zero-length edges are dropped by the sparse format; keep them as tiny positive weights
    W.data = np.where(W.data == 0.0, np.finfo(float).tiny, W.data)
    D = dijkstra(W, directed=False)
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return D


# -- radial basis functions ---------------------------------------------------

KERNELS = ("gaussian", "multiquadric")


def _kernel(name, shape, r):
    er2 = (shape * r) ** 2
    if name == "gaussian":
        return np.exp(-er2)
    if name == "multiquadric":
        return np.sqrt(1.0 + er2)
    raise ValidationError(f"unknown RBF kernel {name!r}; choose from {KERNELS}")


@dataclass(frozen=True, eq=False)
class RbfModel:
    centers: np.ndarray
    weights: np.ndarray
    poly_coeffs: np.ndarray
    kernel: str
    shape: float
    reg: float


def rbf_fit(X, Z, kernel: str = "gaussian", shape: float = 1.0, reg: float = 0.0) -> RbfModel:
    """RBF interpolant with a linear polynomial tail.

    Solves ``[[Phi + reg I, P], [P^T, 0]] [w; c] = [Z; 0]`` with ``P = [1, X]``.
    """
    X = _finite(X, "RBF centers")
    if X.ndim == 1:
        X = X[:, None]
    Z = _finite(Z, "RBF targets")
    squeeze = Z.ndim == 1
    Z2 = Z[:, None] if squeeze else Z
    m, d = X.shape
    if Z2.shape[0] != m:
        raise ValidationError(f"RBF: {m} centers but {Z2.shape[0]} target rows")
    if not shape > 0:
        raise ValidationError(f"RBF shape must be > 0, got {shape}")
    if reg < 0:
        raise ValidationError(f"RBF reg must be >= 0, got {reg}")
    if m < d + 2:
        raise ValidationError(f"RBF with linear tail needs at least d+2={d + 2} centers, got {m}")
    if np.unique(X, axis=0).shape[0] != m:
        raise ValidationError("RBF centers must be distinct")
    _kernel(kernel, shape, 0.0)

    Phi = _kernel(kernel, shape, pairwise_distances(X))
    P = np.hstack([np.ones((m, 1)), X])
    A = np.zeros((m + d + 1, m + d + 1))
    A[:m, :m] = Phi + reg * np.eye(m)
    A[:m, m:] = P
    A[m:, :m] = P.T
    rhs = np.vstack([Z2, np.zeros((d + 1, Z2.shape[1]))])
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular RBF system ({exc}); use reg > 0 or another shape") from exc
    resid = np.linalg.norm(A @ sol - rhs)
    if not np.isfinite(sol).all() or resid > 1e-6 * max(np.linalg.norm(rhs), 1e-300):
        raise NumericalError(
            f"ill-conditioned RBF system (relative residual {resid / max(np.linalg.norm(rhs), 1e-300):.2e}); "
            "use reg > 0 or another shape"
        )
    w, c = sol[:m], sol[m:]
    if squeeze:
        w, c = w[:, 0], c[:, 0]
    return RbfModel(X, w, c, kernel, float(shape), float(reg))


def rbf_predict(model: RbfModel, Xq) -> np.ndarray:
    Xq = np.asarray(Xq, dtype=np.float64)
    if Xq.ndim == 1:
        Xq = Xq[:, None] if model.centers.shape[1] == 1 else Xq[None, :]
    if Xq.shape[1] != model.centers.shape[1]:
        raise ValidationError(f"RBF query has {Xq.shape[1]} columns, model has {model.centers.shape[1]}")
    Phi = _kernel(model.kernel, model.shape, pairwise_distances(Xq, model.centers))
    P = np.hstack([np.ones((Xq.shape[0], 1)), Xq])
    return Phi @ model.weights + P @ model.poly_coeffs


def rbf_select_shape(X_tr, Z_tr, X_val, Z_val, candidates, kernel="gaussian", reg=0.0) -> float:
    """Shape parameter with the lowest validation mean squared error."""
    best, best_err = None, np.inf
    for eps in candidates:
        try:
            model = rbf_fit(X_tr, Z_tr, kernel, eps, reg)
        except NumericalError:
            continue
        err = float(np.mean((rbf_predict(model, X_val) - np.asarray(Z_val)) ** 2))
        if err < best_err:
            best, best_err = float(eps), err
    if best is None:
        raise NumericalError(f"no RBF shape in {list(candidates)} gives a solvable system")
    return best
