"""Global regressors: flow parameters -> complete wall snapshot of one variable.

Snapshots are rows of an ``(n_tr, n_p)`` array (or ``(n_tr, n_p, q)`` for
the kNN family, which treats trailing axes as opaque). Flow parameters are
z-scored with a :class:`~wallbench.dataset.Scaler` fitted on the training
conditions; models store that scaler and accept raw parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Scaler, fit_scaler
from .errors import NumericalError, ValidationError
from .nn import MlpSpec, TrainedNet, mlp_predict, mlp_train
from .numerics import (
    RbfModel,
    geodesic_distances,
    knn_graph,
    pairwise_distances,
    rbf_fit,
    rbf_predict,
    svd,
    sym_eig,
)

__all__ = [
    "KnnModel",
    "knn_fit",
    "knn_predict",
    "knn_select_k",
    "PodModel",
    "energy_rank",
    "pod_fit",
    "pod_predict",
    "IsomapModel",
    "classical_mds",
    "embedding_residual",
    "isomap_fit",
    "isomap_dim_scan",
    "isomap_predict",
    "GlobalMlpModel",
    "global_mlp_train",
    "global_mlp_predict",
    "REFERENCE_KNN_K",
    "REFERENCE_ISOMAP_K_BACK",
    "REFERENCE_POD_RANK",
]

ZERO_DIST_TOL = 1e-12
# values reported for the real database; shipped as presets only
REFERENCE_KNN_K = {"cp": 7, "cfx": 6, "cfy": 9, "cfz": 6}
REFERENCE_ISOMAP_K_BACK = {"cp": 7, "cfx": 7, "cfy": 12, "cfz": 9}
REFERENCE_POD_RANK = {"cp": 261, "cfx": 277, "cfy": 268, "cfz": 256}


def _identity_scaler(d):
    return Scaler(np.zeros(d), np.ones(d))


def _params2d(p, d):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 1:
        p = p[None, :] if p.shape[0] == d else p[:, None]
    if p.shape[1] != d:
        raise ValidationError(f"expected {d} flow parameters per query, got {p.shape[1]}")
    return p


def _is_single(p, d):
    p = np.asarray(p)
    return p.ndim == 1 and p.shape[0] == d


def _idw(dist, snapshots, k, tol):
    """Inverse-distance combination of the k nearest snapshots (one query)."""
    order = np.argsort(dist, kind="stable")[:k]
    if dist[order[0]] < tol:
        return snapshots[order[0]].copy()
    phi = 1.0 / dist[order]
    return np.tensordot(phi, snapshots[order], axes=1) / phi.sum()


# -- parameter-space kNN --------------------------------------------------------

@dataclass(eq=False)
class KnnModel:
    scaled_train_params: np.ndarray
    train_snapshots: np.ndarray
    k: int
    scaler: Scaler
    zero_dist_tol: float = ZERO_DIST_TOL

    def __post_init__(self):
        n = self.scaled_train_params.shape[0]
        if not 1 <= self.k <= n:
            raise ValidationError(f"kNN needs 1 <= k <= n_tr={n}, got k={self.k}")
        if self.train_snapshots.shape[0] != n:
            raise ValidationError("kNN: one snapshot per training condition required")


def knn_fit(params, snapshots, k: int, scaler: Scaler | None = None) -> KnnModel:
    params = np.asarray(params, dtype=np.float64)
    if params.ndim == 1:
        params = params[:, None]
    scaler = scaler or fit_scaler(params)
    return KnnModel(scaler.apply(params), np.asarray(snapshots, dtype=np.float64), int(k), scaler)


def knn_predict(m: KnnModel, p) -> np.ndarray:
    """Inverse-distance-weighted snapshot(s) for raw parameters ``p`` (one row or many)."""
    d = m.scaled_train_params.shape[1]
    single = _is_single(p, d)
    Q = m.scaler.apply(_params2d(p, d))
    D = pairwise_distances(Q, m.scaled_train_params)
    out = np.stack([_idw(D[i], m.train_snapshots, m.k, m.zero_dist_tol) for i in range(Q.shape[0])])
    return out[0] if single else out


def _rmae_rows(truth, pred):
    axes = tuple(range(1, truth.ndim))
    return np.sum(np.abs(truth - pred), axis=axes) / np.sum(np.abs(truth), axis=axes)


def knn_select_k(params, snapshots, k_range=range(2, 13), removals: int = 10, repeats: int = 20,
                 seed: int = 0, scaler: Scaler | None = None) -> tuple[int, dict]:
    """Pick k by repeatedly holding out ``removals`` snapshots and predicting them from the rest.

    Each k is scored by the mean rMAE on the held-out snapshots, averaged
    over repeats; the smallest k among equal scores wins.
    Returns ``(k, {k: mean score})``.
    """
    params = np.asarray(params, dtype=np.float64)
    snapshots = np.asarray(snapshots, dtype=np.float64)
    ks = list(k_range)
    n = params.shape[0]
    if n <= max(ks) + removals:
        raise ValidationError(f"need more than {max(ks) + removals} training snapshots, got {n}")
    scaler = scaler or fit_scaler(params)
    P = scaler.apply(params)
    rng = np.random.Generator(np.random.PCG64(seed))
    scores = np.zeros(len(ks))
    for _ in range(repeats):
        held = rng.choice(n, size=removals, replace=False)
        keep = np.setdiff1d(np.arange(n), held)
        D = pairwise_distances(P[held], P[keep])
        for j, k in enumerate(ks):
            pred = np.stack([_idw(D[i], snapshots[keep], k, ZERO_DIST_TOL) for i in range(removals)])
            scores[j] += float(np.mean(_rmae_rows(snapshots[held], pred)))
    scores /= repeats
    best = ks[int(np.argmin(scores))]
    return best, {k: float(s) for k, s in zip(ks, scores)}


# -- POD + RBF ----------------------------------------------------------------------

@dataclass(eq=False)
class PodModel:
    mean_field: np.ndarray
    u_r: np.ndarray
    sigma_r: np.ndarray
    latent_regressor: RbfModel  # one column per retained coordinate
    scaler: Scaler
    energy_threshold: float

    @property
    def r(self) -> int:
        return self.sigma_r.shape[0]


def energy_rank(sigma, threshold: float) -> int:
    """Smallest r whose leading singular values sum to at least ``threshold`` of the total."""
    if not 0.0 < threshold <= 1.0:
        raise ValidationError(f"energy threshold must be in (0, 1], got {threshold}")
    sigma = np.asarray(sigma, dtype=np.float64)
    if threshold >= 1.0:
        return sigma.shape[0]
    cum = np.cumsum(sigma)
    return int(np.searchsorted(cum, threshold * cum[-1], side="left")) + 1


def pod_fit(snapshots, params, threshold: float = 0.99, kernel: str = "gaussian", shape: float = 1.0,
            reg: float = 0.0, scaler: Scaler | None = None) -> PodModel:
    """Truncated SVD basis of mean-centered snapshots plus RBF regression of the coordinates.

    The training coordinates of snapshot f are the f-th row of V_r, so a
    prediction is ``mean + U_r diag(sigma_r) z*``.
    """
    S = np.asarray(snapshots, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] < 2:
        raise ValidationError(f"POD needs an (n_tr >= 2, n_p) snapshot array, got {S.shape}")
    if not 0.0 < threshold <= 1.0:
        raise ValidationError(f"energy threshold must be in (0, 1], got {threshold}")
    params = np.asarray(params, dtype=np.float64)
    scaler = scaler or fit_scaler(params)
    mean = S.mean(axis=0)
    U, sigma, Vt = svd((S - mean).T)
    r = energy_rank(sigma, threshold)
    rbf = rbf_fit(scaler.apply(params), Vt[:r].T, kernel, shape, reg)
    return PodModel(mean, U[:, :r].copy(), sigma[:r].copy(), rbf, scaler, threshold)


def pod_latent(m: PodModel, p) -> np.ndarray:
    Q = m.scaler.apply(_params2d(p, m.scaler.means.shape[0]))
    z = rbf_predict(m.latent_regressor, Q)
    return z.reshape(Q.shape[0], m.r)


def pod_predict(m: PodModel, p=None, z=None) -> np.ndarray:
    """Snapshot(s) at raw parameters ``p``, or directly from latent coordinates ``z``."""
    single = z is None and _is_single(p, m.scaler.means.shape[0])
    if z is None:
        z = pod_latent(m, p)
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    out = m.mean_field + (z * m.sigma_r) @ m.u_r.T
    return out[0] if single else out


# -- IsoMap + RBF + kNN backmap ---------------------------------------------------------

def classical_mds(D, r: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Classical MDS of a distance matrix.

    Returns ``(Z, eigvals, eigvecs)`` with ``Z`` the ``(n, r)`` embedding from
    the r leading positive eigenpairs of ``B = -1/2 H (D o D) H``.
    """
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    H = np.eye(n) - np.full((n, n), 1.0 / n)
    B = -0.5 * H @ (D * D) @ H
    vals, vecs = sym_eig(0.5 * (B + B.T))
    return _embed(vals, vecs, r), vals, vecs


def _embed(vals, vecs, r):
    tol = 1e-12 * max(abs(vals[0]), 1e-300)
    n_pos = int(np.sum(vals > tol))
    if n_pos < r:
        raise NumericalError(
            f"only {n_pos} positive eigenvalues for a {r}-dimensional embedding; "
            f"leading spectrum {np.array2string(vals[: max(r, 5)], precision=4)}"
        )
    return vecs[:, :r] * np.sqrt(vals[:r])


def embedding_residual(D, Z) -> float:
    """Frobenius norm of the difference between D and the embedding's distance matrix."""
    return float(np.linalg.norm(np.asarray(D) - pairwise_distances(Z)))


@dataclass(eq=False)
class IsomapModel:
    train_embedding: np.ndarray
    forward_map: RbfModel
    train_snapshots: np.ndarray
    scaled_train_params: np.ndarray
    scaler: Scaler
    k_back: int
    k_graph: int
    geodesic: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    zero_dist_tol: float = ZERO_DIST_TOL

    @property
    def r(self) -> int:
        return self.train_embedding.shape[1]


def isomap_fit(snapshots, params, r: int = 3, k_graph: int = 10, k_back: int = 7, kernel: str = "gaussian",
               shape: float = 1.0, reg: float = 0.0, scaler: Scaler | None = None) -> IsomapModel:
    S = np.asarray(snapshots, dtype=np.float64)
    S2 = S.reshape(S.shape[0], -1)
    params = np.asarray(params, dtype=np.float64)
    if not 1 <= k_back <= S.shape[0]:
        raise ValidationError(f"k_back must be in [1, {S.shape[0]}], got {k_back}")
    scaler = scaler or fit_scaler(params)
    D_G = geodesic_distances(knn_graph(S2, k_graph))
    Z, vals, vecs = classical_mds(D_G, r)
    P = scaler.apply(params)
    fmap = rbf_fit(P, Z, kernel, shape, reg)
    return IsomapModel(Z, fmap, S, P, scaler, int(k_back), int(k_graph), D_G, vals, vecs)


def isomap_dim_scan(model_or_D, r_range=range(1, 7)) -> list[tuple[int, float]]:
    """Embedding residual ||D_G - D_Z||_F for each latent dimension in ``r_range``."""
    if isinstance(model_or_D, IsomapModel):
        D, vals, vecs = model_or_D.geodesic, model_or_D.eigvals, model_or_D.eigvecs
    else:
        D = np.asarray(model_or_D, dtype=np.float64)
        _, vals, vecs = classical_mds(D, 1)
    return [(int(r), embedding_residual(D, _embed(vals, vecs, r))) for r in r_range]


def isomap_latent(m: IsomapModel, p) -> np.ndarray:
    Q = m.scaler.apply(_params2d(p, m.scaler.means.shape[0]))
    Z = rbf_predict(m.forward_map, Q).reshape(Q.shape[0], m.r)
    # the forward map interpolates: a training condition maps to its own embedding
    Dp = pairwise_distances(Q, m.scaled_train_params)
    hit = np.argmin(Dp, axis=1)
    exact = Dp[np.arange(Q.shape[0]), hit] < m.zero_dist_tol
    Z[exact] = m.train_embedding[hit[exact]]
    return Z


def isomap_predict(m: IsomapModel, p) -> np.ndarray:
    single = _is_single(p, m.scaler.means.shape[0])
    Z = isomap_latent(m, p)
    D = pairwise_distances(Z, m.train_embedding)
    out = np.stack([_idw(D[i], m.train_snapshots, m.k_back, m.zero_dist_tol) for i in range(Z.shape[0])])
    return out[0] if single else out


# -- field-by-field MLP ------------------------------------------------------------------

@dataclass(eq=False)
class GlobalMlpModel:
    net: TrainedNet
    scaler: Scaler
    mean_field: np.ndarray
    out_scale: float


def global_mlp_train(spec: MlpSpec, snapshots, params, validation=None, scaler: Scaler | None = None) -> GlobalMlpModel:
    """One network mapping scaled (M, AoA, p_i) to the whole n_p-vector of a variable.

    Outputs are centered by the mean training field and divided by one scalar
    standard deviation. ``validation`` is an optional ``(snapshots, params)`` pair.
    """
    S = np.asarray(snapshots, dtype=np.float64)
    params = np.asarray(params, dtype=np.float64)
    scaler = scaler or fit_scaler(params)
    mean = S.mean(axis=0)
    scale = float(np.std(S - mean)) or 1.0
    val = None
    if validation is not None:
        Sv, pv = validation
        val = (scaler.apply(np.asarray(pv, dtype=np.float64)), (np.asarray(Sv) - mean) / scale)
    net = mlp_train(spec, scaler.apply(params), (S - mean) / scale, val)
    return GlobalMlpModel(net, scaler, mean, scale)


def global_mlp_predict(m: GlobalMlpModel, p) -> np.ndarray:
    single = _is_single(p, m.scaler.means.shape[0])
    Q = m.scaler.apply(_params2d(p, m.scaler.means.shape[0]))
    out = m.mean_field + m.out_scale * mlp_predict(m.net, Q)
    return out[0] if single else out
