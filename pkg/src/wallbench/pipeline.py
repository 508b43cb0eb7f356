"""Training and prediction pipeline shared by the command line and the benchmark tests.

Every regressor is trained on the train split of a dataset through a
deterministic 75/25 inner split of the train ids:

* networks and the tree are fitted on the inner part; the networks keep the
  parameters with the best loss on the validation part;
* POD+RBF and IsoMap+RBF choose the RBF shape (and the IsoMap backmap k) on
  the inner split, kNN picks k by repeated leave-out over the train split;
  all three are then refitted on the full train split.

Validation scores always come from models fitted on the inner part only.

A fitted :class:`Surrogate` maps flow conditions to ``(n_p, 4)`` fields.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig, REGRESSORS
from .dataset import (
    VARIABLES,
    Dataset,
    Scaler,
    assemble_global,
    assemble_pointwise,
    fit_scaler,
    inner_split,
    pointwise_inputs,
    split_dataset,
)
from .errors import ConfigError, NumericalError, ValidationError
from .flow import DoeSpec, FlowCondition, GasModel, calibrated_gas, flow_weight
from .global_models import (
    GlobalMlpModel,
    IsomapModel,
    KnnModel,
    PodModel,
    global_mlp_predict,
    global_mlp_train,
    isomap_fit,
    isomap_predict,
    knn_fit,
    knn_predict,
    knn_select_k,
    pod_fit,
    pod_predict,
)
from .metrics import r2_weighted
from .modelio import load_model, save_model
from .nn import LambdaDnnSpec, MlpSpec, TrainedNet, mlp_predict, mlp_train
from .numerics import RbfModel
from .oracle import OracleConfig, generate_dataset
from .tree import TreeModel, TreeSpec, tree_fit, tree_predict

log = logging.getLogger(__name__)

__all__ = [
    "gas_from_config",
    "oracle_from_config",
    "doe_from_config",
    "generate_from_config",
    "resplit",
    "Surrogate",
    "fit_regressor",
    "predict_fields",
    "save_surrogate",
    "load_surrogate",
    "TUNING_SPACES",
]

POINTWISE = ("mlp_pointwise", "lambda_dnn", "tree")


# -- configuration -> domain objects ------------------------------------------------

def gas_from_config(cfg: RunConfig) -> GasModel:
    g = cfg["gas"]
    base = GasModel(g["gamma"], g["r_gas"], g["t_ref"], g["mu_ref"], g["s_suth"], g["t_i"])
    return calibrated_gas(base, g["target_re"], g["anchor_mach"], g["anchor_p_i"])


def oracle_from_config(cfg: RunConfig) -> OracleConfig:
    o = cfg["oracle"]
    return OracleConfig(o["n_p"], o["geometry_seed"], o["shock_sharpness"], o["cf_scale_exponent"],
                        o["noise_amplitude"])


def doe_from_config(cfg: RunConfig) -> DoeSpec:
    return DoeSpec.from_machs(cfg.get("doe", "machs"), cfg.get("doe", "p_i"))


def generate_from_config(cfg: RunConfig) -> Dataset:
    return generate_dataset(doe_from_config(cfg), oracle_from_config(cfg), gas_from_config(cfg),
                            cfg.get("seeds", "split"))


def resplit(ds: Dataset, seed: int) -> Dataset:
    return Dataset(ds.geometry, ds.conditions, ds.fields, split_dataset(ds.conditions, seed))


# -- surrogate container ------------------------------------------------------------

@dataclass(eq=False)
class Surrogate:
    """A trained regressor of any kind plus what is needed to produce full fields."""

    kind: str
    n_p: int
    models: dict                      # variable name or "all" -> fitted model
    x_scaler: Scaler | None = None    # pointwise inputs
    y_scaler: Scaler | None = None    # pointwise outputs
    info: dict = field(default_factory=dict)


def _weights(conds):
    return np.array([flow_weight(c) for c in conds])


def predict_fields(sur: Surrogate, ds_or_geometry, conds: list[FlowCondition]) -> np.ndarray:
    """Predicted fields, shape ``(len(conds), n_p, 4)``."""
    geo = ds_or_geometry.geometry if isinstance(ds_or_geometry, Dataset) else ds_or_geometry
    if geo.n_p != sur.n_p:
        raise ValidationError(f"model was trained with n_p={sur.n_p}, geometry has {geo.n_p} points")
    if sur.kind in POINTWISE:
        X = sur.x_scaler.apply(pointwise_inputs(geo, conds))
        m = sur.models["all"]
        Ys = tree_predict(m, X) if sur.kind == "tree" else mlp_predict(m, X)
        return sur.y_scaler.invert(Ys).reshape(len(conds), sur.n_p, 4)
    P = np.array([c.params for c in conds], dtype=np.float64).reshape(len(conds), 3)
    predict = {"knn": knn_predict, "pod_rbf": pod_predict, "isomap_rbf": isomap_predict,
               "mlp_global": global_mlp_predict}[sur.kind]
    return np.stack([predict(sur.models[v], P) for v in VARIABLES], axis=-1)


# -- training -----------------------------------------------------------------------

def _nn_spec(kind, r: dict, seed: int, global_net: bool = False):
    common = dict(activation=r["activation"], leaky_slope=r["leaky_slope"], dropout=r["dropout"], l2=r["l2"],
                  lr=r["global_lr"] if global_net else r["lr"], lr_decay=r["lr_decay"],
                  batch_fraction=r["global_batch_fraction"] if global_net else r["batch_fraction"],
                  epochs=r["global_epochs"] if global_net else r["epochs"], seed=seed)
    if kind == "lambda_dnn":
        return LambdaDnnSpec(r["geo_branch"], r["cond_branch"], r["trunk"], **common)
    return MlpSpec(r["hidden_sizes"], **common)


def _val_r2(conds, truth, pred) -> dict:
    r2 = r2_weighted(truth, pred, _weights(conds))
    return {v: float(r2[k]) for k, v in enumerate(VARIABLES)}


def _subsample(X, Y, max_rows, seed):
    if max_rows <= 0 or X.shape[0] <= max_rows:
        return X, Y
    rng = np.random.Generator(np.random.PCG64(seed))
    keep = np.sort(rng.choice(X.shape[0], size=max_rows, replace=False))
    return X[keep], Y[keep]


def _fit_pointwise(kind, r, ds, inner, val, seed):
    X, Y = assemble_pointwise(ds, inner)
    X, Y = _subsample(X, Y, r["max_rows"], seed)
    Xv, Yv = assemble_pointwise(ds, val)
    ys = fit_scaler(Y)
    if kind == "tree":
        xs = Scaler(np.zeros(9), np.ones(9))
        model = tree_fit(TreeSpec(r["max_depth"], r["min_samples_leaf"], seed), X, ys.apply(Y))
        info = {"n_nodes": model.n_nodes, "n_leaves": model.n_leaves, "depth": model.depth}
    else:
        xs = fit_scaler(X)
        model = mlp_train(_nn_spec(kind, r, seed), xs.apply(X), ys.apply(Y), (xs.apply(Xv), ys.apply(Yv)))
        info = {"history": model.history}
    sur = Surrogate(kind, ds.geometry.n_p, {"all": model}, xs, ys, info)
    by_id = ds.by_id
    return sur, predict_fields(sur, ds, [by_id[i] for i in val])


def _field_mse(pred, truth):
    return float(np.mean((np.asarray(pred) - truth) ** 2))


def _fit_global(kind, r, ds, inner, val, seed):
    P_in, Y_in = assemble_global(ds, inner)
    P_val, Y_val = assemble_global(ds, val)
    P_tr, Y_tr = assemble_global(ds, ds.train_ids)
    models, info = {}, {}
    val_pred = np.empty_like(Y_val)
    for j, v in enumerate(VARIABLES):
        if kind == "knn":
            if r["k"] > 0:
                k, scores = r["k"], {}
            else:
                k, scores = knn_select_k(P_tr, Y_tr[:, :, j], k_range=r["k_range"], seed=seed)
            val_pred[:, :, j] = knn_predict(knn_fit(P_in, Y_in[:, :, j], k), P_val)
            models[v] = knn_fit(P_tr, Y_tr[:, :, j], k)
            info[v] = {"k": int(k), "selection": {str(kk): s for kk, s in scores.items()}}
        elif kind == "pod_rbf":
            best = None
            for eps in r["shapes"]:
                try:
                    m = pod_fit(Y_in[:, :, j], P_in, r["energy_threshold"], r["kernel"], eps, r["reg"])
                except NumericalError as exc:
                    log.info("%s: shape %g rejected (%s)", v, eps, exc)
                    continue
                pred = pod_predict(m, P_val)
                err = _field_mse(pred, Y_val[:, :, j])
                if best is None or err < best[1]:
                    best = (eps, err)
                    val_pred[:, :, j] = pred
            if best is None:
                raise NumericalError(f"{v}: no RBF shape in {list(r['shapes'])} gives a solvable system")
            models[v] = pod_fit(Y_tr[:, :, j], P_tr, r["energy_threshold"], r["kernel"], best[0], r["reg"])
            info[v] = {"shape": best[0], "val_mse": best[1], "rank": models[v].r}
        elif kind == "isomap_rbf":
            backs = [r["k_back"]] if r["k_back"] > 0 else [k for k in r["k_range"] if k <= len(inner)]
            best = None
            for eps in r["shapes"]:
                try:
                    m = isomap_fit(Y_in[:, :, j], P_in, r["latent_dim"], r["k_graph"], 1, r["kernel"], eps, r["reg"])
                except NumericalError as exc:
                    log.info("%s: shape %g rejected (%s)", v, eps, exc)
                    continue
                for kb in backs:
                    m.k_back = kb
                    pred = isomap_predict(m, P_val)
                    err = _field_mse(pred, Y_val[:, :, j])
                    if best is None or err < best[2]:
                        best = (eps, kb, err)
                        val_pred[:, :, j] = pred
            if best is None:
                raise NumericalError(f"{v}: no RBF shape in {list(r['shapes'])} gives a solvable system")
            models[v] = isomap_fit(Y_tr[:, :, j], P_tr, r["latent_dim"], r["k_graph"], best[1], r["kernel"],
                                   best[0], r["reg"])
            info[v] = {"shape": best[0], "k_back": best[1], "val_mse": best[2]}
        elif kind == "mlp_global":
            spec = _nn_spec(kind, r, seed, global_net=True)
            models[v] = global_mlp_train(spec, Y_in[:, :, j], P_in, (Y_val[:, :, j], P_val))
            info[v] = {"history": models[v].net.history}
            val_pred[:, :, j] = global_mlp_predict(models[v], P_val)
    return Surrogate(kind, ds.geometry.n_p, models, info=info), val_pred


def fit_regressor(cfg: RunConfig, ds: Dataset) -> tuple[Surrogate, dict]:
    """Train the configured regressor; returns the surrogate and its validation R^2 per variable."""
    r = cfg["regressor"]
    kind = r["name"]
    if kind not in REGRESSORS:
        raise ConfigError(f"unknown regressor {kind!r}; valid: {', '.join(REGRESSORS)}")
    if not ds.train_ids:
        raise ValidationError("dataset has no train conditions")
    seed = cfg.get("seeds", "train")
    inner, val = inner_split(ds.train_ids, r["inner_fraction"], cfg.get("seeds", "inner"))
    log.info("training %s on %d inner / %d validation flows", kind, len(inner), len(val))
    fit = _fit_pointwise if kind in POINTWISE else _fit_global
    sur, val_pred = fit(kind, r, ds, inner, val, seed)
    by_id = ds.by_id
    _, Y_val = assemble_global(ds, val)
    # scored with the models fitted on the inner part, before any refit on the full train split
    score = _val_r2([by_id[i] for i in val], Y_val, val_pred)
    sur.info["validation_r2"] = score
    sur.info["regressor"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(r.items())}
    return sur, score


# -- persistence --------------------------------------------------------------------

def _put_scaler(arrays, prefix, s: Scaler):
    arrays[f"{prefix}.means"] = s.means
    arrays[f"{prefix}.stds"] = s.stds


def _get_scaler(arrays, prefix) -> Scaler:
    return Scaler(arrays[f"{prefix}.means"], arrays[f"{prefix}.stds"])


def _put_rbf(arrays, prefix, m: RbfModel) -> dict:
    arrays[f"{prefix}.centers"] = m.centers
    arrays[f"{prefix}.weights"] = m.weights
    arrays[f"{prefix}.poly"] = m.poly_coeffs
    return {"kernel": m.kernel, "shape": m.shape, "reg": m.reg}


def _get_rbf(arrays, prefix, meta) -> RbfModel:
    return RbfModel(arrays[f"{prefix}.centers"], arrays[f"{prefix}.weights"], arrays[f"{prefix}.poly"],
                    meta["kernel"], meta["shape"], meta["reg"])


def _put_net(arrays, prefix, net: TrainedNet) -> dict:
    for k, a in net.arrays().items():
        arrays[f"{prefix}.{k}"] = a
    return net.meta()


def _get_net(arrays, prefix, meta) -> TrainedNet:
    sub = {k[len(prefix) + 1:]: a for k, a in arrays.items() if k.startswith(prefix + ".p")}
    return TrainedNet.from_saved(meta, sub)


def _pack(kind, m, v, arrays) -> dict:
    p = v
    if kind == "knn":
        arrays[f"{p}.params"] = m.scaled_train_params
        arrays[f"{p}.snapshots"] = m.train_snapshots
        _put_scaler(arrays, f"{p}.scaler", m.scaler)
        return {"k": m.k, "zero_dist_tol": m.zero_dist_tol}
    if kind == "pod_rbf":
        arrays[f"{p}.mean"] = m.mean_field
        arrays[f"{p}.u_r"] = m.u_r
        arrays[f"{p}.sigma_r"] = m.sigma_r
        _put_scaler(arrays, f"{p}.scaler", m.scaler)
        return {"energy_threshold": m.energy_threshold, "rbf": _put_rbf(arrays, f"{p}.rbf", m.latent_regressor)}
    if kind == "isomap_rbf":
        for name in ("train_embedding", "train_snapshots", "scaled_train_params", "geodesic", "eigvals", "eigvecs"):
            arrays[f"{p}.{name}"] = getattr(m, name)
        _put_scaler(arrays, f"{p}.scaler", m.scaler)
        return {"k_back": m.k_back, "k_graph": m.k_graph, "zero_dist_tol": m.zero_dist_tol,
                "rbf": _put_rbf(arrays, f"{p}.rbf", m.forward_map)}
    if kind == "mlp_global":
        arrays[f"{p}.mean"] = m.mean_field
        _put_scaler(arrays, f"{p}.scaler", m.scaler)
        return {"out_scale": m.out_scale, "net": _put_net(arrays, f"{p}.net", m.net)}
    if kind == "tree":
        for k, a in m.arrays().items():
            arrays[f"{p}.{k}"] = a
        return m.meta()
    return _put_net(arrays, p, m)


def _unpack(kind, meta, v, arrays):
    p = v
    if kind == "knn":
        return KnnModel(arrays[f"{p}.params"], arrays[f"{p}.snapshots"], meta["k"],
                        _get_scaler(arrays, f"{p}.scaler"), meta["zero_dist_tol"])
    if kind == "pod_rbf":
        return PodModel(arrays[f"{p}.mean"], arrays[f"{p}.u_r"], arrays[f"{p}.sigma_r"],
                        _get_rbf(arrays, f"{p}.rbf", meta["rbf"]), _get_scaler(arrays, f"{p}.scaler"),
                        meta["energy_threshold"])
    if kind == "isomap_rbf":
        return IsomapModel(arrays[f"{p}.train_embedding"], _get_rbf(arrays, f"{p}.rbf", meta["rbf"]),
                           arrays[f"{p}.train_snapshots"], arrays[f"{p}.scaled_train_params"],
                           _get_scaler(arrays, f"{p}.scaler"), meta["k_back"], meta["k_graph"],
                           arrays[f"{p}.geodesic"], arrays[f"{p}.eigvals"], arrays[f"{p}.eigvecs"],
                           meta["zero_dist_tol"])
    if kind == "mlp_global":
        return GlobalMlpModel(_get_net(arrays, f"{p}.net", meta["net"]), _get_scaler(arrays, f"{p}.scaler"),
                              arrays[f"{p}.mean"], meta["out_scale"])
    if kind == "tree":
        sub = {k[len(p) + 1:]: a for k, a in arrays.items() if k.startswith(p + ".")}
        return TreeModel.from_saved(meta, sub)
    return _get_net(arrays, p, meta)


def save_surrogate(sur: Surrogate, path) -> None:
    arrays: dict = {}
    parts = {v: _pack(sur.kind, m, v, arrays) for v, m in sur.models.items()}
    if sur.x_scaler is not None:
        _put_scaler(arrays, "x_scaler", sur.x_scaler)
        _put_scaler(arrays, "y_scaler", sur.y_scaler)
    meta = {"n_p": sur.n_p, "parts": parts, "info": sur.info}
    save_model(path, sur.kind, meta, arrays)


def load_surrogate(path) -> Surrogate:
    kind, meta, arrays = load_model(path)
    if kind not in REGRESSORS:
        raise ValidationError(f"{path}: unknown model kind {kind!r}")
    models = {v: _unpack(kind, m, v, arrays) for v, m in meta["parts"].items()}
    xs = _get_scaler(arrays, "x_scaler") if "x_scaler.means" in arrays else None
    ys = _get_scaler(arrays, "y_scaler") if "y_scaler.means" in arrays else None
    return Surrogate(kind, int(meta["n_p"]), models, xs, ys, meta.get("info", {}))


# -- tuning -------------------------------------------------------------------------

TUNING_SPACES = {
    "mlp_pointwise": {
        "hidden_sizes": ("choice", [(32, 32), (64, 64), (64, 64, 64)]),
        "lr": ("loguniform", 3e-4, 3e-3),
        "dropout": ("choice", [0.0, 0.1]),
        "l2": ("choice", [0.0, 1e-6, 1e-5]),
    },
    "lambda_dnn": {
        "geo_branch": ("choice", [(32, 32), (64, 64)]),
        "cond_branch": ("choice", [(16, 16), (32, 32)]),
        "lr": ("loguniform", 3e-4, 3e-3),
        "dropout": ("choice", [0.0, 0.1]),
    },
    "tree": {
        "min_samples_leaf": ("int", 1, 20),
        "max_depth": ("choice", [None, 10, 20, 40]),
    },
    "mlp_global": {
        "hidden_sizes": ("choice", [(32, 32), (64, 64), (128, 128)]),
        "global_lr": ("loguniform", 1e-3, 1e-2),
    },
    "knn": {"k": ("int", 2, 12)},
    "pod_rbf": {
        "energy_threshold": ("choice", [0.95, 0.99, 0.999, 1.0]),
        "kernel": ("choice", ["gaussian", "multiquadric"]),
    },
    "isomap_rbf": {
        "latent_dim": ("int", 2, 6),
        "k_graph": ("int", 8, 15),
    },
}
