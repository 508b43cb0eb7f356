"""Greedy binary regression tree (exact CART, multi-output squared error)."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError

__all__ = ["TreeSpec", "TreeModel", "tree_fit", "tree_predict", "best_split"]


@dataclass(frozen=True)
class TreeSpec:
    max_depth: int | None = None
    min_samples_leaf: int = 1
    # kept for interface stability; equal-SSE ties are resolved by feature index, then threshold
    seed: int = 0

    def __post_init__(self):
        if self.min_samples_leaf < 1:
            raise ValidationError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValidationError(f"max_depth must be >= 0, got {self.max_depth}")


@dataclass(eq=False)
class TreeModel:
    spec: TreeSpec
    feature: np.ndarray    # -1 marks a leaf
    threshold: np.ndarray  # go left when x[feature] <= threshold
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # (n_nodes, n_outputs) node means

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def meta(self) -> dict:
        return {"arch": "tree", "spec": asdict(self.spec)}

    def arrays(self) -> dict:
        return {"feature": self.feature, "threshold": self.threshold, "left": self.left,
                "right": self.right, "value": self.value}

    @classmethod
    def from_saved(cls, meta, arrays):
        return cls(TreeSpec(**meta["spec"]), arrays["feature"], arrays["threshold"],
                   arrays["left"], arrays["right"], arrays["value"])


def best_split(X, Y, min_samples_leaf=1):
    """Best (feature, threshold, children SSE) for one node, or None if no valid split.

    Candidates are midpoints between consecutive distinct sorted values.
    Equal SSE: the lower feature index wins, then the lower threshold.
    """
    n = X.shape[0]
    Yc = Y - Y.mean(axis=0)
    tot = Yc.sum(axis=0)
    tot2 = np.sum(Yc * Yc, axis=0)
    n_l = np.arange(1, n, dtype=np.float64)
    n_r = n - n_l
    ok_size = (n_l >= min_samples_leaf) & (n_r >= min_samples_leaf)
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = Yc[order]
        cs = np.cumsum(ys, axis=0)[:-1]
        cs2 = np.cumsum(ys * ys, axis=0)[:-1]
        sse_l = np.sum(cs2 - cs * cs / n_l[:, None], axis=1)
        rs = tot - cs
        sse_r = np.sum((tot2 - cs2) - rs * rs / n_r[:, None], axis=1)
        valid = ok_size & (xs[:-1] < xs[1:])
        if not valid.any():
            continue
        sse = np.where(valid, sse_l + sse_r, np.inf)
        i = int(np.argmin(sse))
        if best is None or sse[i] < best[2]:
            thr = 0.5 * (xs[i] + xs[i + 1])
            if not thr < xs[i + 1]:
                thr = xs[i]
            best = (f, float(thr), float(sse[i]))
    return best


def tree_fit(spec: TreeSpec, X, Y) -> TreeModel:
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("tree_fit needs a non-empty 2-D input matrix")
    if Y.shape[0] != X.shape[0]:
        raise ValidationError(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}")

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(Y[idx].mean(axis=0))
        return len(feature) - 1

    stack = [(new_node(np.arange(X.shape[0])), np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if idx.size < 2 * spec.min_samples_leaf:
            continue
        if spec.max_depth is not None and depth >= spec.max_depth:
            continue
        Yn = Y[idx]
        if np.all(Yn == Yn[0]):
            continue
        split = best_split(X[idx], Yn, spec.min_samples_leaf)
        if split is None:
            continue
        f, thr, _ = split
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return TreeModel(
        spec,
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
    )


def tree_predict(model: TreeModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = model.feature[node] >= 0
    while active.any():
        rows = np.flatnonzero(active)
        nd = node[rows]
        goes_left = X[rows, model.feature[nd]] <= model.threshold[nd]
        node[rows] = np.where(goes_left, model.left[nd], model.right[nd])
        active[rows] = model.feature[node[rows]] >= 0
    return model.value[node]
