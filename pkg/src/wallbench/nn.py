"""Dense networks with hand-written backpropagation and an Adam trainer.

Two architectures share one training loop:

* :class:`MlpNet` -- fully connected stack, linear output layer.
* :class:`LambdaNet` -- dual-branch network: geometric features (first six
  columns) and flow-condition features (last three) run through separate
  stacks whose outputs are concatenated and fed to a merged trunk.

Parameters are a flat list of arrays ``[W1, b1, W2, b2, ...]`` with ``W`` of
shape ``(fan_in, fan_out)``. The loss is the mean over rows of the summed
squared error over output columns, plus ``l2 * sum(W**2)`` over weight
matrices.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import TrainingError, ValidationError

log = logging.getLogger(__name__)

__all__ = [
    "MlpSpec",
    "LambdaDnnSpec",
    "MlpNet",
    "LambdaNet",
    "TrainedNet",
    "loss_and_grad",
    "mlp_train",
    "mlp_predict",
    "lambda_dnn_forward",
    "REFERENCE_MLP_HIDDEN",
    "REFERENCE_LAMBDA_GEO",
    "REFERENCE_LAMBDA_COND",
    "REFERENCE_LAMBDA_TRUNK",
    "REFERENCE_GLOBAL_MLP_HIDDEN",
]

REFERENCE_MLP_HIDDEN = (166, 235, 248, 81, 72)
REFERENCE_LAMBDA_GEO = (107, 116, 236, 139)
REFERENCE_LAMBDA_COND = (240, 179, 114)
REFERENCE_LAMBDA_TRUNK = (230, 162, 124)
# field-by-field network widths for full-size surfaces
REFERENCE_GLOBAL_MLP_HIDDEN = (75, 120, 1226, 16490)

ACTIVATIONS = ("leaky_relu", "relu", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    hidden_sizes: tuple[int, ...] = (64, 64)
    activation: str = "leaky_relu"
    leaky_slope: float = 0.01
    dropout: float = 0.0
    l2: float = 0.0
    lr: float = 1e-3
    lr_decay: float = 0.99
    batch_fraction: float = 0.01
    epochs: int = 100
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        _check_training_fields(self)
        if any(h <= 0 for h in self.hidden_sizes):
            raise ValidationError(f"hidden sizes must be positive, got {self.hidden_sizes}")


@dataclass(frozen=True)
class LambdaDnnSpec:
    geo_branch: tuple[int, ...] = (32, 32)
    cond_branch: tuple[int, ...] = (32, 32)
    trunk: tuple[int, ...] = (64,)
    activation: str = "leaky_relu"
    leaky_slope: float = 0.01
    dropout: float = 0.0
    l2: float = 0.0
    lr: float = 1e-3
    lr_decay: float = 0.99
    batch_fraction: float = 0.01
    epochs: int = 100
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        for name in ("geo_branch", "cond_branch", "trunk"):
            widths = tuple(int(h) for h in getattr(self, name))
            if not widths or any(h <= 0 for h in widths):
                raise ValidationError(f"{name} must be a non-empty list of positive widths, got {widths}")
            object.__setattr__(self, name, widths)
        _check_training_fields(self)


def _check_training_fields(spec):
    if spec.activation not in ACTIVATIONS:
        raise ValidationError(f"activation must be one of {ACTIVATIONS}, got {spec.activation!r}")
    if not 0.0 <= spec.dropout < 1.0:
        raise ValidationError(f"dropout must be in [0, 1), got {spec.dropout}")
    if spec.epochs < 1:
        raise ValidationError(f"epochs must be >= 1, got {spec.epochs}")
    if not 0.0 < spec.batch_fraction <= 1.0:
        raise ValidationError(f"batch_fraction must be in (0, 1], got {spec.batch_fraction}")
    if spec.l2 < 0 or spec.lr <= 0 or spec.lr_decay <= 0:
        raise ValidationError("l2 must be >= 0, lr and lr_decay > 0")


# -- activations --------------------------------------------------------------

def _act(name, slope, z):
    if name == "leaky_relu":
        return np.where(z > 0, z, slope * z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_grad(name, slope, z, a):
    if name == "leaky_relu":
        return np.where(z > 0, 1.0, slope)
    if name == "relu":
        return (z > 0).astype(z.dtype)
    return 1.0 - a * a


# -- layer stacks ---------------------------------------------------------------

class _Stack:
    """Consecutive dense layers; the last one is linear when ``linear_out``."""

    def __init__(self, sizes, linear_out):
        self.sizes = tuple(sizes)
        self.linear_out = linear_out

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    def init(self, rng):
        params = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = np.sqrt(6.0 / fan_in)
            params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            params.append(np.zeros(fan_out))
        return params

    def forward(self, params, X, act, slope, dropout, rng):
        cache = []
        a = X
        for i in range(self.n_layers):
            W, b = params[2 * i], params[2 * i + 1]
            z = a @ W + b
            last = i == self.n_layers - 1
            if last and self.linear_out:
                cache.append((a, z, None, None))
                a = z
                continue
            h = _act(act, slope, z)
            mask = None
            if dropout > 0 and rng is not None:
                mask = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
                out = h * mask
            else:
                out = h
            cache.append((a, z, h, mask))
            a = out
        return a, cache

    def backward(self, params, cache, d_out, act, slope):
        grads = [None] * len(params)
        d = d_out
        for i in reversed(range(self.n_layers)):
            a_in, z, h, mask = cache[i]
            if h is not None:
                if mask is not None:
                    d = d * mask
                d = d * _act_grad(act, slope, z, h)
            W = params[2 * i]
            grads[2 * i] = a_in.T @ d
            grads[2 * i + 1] = d.sum(axis=0)
            d = d @ W.T
        return grads, d

    def param_count(self):
        return sum(i * o + o for i, o in zip(self.sizes[:-1], self.sizes[1:]))


class MlpNet:
    def __init__(self, spec: MlpSpec, n_in: int, n_out: int):
        self.spec = spec
        self.n_in, self.n_out = n_in, n_out
        self.stack = _Stack((n_in, *spec.hidden_sizes, n_out), linear_out=True)

    def init(self, rng):
        return self.stack.init(rng)

    def forward(self, params, X, rng=None):
        s = self.spec
        return self.stack.forward(params, X, s.activation, s.leaky_slope, s.dropout, rng)

    def backward(self, params, cache, d_out):
        s = self.spec
        grads, _ = self.stack.backward(params, cache, d_out, s.activation, s.leaky_slope)
        return grads

    def param_count(self):
        return self.stack.param_count()


class LambdaNet:
    N_GEO = 6

    def __init__(self, spec: LambdaDnnSpec, n_in: int = 9, n_out: int = 4):
        if n_in <= self.N_GEO:
            raise ValidationError(f"lambda-DNN needs more than {self.N_GEO} inputs, got {n_in}")
        self.spec = spec
        self.n_in, self.n_out = n_in, n_out
        self.geo = _Stack((self.N_GEO, *spec.geo_branch), linear_out=False)
        self.cond = _Stack((n_in - self.N_GEO, *spec.cond_branch), linear_out=False)
        merged = spec.geo_branch[-1] + spec.cond_branch[-1]
        self.trunk = _Stack((merged, *spec.trunk, n_out), linear_out=True)
        self._split = (2 * self.geo.n_layers, 2 * self.geo.n_layers + 2 * self.cond.n_layers)

    def _parts(self, params):
        i, j = self._split
        return params[:i], params[i:j], params[j:]

    def init(self, rng):
        return self.geo.init(rng) + self.cond.init(rng) + self.trunk.init(rng)

    def forward(self, params, X, rng=None):
        s = self.spec
        pg, pc, pt = self._parts(params)
        g, cg = self.geo.forward(pg, X[:, : self.N_GEO], s.activation, s.leaky_slope, s.dropout, rng)
        c, cc = self.cond.forward(pc, X[:, self.N_GEO:], s.activation, s.leaky_slope, s.dropout, rng)
        out, ct = self.trunk.forward(pt, np.hstack([g, c]), s.activation, s.leaky_slope, s.dropout, rng)
        return out, (cg, cc, ct)

    def backward(self, params, cache, d_out):
        s = self.spec
        pg, pc, pt = self._parts(params)
        cg, cc, ct = cache
        gt, d_merged = self.trunk.backward(pt, ct, d_out, s.activation, s.leaky_slope)
        ng = self.spec.geo_branch[-1]
        gg, _ = self.geo.backward(pg, cg, d_merged[:, :ng], s.activation, s.leaky_slope)
        gc, _ = self.cond.backward(pc, cc, d_merged[:, ng:], s.activation, s.leaky_slope)
        return gg + gc + gt

    def param_count(self):
        return self.geo.param_count() + self.cond.param_count() + self.trunk.param_count()


def build_net(spec, n_in, n_out):
    if isinstance(spec, LambdaDnnSpec):
        return LambdaNet(spec, n_in, n_out)
    return MlpNet(spec, n_in, n_out)


def loss_and_grad(net, params, X, Y, l2=0.0, rng=None):
    """Loss and its gradient with respect to every parameter array."""
    out, cache = net.forward(params, X, rng)
    diff = out - Y
    n = X.shape[0]
    loss = float(np.sum(diff * diff) / n)
    grads = net.backward(params, cache, 2.0 * diff / n)
    if l2 > 0:
        for k, p in enumerate(params):
            if p.ndim == 2:
                loss += l2 * float(np.sum(p * p))
                grads[k] = grads[k] + 2.0 * l2 * p
    return loss, grads


@dataclass(eq=False)
class TrainedNet:
    spec: MlpSpec | LambdaDnnSpec
    n_in: int
    n_out: int
    params: list
    history: dict = field(default_factory=dict)

    @property
    def net(self):
        return build_net(self.spec, self.n_in, self.n_out)

    def predict(self, X):
        return mlp_predict(self, X)

    def meta(self) -> dict:
        kind = "lambda_dnn" if isinstance(self.spec, LambdaDnnSpec) else "mlp"
        return {"arch": kind, "spec": asdict(self.spec), "n_in": self.n_in, "n_out": self.n_out}

    def arrays(self) -> dict:
        return {f"p{k:03d}": p for k, p in enumerate(self.params)}

    @classmethod
    def from_saved(cls, meta: dict, arrays: dict) -> "TrainedNet":
        spec_cls = LambdaDnnSpec if meta["arch"] == "lambda_dnn" else MlpSpec
        spec = spec_cls(**meta["spec"])
        params = [arrays[k] for k in sorted(k for k in arrays if k.startswith("p"))]
        return cls(spec, int(meta["n_in"]), int(meta["n_out"]), params)


def _eval_loss(net, params, X, Y, chunk=65536):
    total = 0.0
    for i in range(0, X.shape[0], chunk):
        out, _ = net.forward(params, X[i:i + chunk])
        total += float(np.sum((out - Y[i:i + chunk]) ** 2))
    return total / X.shape[0]


def mlp_train(spec, X, Y, validation=None, log_every: int = 0) -> TrainedNet:
    """Train a network (MlpSpec or LambdaDnnSpec) with Adam on scaled data.

    Returns the parameters with the best validation loss (the last epoch's
    when no validation pair is given). ``history`` holds per-epoch mean batch
    loss (``train``) and full validation loss (``val``).
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0] or X.shape[0] == 0:
        raise ValidationError(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}")
    net = build_net(spec, X.shape[1], Y.shape[1])
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    params = net.init(rng)
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    n = X.shape[0]
    batch = max(1, int(round(spec.batch_fraction * n)))
    drop_rng = rng if spec.dropout > 0 else None
    history = {"train": [], "val": []}
    best_params, best_val = [p.copy() for p in params], np.inf
    step = 0
    for epoch in range(spec.epochs):
        lr = spec.lr * spec.lr_decay**epoch
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            loss, grads = loss_and_grad(net, params, X[idx], Y[idx], spec.l2, drop_rng)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch} (learning rate {lr:.3g})")
            step += 1
            c1 = 1.0 - spec.beta1**step
            c2 = 1.0 - spec.beta2**step
            for k, g in enumerate(grads):
                m[k] = spec.beta1 * m[k] + (1.0 - spec.beta1) * g
                v[k] = spec.beta2 * v[k] + (1.0 - spec.beta2) * (g * g)
                params[k] = params[k] - lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + spec.adam_eps)
            losses.append(loss)
        history["train"].append(float(np.mean(losses)))
        if validation is not None:
            val = _eval_loss(net, params, *validation)
            if not np.isfinite(val):
                raise TrainingError(f"non-finite validation loss at epoch {epoch} (learning rate {lr:.3g})")
            history["val"].append(val)
            if val < best_val:
                best_val, best_params = val, [p.copy() for p in params]
        if log_every and (epoch + 1) % log_every == 0:
            log.info("epoch %d train %.4g val %s", epoch + 1, history["train"][-1],
                     f"{history['val'][-1]:.4g}" if history["val"] else "-")
    final = best_params if validation is not None else params
    return TrainedNet(spec, X.shape[1], Y.shape[1], final, history)


def mlp_predict(model: TrainedNet, X, chunk: int = 65536) -> np.ndarray:
    """Deterministic forward pass (dropout disabled)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_in:
        raise ValidationError(f"expected inputs with {model.n_in} columns, got shape {X.shape}")
    net = model.net
    outs = [net.forward(model.params, X[i:i + chunk])[0] for i in range(0, X.shape[0], chunk)]
    return np.vstack(outs) if outs else np.empty((0, model.n_out))


def lambda_dnn_forward(spec: LambdaDnnSpec, params, X9) -> np.ndarray:
    X9 = np.asarray(X9, dtype=np.float64)
    net = LambdaNet(spec, X9.shape[1], params[-1].shape[0])
    return net.forward(params, X9)[0]


def with_seed(spec, seed):
    return replace(spec, seed=seed)
