"""Dense feed-forward networks with hand-written reverse-mode gradients.

The training stack is deliberately self-contained: forward pass, backprop,
ADAM with bias correction, per-epoch metrics, and patience-based early
stopping, all over numpy arrays with no autograd dependency.  Targets are
scalar (one network per output channel), hidden activations are relu or
tanh per layer, and the output neuron is linear since the regressands are
min-max scaled continuous values.

Weights persist to a versioned JSON document (format tag ``uasml-mlp/1``)
holding the spec, the scaler snapshot, seed, per-epoch metrics and the
row-major layer arrays as full-precision decimals, so a saved ensemble
reloads bit-exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .narx import NarxDataset, ScalerSet
from .rng import stream

_ACTIVATIONS = ("relu", "tanh")

_FORMAT = "uasml-mlp/1"


class DivergenceError(ValueError):
    """A training loss left the finite range."""


@dataclass(frozen=True)
class MlpSpec:
    """Architecture and learning rate of one scalar-output network."""

    input_dim: int
    hidden: tuple[int, ...]
    activations: tuple[str, ...]
    learning_rate: float = 1.0e-3

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        object.__setattr__(self, "activations", tuple(self.activations))
        if self.input_dim < 1:
            raise ValueError("input_dim must be at least 1")
        if any(w < 1 for w in self.hidden):
            raise ValueError("hidden widths must be at least 1")
        if len(self.activations) != len(self.hidden):
            raise ValueError("one activation per hidden layer is required")
        for a in self.activations:
            if a not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if not (self.learning_rate >= 0.0 and math.isfinite(self.learning_rate)):
            raise ValueError("learning_rate must be finite and non-negative")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        """Widths of every layer boundary, input through the scalar output."""
        return (self.input_dim, *self.hidden, 1)


def count_params(spec: MlpSpec) -> int:
    """Trainable parameter count: sum of (fan_in + 1) * fan_out per layer."""
    dims = spec.layer_dims
    return sum((fi + 1) * fo for fi, fo in zip(dims[:-1], dims[1:]))


@dataclass(frozen=True)
class EpochMetrics:
    train_mse: float
    train_mae: float
    val_mse: float
    val_mae: float


@dataclass(frozen=True)
class TrainConfig:
    """ADAM and stopping settings shared by every run of one study."""

    max_epochs: int = 300
    patience: int = 100
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1.0e-8
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be positive")
        if not 0 < self.patience < self.max_epochs:
            raise ValueError("patience must lie in (0, max_epochs)")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("ADAM betas must lie in [0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")


@dataclass
class MlpModel:
    """Weights plus everything needed to reuse them: scalers and history.

    ``weights[l]`` has shape (fan_in, fan_out) and ``biases[l]`` shape
    (fan_out,); the history holds one record per trained epoch."""

    spec: MlpSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    scalers: ScalerSet | None = None
    history: list[EpochMetrics] = field(default_factory=list)
    epochs_trained: int = 0
    stopped_early: bool = False
    seed: int | None = None

    def __post_init__(self):
        dims = self.spec.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("layer count does not match the spec")
        for l, (fi, fo) in enumerate(zip(dims[:-1], dims[1:])):
            if self.weights[l].shape != (fi, fo) or self.biases[l].shape != (fo,):
                raise ValueError(f"layer {l} arrays do not match the spec shapes")
        if len(self.history) != self.epochs_trained:
            raise ValueError("history length must equal epochs_trained")


def init(spec: MlpSpec, rng: np.random.Generator) -> MlpModel:
    """Glorot-uniform weights with zero biases.

    The uniform limit is sqrt(2 / (fan_in + fan_out)), giving a weight
    variance of 2 / (fan_in + fan_out) / 3."""
    weights, biases = [], []
    dims = spec.layer_dims
    for fi, fo in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(2.0 / (fi + fo))
        weights.append(rng.uniform(-limit, limit, size=(fi, fo)))
        biases.append(np.zeros(fo))
    return MlpModel(spec=spec, weights=weights, biases=biases)


def _check_features(model: MlpModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.spec.input_dim:
        raise ValueError(f"expected {model.spec.input_dim} features, "
                         f"got {X.shape[1]}")
    return X


def _forward_cached(model: MlpModel, X: np.ndarray):
    """All layer activations and pre-activations, input first."""
    acts = [X]
    pre = []
    a = X
    n_hidden = len(model.spec.hidden)
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W + b
        pre.append(z)
        if l < n_hidden:
            name = model.spec.activations[l]
            a = np.maximum(z, 0.0) if name == "relu" else np.tanh(z)
        else:
            a = z
        acts.append(a)
    return acts, pre


def forward(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Predictions for scaled feature rows, returned as a flat vector."""
    X = _check_features(model, X)
    acts, _ = _forward_cached(model, X)
    return acts[-1].ravel()


def loss_and_grads(model: MlpModel, X: np.ndarray, y: np.ndarray):
    """Batch MSE and its gradient for every weight matrix and bias vector.

    Returns (mse, dW list, db list) with shapes mirroring the model."""
    X = _check_features(model, X)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] == 0:
        raise ValueError("cannot evaluate gradients on an empty batch")
    if y.shape[0] != X.shape[0]:
        raise ValueError("feature rows and targets must share their length")

    acts, pre = _forward_cached(model, X)
    resid = acts[-1] - y[:, None]
    n = X.shape[0]
    mse = float(np.mean(resid * resid))

    dW = [np.empty(0)] * len(model.weights)
    db = [np.empty(0)] * len(model.biases)
    delta = 2.0 * resid / n
    for l in range(len(model.weights) - 1, -1, -1):
        dW[l] = acts[l].T @ delta
        db[l] = delta.sum(axis=0)
        if l > 0:
            upstream = delta @ model.weights[l].T
            name = model.spec.activations[l - 1]
            if name == "relu":
                delta = upstream * (pre[l - 1] > 0.0)
            else:
                t = np.tanh(pre[l - 1])
                delta = upstream * (1.0 - t * t)
    return mse, dW, db


def metric_mse(pred: np.ndarray, y: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if pred.shape[0] == 0 or pred.shape[0] != y.shape[0]:
        raise ValueError("metrics need equal-length non-empty vectors")
    d = pred - y
    return float(np.mean(d * d))


def metric_mae(pred: np.ndarray, y: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if pred.shape[0] == 0 or pred.shape[0] != y.shape[0]:
        raise ValueError("metrics need equal-length non-empty vectors")
    return float(np.mean(np.abs(pred - y)))


# -- optimization ----------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators and the shared step counter."""

    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    t: int = 0


def init_adam(model: MlpModel) -> AdamState:
    return AdamState(
        m_w=[np.zeros_like(W) for W in model.weights],
        v_w=[np.zeros_like(W) for W in model.weights],
        m_b=[np.zeros_like(b) for b in model.biases],
        v_b=[np.zeros_like(b) for b in model.biases],
    )


def adam_step(model: MlpModel, dW: Sequence[np.ndarray],
              db: Sequence[np.ndarray], state: AdamState,
              cfg: TrainConfig) -> None:
    """One bias-corrected ADAM update, in place, at spec.learning_rate."""
    state.t += 1
    lr, b1, b2, eps = (model.spec.learning_rate, cfg.beta1, cfg.beta2,
                       cfg.epsilon)
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for l in range(len(model.weights)):
        for grad, value, m, v in ((dW[l], model.weights[l], state.m_w[l],
                                   state.v_w[l]),
                                  (db[l], model.biases[l], state.m_b[l],
                                   state.v_b[l])):
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad
            value -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def train(model: MlpModel, dataset: NarxDataset, cfg: TrainConfig) -> MlpModel:
    """Mini-batch ADAM with per-epoch metrics and patience-based stopping.

    Rows are reshuffled every epoch from a stream derived from (cfg.seed,
    epoch).  Validation MSE drives stopping: after ``patience`` epochs
    without strict improvement the run ends and the best-validation weights
    are restored, so the returned history's minimum sits at the restored
    epoch.  The input model is left untouched.  A non-finite loss raises
    with the offending epoch in the message."""
    X_tr, y_tr = dataset.rows("train")
    X_val, y_val = dataset.rows("validation")
    if X_tr.shape[0] == 0 or X_val.shape[0] == 0:
        raise ValueError("training and validation splits must be non-empty")

    out = MlpModel(spec=model.spec,
                   weights=[W.copy() for W in model.weights],
                   biases=[b.copy() for b in model.biases],
                   scalers=dataset.scalers, seed=cfg.seed)
    state = init_adam(out)
    history: list[EpochMetrics] = []
    best_val = math.inf
    best_epoch = 0
    best_weights = [W.copy() for W in out.weights]
    best_biases = [b.copy() for b in out.biases]
    n = X_tr.shape[0]

    for epoch in range(1, cfg.max_epochs + 1):
        order = stream(cfg.seed, "shuffle", epoch).permutation(n)
        for lo in range(0, n, cfg.batch_size):
            rows = order[lo:lo + cfg.batch_size]
            mse, dW, db = loss_and_grads(out, X_tr[rows], y_tr[rows])
            if not math.isfinite(mse):
                raise DivergenceError(f"training loss diverged at epoch {epoch}")
            adam_step(out, dW, db, state, cfg)

        p_tr = forward(out, X_tr)
        p_val = forward(out, X_val)
        rec = EpochMetrics(train_mse=metric_mse(p_tr, y_tr),
                           train_mae=metric_mae(p_tr, y_tr),
                           val_mse=metric_mse(p_val, y_val),
                           val_mae=metric_mae(p_val, y_val))
        if not all(math.isfinite(v) for v in
                   (rec.train_mse, rec.val_mse)):
            raise DivergenceError(f"training loss diverged at epoch {epoch}")
        history.append(rec)

        if rec.val_mse < best_val:
            best_val = rec.val_mse
            best_epoch = epoch
            best_weights = [W.copy() for W in out.weights]
            best_biases = [b.copy() for b in out.biases]
        elif epoch - best_epoch >= cfg.patience:
            out.stopped_early = True
            break

    out.weights = best_weights
    out.biases = best_biases
    out.history = history
    out.epochs_trained = len(history)
    return out


# -- persistence -----------------------------------------------------------------


def _scalers_to_json(s: ScalerSet | None):
    if s is None:
        return None
    return {"feature_lo": [float(v) for v in s.feature_lo],
            "feature_hi": [float(v) for v in s.feature_hi],
            "target_lo": s.target_lo, "target_hi": s.target_hi}


def _scalers_from_json(obj) -> ScalerSet | None:
    if obj is None:
        return None
    return ScalerSet(feature_lo=np.array(obj["feature_lo"], dtype=float),
                     feature_hi=np.array(obj["feature_hi"], dtype=float),
                     target_lo=float(obj["target_lo"]),
                     target_hi=float(obj["target_hi"]))


def save_model(model: MlpModel, path) -> None:
    """Write the versioned JSON weights document (format uasml-mlp/1).

    Layout: a header with the format tag, spec, seed, stopping outcome and
    per-epoch metrics, the scaler snapshot, then one object per layer with
    the row-major weight matrix and the bias vector.  Floats are written as
    shortest round-trip decimals, so reloading is bit-exact."""
    doc = {
        "format": _FORMAT,
        "spec": {"input_dim": model.spec.input_dim,
                 "hidden": list(model.spec.hidden),
                 "activations": list(model.spec.activations),
                 "learning_rate": model.spec.learning_rate},
        "seed": model.seed,
        "epochs_trained": model.epochs_trained,
        "stopped_early": model.stopped_early,
        "metrics": [{"train_mse": r.train_mse, "train_mae": r.train_mae,
                     "val_mse": r.val_mse, "val_mae": r.val_mae}
                    for r in model.history],
        "scalers": _scalers_to_json(model.scalers),
        "layers": [{"W": [[float(v) for v in row] for row in W],
                    "b": [float(v) for v in b]}
                   for W, b in zip(model.weights, model.biases)],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_model(path) -> MlpModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != _FORMAT:
        raise ValueError(f"unsupported weights format {doc.get('format')!r}")
    spec = MlpSpec(input_dim=int(doc["spec"]["input_dim"]),
                   hidden=tuple(doc["spec"]["hidden"]),
                   activations=tuple(doc["spec"]["activations"]),
                   learning_rate=float(doc["spec"]["learning_rate"]))
    history = [EpochMetrics(**{k: float(v) for k, v in r.items()})
               for r in doc["metrics"]]
    return MlpModel(
        spec=spec,
        weights=[np.array(layer["W"], dtype=float) for layer in doc["layers"]],
        biases=[np.array(layer["b"], dtype=float) for layer in doc["layers"]],
        scalers=_scalers_from_json(doc["scalers"]),
        history=history,
        epochs_trained=int(doc["epochs_trained"]),
        stopped_early=bool(doc["stopped_early"]),
        seed=doc["seed"])
