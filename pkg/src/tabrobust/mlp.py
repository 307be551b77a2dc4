"""Reference classifier: a small fully connected network, trained and
differentiated by hand in numpy.

The default architecture is three rectifier hidden layers of 64, 32,
and 16 units feeding a 2-class softmax. Inputs are min-max scaled to
[0, 1] through a scaler stored on the model, so attack code can work
directly in scaled space. Training is mini-batch gradient descent with
adaptive moments; everything is driven by one seeded generator, so a
(seed, data, config) triple fixes the whole weight trajectory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .data import Dataset, DatasetSchema, MinMaxScaler
from .metrics import auc_score

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs must be >= 0, batch size and lr positive")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")


class ReferenceModel:
    """Feedforward rectifier network with a 2-class softmax head."""

    def __init__(
        self,
        n_features: int,
        hidden: tuple[int, ...] = (64, 32, 16),
        seed: int = 0,
        scaler: Optional[MinMaxScaler] = None,
    ):
        self.n_features = n_features
        self.hidden = tuple(hidden)
        self.scaler = scaler
        widths = [n_features, *self.hidden, 2]
        rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            scale = np.sqrt(2.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    # -- forward / backward ------------------------------------------------

    def _forward(self, Z: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns (probabilities, per-layer activations incl. input)."""
        acts = [Z]
        h = Z
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < len(self.weights) - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        logits = acts[-1]
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        probs = e / e.sum(axis=1, keepdims=True)
        return probs, acts

    def predict_proba_scaled(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return self._forward(Z)[0]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        if self.scaler is None:
            raise ValueError("model has no fitted scaler; use predict_proba_scaled")
        return self.predict_proba_scaled(self.scaler.transform(X))

    def predict_scaled(self, Z: np.ndarray) -> np.ndarray:
        return self.predict_proba_scaled(Z).argmax(axis=1)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)

    def loss_and_gradients(
        self, Z: np.ndarray, y: np.ndarray
    ) -> tuple[float, list[np.ndarray], list[np.ndarray], np.ndarray]:
        """Mean cross-entropy plus gradients w.r.t. weights, biases, input."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=int))
        n = Z.shape[0]
        probs, acts = self._forward(Z)
        eps = 1e-12
        loss = float(-np.mean(np.log(probs[np.arange(n), y] + eps)))

        delta = probs.copy()
        delta[np.arange(n), y] -= 1.0
        delta /= n
        grads_w: list[np.ndarray] = [np.empty(0)] * len(self.weights)
        grads_b: list[np.ndarray] = [np.empty(0)] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = acts[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0)
        grad_input = delta @ self.weights[0].T if self.weights else delta
        return loss, grads_w, grads_b, grad_input

    def input_gradient(self, Z: np.ndarray, y: np.ndarray) -> np.ndarray:
        """d(mean cross-entropy)/dZ in scaled space, per row.

        Per-row gradients are returned unaveraged, i.e. each row is the
        gradient of its own sample's loss.
        """
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        n = Z.shape[0]
        _, _, _, g = self.loss_and_gradients(Z, y)
        return g * n

    def cross_entropy(self, Z: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Per-row cross-entropy of the true class, in scaled space."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=int))
        probs = self.predict_proba_scaled(Z)
        return -np.log(probs[np.arange(Z.shape[0]), y] + 1e-12)

    # -- parameter plumbing -------------------------------------------------

    def get_params(self) -> list[np.ndarray]:
        return [w.copy() for w in self.weights] + [b.copy() for b in self.biases]

    def set_params(self, params: list[np.ndarray]) -> None:
        k = len(self.weights)
        self.weights = [p.copy() for p in params[:k]]
        self.biases = [p.copy() for p in params[k:]]

    def save(self, path: Union[str, Path]) -> None:
        payload = {
            "version": CHECKPOINT_VERSION,
            "n_features": self.n_features,
            "hidden": list(self.hidden),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "scaler": self.scaler.to_dict() if self.scaler else None,
        }
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ReferenceModel":
        d = json.loads(Path(path).read_text())
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')!r}")
        model = cls(d["n_features"], hidden=tuple(d["hidden"]))
        model.weights = [np.array(w, dtype=float) for w in d["weights"]]
        model.biases = [np.array(b, dtype=float) for b in d["biases"]]
        model.scaler = MinMaxScaler.from_dict(d["scaler"]) if d["scaler"] else None
        return model


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    train_auc: float
    val_auc: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_val_auc: float = float("nan")


def stratified_split(
    y: np.ndarray, fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """(train_idx, val_idx) with per-class proportional sampling."""
    val_idx = []
    for label in np.unique(y):
        members = np.where(y == label)[0]
        perm = rng.permutation(members)
        k = max(1, int(round(fraction * len(members))))
        val_idx.append(perm[:k])
    val = np.sort(np.concatenate(val_idx))
    mask = np.ones(len(y), dtype=bool)
    mask[val] = False
    return np.where(mask)[0], val


def train(
    model: ReferenceModel,
    dataset: Dataset,
    cfg: TrainConfig,
    schema: Optional[DatasetSchema] = None,
    batch_hook=None,
) -> tuple[ReferenceModel, TrainHistory]:
    """Fit the model; returns it with best-validation-AUC weights.

    The scaler comes from schema bounds when a schema is given (so the
    attack's [0, 1] box coincides with the declared feature bounds),
    otherwise it is fitted on the training split. `batch_hook(Zb, yb,
    epoch) -> Zb` lets callers rewrite each training batch in scaled
    space; adversarial training plugs in here.
    """
    rng = np.random.default_rng(cfg.seed)
    train_idx, val_idx = stratified_split(dataset.y, cfg.validation_fraction, rng)
    X_train, y_train = dataset.X[train_idx], dataset.y[train_idx]
    X_val, y_val = dataset.X[val_idx], dataset.y[val_idx]

    if model.scaler is None:
        if schema is not None:
            model.scaler = MinMaxScaler.from_schema(schema)
        else:
            model.scaler = MinMaxScaler().fit(X_train)
    Z_train = model.scaler.transform(X_train)
    Z_val = model.scaler.transform(X_val)

    history = TrainHistory()
    best_params = model.get_params()
    # Selection: max validation AUC, ties broken by lower validation
    # loss (AUC saturates early on easy tasks while the probabilities
    # are still poorly calibrated).
    best_auc = -np.inf
    best_loss = np.inf

    m_state = [np.zeros_like(p) for p in model.get_params()]
    v_state = [np.zeros_like(p) for p in model.get_params()]
    step = 0

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(Z_train))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            Zb, yb = Z_train[batch], y_train[batch]
            if batch_hook is not None:
                Zb = batch_hook(Zb, yb, epoch)
            loss, gw, gb, _ = model.loss_and_gradients(Zb, yb)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite training loss at epoch {epoch}, step {step}"
                )
            step += 1
            params = model.weights + model.biases
            grads = gw + gb
            lr_t = cfg.learning_rate * np.sqrt(
                1.0 - cfg.adam_beta2**step
            ) / (1.0 - cfg.adam_beta1**step)
            for p, g, m, v in zip(params, grads, m_state, v_state):
                m *= cfg.adam_beta1
                m += (1.0 - cfg.adam_beta1) * g
                v *= cfg.adam_beta2
                v += (1.0 - cfg.adam_beta2) * g * g
                p -= lr_t * m / (np.sqrt(v) + cfg.adam_eps)

        train_probs = model.predict_proba_scaled(Z_train)[:, 1]
        val_probs = model.predict_proba_scaled(Z_val)[:, 1]
        stats = EpochStats(
            epoch=epoch,
            train_loss=float(np.mean(model.cross_entropy(Z_train, y_train))),
            val_loss=float(np.mean(model.cross_entropy(Z_val, y_val))),
            train_auc=auc_score(y_train, train_probs),
            val_auc=auc_score(y_val, val_probs),
        )
        history.epochs.append(stats)
        if stats.val_auc > best_auc or (
            stats.val_auc == best_auc and stats.val_loss < best_loss
        ):
            best_auc = stats.val_auc
            best_loss = stats.val_loss
            best_params = model.get_params()
            history.best_epoch = epoch
            history.best_val_auc = stats.val_auc

    if cfg.epochs > 0:
        model.set_params(best_params)
    return model, history
