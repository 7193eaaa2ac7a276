"""Small fully connected classifier, implemented directly on numpy.

Forward pass, softmax cross-entropy, backpropagation, and mini-batch SGD
with early stopping are all in this module; the gradient is checked against
central finite differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Mlp:
    """Fully connected network with ReLU hidden layers and linear output."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, layer_sizes: list[int], seed: int = 0) -> "Mlp":
        if len(layer_sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        rng = np.random.default_rng(seed)
        weights = []
        biases = []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            scale = np.sqrt(2.0 / fan_in)
            weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights=weights, biases=biases)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "Mlp":
        return Mlp(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def forward(self, X: np.ndarray) -> np.ndarray:
        """Logits for a batch; ReLU after every layer except the last."""
        h = np.asarray(X, dtype=float)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    def predict(self, X: np.ndarray) -> np.ndarray:
        # np.argmax takes the first maximum, which is the required
        # lowest-index tie break.
        return np.argmax(self.forward(X), axis=1)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(model: Mlp, X: np.ndarray, y: np.ndarray) -> float:
    """Mean softmax cross-entropy of integer labels y."""
    logits = model.forward(X)
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(log_norm - z[np.arange(len(y)), y]))


def loss_and_gradients(
    model: Mlp, X: np.ndarray, y: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Backpropagated gradients of the mean cross-entropy."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    last = len(model.weights) - 1

    pre: list[np.ndarray] = []
    acts = [X]
    h = X
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
        acts.append(h)

    logits = acts[-1]
    probs = _softmax(logits)
    n = len(y)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_norm - shifted[np.arange(n), y]))

    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads_w: list[np.ndarray] = [np.empty(0)] * len(model.weights)
    grads_b: list[np.ndarray] = [np.empty(0)] * len(model.biases)
    for i in range(last, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0.0)
    return loss, grads_w, grads_b


@dataclass
class TrainingConfig:
    batch_size: int = 64
    learning_rate: float = 4e-3
    max_epochs: int = 2000
    patience: int = 100
    # Minimum validation-loss drop that counts as progress. Zero keeps the
    # strict "any improvement resets the clock" rule.
    min_delta: float = 0.0
    seed: int = 0


@dataclass
class TrainingResult:
    model: Mlp  # parameters from the best validation epoch
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0
    stopped_early: bool = False


def train(
    model: Mlp,
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_val: np.ndarray,
    y_val: np.ndarray,
    config: TrainingConfig | None = None,
) -> TrainingResult:
    """Mini-batch SGD with validation-loss early stopping.

    Training halts once the validation loss has gone `patience` consecutive
    epochs without improving by more than min_delta, and the parameters of
    the best epoch are returned, not the final ones.
    """
    cfg = config or TrainingConfig()
    rng = np.random.default_rng(cfg.seed)
    result = TrainingResult(model=model.copy())
    best_val = np.inf
    wait = 0
    n = len(y_train)

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, gw, gb = loss_and_gradients(model, X_train[idx], y_train[idx])
            for i in range(len(model.weights)):
                model.weights[i] -= cfg.learning_rate * gw[i]
                model.biases[i] -= cfg.learning_rate * gb[i]

        result.train_losses.append(cross_entropy(model, X_train, y_train))
        val_loss = cross_entropy(model, X_val, y_val)
        result.val_losses.append(val_loss)
        result.epochs_run = epoch

        if val_loss < best_val - cfg.min_delta:
            best_val = val_loss
            result.best_epoch = epoch
            result.model = model.copy()
            wait = 0
        else:
            wait += 1
            if wait >= cfg.patience:
                result.stopped_early = True
                break
    return result


def evaluate(model: Mlp, X: np.ndarray, y: np.ndarray) -> float:
    """Classification accuracy on integer labels."""
    return float(np.mean(model.predict(X) == np.asarray(y, dtype=int)))


def save_model(model: Mlp, path: str | Path) -> None:
    payload = {
        "layer_sizes": model.layer_sizes,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    Path(path).write_text(json.dumps(payload))


def load_model(path: str | Path) -> Mlp:
    payload = json.loads(Path(path).read_text())
    weights = [np.array(w, dtype=float) for w in payload["weights"]]
    biases = [np.array(b, dtype=float) for b in payload["biases"]]
    model = Mlp(weights=weights, biases=biases)
    if model.layer_sizes != payload["layer_sizes"]:
        raise ValueError("model file is inconsistent")
    return model
