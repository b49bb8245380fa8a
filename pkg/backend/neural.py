from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

# Role of this module:
# From-scratch dense feedforward classifier used by both the transmitter (idle/busy)
# and the adversary (ACK/no-ACK). ReLU hidden layers, 2-way softmax output,
# softmax cross-entropy, plain minibatch SGD with replacement sampling.
#
# Label convention: class 1 is "busy" for T and "ACK" for A; the score p(s) is the
# class-1 softmax component.


class DimensionError(ValueError):
    """Feature vector length does not match the model input dimension."""


# =====================================================================
# Hyperparameters
# =====================================================================

@dataclass(frozen=True)
class Hyperparams:
    hidden_layers: int = 3
    neurons_per_layer: Tuple[int, ...] = (100, 100, 100)
    batch_size: int = 100
    training_steps: int = 1000
    learning_rate: float = 0.05
    decision_boundary: float = 0.5

    @classmethod
    def uniform(cls, hidden_layers: int, neurons: int, **kwargs) -> "Hyperparams":
        """Same neuron count on every hidden layer."""
        return cls(hidden_layers=hidden_layers, neurons_per_layer=(neurons,) * hidden_layers, **kwargs)

    def training_key(self) -> tuple:
        """Part of H that affects θ (τ only affects classification)."""
        return (self.hidden_layers, tuple(self.neurons_per_layer), self.batch_size,
                self.training_steps, self.learning_rate)

    def violations(self, path: str = "hyperparams") -> List[str]:
        errors = []
        if self.hidden_layers < 1:
            errors.append(f"{path}.hidden_layers: must be >= 1")
        if len(self.neurons_per_layer) != self.hidden_layers:
            errors.append(
                f"{path}.neurons_per_layer: expected {self.hidden_layers} entries, got {len(self.neurons_per_layer)}"
            )
        if any(n < 1 for n in self.neurons_per_layer):
            errors.append(f"{path}.neurons_per_layer: counts must be >= 1")
        if self.batch_size < 1:
            errors.append(f"{path}.batch_size: must be >= 1")
        if self.training_steps < 0:
            errors.append(f"{path}.training_steps: must be >= 0")
        if not self.learning_rate > 0:
            errors.append(f"{path}.learning_rate: must be > 0")
        if not 0.0 < self.decision_boundary < 1.0:
            errors.append(f"{path}.decision_boundary: must be in (0,1)")
        return errors


# =====================================================================
# Data
# =====================================================================

POWER_FLOOR = 1e-12


def to_db(powers: np.ndarray) -> np.ndarray:
    """10·log10 of powers floored at POWER_FLOOR."""
    return 10.0 * np.log10(np.maximum(np.asarray(powers, dtype=float), POWER_FLOOR))


@dataclass
class Standardizer:
    """
    Per-feature zero-mean / unit-variance transform fitted on training data only.

    With log_power the raw powers are mapped to dB before centering, so noise-only and
    signal-bearing windows sit a fixed ratio apart whatever the absolute signal level.
    """

    mean: np.ndarray
    std: np.ndarray
    log_power: bool = False

    @classmethod
    def fit(cls, X: np.ndarray, log_power: bool = False) -> "Standardizer":
        F = to_db(X) if log_power else np.asarray(X, dtype=float)
        mean = F.mean(axis=0)
        std = F.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(mean=mean, std=std, log_power=log_power)

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(mean=np.zeros(dim), std=np.ones(dim))

    def transform(self, X: np.ndarray) -> np.ndarray:
        F = to_db(X) if self.log_power else X
        return (F - self.mean) / self.std

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        F = Z * self.std + self.mean
        return 10.0 ** (F / 10.0) if self.log_power else F


@dataclass
class Sample:
    features: np.ndarray
    label: int


@dataclass
class Dataset:
    """
    Ordered samples: X is (n, n_new) raw sensed powers, y is 0/1.

    log_power asks whoever trains on the data to learn on dB features.
    """

    X: np.ndarray
    y: np.ndarray
    log_power: bool = False

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 2:
            self.X = self.X.reshape(len(self.y), -1)

    def __len__(self) -> int:
        return len(self.y)

    def __getitem__(self, i: int) -> Sample:
        return Sample(features=self.X[i], label=int(self.y[i]))

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def class_counts(self) -> Tuple[int, int]:
        n1 = int(self.y.sum())
        return len(self.y) - n1, n1

    def has_both_classes(self) -> bool:
        n0, n1 = self.class_counts()
        return n0 > 0 and n1 > 0

    def split(self, n_train: int) -> Tuple["Dataset", "Dataset"]:
        """First n_train samples for training, the rest held out."""
        return (Dataset(self.X[:n_train], self.y[:n_train], self.log_power),
                Dataset(self.X[n_train:], self.y[n_train:], self.log_power))


def windowed_dataset(powers: Sequence[float], labels: Sequence[int], n_new: int, log_power: bool = False) -> Dataset:
    """
    One sample per index t >= n_new: features p_{t-n_new+1..t}, label labels[t].

    A trace of length n_new therefore yields no samples.
    """
    powers = np.asarray(powers, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if len(powers) != len(labels):
        raise ValueError("powers and labels must have equal length")
    if n_new < 1:
        raise ValueError("n_new must be >= 1")
    n = len(powers) - n_new
    if n <= 0:
        return Dataset(np.empty((0, n_new)), np.empty(0, dtype=int), log_power)
    windows = np.lib.stride_tricks.sliding_window_view(powers, n_new)
    # window ending at t starts at t - n_new + 1
    X = windows[1:n + 1].copy()
    y = labels[n_new:].copy()
    return Dataset(X, y, log_power)


# =====================================================================
# Model
# =====================================================================

@dataclass
class Mlp:
    """Dense ReLU network with a 2-way softmax head. W[i] has shape (fan_in, fan_out)."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    scaler: Optional[Standardizer] = None
    loss_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must have the same number of layers")
        for i in range(1, len(self.weights)):
            if self.weights[i].shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i} input dim does not chain with layer {i - 1}")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[1],):
                raise ValueError("bias shape does not match layer width")
        if self.weights[-1].shape[1] != 2:
            raise ValueError("output layer must have 2 units")
        if self.scaler is None:
            self.scaler = Standardizer.identity(self.input_dim)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def layer_dims(self) -> List[int]:
        return [self.input_dim] + [w.shape[1] for w in self.weights]

    def parameters(self) -> List[np.ndarray]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params


def init_mlp(input_dim: int, h: Hyperparams, rng: np.random.Generator) -> Mlp:
    """He-style fan-in scaled uniform init, zero biases."""
    dims = [input_dim] + list(h.neurons_per_layer) + [2]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights=weights, biases=biases)


def _check_dim(model: Mlp, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.input_dim:
        raise DimensionError(f"expected {model.input_dim} features, got {X.shape[1]}")
    return X


def _logits(model: Mlp, Z: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
    """Forward on standardized inputs, keeping pre-activations and activations for backprop."""
    activations = [Z]
    pre = []
    a = Z
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        pre.append(z)
        a = z if i == last else np.maximum(z, 0.0)
        activations.append(a)
    return a, pre, activations


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def predict_proba(model: Mlp, X: np.ndarray) -> np.ndarray:
    """Softmax outputs (n, 2) for raw features."""
    X = _check_dim(model, X)
    logits, _, _ = _logits(model, model.scaler.transform(X))
    return _softmax(logits)


def forward(model: Mlp, features: Sequence[float]) -> float:
    """Score p(s) of one raw feature window."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 1:
        raise DimensionError("forward expects a single feature vector")
    return float(predict_proba(model, features)[0, 1])


def scores(model: Mlp, X: np.ndarray) -> np.ndarray:
    return predict_proba(model, X)[:, 1]


def classify(model: Mlp, features: Sequence[float], tau: float) -> int:
    """1 (busy / ACK) iff p(s) >= tau; ties go to class 1."""
    return int(forward(model, features) >= tau)


@dataclass
class Classifier:
    """Trained network plus its decision boundary τ."""

    model: Mlp
    tau: float = 0.5

    def scores(self, X: np.ndarray) -> np.ndarray:
        return scores(self.model, X)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.scores(X) >= self.tau).astype(int)

    def score_one(self, features: Sequence[float]) -> float:
        return forward(self.model, features)


# =====================================================================
# Loss and gradients
# =====================================================================

def cross_entropy(model: Mlp, X: np.ndarray, y: np.ndarray, standardized: bool = False) -> float:
    X = _check_dim(model, X)
    Z = X if standardized else model.scaler.transform(X)
    logits, _, _ = _logits(model, Z)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    y = np.asarray(y, dtype=int)
    return float(-log_probs[np.arange(len(y)), y].mean())


def gradients(model: Mlp, Z: np.ndarray, y: np.ndarray) -> List[np.ndarray]:
    """
    Backprop of mean softmax cross-entropy w.r.t. [W0, b0, W1, b1, ...].

    Args:
        model: network
        Z: standardized inputs (n, d)
        y: integer labels (n,)
    """
    logits, pre, activations = _logits(model, Z)
    probs = _softmax(logits)
    n = len(y)
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads: List[np.ndarray] = [None] * (2 * len(model.weights))
    for i in range(len(model.weights) - 1, -1, -1):
        grads[2 * i] = activations[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0)
    return grads


# =====================================================================
# Training
# =====================================================================

def train(data: Dataset, h: Hyperparams, rng: np.random.Generator, steps: Optional[int] = None) -> Mlp:
    """
    Minibatch SGD on softmax cross-entropy.

    Args:
        data: training samples (raw powers); the standardizer is fitted here, in dB when data.log_power is set
        h: hyperparameters (architecture, batch, steps, learning rate)
        rng: generator for init and minibatch draws
        steps: override of h.training_steps (partial budgets in hyperband)

    Returns:
        trained Mlp carrying its standardizer and per-step loss history
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if not data.has_both_classes():
        raise ValueError("training data contains a single class")

    n_steps = h.training_steps if steps is None else steps
    model = init_mlp(data.n_features, h, rng)
    model.scaler = Standardizer.fit(data.X, log_power=data.log_power)
    Z = model.scaler.transform(data.X)
    y = data.y

    for _ in range(n_steps):
        idx = rng.integers(0, len(y), size=h.batch_size)
        Zb, yb = Z[idx], y[idx]
        grads = gradients(model, Zb, yb)
        for param, grad in zip(model.parameters(), grads):
            param -= h.learning_rate * grad
        model.loss_history.append(cross_entropy(model, Zb, yb, standardized=True))
    return model


def train_classifier(data: Dataset, h: Hyperparams, rng: np.random.Generator, steps: Optional[int] = None) -> Classifier:
    return Classifier(model=train(data, h, rng, steps=steps), tau=h.decision_boundary)


# =====================================================================
# Gradient check
# =====================================================================

def _relu_pattern(model: Mlp, Z: np.ndarray) -> List[np.ndarray]:
    _, pre, _ = _logits(model, Z)
    return [z > 0 for z in pre[:-1]]


def _same_pattern(a: List[np.ndarray], b: List[np.ndarray]) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def gradient_check(
    model: Mlp,
    sample: Sample,
    step: float = 1e-5,
    gradient_fn: Optional[Callable[[Mlp, np.ndarray, np.ndarray], List[np.ndarray]]] = None,
    return_details: bool = False,
):
    """
    Compare analytic dCE/dθ with central finite differences over every parameter.

    Entries whose ±step perturbation flips a hidden ReLU on or off are skipped: the loss
    is not differentiable there and a central difference averages two slopes.

    Returns:
        max relative error |a - n| / max(|a|, |n|, 1e-5); the floor keeps float roundoff
        on near-zero entries from reading as error. With return_details, also the max
        absolute difference.
    """
    gradient_fn = gradient_fn or gradients
    Z = model.scaler.transform(np.asarray(sample.features, dtype=float)[None, :])
    y = np.array([sample.label])
    analytic = gradient_fn(model, Z, y)
    pattern = _relu_pattern(model, Z)

    max_rel = 0.0
    max_abs = 0.0
    for param, grad in zip(model.parameters(), analytic):
        it = np.nditer(param, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            original = param[idx]
            param[idx] = original + step
            plus = cross_entropy(model, Z, y, standardized=True)
            smooth = _same_pattern(pattern, _relu_pattern(model, Z))
            param[idx] = original - step
            minus = cross_entropy(model, Z, y, standardized=True)
            smooth = smooth and _same_pattern(pattern, _relu_pattern(model, Z))
            param[idx] = original
            if not smooth:
                continue
            numeric = (plus - minus) / (2.0 * step)
            a = grad[idx]
            diff = abs(a - numeric)
            max_abs = max(max_abs, diff)
            max_rel = max(max_rel, diff / max(abs(a), abs(numeric), 1e-5))
    if return_details:
        return max_rel, max_abs
    return max_rel


# =====================================================================
# Serialization
# =====================================================================

def mlp_to_dict(model: Mlp) -> Dict[str, object]:
    """Layer dims + row-major weights/biases; Python floats keep full precision in JSON."""
    return {
        "layer_dims": model.layer_dims,
        "weights": [w.ravel().tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "scaler": {
            "mean": model.scaler.mean.tolist(),
            "std": model.scaler.std.tolist(),
            "log_power": model.scaler.log_power,
        },
    }


def mlp_from_dict(payload: Dict[str, object]) -> Mlp:
    dims = payload["layer_dims"]
    weights = [
        np.asarray(w, dtype=float).reshape(fan_in, fan_out)
        for w, fan_in, fan_out in zip(payload["weights"], dims[:-1], dims[1:])
    ]
    biases = [np.asarray(b, dtype=float) for b in payload["biases"]]
    scaler_raw = payload.get("scaler")
    scaler = None
    if scaler_raw is not None:
        scaler = Standardizer(
            np.asarray(scaler_raw["mean"], dtype=float),
            np.asarray(scaler_raw["std"], dtype=float),
            bool(scaler_raw.get("log_power", False)),
        )
    return Mlp(weights=weights, biases=biases, scaler=scaler)
