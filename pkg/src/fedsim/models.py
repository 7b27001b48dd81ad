"""Small differentiable classifiers and the local SGD loop.

Stands in for each vehicle's on-board training: a multinomial logistic
regression and a one-hidden-layer tanh MLP, both with exact analytic
gradients so every training step can be checked against finite
differences. Parameters live in a flat float64 vector with a named
tensor layout, which is also the unit of exchange between clients and
the aggregation server.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .seeding import TAG_EPOCH, TAG_INIT, rng_for

Layout = tuple[tuple[str, tuple[int, ...]], ...]


class ModelKind(str, Enum):
    LOGISTIC_REGRESSION = "logistic_regression"
    MLP1 = "mlp1"


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description; parameter count follows from the fields."""

    kind: ModelKind
    input_dim: int
    num_classes: int
    hidden_dim: int | None = None

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.kind is ModelKind.MLP1:
            if self.hidden_dim is None or self.hidden_dim < 1:
                raise ValueError("mlp1 requires a positive hidden_dim")
        elif self.hidden_dim is not None:
            raise ValueError(f"hidden_dim is only valid for mlp1, not {self.kind.value}")

    def layout(self) -> Layout:
        d, c = self.input_dim, self.num_classes
        if self.kind is ModelKind.LOGISTIC_REGRESSION:
            return (("weights", (d, c)), ("bias", (c,)))
        h = self.hidden_dim
        assert h is not None
        return (
            ("hidden_weights", (d, h)),
            ("hidden_bias", (h,)),
            ("output_weights", (h, c)),
            ("output_bias", (c,)),
        )

    @property
    def param_count(self) -> int:
        return sum(math.prod(shape) for _, shape in self.layout())


@dataclass(frozen=True)
class ModelParameters:
    """Flat parameter vector plus the (tensor name, shape) layout it packs."""

    values: np.ndarray
    layout: Layout

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("parameter values must be a 1-D vector")
        object.__setattr__(self, "values", values)
        expected = sum(math.prod(shape) for _, shape in self.layout)
        if expected != values.size:
            raise ValueError(
                f"layout describes {expected} values but vector has {values.size}"
            )
        if not np.isfinite(values).all():
            raise ValueError("parameter values must be finite")

    @property
    def count(self) -> int:
        return int(self.values.size)

    def tensors(self) -> dict[str, np.ndarray]:
        """Reshaped views of the flat vector, keyed by tensor name."""
        out: dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in self.layout:
            size = math.prod(shape)
            out[name] = self.values[offset : offset + size].reshape(shape)
            offset += size
        return out


@dataclass(frozen=True)
class LabeledExample:
    features: np.ndarray
    label: int

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "features", features)
        if features.ndim != 1 or not np.isfinite(features).all():
            raise ValueError("features must be a finite 1-D vector")
        if self.label < 0:
            raise ValueError(f"label must be non-negative, got {self.label}")


def init_params(spec: ModelSpec, seed: int) -> ModelParameters:
    """Glorot-uniform weights, zero biases; deterministic in (spec, seed).

    Each weight tensor is drawn from uniform(-s, s) with
    s = sqrt(6 / (fan_in + fan_out)); bias vectors start at exactly zero.
    """
    rng = rng_for(seed, TAG_INIT)
    chunks = []
    for _, shape in spec.layout():
        if len(shape) == 2:
            fan_in, fan_out = shape
            s = math.sqrt(6.0 / (fan_in + fan_out))
            chunks.append(rng.uniform(-s, s, size=fan_in * fan_out))
        else:
            chunks.append(np.zeros(shape[0]))
    return ModelParameters(np.concatenate(chunks), spec.layout())


def _stack_batch(spec: ModelSpec, batch: Sequence[LabeledExample]) -> tuple[np.ndarray, np.ndarray]:
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    X = np.stack([ex.features for ex in batch])
    y = np.array([ex.label for ex in batch], dtype=np.intp)
    _check_batch(spec, X, y)
    return X, y


def _check_batch(spec: ModelSpec, X: np.ndarray, y: np.ndarray) -> None:
    if X.shape[1] != spec.input_dim:
        raise ValueError(
            f"feature dimension {X.shape[1]} does not match input_dim {spec.input_dim}"
        )
    if y.size and int(y.max()) >= spec.num_classes:
        raise ValueError(f"label {int(y.max())} out of range for {spec.num_classes} classes")


def _unpack_mlp(
    spec: ModelSpec, values: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    d, c, h = spec.input_dim, spec.num_classes, spec.hidden_dim
    offset = 0
    W1 = values[offset : offset + d * h].reshape(d, h)
    offset += d * h
    b1 = values[offset : offset + h]
    offset += h
    W2 = values[offset : offset + h * c].reshape(h, c)
    offset += h * c
    b2 = values[offset : offset + c]
    return W1, b1, W2, b2


def _logits(spec: ModelSpec, values: np.ndarray, X: np.ndarray) -> np.ndarray:
    d, c = spec.input_dim, spec.num_classes
    if spec.kind is ModelKind.LOGISTIC_REGRESSION:
        W = values[: d * c].reshape(d, c)
        b = values[d * c :]
        return X @ W + b
    W1, b1, W2, b2 = _unpack_mlp(spec, values)
    return np.tanh(X @ W1 + b1) @ W2 + b2


def _loss_grad_arrays(
    spec: ModelSpec, values: np.ndarray, X: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its exact gradient, both over the batch."""
    d, c = spec.input_dim, spec.num_classes

    if spec.kind is ModelKind.LOGISTIC_REGRESSION:
        W = values[: d * c].reshape(d, c)
        b = values[d * c :]
        logits = X @ W + b
        loss, dlogits = _softmax_ce(logits, y)
        grad = np.concatenate([(X.T @ dlogits).ravel(), dlogits.sum(axis=0)])
        return loss, grad

    W1, b1, W2, b2 = _unpack_mlp(spec, values)
    hidden = np.tanh(X @ W1 + b1)
    logits = hidden @ W2 + b2
    loss, dlogits = _softmax_ce(logits, y)
    dhidden = (dlogits @ W2.T) * (1.0 - hidden * hidden)
    grad = np.concatenate(
        [
            (X.T @ dhidden).ravel(),
            dhidden.sum(axis=0),
            (hidden.T @ dlogits).ravel(),
            dlogits.sum(axis=0),
        ]
    )
    return loss, grad


def _softmax_ce(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    # Stable log-softmax; returns mean NLL and d(loss)/d(logits).
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = float(-log_probs[np.arange(n), y].mean())
    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    return loss, dlogits


def forward_loss_grad(
    spec: ModelSpec, params: ModelParameters, batch: Sequence[LabeledExample]
) -> tuple[float, ModelParameters]:
    """Mean cross-entropy over the batch and its gradient in params layout."""
    X, y = _stack_batch(spec, batch)
    if params.count != spec.param_count:
        raise ValueError("parameter vector does not match model spec")
    loss, grad = _loss_grad_arrays(spec, params.values, X, y)
    return loss, ModelParameters(grad, params.layout)


def local_train(
    spec: ModelSpec,
    start: ModelParameters,
    data: Sequence[LabeledExample],
    epochs: int,
    batch_size: int,
    lr: float,
    prox_mu: float = 0.0,
    anchor: ModelParameters | None = None,
    seed: int = 0,
) -> tuple[ModelParameters, float]:
    """Mini-batch SGD with an optional FedProx proximal pull.

    Runs ``epochs`` passes over ``data``; each epoch visits a fresh seeded
    shuffle and keeps the short final batch. With ``prox_mu > 0`` the
    effective gradient is grad + mu * (w - anchor), which limits drift away
    from the broadcast global weights. Pure function of its arguments: the
    same inputs always produce bit-identical outputs.

    Returns the trained parameters and the mean loss over the final epoch.
    """
    if len(data) == 0:
        raise ValueError("local training requires a non-empty dataset")
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if prox_mu < 0:
        raise ValueError(f"prox_mu must be >= 0, got {prox_mu}")
    if anchor is None:
        anchor = start
    if anchor.layout != start.layout:
        raise ValueError("anchor layout does not match start layout")
    if start.count != spec.param_count:
        raise ValueError("parameter vector does not match model spec")

    X_all = np.stack([ex.features for ex in data])
    y_all = np.array([ex.label for ex in data], dtype=np.intp)
    _check_batch(spec, X_all, y_all)

    n = len(data)
    w = start.values.copy()
    anchor_values = anchor.values
    epoch_loss = 0.0
    for epoch in range(epochs):
        order = rng_for(seed, TAG_EPOCH, epoch).permutation(n)
        total_nll = 0.0
        for lo in range(0, n, batch_size):
            idx = order[lo : lo + batch_size]
            loss, grad = _loss_grad_arrays(spec, w, X_all[idx], y_all[idx])
            total_nll += loss * idx.size
            if prox_mu != 0.0:
                grad = grad + prox_mu * (w - anchor_values)
            w -= lr * grad
        epoch_loss = total_nll / n
    return ModelParameters(w, start.layout), epoch_loss


def evaluate_classifier(
    spec: ModelSpec, params: ModelParameters, data: Sequence[LabeledExample]
) -> float:
    """Fraction of examples whose argmax class matches the label.

    Ties are broken toward the lowest class index (argmax convention).
    """
    X, y = _stack_batch(spec, data)
    if params.count != spec.param_count:
        raise ValueError("parameter vector does not match model spec")
    predictions = np.argmax(_logits(spec, params.values, X), axis=1)
    return float(np.mean(predictions == y))
