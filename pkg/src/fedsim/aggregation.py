"""Server-side combination of client updates.

FedAvg is the example-count-weighted mean of client weight vectors;
FedProx reuses the same server rule (its mu acts purely client-side);
FedAdam treats the difference between the averaged client weights and
the current global weights as a pseudo-gradient and applies an Adam-style
server step with moments (m, v), no bias correction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .models import ModelParameters


class AggregatorKind(str, Enum):
    FEDAVG = "fedavg"
    FEDPROX = "fedprox"
    FEDADAM = "fedadam"


@dataclass(frozen=True)
class ClientUpdate:
    client_id: int
    params: ModelParameters
    num_examples: int
    train_loss: float

    def __post_init__(self) -> None:
        if self.num_examples < 1:
            raise ValueError(f"num_examples must be >= 1, got {self.num_examples}")


@dataclass(frozen=True)
class AggregatorState:
    """Aggregator choice plus whatever state the choice carries.

    FedAvg is stateless; FedProx carries the client-side mu; FedAdam
    carries server hyperparameters and the moment vectors m, v.
    """

    kind: AggregatorKind
    prox_mu: float = 0.0
    server_lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.99
    tau: float = 1e-3
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def make_aggregator(
    kind: AggregatorKind,
    param_count: int | None = None,
    prox_mu: float = 0.01,
    server_lr: float = 0.01,
    beta1: float = 0.9,
    beta2: float = 0.99,
    tau: float = 1e-3,
) -> AggregatorState:
    """Build a validated AggregatorState with spec defaults filled in."""
    kind = AggregatorKind(kind)
    if kind is AggregatorKind.FEDAVG:
        return AggregatorState(kind)
    if kind is AggregatorKind.FEDPROX:
        if prox_mu < 0:
            raise ValueError(f"fedprox mu must be >= 0, got {prox_mu}")
        return AggregatorState(kind, prox_mu=prox_mu)
    if param_count is None:
        raise ValueError("fedadam requires param_count to size its moment vectors")
    if not server_lr > 0:
        raise ValueError(f"fedadam server_lr must be positive, got {server_lr}")
    if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
        raise ValueError(f"fedadam betas must lie in [0, 1), got {beta1}, {beta2}")
    if not tau > 0:
        raise ValueError(f"fedadam tau must be positive, got {tau}")
    return AggregatorState(
        kind,
        server_lr=server_lr,
        beta1=beta1,
        beta2=beta2,
        tau=tau,
        m=np.zeros(param_count),
        v=np.zeros(param_count),
    )


def _check_updates(updates: list[ClientUpdate]) -> list[ClientUpdate]:
    if not updates:
        raise ValueError("cannot aggregate an empty update list")
    layout = updates[0].params.layout
    for u in updates:
        if u.params.layout != layout:
            raise ValueError(f"client {u.client_id} layout differs from the others")
    ordered = sorted(updates, key=lambda u: u.client_id)
    for a, b in zip(ordered, ordered[1:]):
        if a.client_id == b.client_id:
            raise ValueError(f"duplicate client_id {a.client_id} in updates")
    return ordered


def weighted_average(updates: list[ClientUpdate]) -> ModelParameters:
    """FedAvg rule: sum_k (n_k / sum n) * w_k.

    Summation runs in ascending client_id order, so the result is
    bit-identical no matter how the updates were collected. The sum is
    clamped to the per-component hull of the inputs: the exact weighted
    mean always lies there, and clamping removes the last-ulp rounding
    that would otherwise break the all-clients-identical fixed point.
    """
    ordered = _check_updates(updates)
    if len(ordered) == 1:
        only = ordered[0]
        return ModelParameters(only.params.values.copy(), only.params.layout)
    total = float(sum(u.num_examples for u in ordered))
    acc = np.zeros_like(ordered[0].params.values)
    lo = np.full_like(acc, np.inf)
    hi = np.full_like(acc, -np.inf)
    for u in ordered:
        acc += (u.num_examples / total) * u.params.values
        np.minimum(lo, u.params.values, out=lo)
        np.maximum(hi, u.params.values, out=hi)
    return ModelParameters(np.clip(acc, lo, hi), ordered[0].params.layout)


def fedavg_round(
    global_params: ModelParameters, updates: list[ClientUpdate]
) -> ModelParameters:
    """One FedAvg server round; the current global is not consulted."""
    del global_params
    return weighted_average(updates)


def server_aggregate(
    state: AggregatorState,
    global_params: ModelParameters,
    updates: list[ClientUpdate],
) -> tuple[ModelParameters, AggregatorState]:
    """Apply one server round of the configured strategy.

    FedProx shares FedAvg's server rule (its mu acts on the clients), so
    both dispatch to fedavg_round; only FedAdam carries state across rounds.
    """
    if state.kind is AggregatorKind.FEDADAM:
        return fedadam_round(state, global_params, updates)
    return fedavg_round(global_params, updates), state


def fedadam_round(
    state: AggregatorState,
    global_params: ModelParameters,
    updates: list[ClientUpdate],
) -> tuple[ModelParameters, AggregatorState]:
    """One FedAdam server round.

    delta = weighted_average(w_k) - x
    m <- beta1 * m + (1 - beta1) * delta
    v <- beta2 * v + (1 - beta2) * delta^2
    x <- x + server_lr * m / (sqrt(v) + tau)
    """
    if state.kind is not AggregatorKind.FEDADAM:
        raise ValueError(f"fedadam_round called with {state.kind.value} state")
    assert state.m is not None and state.v is not None
    averaged = weighted_average(updates)
    if averaged.layout != global_params.layout:
        raise ValueError("update layout does not match global parameters")
    delta = averaged.values - global_params.values
    m = state.beta1 * state.m + (1.0 - state.beta1) * delta
    v = state.beta2 * state.v + (1.0 - state.beta2) * delta * delta
    new_values = global_params.values + state.server_lr * m / (np.sqrt(v) + state.tau)
    new_state = replace(state, m=m, v=v)
    return ModelParameters(new_values, global_params.layout), new_state
