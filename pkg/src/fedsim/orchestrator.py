"""The server-round state machine.

Each round samples a client fraction, trains locally from the broadcast
global weights, aggregates with the configured strategy, evaluates the
new global model on held-out data, and accounts for communication bytes
and simulated duration. Every random stream is derived from the config
seed, so a run is bit-reproducible regardless of worker count.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .aggregation import (
    AggregatorKind,
    AggregatorState,
    ClientUpdate,
    make_aggregator,
    server_aggregate,
)
from .data import (
    Partition,
    PartitionScheme,
    SyntheticSpec,
    client_dataset,
    export_manifest,
    generate_synthetic,
    partition_iid,
    partition_label_shard,
)
from .models import (
    LabeledExample,
    ModelParameters,
    ModelSpec,
    evaluate_classifier,
    init_params,
    local_train,
)
from .seeding import (
    TAG_EVAL,
    TAG_HOLDOUT,
    TAG_PARTITION,
    TAG_SAMPLE,
    TAG_TRAIN,
    int_seed,
    rng_for,
)

HOLDOUT_DENOMINATOR = 5  # one fifth of each client's data is held out for eval
BYTES_PER_VALUE = 8


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class AggregatorConfig:
    kind: AggregatorKind
    prox_mu: float = 0.01
    server_lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.99
    tau: float = 1e-3


@dataclass(frozen=True)
class CostModel:
    """Linear simulated-time model: fixed per-round cost plus training cost.

    Defaults are dyadic rationals so summed durations obey exact arithmetic
    identities (e.g. a 20-round run costs exactly 4x a 5-round run when the
    per-round cost is equal).
    """

    per_example_s: float = 1.0 / 1024.0
    per_round_s: float = 1.0

    def __post_init__(self) -> None:
        if self.per_example_s < 0 or not self.per_round_s > 0:
            raise ConfigError("cost model parameters must be non-negative (round cost positive)")


@dataclass(frozen=True)
class ExperimentConfig:
    rounds: int
    num_clients: int
    fraction: float
    local_epochs: int
    batch_size: int
    model: ModelSpec
    data: SyntheticSpec
    aggregator: AggregatorConfig
    partition_scheme: PartitionScheme
    classes_per_client: int = 2
    local_lr: float = 0.001
    eval_fraction: float = 1.0
    seed: int = 0
    cost: CostModel = field(default_factory=CostModel)

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.num_clients < 1:
            raise ConfigError(f"clients must be >= 1, got {self.num_clients}")
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.local_epochs < 1:
            raise ConfigError(f"local_epochs must be >= 1, got {self.local_epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.local_lr > 0:
            raise ConfigError(f"local_lr must be positive, got {self.local_lr}")
        if not 0.0 < self.eval_fraction <= 1.0:
            raise ConfigError(
                f"eval_fraction must be in (0, 1], got {self.eval_fraction}"
            )
        if self.model.input_dim != self.data.input_dim:
            raise ConfigError(
                f"model input_dim {self.model.input_dim} != data input_dim "
                f"{self.data.input_dim}"
            )
        if self.model.num_classes != self.data.num_classes:
            raise ConfigError(
                f"model num_classes {self.model.num_classes} != data num_classes "
                f"{self.data.num_classes}"
            )
        if self.num_clients > self.data.total_examples:
            raise ConfigError(
                f"{self.num_clients} clients cannot share {self.data.total_examples} examples"
            )
        if self.partition_scheme is PartitionScheme.LABEL_SHARD:
            if self.classes_per_client < 1:
                raise ConfigError(
                    f"classes_per_client must be >= 1, got {self.classes_per_client}"
                )
            if self.num_clients * self.classes_per_client < self.data.num_classes:
                raise ConfigError(
                    f"{self.num_clients} clients x {self.classes_per_client} "
                    f"classes_per_client cannot cover {self.data.num_classes} classes"
                )

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Same experiment under another seed (data regenerates with it)."""
        return replace(self, seed=seed, data=replace(self.data, seed=seed))


@dataclass(frozen=True)
class RoundMetrics:
    round_index: int
    participants: tuple[int, ...]
    global_accuracy: float
    mean_client_loss: float
    bytes_up: int
    bytes_down: int
    simulated_duration_s: float
    wall_clock_s: float


@dataclass
class ExperimentState:
    """Everything run_round needs; owned by a single coordinator."""

    config: ExperimentConfig
    dataset: list[LabeledExample]
    partition: Partition
    train_sets: list[list[LabeledExample]]
    holdout_sets: list[list[LabeledExample]]
    global_params: ModelParameters
    agg_state: AggregatorState
    max_workers: int = 1


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: list[RoundMetrics]
    final_params: ModelParameters
    partition_manifest: str
    param_count: int

    @property
    def final_accuracy(self) -> float:
        return self.metrics[-1].global_accuracy

    @property
    def total_simulated_duration_s(self) -> float:
        return sum(m.simulated_duration_s for m in self.metrics)

    @property
    def total_wall_clock_s(self) -> float:
        return sum(m.wall_clock_s for m in self.metrics)

    def metrics_signature(self) -> tuple:
        """The deterministic metric fields, for reproducibility comparisons.

        Wall clock is measurement noise and deliberately excluded.
        """
        return tuple(
            (
                m.round_index,
                m.participants,
                m.global_accuracy,
                m.mean_client_loss,
                m.bytes_up,
                m.bytes_down,
                m.simulated_duration_s,
            )
            for m in self.metrics
        )


def resolve_max_workers(cap: int | None = None) -> int:
    """Worker cap from FEDSIM_THREADS, defaulting to the available cores."""
    env = os.environ.get("FEDSIM_THREADS", "").strip()
    if env:
        try:
            workers = int(env)
        except ValueError:
            raise ConfigError(f"FEDSIM_THREADS must be an integer, got {env!r}") from None
        if workers < 1:
            raise ConfigError(f"FEDSIM_THREADS must be >= 1, got {workers}")
    else:
        workers = os.cpu_count() or 1
    if cap is not None:
        workers = min(workers, cap)
    return workers


def client_round_seed(seed: int, round_index: int, client_id: int) -> int:
    """Seed for one client's local training in one round.

    Derived independently of execution order, which is what licenses
    training the sampled clients in parallel.
    """
    return int_seed(seed, TAG_TRAIN, round_index, client_id)


def sample_clients(num_clients: int, fraction: float, round_index: int, seed: int) -> list[int]:
    """max(1, round(fraction * K)) distinct ids, uniform without replacement.

    round() is Python's round-half-to-even. Deterministic per (seed, round).
    """
    if num_clients < 1:
        raise ConfigError(f"clients must be >= 1, got {num_clients}")
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
    m = max(1, round(fraction * num_clients))
    perm = rng_for(seed, TAG_SAMPLE, round_index).permutation(num_clients)
    return sorted(int(c) for c in perm[:m])


def communication_bytes(
    m: int, param_count: int, bytes_per_value: int = BYTES_PER_VALUE
) -> tuple[int, int]:
    """(bytes_down, bytes_up) for one round of full-weight exchange."""
    if m < 1 or param_count < 1 or bytes_per_value < 1:
        raise ValueError("communication_bytes arguments must be positive")
    total = m * param_count * bytes_per_value
    return total, total


def simulated_duration(
    participant_train_sizes: Sequence[int], local_epochs: int, cost: CostModel
) -> float:
    """Fixed round cost plus the straggler's training time.

    Participants train in parallel, so the round takes as long as its
    largest client; aggregation cost is excluded by design.
    """
    slowest = max(local_epochs * size for size in participant_train_sizes)
    return cost.per_round_s + slowest * cost.per_example_s


def _holdout_split(
    config: ExperimentConfig, partition: Partition, dataset: list[LabeledExample]
) -> tuple[list[list[LabeledExample]], list[list[LabeledExample]]]:
    train_sets: list[list[LabeledExample]] = []
    holdout_sets: list[list[LabeledExample]] = []
    for client in range(partition.num_clients):
        examples = client_dataset(partition, dataset, client)
        n = len(examples)
        n_hold = n // HOLDOUT_DENOMINATOR
        order = rng_for(config.seed, TAG_HOLDOUT, client).permutation(n)
        holdout_sets.append([examples[i] for i in order[:n_hold]])
        train_sets.append([examples[i] for i in order[n_hold:]])
    return train_sets, holdout_sets


def build_experiment_state(
    config: ExperimentConfig, max_workers: int | None = None
) -> ExperimentState:
    """Materialize dataset, partition, hold-out splits, and initial weights.

    Raises ConfigError when any client would end up with no training data
    or the evaluation pool would be empty, so round execution never has to
    deal with empty clients.
    """
    dataset = generate_synthetic(config.data)
    if config.partition_scheme is PartitionScheme.IID:
        partition = partition_iid(
            len(dataset), config.num_clients, int_seed(config.seed, TAG_PARTITION)
        )
    else:
        labels = [ex.label for ex in dataset]
        partition = partition_label_shard(
            labels,
            config.num_clients,
            config.classes_per_client,
            int_seed(config.seed, TAG_PARTITION),
        )

    train_sets, holdout_sets = _holdout_split(config, partition, dataset)
    for client, train in enumerate(train_sets):
        if not train:
            raise ConfigError(
                f"client {client} received no training data; increase "
                "examples_per_class or reduce clients"
            )
    if not any(holdout_sets):
        raise ConfigError(
            "evaluation pool is empty; every client owns fewer than "
            f"{HOLDOUT_DENOMINATOR} examples"
        )
    if config.eval_fraction < 1.0 and not all(holdout_sets):
        raise ConfigError(
            "eval_fraction < 1 requires a non-empty hold-out on every client"
        )

    params = init_params(config.model, config.seed)
    agg = make_aggregator(
        config.aggregator.kind,
        param_count=params.count,
        prox_mu=config.aggregator.prox_mu,
        server_lr=config.aggregator.server_lr,
        beta1=config.aggregator.beta1,
        beta2=config.aggregator.beta2,
        tau=config.aggregator.tau,
    )
    return ExperimentState(
        config=config,
        dataset=dataset,
        partition=partition,
        train_sets=train_sets,
        holdout_sets=holdout_sets,
        global_params=params,
        agg_state=agg,
        max_workers=max_workers if max_workers is not None else resolve_max_workers(),
    )


def _eval_pool(state: ExperimentState, round_index: int) -> list[LabeledExample]:
    config = state.config
    if config.eval_fraction >= 1.0:
        ids = range(config.num_clients)
    else:
        m = max(1, round(config.eval_fraction * config.num_clients))
        perm = rng_for(config.seed, TAG_EVAL, round_index).permutation(config.num_clients)
        ids = sorted(int(c) for c in perm[:m])
    return [ex for c in ids for ex in state.holdout_sets[c]]


def run_round(
    state: ExperimentState, round_index: int
) -> tuple[ModelParameters, AggregatorState, RoundMetrics]:
    """Execute one server round; does not mutate state."""
    config = state.config
    started = time.perf_counter()
    participants = sample_clients(
        config.num_clients, config.fraction, round_index, config.seed
    )
    prox_mu = (
        config.aggregator.prox_mu
        if config.aggregator.kind is AggregatorKind.FEDPROX
        else 0.0
    )

    def train_one(client: int) -> ClientUpdate:
        data = state.train_sets[client]
        trained, loss = local_train(
            config.model,
            state.global_params,
            data,
            config.local_epochs,
            config.batch_size,
            config.local_lr,
            prox_mu=prox_mu,
            anchor=state.global_params,
            seed=client_round_seed(config.seed, round_index, client),
        )
        return ClientUpdate(client, trained, len(data), loss)

    if state.max_workers > 1 and len(participants) > 1:
        with ThreadPoolExecutor(
            max_workers=min(state.max_workers, len(participants))
        ) as pool:
            updates = list(pool.map(train_one, participants))
    else:
        updates = [train_one(c) for c in participants]
    updates.sort(key=lambda u: u.client_id)  # canonical order before aggregation

    new_params, new_agg = server_aggregate(state.agg_state, state.global_params, updates)

    accuracy = evaluate_classifier(config.model, new_params, _eval_pool(state, round_index))
    mean_loss = float(np.mean([u.train_loss for u in updates]))
    bytes_down, bytes_up = communication_bytes(len(participants), new_params.count)
    duration = simulated_duration(
        [len(state.train_sets[c]) for c in participants], config.local_epochs, config.cost
    )
    metrics = RoundMetrics(
        round_index=round_index,
        participants=tuple(participants),
        global_accuracy=accuracy,
        mean_client_loss=mean_loss,
        bytes_up=bytes_up,
        bytes_down=bytes_down,
        simulated_duration_s=duration,
        wall_clock_s=time.perf_counter() - started,
    )
    return new_params, new_agg, metrics


def run_experiment(
    config: ExperimentConfig, max_workers: int | None = None
) -> ExperimentResult:
    """Build the experiment from its seed and run all configured rounds."""
    state = build_experiment_state(config, max_workers)
    metrics: list[RoundMetrics] = []
    for round_index in range(config.rounds):
        new_params, new_agg, round_metrics = run_round(state, round_index)
        state.global_params = new_params
        state.agg_state = new_agg
        metrics.append(round_metrics)
    return ExperimentResult(
        config=config,
        metrics=metrics,
        final_params=state.global_params,
        partition_manifest=export_manifest(state.partition),
        param_count=state.global_params.count,
    )
