"""Flat ``key = value`` experiment config files.

One assignment per line; blank lines and ``#`` comment lines are ignored.
Nested knobs use dotted keys (``aggregator.mu``). Parse errors carry the
offending line number. An empty file resolves to the reference defaults.
"""

from __future__ import annotations

from enum import Enum

from .aggregation import AggregatorKind
from .data import PartitionScheme, SyntheticSpec
from .models import ModelKind, ModelSpec
from .orchestrator import AggregatorConfig, ConfigError, CostModel, ExperimentConfig

DEFAULTS: dict[str, object] = {
    "rounds": 8,
    "clients": 20,
    "fraction": 0.5,
    "local_epochs": 8,
    "batch_size": 4,
    "local_lr": 0.001,
    "eval_fraction": 1.0,
    "seed": 0,
    "model": ModelKind.MLP1,
    "model.hidden_dim": 16,
    "data.input_dim": 8,
    "data.num_classes": 8,
    "data.examples_per_class": 200,
    "data.cluster_spread": 0.6,
    "aggregator": AggregatorKind.FEDADAM,
    "aggregator.mu": 0.01,
    "aggregator.server_lr": 0.01,
    "aggregator.beta1": 0.9,
    "aggregator.beta2": 0.99,
    "aggregator.tau": 1e-3,
    "partition": PartitionScheme.LABEL_SHARD,
    "partition.classes_per_client": 2,
    "cost.per_example_s": CostModel().per_example_s,
    "cost.per_round_s": CostModel().per_round_s,
}

_INT_KEYS = {
    "rounds",
    "clients",
    "local_epochs",
    "batch_size",
    "seed",
    "model.hidden_dim",
    "data.input_dim",
    "data.num_classes",
    "data.examples_per_class",
    "partition.classes_per_client",
}
_FLOAT_KEYS = {
    "fraction",
    "local_lr",
    "eval_fraction",
    "data.cluster_spread",
    "aggregator.mu",
    "aggregator.server_lr",
    "aggregator.beta1",
    "aggregator.beta2",
    "aggregator.tau",
    "cost.per_example_s",
    "cost.per_round_s",
}
_ENUM_KEYS: dict[str, type[Enum]] = {
    "model": ModelKind,
    "aggregator": AggregatorKind,
    "partition": PartitionScheme,
}


def _coerce(key: str, raw: str, line_no: int) -> object:
    if key in _INT_KEYS:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"line {line_no}: {key} expects an integer, got {raw!r}") from None
    if key in _FLOAT_KEYS:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"line {line_no}: {key} expects a number, got {raw!r}") from None
    enum_type = _ENUM_KEYS[key]
    try:
        return enum_type(raw)
    except ValueError:
        choices = ", ".join(member.value for member in enum_type)
        raise ConfigError(
            f"line {line_no}: {key} must be one of {choices}, got {raw!r}"
        ) from None


def parse_key_values(text: str) -> dict[str, tuple[str, int]]:
    """Raw key -> (value, line_no) pairs; rejects malformed or duplicate lines."""
    seen: dict[str, tuple[str, int]] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {line!r}")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {line!r}")
        if key in seen:
            raise ConfigError(
                f"line {line_no}: duplicate key {key!r} (first set on line {seen[key][1]})"
            )
        seen[key] = (value, line_no)
    return seen


def _build_config(values: dict[str, object]) -> ExperimentConfig:
    kind: ModelKind = values["model"]  # type: ignore[assignment]
    hidden = values["model.hidden_dim"] if kind is ModelKind.MLP1 else None
    model = ModelSpec(
        kind=kind,
        input_dim=values["data.input_dim"],
        num_classes=values["data.num_classes"],
        hidden_dim=hidden,
    )
    data = SyntheticSpec(
        num_classes=values["data.num_classes"],
        input_dim=values["data.input_dim"],
        examples_per_class=values["data.examples_per_class"],
        cluster_spread=values["data.cluster_spread"],
        seed=values["seed"],
    )
    aggregator = AggregatorConfig(
        kind=values["aggregator"],
        prox_mu=values["aggregator.mu"],
        server_lr=values["aggregator.server_lr"],
        beta1=values["aggregator.beta1"],
        beta2=values["aggregator.beta2"],
        tau=values["aggregator.tau"],
    )
    cost = CostModel(
        per_example_s=values["cost.per_example_s"],
        per_round_s=values["cost.per_round_s"],
    )
    return ExperimentConfig(
        rounds=values["rounds"],
        num_clients=values["clients"],
        fraction=values["fraction"],
        local_epochs=values["local_epochs"],
        batch_size=values["batch_size"],
        model=model,
        data=data,
        aggregator=aggregator,
        partition_scheme=values["partition"],
        classes_per_client=values["partition.classes_per_client"],
        local_lr=values["local_lr"],
        eval_fraction=values["eval_fraction"],
        seed=values["seed"],
        cost=cost,
    )


def parse_experiment_config(text: str, seed_override: int | None = None) -> ExperimentConfig:
    """Parse a config file body into a validated ExperimentConfig."""
    raw = parse_key_values(text)
    values = dict(DEFAULTS)
    explicit: set[str] = set()
    for key, (value, line_no) in raw.items():
        if key not in values:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        values[key] = _coerce(key, value, line_no)
        explicit.add(key)
    if "model.hidden_dim" in explicit and values["model"] is not ModelKind.MLP1:
        line_no = raw["model.hidden_dim"][1]
        raise ConfigError(f"line {line_no}: model.hidden_dim is only valid for model = mlp1")
    config = _build_config(values)
    if seed_override is not None:
        config = config.with_seed(seed_override)
    return config


def default_config() -> ExperimentConfig:
    """The reference configuration (an empty config file)."""
    return _build_config(dict(DEFAULTS))


def config_to_dict(config: ExperimentConfig) -> dict[str, object]:
    """Flat mapping using the config-file key names; round-trips via render."""
    out: dict[str, object] = {
        "rounds": config.rounds,
        "clients": config.num_clients,
        "fraction": config.fraction,
        "local_epochs": config.local_epochs,
        "batch_size": config.batch_size,
        "local_lr": config.local_lr,
        "eval_fraction": config.eval_fraction,
        "seed": config.seed,
        "model": config.model.kind.value,
    }
    if config.model.kind is ModelKind.MLP1:
        out["model.hidden_dim"] = config.model.hidden_dim
    out.update(
        {
            "data.input_dim": config.data.input_dim,
            "data.num_classes": config.data.num_classes,
            "data.examples_per_class": config.data.examples_per_class,
            "data.cluster_spread": config.data.cluster_spread,
            "aggregator": config.aggregator.kind.value,
        }
    )
    if config.aggregator.kind is AggregatorKind.FEDPROX:
        out["aggregator.mu"] = config.aggregator.prox_mu
    if config.aggregator.kind is AggregatorKind.FEDADAM:
        out["aggregator.server_lr"] = config.aggregator.server_lr
        out["aggregator.beta1"] = config.aggregator.beta1
        out["aggregator.beta2"] = config.aggregator.beta2
        out["aggregator.tau"] = config.aggregator.tau
    out["partition"] = config.partition_scheme.value
    if config.partition_scheme is PartitionScheme.LABEL_SHARD:
        out["partition.classes_per_client"] = config.classes_per_client
    out["cost.per_example_s"] = config.cost.per_example_s
    out["cost.per_round_s"] = config.cost.per_round_s
    return out


def render_config(config: ExperimentConfig) -> str:
    """Resolved config as a parseable config file body."""
    lines = []
    for key, value in config_to_dict(config).items():
        if isinstance(value, float):
            lines.append(f"{key} = {value!r}")
        else:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
