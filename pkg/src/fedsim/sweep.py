"""The experiment sweep matrix: one axis varied, everything else held.

A sweep spec file is an ordinary config file plus three keys::

    sweep.axis = rounds            # rounds | local_epochs | fraction |
                                   # aggregator | distribution
    sweep.values = 2, 5, 10, 20
    sweep.seeds = 1, 2, 3

Every (value, seed) cell is an independent experiment; cells may run in
parallel because each is deterministic in its own config.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum

from .aggregation import AggregatorKind
from .config import parse_experiment_config, parse_key_values
from .data import PartitionScheme
from .orchestrator import ConfigError, ExperimentConfig, ExperimentResult, run_experiment


class SweepAxis(str, Enum):
    ROUNDS = "rounds"
    LOCAL_EPOCHS = "local_epochs"
    FRACTION = "fraction"
    AGGREGATOR = "aggregator"
    DISTRIBUTION = "distribution"


@dataclass(frozen=True)
class SweepSpec:
    base: ExperimentConfig
    axis: SweepAxis
    values: tuple
    seeds: tuple[int, ...]

    def cells(self) -> list[tuple[object, int, ExperimentConfig]]:
        """(axis value, seed, cell config) in value-major order."""
        return [
            (value, seed, apply_axis(self.base, self.axis, value).with_seed(seed))
            for value in self.values
            for seed in self.seeds
        ]


@dataclass
class SweepCell:
    axis_value: str
    seed: int
    result: ExperimentResult


def apply_axis(base: ExperimentConfig, axis: SweepAxis, value) -> ExperimentConfig:
    if axis is SweepAxis.ROUNDS:
        return replace(base, rounds=value)
    if axis is SweepAxis.LOCAL_EPOCHS:
        return replace(base, local_epochs=value)
    if axis is SweepAxis.FRACTION:
        return replace(base, fraction=value)
    if axis is SweepAxis.AGGREGATOR:
        return replace(base, aggregator=replace(base.aggregator, kind=value))
    return replace(base, partition_scheme=value)


def format_axis_value(axis: SweepAxis, value) -> str:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_values(axis: SweepAxis, raw: str, line_no: int) -> tuple:
    tokens = [t.strip() for t in raw.split(",") if t.strip()]
    if not tokens:
        raise ConfigError(f"line {line_no}: sweep.values must be a non-empty list")
    try:
        if axis in (SweepAxis.ROUNDS, SweepAxis.LOCAL_EPOCHS):
            return tuple(int(t) for t in tokens)
        if axis is SweepAxis.FRACTION:
            return tuple(float(t) for t in tokens)
        if axis is SweepAxis.AGGREGATOR:
            return tuple(AggregatorKind(t) for t in tokens)
        return tuple(PartitionScheme(t) for t in tokens)
    except ValueError as exc:
        raise ConfigError(f"line {line_no}: bad sweep value for axis {axis.value}: {exc}") from None


def parse_sweep_spec(text: str) -> SweepSpec:
    """Parse and validate a sweep spec; every cell config is checked eagerly."""
    raw = parse_key_values(text)
    for key in ("sweep.axis", "sweep.values", "sweep.seeds"):
        if key not in raw:
            raise ConfigError(f"sweep spec is missing required key {key!r}")

    axis_raw, axis_line = raw["sweep.axis"]
    try:
        axis = SweepAxis(axis_raw)
    except ValueError:
        choices = ", ".join(a.value for a in SweepAxis)
        raise ConfigError(
            f"line {axis_line}: sweep.axis must be one of {choices}, got {axis_raw!r}"
        ) from None

    values = _parse_values(axis, *raw["sweep.values"])

    seeds_raw, seeds_line = raw["sweep.seeds"]
    try:
        seeds = tuple(int(t.strip()) for t in seeds_raw.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"line {seeds_line}: sweep.seeds must be a list of integers") from None
    if not seeds:
        raise ConfigError(f"line {seeds_line}: sweep.seeds must be a non-empty list")

    # Blank out rather than drop the sweep.* lines so config errors keep
    # their original line numbers.
    base_text = "\n".join(
        "" if line.strip().startswith("sweep.") else line for line in text.splitlines()
    )
    base = parse_experiment_config(base_text)
    spec = SweepSpec(base=base, axis=axis, values=values, seeds=seeds)
    spec.cells()  # raises ConfigError if any combination is invalid
    return spec


def run_sweep(spec: SweepSpec, max_workers: int = 1) -> list[SweepCell]:
    """Run every cell; output order is value-major regardless of scheduling."""
    cells = spec.cells()

    def run_one(cell: tuple[object, int, ExperimentConfig]) -> SweepCell:
        value, seed, config = cell
        result = run_experiment(config, max_workers=1)
        return SweepCell(format_axis_value(spec.axis, value), seed, result)

    if max_workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=min(max_workers, len(cells))) as pool:
            return list(pool.map(run_one, cells))
    return [run_one(cell) for cell in cells]
