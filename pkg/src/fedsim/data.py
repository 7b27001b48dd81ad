"""Synthetic dataset generation and client partitioning.

Gaussian class blobs around deterministic unit-sphere centroids stand in
for the traffic-sign corpus, and two partition schemes split them across
clients: IID round-robin, and a label-shard scheme that bounds how many
distinct classes any one client sees (the non-IID "specialized vehicle"
setting).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .models import LabeledExample
from .seeding import TAG_BLOB, TAG_CENTROID, rng_for


class PartitionScheme(str, Enum):
    IID = "iid"
    LABEL_SHARD = "label_shard"


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int
    input_dim: int
    examples_per_class: int
    cluster_spread: float
    seed: int

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.examples_per_class < 1:
            raise ValueError(
                f"examples_per_class must be >= 1, got {self.examples_per_class}"
            )
        if not self.cluster_spread > 0:
            raise ValueError(f"cluster_spread must be positive, got {self.cluster_spread}")

    @property
    def total_examples(self) -> int:
        return self.num_classes * self.examples_per_class


def class_centroid(spec: SyntheticSpec, class_id: int) -> np.ndarray:
    """Deterministic centroid for a class, on the unit hypersphere."""
    rng = rng_for(spec.seed, TAG_CENTROID, class_id)
    v = rng.standard_normal(spec.input_dim)
    norm = np.linalg.norm(v)
    while norm < 1e-9:  # vanishing draws are essentially impossible, but finite
        v = rng.standard_normal(spec.input_dim)
        norm = np.linalg.norm(v)
    return v / norm


def generate_synthetic(spec: SyntheticSpec) -> list[LabeledExample]:
    """Gaussian blob per class; grouped by class, deterministic in the seed."""
    examples: list[LabeledExample] = []
    for c in range(spec.num_classes):
        centroid = class_centroid(spec, c)
        noise = rng_for(spec.seed, TAG_BLOB, c).standard_normal(
            (spec.examples_per_class, spec.input_dim)
        )
        features = centroid + spec.cluster_spread * noise
        examples.extend(LabeledExample(row, c) for row in features)
    return examples


@dataclass(frozen=True)
class Partition:
    """Disjoint assignment of example indices to clients."""

    scheme: PartitionScheme
    assignments: tuple[tuple[int, ...], ...]
    classes_per_client: int | None = None

    @property
    def num_clients(self) -> int:
        return len(self.assignments)

    @property
    def num_examples(self) -> int:
        return sum(len(a) for a in self.assignments)

    def validate(self, labels: Sequence[int] | None = None) -> None:
        """Check the disjoint-cover invariant plus scheme-specific bounds."""
        flat = [i for assignment in self.assignments for i in assignment]
        n = len(flat)
        if sorted(flat) != list(range(n)):
            raise ValueError("assignments must disjointly cover 0..N-1")
        if self.scheme is PartitionScheme.IID:
            sizes = [len(a) for a in self.assignments]
            if sizes and max(sizes) - min(sizes) > 1:
                raise ValueError("IID client sizes must differ by at most 1")
        if self.scheme is PartitionScheme.LABEL_SHARD:
            if self.classes_per_client is None or self.classes_per_client < 1:
                raise ValueError("label_shard partition requires classes_per_client >= 1")
            if labels is not None:
                for client, assignment in enumerate(self.assignments):
                    distinct = {labels[i] for i in assignment}
                    if len(distinct) > self.classes_per_client:
                        raise ValueError(
                            f"client {client} spans {len(distinct)} labels, "
                            f"more than classes_per_client={self.classes_per_client}"
                        )


def partition_iid(n_examples: int, num_clients: int, seed: int) -> Partition:
    """Seeded global shuffle followed by round-robin dealing.

    Client sizes differ by at most one; deterministic in the seed.
    """
    if num_clients < 1:
        raise ValueError(f"num_clients must be >= 1, got {num_clients}")
    if n_examples < num_clients:
        raise ValueError(
            f"cannot split {n_examples} examples across {num_clients} clients"
        )
    perm = rng_for(seed).permutation(n_examples)
    assignments = tuple(
        tuple(int(i) for i in perm[client::num_clients]) for client in range(num_clients)
    )
    return Partition(PartitionScheme.IID, assignments)


def _shards_per_class(counts: list[int], num_shards: int) -> list[int]:
    # One shard minimum per class, remainder spread proportionally to class
    # size (D'Hondt quotients, integer arithmetic, ties to the lower class id).
    alloc = [1] * len(counts)
    for _ in range(num_shards - len(counts)):
        best = 0
        for i in range(1, len(counts)):
            if counts[i] * (alloc[best] + 1) > counts[best] * (alloc[i] + 1):
                best = i
        alloc[best] += 1
    return alloc


def partition_label_shard(
    labels: Sequence[int], num_clients: int, classes_per_client: int, seed: int
) -> Partition:
    """McMahan-style shard partition with class-aligned shard cuts.

    Example indices are grouped by label, each class run is cut into its
    allotted number of near-equal shards (never crossing a class boundary,
    so a client holding k shards sees at most k distinct labels), and the
    num_clients * classes_per_client shards are dealt to clients by a
    seeded permutation, classes_per_client shards each.
    """
    if num_clients < 1:
        raise ValueError(f"num_clients must be >= 1, got {num_clients}")
    if classes_per_client < 1:
        raise ValueError(f"classes_per_client must be >= 1, got {classes_per_client}")
    labels_arr = np.asarray(labels, dtype=np.intp)
    distinct = sorted(int(c) for c in np.unique(labels_arr))
    num_shards = num_clients * classes_per_client
    if num_shards < len(distinct):
        raise ValueError(
            f"{num_clients} clients x {classes_per_client} classes_per_client gives "
            f"{num_shards} shards, fewer than the {len(distinct)} distinct labels"
        )

    counts = [int((labels_arr == c).sum()) for c in distinct]
    alloc = _shards_per_class(counts, num_shards)

    by_label = np.argsort(labels_arr, kind="stable")
    shards: list[np.ndarray] = []
    offset = 0
    for count, n_shards in zip(counts, alloc):
        run = by_label[offset : offset + count]
        shards.extend(np.array_split(run, n_shards))
        offset += count

    perm = rng_for(seed).permutation(num_shards)
    assignments = []
    for client in range(num_clients):
        mine = perm[client * classes_per_client : (client + 1) * classes_per_client]
        assignments.append(tuple(int(i) for shard in mine for i in shards[shard]))
    partition = Partition(
        PartitionScheme.LABEL_SHARD, tuple(assignments), classes_per_client
    )
    partition.validate([int(v) for v in labels_arr])
    return partition


def client_dataset(
    partition: Partition, dataset: Sequence[LabeledExample], client: int
) -> list[LabeledExample]:
    """The client's examples, in assignment order."""
    if not 0 <= client < partition.num_clients:
        raise IndexError(f"client {client} out of range for {partition.num_clients} clients")
    assignment = partition.assignments[client]
    for i in assignment:
        if i >= len(dataset):
            raise IndexError(f"assigned index {i} outside dataset of {len(dataset)}")
    return [dataset[i] for i in assignment]


def export_manifest(partition: Partition) -> str:
    """One line per client: ``client_id: idx,idx,...`` (audit artifact)."""
    lines = []
    for client, assignment in enumerate(partition.assignments):
        lines.append(f"{client}: {','.join(str(i) for i in assignment)}")
    return "\n".join(lines) + "\n"


def import_manifest(
    text: str,
    scheme: PartitionScheme = PartitionScheme.IID,
    classes_per_client: int | None = None,
) -> Partition:
    """Parse a manifest produced by export_manifest and re-validate cover."""
    assignments: dict[int, tuple[int, ...]] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        head, _, tail = line.partition(":")
        try:
            client = int(head)
        except ValueError as exc:
            raise ValueError(f"manifest line {line_no}: bad client id {head!r}") from exc
        if client in assignments:
            raise ValueError(f"manifest line {line_no}: duplicate client {client}")
        tail = tail.strip()
        try:
            indices = tuple(int(t) for t in tail.split(",")) if tail else ()
        except ValueError as exc:
            raise ValueError(f"manifest line {line_no}: bad index list") from exc
        assignments[client] = indices
    if sorted(assignments) != list(range(len(assignments))):
        raise ValueError("manifest client ids must be contiguous from 0")
    partition = Partition(
        scheme,
        tuple(assignments[c] for c in range(len(assignments))),
        classes_per_client,
    )
    partition.validate()
    return partition
