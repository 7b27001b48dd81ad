"""Deterministic federated-learning simulation engine and experiment runner."""

__version__ = "0.1.0"

from .aggregation import (
    AggregatorKind,
    AggregatorState,
    ClientUpdate,
    fedadam_round,
    fedavg_round,
    make_aggregator,
    server_aggregate,
    weighted_average,
)
from .data import (
    Partition,
    PartitionScheme,
    SyntheticSpec,
    client_dataset,
    export_manifest,
    generate_synthetic,
    import_manifest,
    partition_iid,
    partition_label_shard,
)
from .models import (
    LabeledExample,
    ModelKind,
    ModelParameters,
    ModelSpec,
    evaluate_classifier,
    forward_loss_grad,
    init_params,
    local_train,
)
from .orchestrator import (
    AggregatorConfig,
    ConfigError,
    CostModel,
    ExperimentConfig,
    ExperimentResult,
    RoundMetrics,
    communication_bytes,
    run_experiment,
    sample_clients,
    simulated_duration,
)
from .yolo import (
    AnnotationRecord,
    BBox,
    CorpusStats,
    LabelParseError,
    corpus_stats,
    detection_accuracy,
    iou,
    parse_label_file,
    serialize_label_file,
)
