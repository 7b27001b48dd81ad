"""Renderers for the on-disk experiment artifacts.

metrics.csv and sweep.csv are the reproducibility contract: identical
config and seed must produce byte-identical files. Wall-clock time is
measurement noise, so the metrics.csv column is written as 0.0 and the
real timings live in summary.json, which is exempt from byte identity.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

from .config import config_to_dict
from .data import PartitionScheme
from .orchestrator import ExperimentResult, RoundMetrics
from .sweep import SweepCell

METRICS_HEADER = "round,participants,accuracy,mean_loss,bytes_up,bytes_down,sim_duration_s,wall_clock_s"
SWEEP_HEADER = "axis_value,seed,final_accuracy,total_sim_duration_s"


def render_metrics_csv(metrics: list[RoundMetrics]) -> str:
    lines = [METRICS_HEADER]
    for m in metrics:
        participants = ";".join(str(c) for c in m.participants)
        lines.append(
            f"{m.round_index},{participants},{m.global_accuracy!r},"
            f"{m.mean_client_loss!r},{m.bytes_up},{m.bytes_down},"
            f"{m.simulated_duration_s!r},0.0"
        )
    return "\n".join(lines) + "\n"


def render_summary(result: ExperimentResult) -> dict:
    """Provenance record: resolved config plus run-level outcomes."""
    config = result.config
    notes = {
        "evaluation": (
            "per-client 20% hold-out reserved at partition time; global accuracy "
            "is measured on the union of hold-outs of the evaluation clients"
        ),
        "wall_clock": (
            "wall-clock timings are measurement noise and excluded from the "
            "byte-identity guarantee; metrics.csv writes 0.0 in that column"
        ),
    }
    if config.partition_scheme is PartitionScheme.LABEL_SHARD:
        notes["non_iid"] = (
            "label-shard scheme with class-aligned shard cuts, "
            f"classes_per_client={config.classes_per_client}"
        )
    return {
        "config": config_to_dict(config),
        "param_count": result.param_count,
        "rounds_completed": len(result.metrics),
        "final_accuracy": result.final_accuracy,
        "total_bytes_up": sum(m.bytes_up for m in result.metrics),
        "total_bytes_down": sum(m.bytes_down for m in result.metrics),
        "total_simulated_duration_s": result.total_simulated_duration_s,
        "total_wall_clock_s": result.total_wall_clock_s,
        "wall_clock_per_round_s": [m.wall_clock_s for m in result.metrics],
        "notes": notes,
    }


def render_sweep_csv(cells: list[SweepCell]) -> str:
    lines = [SWEEP_HEADER]
    for cell in cells:
        lines.append(
            f"{cell.axis_value},{cell.seed},{cell.result.final_accuracy!r},"
            f"{cell.result.total_simulated_duration_s!r}"
        )
    return "\n".join(lines) + "\n"


def atomic_write_text(path: Path, text: str) -> None:
    """Write via temp file + rename so readers never see partial output."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
