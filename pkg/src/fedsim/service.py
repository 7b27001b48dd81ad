"""HTTP front end for the simulation engine.

Request bodies carry config/spec file text verbatim so the service and
the CLI share one parser (and one set of line-anchored error messages).
Responses include both structured metrics and the exact rendered file
bodies, so clients can persist artifacts byte-for-byte.
"""

from __future__ import annotations

from typing import Any

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .artifacts import (
    render_metrics_csv,
    render_summary,
    render_sweep_csv,
)
from .config import parse_experiment_config
from .orchestrator import ConfigError, ExperimentResult, resolve_max_workers, run_experiment
from .sweep import parse_sweep_spec, run_sweep
from .yolo import (
    AnnotationRecord,
    LabelParseError,
    box_points_csv,
    corpus_stats,
    histogram_csv,
    parse_label_file,
)


class RunRequest(BaseModel):
    config_text: str = Field(description="Config file body (key = value lines)")
    seed: int | None = Field(default=None, description="Overrides the config seed")


class RoundMetricsModel(BaseModel):
    round: int
    participants: list[int]
    accuracy: float
    mean_loss: float
    bytes_up: int
    bytes_down: int
    sim_duration_s: float
    wall_clock_s: float


class RunResponse(BaseModel):
    summary: dict[str, Any]
    metrics: list[RoundMetricsModel]
    metrics_csv: str
    partition_manifest: str


class SweepRequest(BaseModel):
    spec_text: str = Field(description="Sweep spec file body")


class SweepCellModel(BaseModel):
    name: str
    axis_value: str
    seed: int
    summary: dict[str, Any]
    metrics_csv: str


class SweepResponse(BaseModel):
    axis: str
    sweep_csv: str
    cells: list[SweepCellModel]


class LabelFileModel(BaseModel):
    name: str
    contents: str


class StatsRequest(BaseModel):
    files: list[LabelFileModel]


class StatsResponse(BaseModel):
    files: int
    boxes: int
    histogram_csv: str
    box_points_csv: str


def _metrics_models(result: ExperimentResult) -> list[RoundMetricsModel]:
    return [
        RoundMetricsModel(
            round=m.round_index,
            participants=list(m.participants),
            accuracy=m.global_accuracy,
            mean_loss=m.mean_client_loss,
            bytes_up=m.bytes_up,
            bytes_down=m.bytes_down,
            sim_duration_s=m.simulated_duration_s,
            wall_clock_s=m.wall_clock_s,
        )
        for m in result.metrics
    ]


def create_app() -> FastAPI:
    app = FastAPI(title="fedsim", version=__version__)

    @app.get("/health")
    def health() -> dict[str, str]:
        return {"status": "ok", "version": __version__}

    @app.post("/run", response_model=RunResponse)
    def run(request: RunRequest) -> RunResponse:
        try:
            config = parse_experiment_config(request.config_text, seed_override=request.seed)
            result = run_experiment(config, max_workers=resolve_max_workers())
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return RunResponse(
            summary=render_summary(result),
            metrics=_metrics_models(result),
            metrics_csv=render_metrics_csv(result.metrics),
            partition_manifest=result.partition_manifest,
        )

    @app.post("/sweep", response_model=SweepResponse)
    def sweep(request: SweepRequest) -> SweepResponse:
        try:
            spec = parse_sweep_spec(request.spec_text)
            cells = run_sweep(spec, max_workers=resolve_max_workers())
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return SweepResponse(
            axis=spec.axis.value,
            sweep_csv=render_sweep_csv(cells),
            cells=[
                SweepCellModel(
                    name=f"{spec.axis.value}={cell.axis_value}_seed={cell.seed}",
                    axis_value=cell.axis_value,
                    seed=cell.seed,
                    summary=render_summary(cell.result),
                    metrics_csv=render_metrics_csv(cell.result.metrics),
                )
                for cell in cells
            ],
        )

    @app.post("/stats", response_model=StatsResponse)
    def stats(request: StatsRequest) -> StatsResponse:
        records = []
        for item in request.files:
            try:
                boxes = parse_label_file(item.contents)
            except LabelParseError as exc:
                raise HTTPException(
                    status_code=400, detail=f"{item.name}: {exc}"
                ) from exc
            records.append(AnnotationRecord(image_path=item.name, boxes=boxes))
        stats_result = corpus_stats(records)
        return StatsResponse(
            files=len(records),
            boxes=len(stats_result.center_points),
            histogram_csv=histogram_csv(stats_result),
            box_points_csv=box_points_csv(stats_result),
        )

    return app
