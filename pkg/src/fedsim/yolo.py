"""YOLO annotation parsing, corpus statistics, and IoU-based accuracy.

Label files are plain text, one box per line:
``class_id x_center y_center width height`` with coordinates normalized
to the image. Centers lie in [0, 1]; width and height in (0, 1], so
degenerate zero-area boxes are rejected at parse time.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass


class LabelParseError(ValueError):
    """Raised for malformed label lines; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class BBox:
    class_id: int
    x_center: float
    y_center: float
    width: float
    height: float

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")
        if not (0.0 <= self.x_center <= 1.0):
            raise ValueError(f"x_center {self.x_center} outside [0, 1]")
        if not (0.0 <= self.y_center <= 1.0):
            raise ValueError(f"y_center {self.y_center} outside [0, 1]")
        if not (0.0 < self.width <= 1.0):
            raise ValueError(f"width {self.width} outside (0, 1]")
        if not (0.0 < self.height <= 1.0):
            raise ValueError(f"height {self.height} outside (0, 1]")

    def corners(self) -> tuple[float, float, float, float]:
        """(x1, y1, x2, y2) corner form."""
        return (
            self.x_center - self.width / 2.0,
            self.y_center - self.height / 2.0,
            self.x_center + self.width / 2.0,
            self.y_center + self.height / 2.0,
        )


@dataclass
class AnnotationRecord:
    image_path: str
    boxes: list[BBox]
    annotation_count: int = -1

    def __post_init__(self) -> None:
        if self.annotation_count < 0:
            self.annotation_count = len(self.boxes)
        elif self.annotation_count != len(self.boxes):
            raise ValueError(
                f"annotation_count {self.annotation_count} inconsistent with "
                f"{len(self.boxes)} boxes"
            )


@dataclass
class CorpusStats:
    class_histogram: dict[int, int]
    center_points: list[tuple[float, float]]
    size_points: list[tuple[float, float]]


def parse_label_file(contents: str) -> list[BBox]:
    """Parse one YOLO .txt file; empty lines are skipped, order preserved."""
    boxes: list[BBox] = []
    for line_no, raw in enumerate(contents.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            raise LabelParseError(line_no, f"expected 5 fields, got {len(fields)}")
        try:
            class_id = int(fields[0])
        except ValueError:
            raise LabelParseError(line_no, f"bad class id {fields[0]!r}") from None
        coords = []
        for token in fields[1:]:
            try:
                coords.append(float(token))
            except ValueError:
                raise LabelParseError(line_no, f"bad coordinate {token!r}") from None
        try:
            boxes.append(BBox(class_id, *coords))
        except ValueError as exc:
            raise LabelParseError(line_no, str(exc)) from None
    return boxes


def serialize_label_file(boxes: list[BBox]) -> str:
    """Inverse of parse_label_file, shortest round-trip decimals."""
    lines = [
        f"{b.class_id} {b.x_center!r} {b.y_center!r} {b.width!r} {b.height!r}"
        for b in boxes
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def corpus_stats(records: list[AnnotationRecord]) -> CorpusStats:
    """Aggregate box statistics over all records, in record-then-line order."""
    histogram: dict[int, int] = {}
    centers: list[tuple[float, float]] = []
    sizes: list[tuple[float, float]] = []
    for record in records:
        for box in record.boxes:
            histogram[box.class_id] = histogram.get(box.class_id, 0) + 1
            centers.append((box.x_center, box.y_center))
            sizes.append((box.width, box.height))
    return CorpusStats(dict(sorted(histogram.items())), centers, sizes)


def histogram_csv(stats: CorpusStats) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["class_id", "count"])
    for class_id in sorted(stats.class_histogram):
        writer.writerow([class_id, stats.class_histogram[class_id]])
    return out.getvalue()


def box_points_csv(stats: CorpusStats) -> str:
    """All boxes as raw points, for external scatter/KDE plotting."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["x_center", "y_center", "width", "height"])
    for (xc, yc), (w, h) in zip(stats.center_points, stats.size_points):
        writer.writerow([repr(xc), repr(yc), repr(w), repr(h)])
    return out.getvalue()


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of the axis-aligned boxes (class ignored)."""
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    inter_w = min(ax2, bx2) - max(ax1, bx1)
    inter_h = min(ay2, by2) - max(ay1, by1)
    if inter_w <= 0.0 or inter_h <= 0.0:
        return 0.0
    inter = inter_w * inter_h
    # Areas from the same corner arithmetic so that iou(a, a) == 1 exactly.
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    union = area_a + area_b - inter
    return inter / union


def detection_accuracy(
    predictions: list[BBox], ground_truth: list[BBox], iou_threshold: float
) -> float:
    """Greedy one-to-one matching accuracy at the given IoU threshold.

    Candidate (prediction, truth) pairs with matching class are taken in
    IoU-descending order (ties by prediction index then truth index); a
    pair is accepted when IoU >= threshold and neither side is matched
    yet. Accuracy is matched truths over max(1, #truths).
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    pairs = []
    for p_idx, pred in enumerate(predictions):
        for g_idx, truth in enumerate(ground_truth):
            if pred.class_id != truth.class_id:
                continue
            overlap = iou(pred, truth)
            if overlap >= iou_threshold:
                pairs.append((-overlap, p_idx, g_idx))
    pairs.sort()
    matched_preds: set[int] = set()
    matched_truths: set[int] = set()
    for _, p_idx, g_idx in pairs:
        if p_idx in matched_preds or g_idx in matched_truths:
            continue
        matched_preds.add(p_idx)
        matched_truths.add(g_idx)
    return len(matched_truths) / max(1, len(ground_truth))
