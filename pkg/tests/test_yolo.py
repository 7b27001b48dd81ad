import itertools

import numpy as np
import pytest

from fedsim.yolo import (
    AnnotationRecord,
    BBox,
    LabelParseError,
    box_points_csv,
    corpus_stats,
    detection_accuracy,
    histogram_csv,
    iou,
    parse_label_file,
    serialize_label_file,
)


def rasterized_iou(a, b, cells=1000):
    """Counting oracle: classify a fine grid of cell centers."""
    xs = (np.arange(cells) + 0.5) / cells
    ys = (np.arange(cells) + 0.5) / cells
    gx, gy = np.meshgrid(xs, ys)

    def inside(box):
        x1, y1, x2, y2 = box.corners()
        return (gx >= x1) & (gx <= x2) & (gy >= y1) & (gy <= y2)

    in_a, in_b = inside(a), inside(b)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


def random_box(rng, class_id=0):
    w = rng.uniform(0.05, 0.5)
    h = rng.uniform(0.05, 0.5)
    x = rng.uniform(w / 2, 1 - w / 2)
    y = rng.uniform(h / 2, 1 - h / 2)
    return BBox(class_id, x, y, w, h)


class TestParse:
    def test_single_line(self):
        boxes = parse_label_file("3 0.5 0.5 0.2 0.1")
        assert boxes == [BBox(3, 0.5, 0.5, 0.2, 0.1)]

    def test_empty_file(self):
        assert parse_label_file("") == []
        assert parse_label_file("\n  \n") == []

    def test_width_out_of_range(self):
        with pytest.raises(LabelParseError) as err:
            parse_label_file("1 0.5 0.5 1.3 0.2")
        assert err.value.line_no == 1
        assert "width" in str(err.value)

    def test_line_number_reported(self):
        with pytest.raises(LabelParseError) as err:
            parse_label_file("0 0.5 0.5 0.2 0.2\n1 0.5 0.5\n")
        assert err.value.line_no == 2

    def test_bad_tokens(self):
        with pytest.raises(LabelParseError):
            parse_label_file("x 0.5 0.5 0.2 0.2")
        with pytest.raises(LabelParseError):
            parse_label_file("0 0.5 abc 0.2 0.2")
        with pytest.raises(LabelParseError):
            parse_label_file("-1 0.5 0.5 0.2 0.2")
        with pytest.raises(LabelParseError):
            parse_label_file("0 0.5 nan 0.2 0.2")
        with pytest.raises(LabelParseError):
            parse_label_file("0 0.5 0.5 0.0 0.2")  # zero-area box

    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(17)
        boxes = [random_box(rng, class_id=int(rng.integers(5))) for _ in range(50)]
        text = serialize_label_file(boxes)
        assert parse_label_file(text) == boxes
        assert serialize_label_file(parse_label_file(text)) == text


class TestCorpusStats:
    def test_empty(self):
        stats = corpus_stats([])
        assert stats.class_histogram == {}
        assert stats.center_points == []
        assert stats.size_points == []

    def test_totals(self):
        rng = np.random.default_rng(3)
        records = [
            AnnotationRecord("a.jpg", [random_box(rng) for _ in range(3)]),
            AnnotationRecord("b.jpg", [random_box(rng) for _ in range(2)]),
        ]
        stats = corpus_stats(records)
        assert sum(stats.class_histogram.values()) == 5
        assert len(stats.center_points) == len(stats.size_points) == 5

    def test_constructed_histogram(self):
        boxes0 = [BBox(0, 0.5, 0.5, 0.1, 0.1)] * 4
        boxes1 = [BBox(1, 0.2, 0.2, 0.1, 0.1)]
        stats = corpus_stats([AnnotationRecord("a", boxes0), AnnotationRecord("b", boxes1)])
        assert stats.class_histogram == {0: 4, 1: 1}

    def test_annotation_count_consistency(self):
        record = AnnotationRecord("a", [BBox(0, 0.5, 0.5, 0.1, 0.1)])
        assert record.annotation_count == 1
        with pytest.raises(ValueError):
            AnnotationRecord("a", [BBox(0, 0.5, 0.5, 0.1, 0.1)], annotation_count=2)

    def test_csv_exports(self):
        stats = corpus_stats([AnnotationRecord("a", [BBox(3, 0.5, 0.5, 0.2, 0.1)])])
        assert histogram_csv(stats) == "class_id,count\n3,1\n"
        assert box_points_csv(stats).splitlines()[0] == "x_center,y_center,width,height"
        assert box_points_csv(stats).splitlines()[1] == "0.5,0.5,0.2,0.1"


class TestIou:
    def test_identity(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            box = random_box(rng)
            assert iou(box, box) == 1.0

    def test_disjoint(self):
        a = BBox(0, 0.2, 0.5, 0.1, 0.1)
        b = BBox(0, 0.8, 0.5, 0.1, 0.1)
        assert iou(a, b) == 0.0

    def test_worked_third_case(self):
        a = BBox(0, 0.5, 0.5, 0.4, 0.4)
        b = BBox(0, 0.7, 0.5, 0.4, 0.4)
        # Corner arithmetic: intersection 0.08, union 0.24.
        assert iou(a, b) == pytest.approx(1.0 / 3.0, abs=1e-12)
        assert iou(a, b) == pytest.approx(rasterized_iou(a, b), abs=1e-2)

    def test_against_rasterization_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            a, b = random_box(rng), random_box(rng)
            assert iou(a, b) == pytest.approx(rasterized_iou(a, b), abs=1e-2)

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            a, b = random_box(rng), random_box(rng)
            assert iou(a, b) == iou(b, a)
            assert 0.0 <= iou(a, b) <= 1.0

    def test_translation_invariance(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            a = BBox(0, 0.3, 0.3, 0.2, 0.15)
            b = BBox(0, 0.4, 0.35, 0.25, 0.2)
            dx, dy = rng.uniform(-0.15, 0.4, size=2)
            shifted = (
                BBox(0, a.x_center + dx, a.y_center + dy, a.width, a.height),
                BBox(0, b.x_center + dx, b.y_center + dy, b.width, b.height),
            )
            assert iou(*shifted) == pytest.approx(iou(a, b), abs=1e-12)


def brute_force_max_matching(predictions, truths, threshold):
    """Max one-to-one matching size over all assignments (oracle)."""
    best = 0
    indices = range(len(truths))
    for k in range(min(len(predictions), len(truths)), 0, -1):
        for preds in itertools.permutations(range(len(predictions)), k):
            for chosen in itertools.combinations(indices, k):
                ok = all(
                    predictions[p].class_id == truths[t].class_id
                    and iou(predictions[p], truths[t]) >= threshold
                    for p, t in zip(preds, chosen)
                )
                if ok:
                    return k
    return best


class TestDetectionAccuracy:
    def test_identical_lists(self):
        rng = np.random.default_rng(7)
        boxes = [random_box(rng, class_id=i % 3) for i in range(6)]
        assert detection_accuracy(boxes, list(boxes), 0.1) == 1.0

    def test_empty_predictions(self):
        rng = np.random.default_rng(9)
        truths = [random_box(rng) for _ in range(3)]
        assert detection_accuracy([], truths, 0.1) == 0.0
        assert detection_accuracy(truths, [], 0.1) == 0.0

    def test_one_prediction_two_truths(self):
        truths = [BBox(0, 0.45, 0.5, 0.3, 0.3), BBox(0, 0.6, 0.5, 0.3, 0.3)]
        pred = [BBox(0, 0.5, 0.5, 0.3, 0.3)]
        assert brute_force_max_matching(pred, truths, 0.1) == 1
        assert detection_accuracy(pred, truths, 0.1) == 0.5

    def test_class_must_match(self):
        truth = [BBox(1, 0.5, 0.5, 0.3, 0.3)]
        pred = [BBox(2, 0.5, 0.5, 0.3, 0.3)]
        assert detection_accuracy(pred, truth, 0.1) == 0.0

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(13)
        thresholds = [0.05, 0.1, 0.25, 0.5, 0.75, 1.0]
        for _ in range(200):
            preds = [random_box(rng, int(rng.integers(3))) for _ in range(rng.integers(0, 5))]
            truths = [random_box(rng, int(rng.integers(3))) for _ in range(rng.integers(1, 5))]
            accs = [detection_accuracy(preds, truths, t) for t in thresholds]
            assert all(a >= b for a, b in zip(accs, accs[1:]))

    def test_greedy_never_exceeds_bruteforce(self):
        rng = np.random.default_rng(15)
        for _ in range(50):
            preds = [random_box(rng, int(rng.integers(2))) for _ in range(rng.integers(0, 4))]
            truths = [random_box(rng, int(rng.integers(2))) for _ in range(rng.integers(1, 4))]
            greedy = detection_accuracy(preds, truths, 0.1) * len(truths)
            assert round(greedy) <= brute_force_max_matching(preds, truths, 0.1)

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            detection_accuracy([], [], 0.0)
