"""Detection scoring: box matching, count error, and threshold selection.

A prediction counts as a hit when its box overlaps an unused ground-truth
box with IoU >= 0.3. The probability threshold of the detector is chosen by
minimizing the weighted count error over a validation image set, where the
weighting makes images with many trucks matter proportionally more.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DegenerateBoxError, ZeroDenominatorError, ZeroTruthCountError
from .geo import GeoBox, RoadPolyline, road_filter

DEFAULT_IOU_MIN = 0.3
DEFAULT_GRID = np.linspace(0.0, 1.0, 201)  # 0.00 .. 1.00 step 0.005


@dataclass(frozen=True)
class ImageCountPair:
    image_id: str
    c_pred: int
    c_true: int

    def __post_init__(self):
        if self.c_pred < 0 or self.c_true < 0:
            raise ValueError("counts must be nonnegative")


@dataclass
class MatchResult:
    true_positives: int
    false_positives: int
    false_negatives: int
    matched_pairs: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def precision(self) -> float:
        d = self.true_positives + self.false_positives
        return self.true_positives / d if d else 1.0

    @property
    def recall(self) -> float:
        d = self.true_positives + self.false_negatives
        return self.true_positives / d if d else 1.0


@dataclass
class ThresholdSweep:
    thresholds: np.ndarray
    count_errors: np.ndarray
    precisions: np.ndarray
    recalls: np.ndarray
    optimum: tuple[float, float]  # (threshold, count_error); ties -> largest t


def _box_rect(box: GeoBox):
    """Axis-aligned (xmin, ymin, xmax, ymax) from the corner extremes.

    Computed in raw degrees: the local projection scales the axes
    independently, which leaves area ratios (hence IoU) unchanged.
    """
    lons = [c.lon for c in box.corners]
    lats = [c.lat for c in box.corners]
    return min(lons), min(lats), max(lons), max(lats)


def _rect_array(boxes: list[GeoBox]) -> np.ndarray:
    return np.array([_box_rect(b) for b in boxes]).reshape(len(boxes), 4)


def iou(a: GeoBox, b: GeoBox) -> float:
    """Intersection-over-union of the boxes' axis-aligned hulls."""
    ra = _rect_array([a])
    rb = _rect_array([b])
    for r, name in ((ra, "a"), (rb, "b")):
        if r[0, 2] - r[0, 0] <= 0 or r[0, 3] - r[0, 1] <= 0:
            raise DegenerateBoxError(f"box {name} has zero area")
    return float(_kernels.iou_matrix(ra, rb)[0, 0])


def match_detections(
    preds: list[GeoBox], truths: list[GeoBox], iou_min: float = DEFAULT_IOU_MIN
) -> MatchResult:
    """Greedy score-descending matching with single-use ground truths.

    Ties in score fall back to ascending prediction index; ties in IoU to
    ascending truth index, so the result does not depend on input order
    among equal-score predictions.
    """
    for i, p in enumerate(preds):
        if p.score is None:
            raise ValueError(f"prediction {i} has no score")
    if not preds or not truths:
        return MatchResult(0, len(preds), len(truths))

    mat = _kernels.iou_matrix(_rect_array(preds), _rect_array(truths))
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    truth_used = np.zeros(len(truths), dtype=bool)
    matched = []
    for i in order:
        row = np.where(truth_used, -1.0, mat[i])
        j = int(np.argmax(row))  # first maximum -> lowest truth index
        if row[j] >= iou_min:
            truth_used[j] = True
            matched.append((i, j, float(mat[i, j])))
    tp = len(matched)
    return MatchResult(tp, len(preds) - tp, len(truths) - tp, matched)


def count_error(pairs: list[ImageCountPair]) -> float:
    """Weighted absolute count error: sum|c_pred - c_true| / sum c_true."""
    denom = sum(p.c_true for p in pairs)
    if denom <= 0:
        raise ZeroDenominatorError("total true count is zero")
    return sum(abs(p.c_pred - p.c_true) for p in pairs) / denom


def per_image_bias(pairs: list[ImageCountPair]) -> tuple[list[tuple[str, float]], float]:
    """Signed relative error per image and their mean; negative = underprediction."""
    bad = [p.image_id for p in pairs if p.c_true == 0]
    if bad:
        raise ZeroTruthCountError(bad)
    ratios = [(p.image_id, (p.c_pred - p.c_true) / p.c_true) for p in pairs]
    mean = sum(r for _, r in ratios) / len(ratios) if ratios else 0.0
    return ratios, mean


@dataclass
class EvalResult:
    match: MatchResult
    count_err: float
    pairs: list[ImageCountPair]


def evaluate_images(
    preds_by_image: dict[str, list[GeoBox]],
    truths_by_image: dict[str, list[GeoBox]],
    iou_min: float = DEFAULT_IOU_MIN,
    threshold: float = 0.0,
    road: RoadPolyline | None = None,
) -> EvalResult:
    """Pooled TP/FP/FN and count error over a validation image set.

    Metrics are pooled over all images, not averaged image-by-image. The
    road filter, when given, is applied to predictions and truths alike.
    """
    images = sorted(set(preds_by_image) | set(truths_by_image))
    tp = fp = fn = 0
    pairs = []
    for img in images:
        preds = [p for p in preds_by_image.get(img, []) if p.score >= threshold]
        truths = truths_by_image.get(img, [])
        if road is not None:
            preds = road_filter(preds, road)
            truths = road_filter(truths, road)
        m = match_detections(preds, truths, iou_min)
        tp += m.true_positives
        fp += m.false_positives
        fn += m.false_negatives
        pairs.append(ImageCountPair(img, len(preds), len(truths)))
    return EvalResult(MatchResult(tp, fp, fn), count_error(pairs), pairs)


def tune_threshold(
    preds_by_image: dict[str, list[GeoBox]],
    truths_by_image: dict[str, list[GeoBox]],
    road: RoadPolyline | None = None,
    grid=None,
    iou_min: float = DEFAULT_IOU_MIN,
) -> ThresholdSweep:
    """Sweep the score threshold and locate the count-error minimum.

    Exploits that greedy matching of a score-descending prefix equals the
    prefix of the full greedy matching, so each image is matched once.
    """
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("threshold grid must be nonempty")
    if grid.min() < 0.0 or grid.max() > 1.0:
        raise ValueError("thresholds must lie in [0, 1]")
    grid = np.sort(grid)

    images = sorted(set(preds_by_image) | set(truths_by_image))
    pred_scores = []  # per image, sorted ascending
    match_scores = []  # per image, scores of matched predictions
    c_true = []
    for img in images:
        preds = preds_by_image.get(img, [])
        truths = truths_by_image.get(img, [])
        if road is not None:
            preds = road_filter(preds, road)
            truths = road_filter(truths, road)
        m = match_detections(preds, truths, iou_min)
        pred_scores.append(np.sort([p.score for p in preds]))
        match_scores.append(np.sort([preds[i].score for i, _, _ in m.matched_pairs]))
        c_true.append(len(truths))

    total_true = sum(c_true)
    if total_true <= 0:
        raise ZeroDenominatorError("total true count is zero")

    n_t = grid.size
    abs_err = np.zeros(n_t)
    tp = np.zeros(n_t)
    n_pred = np.zeros(n_t)
    for scores, mscores, ct in zip(pred_scores, match_scores, c_true):
        # count of scores >= t via searchsorted on the ascending array
        kept = scores.size - np.searchsorted(scores, grid, side="left")
        abs_err += np.abs(kept - ct)
        tp += mscores.size - np.searchsorted(mscores, grid, side="left")
        n_pred += kept

    errors = abs_err / total_true
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(n_pred > 0, tp / n_pred, 1.0)
    recall = tp / total_true if total_true else np.ones(n_t)
    # FN-based recall uses matched truths; tp counts them exactly
    best = errors.min()
    i_opt = int(np.nonzero(errors == best)[0][-1])  # ties -> largest threshold
    return ThresholdSweep(grid, errors, precision, recall, (float(grid[i_opt]), float(best)))
