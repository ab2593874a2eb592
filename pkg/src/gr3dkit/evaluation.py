"""Detection evaluation: greedy IoU matching, interpolated AP, and the
grounded-CoT accuracy triple.

The protocol matches predictions to ground truth per image and category by
descending score, accumulates dataset-wide PR curves, and averages
101-point interpolated precision over the IoU threshold grid
0.05, 0.10, ..., 0.50. mAP is the mean over categories, then thresholds;
AP15 is the category mean at threshold 0.15.

All reductions iterate images and categories in sorted order and break
score ties by (image_id, per-image index), so reports are bit-identical
regardless of input ordering or worker count.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

from gr3dkit.errors import EmptyEvaluation
from gr3dkit.geom2d import Box2D, iou2d, iou2d_matrix
from gr3dkit.geom3d import Box3D, encode_boxes
from gr3dkit import _kernels

DEFAULT_THRESHOLDS = (0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50)
AP15_THRESHOLD = 0.15
_RECALL_GRID = tuple(i / 100.0 for i in range(101))


@dataclass(frozen=True)
class Detection3D:
    category: str
    box: Box3D
    score: float

    def __post_init__(self):
        object.__setattr__(self, "score", float(self.score))
        if not math.isfinite(self.score):
            raise ValueError(f"score must be finite, got {self.score}")


@dataclass(frozen=True)
class GroundTruth3D:
    category: str
    box: Box3D
    ignore: bool = False


@dataclass(frozen=True)
class Detection2D:
    category: str
    box: Box2D
    score: float

    def __post_init__(self):
        object.__setattr__(self, "score", float(self.score))
        if not math.isfinite(self.score):
            raise ValueError(f"score must be finite, got {self.score}")


@dataclass(frozen=True)
class GroundTruth2D:
    category: str
    box: Box2D
    ignore: bool = False


@dataclass(frozen=True)
class GCoTRecord:
    answer_correct: bool
    predicted_box: Optional[Box2D]
    gt_box: Box2D


class GCoTMetrics(NamedTuple):
    a_acc: float
    g_acc: float
    consistency: float


@dataclass(frozen=True)
class ThresholdCounts:
    tp: int
    fp: int
    fn: int
    ignored: int


@dataclass(frozen=True)
class EvalReport:
    """AP summary: per category and threshold, plus the headline means."""

    kind: str
    thresholds: tuple[float, ...]
    per_category_ap: Mapping[str, Mapping[float, Optional[float]]]
    per_threshold_mean: Mapping[float, Optional[float]]
    mean_ap: Optional[float]
    ap15: Optional[float]
    counts: Mapping[float, ThresholdCounts]
    categories_without_gt: tuple[str, ...]
    num_images: int
    num_predictions: int
    num_gt: int

    def to_json_dict(self) -> dict:
        tkey = lambda t: f"{t:.2f}"
        return {
            "kind": self.kind,
            "thresholds": [round(t, 10) for t in self.thresholds],
            "mean_ap": self.mean_ap,
            "ap15": self.ap15,
            "per_threshold_mean": {tkey(t): v for t, v in self.per_threshold_mean.items()},
            "per_category_ap": {
                cat: {tkey(t): v for t, v in row.items()}
                for cat, row in self.per_category_ap.items()
            },
            "counts": {
                tkey(t): {"tp": c.tp, "fp": c.fp, "fn": c.fn, "ignored": c.ignored}
                for t, c in self.counts.items()
            },
            "categories_without_gt": list(self.categories_without_gt),
            "num_images": self.num_images,
            "num_predictions": self.num_predictions,
            "num_gt": self.num_gt,
        }


def _iou_matrix_3d(preds, gts):
    return _kernels.iou_matrix(
        encode_boxes([p.box for p in preds]),
        encode_boxes([g.box for g in gts]),
    )


def _iou_matrix_2d(preds, gts):
    return iou2d_matrix([p.box for p in preds], [g.box for g in gts])


def match_greedy(
    preds: Sequence,
    gts: Sequence,
    iou_threshold: float,
    iou: Optional[Sequence[Sequence[float]]] = None,
) -> list[tuple[int, Optional[int]]]:
    """Greedy per-image matching for one category.

    Predictions are visited in descending score (score ties keep input
    order); each one takes the unmatched, non-ignored ground truth of
    maximal IoU when that IoU meets the threshold, with IoU ties resolved
    toward the lowest ground-truth index. Returns (pred_index, gt_index or
    None) pairs in visiting order.
    """
    if iou is None:
        if preds and isinstance(preds[0].box, Box3D):
            iou = _iou_matrix_3d(preds, gts)
        else:
            iou = _iou_matrix_2d(preds, gts)
    order = sorted(range(len(preds)), key=lambda i: -preds[i].score)
    taken = [False] * len(gts)
    result: list[tuple[int, Optional[int]]] = []
    for i in order:
        best_j = None
        best_iou = iou_threshold
        for j in range(len(gts)):
            if taken[j] or gts[j].ignore:
                continue
            v = iou[i][j]
            if v > best_iou or (best_j is None and v == best_iou):
                best_iou = v
                best_j = j
        if best_j is not None:
            taken[best_j] = True
        result.append((i, best_j))
    return result


def average_precision(
    scored_labels: Iterable[tuple[float, bool]],
    num_gt: int,
) -> Optional[float]:
    """101-point interpolated AP from (score, is_true_positive) pairs.

    Score ties keep input order. With no ground truth and no predictions the
    value is undefined and None is returned (callers exclude it from means).
    """
    pairs = list(scored_labels)
    if num_gt < 0:
        raise ValueError("num_gt must be non-negative")
    if num_gt == 0 and not pairs:
        return None
    if num_gt == 0 or not pairs:
        return 0.0
    order = sorted(range(len(pairs)), key=lambda i: -pairs[i][0])
    tp = 0
    fp = 0
    precisions = []
    recalls = []
    for i in order:
        if pairs[i][1]:
            tp += 1
        else:
            fp += 1
        precisions.append(tp / (tp + fp))
        recalls.append(tp / num_gt)
    # Monotone non-increasing envelope from the right.
    for i in range(len(precisions) - 2, -1, -1):
        if precisions[i] < precisions[i + 1]:
            precisions[i] = precisions[i + 1]
    total = 0.0
    for r in _RECALL_GRID:
        idx = bisect_left(recalls, r)
        if idx < len(recalls):
            total += precisions[idx]
    return total / len(_RECALL_GRID)


def _group_by_category(items):
    out: dict[str, list] = {}
    for idx, item in enumerate(items):
        out.setdefault(item.category, []).append((idx, item))
    return out


def _image_work(args):
    """Per-image matching across all thresholds; pure and picklable.

    Returns {category: (num_gt, {threshold: [(score, idx, is_tp), ...]})}
    where entries matched to ignored ground truth are dropped entirely.
    """
    image_id, preds, gts, thresholds, kind = args
    iou_fn = _iou_matrix_3d if kind == "3d" else _iou_matrix_2d
    by_cat_pred = _group_by_category(preds)
    by_cat_gt = _group_by_category(gts)
    out = {}
    for cat in set(by_cat_pred) | set(by_cat_gt):
        cat_preds = by_cat_pred.get(cat, [])
        cat_gts = by_cat_gt.get(cat, [])
        pred_objs = [p for _, p in cat_preds]
        gt_objs = [g for _, g in cat_gts]
        num_gt = sum(1 for g in gt_objs if not g.ignore)
        matrix = iou_fn(pred_objs, gt_objs) if pred_objs and gt_objs else None
        per_threshold = {}
        for t in thresholds:
            matches = match_greedy(pred_objs, gt_objs, t, iou=matrix) if pred_objs else []
            entries = []
            ignored = 0
            for i, j in matches:
                if j is not None:
                    entries.append((pred_objs[i].score, i, True))
                    continue
                # Crowd-style forgiveness: an unmatched prediction that still
                # overlaps an ignored ground truth is neither TP nor FP.
                forgiven = False
                if matrix is not None:
                    for jj, g in enumerate(gt_objs):
                        if g.ignore and matrix[i][jj] >= t:
                            forgiven = True
                            break
                if forgiven:
                    ignored += 1
                else:
                    entries.append((pred_objs[i].score, i, False))
            per_threshold[t] = (entries, ignored)
        out[cat] = (num_gt, per_threshold)
    return image_id, out


def _evaluate(
    preds_by_image: Mapping[str, Sequence],
    gts_by_image: Mapping[str, Sequence],
    thresholds: Optional[Sequence[float]],
    kind: str,
    jobs: int = 1,
) -> EvalReport:
    thresholds = tuple(DEFAULT_THRESHOLDS if thresholds is None else thresholds)
    image_ids = sorted(set(preds_by_image) | set(gts_by_image))
    work = [
        (img, list(preds_by_image.get(img, [])), list(gts_by_image.get(img, [])),
         thresholds, kind)
        for img in image_ids
    ]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_image_work, work,
                                    chunksize=max(1, len(work) // (jobs * 4))))
    else:
        results = [_image_work(w) for w in work]
    results.sort(key=lambda r: r[0])

    # category -> num_gt, and category -> threshold -> dataset-wide entries
    gt_counts: dict[str, int] = {}
    entries: dict[str, dict[float, list]] = {}
    ignored_counts: dict[float, int] = {t: 0 for t in thresholds}
    for image_id, per_cat in results:
        for cat, (num_gt, per_threshold) in sorted(per_cat.items()):
            gt_counts[cat] = gt_counts.get(cat, 0) + num_gt
            slot = entries.setdefault(cat, {t: [] for t in thresholds})
            for t in thresholds:
                cat_entries, ignored = per_threshold[t]
                ignored_counts[t] += ignored
                for score, idx, is_tp in cat_entries:
                    slot[t].append(((score, image_id, idx), is_tp))

    categories = sorted(gt_counts)
    no_gt = tuple(c for c in categories if gt_counts[c] == 0)
    per_category: dict[str, dict[float, Optional[float]]] = {}
    counts: dict[float, ThresholdCounts] = {}
    total_gt = sum(gt_counts.values())
    for t in thresholds:
        tp_total = 0
        fp_total = 0
        for cat in categories:
            for _, is_tp in entries.get(cat, {}).get(t, []):
                if is_tp:
                    tp_total += 1
                else:
                    fp_total += 1
        counts[t] = ThresholdCounts(tp_total, fp_total, total_gt - tp_total,
                                    ignored_counts[t])
    for cat in categories:
        row: dict[float, Optional[float]] = {}
        for t in thresholds:
            keyed = entries.get(cat, {}).get(t, [])
            keyed.sort(key=lambda e: (-e[0][0], e[0][1], e[0][2]))
            row[t] = average_precision(
                [(key[0], is_tp) for key, is_tp in keyed], gt_counts[cat]
            )
        per_category[cat] = row

    per_threshold_mean: dict[float, Optional[float]] = {}
    for t in thresholds:
        vals = [per_category[c][t] for c in categories if per_category[c][t] is not None]
        per_threshold_mean[t] = sum(vals) / len(vals) if vals else None
    defined = [v for v in per_threshold_mean.values() if v is not None]
    mean_ap = sum(defined) / len(defined) if defined else None
    ap15 = None
    for t in thresholds:
        if abs(t - AP15_THRESHOLD) < 1e-12:
            ap15 = per_threshold_mean[t]
            break

    return EvalReport(
        kind=kind,
        thresholds=thresholds,
        per_category_ap=per_category,
        per_threshold_mean=per_threshold_mean,
        mean_ap=mean_ap,
        ap15=ap15,
        counts=counts,
        categories_without_gt=no_gt,
        num_images=len(image_ids),
        num_predictions=sum(len(v) for v in preds_by_image.values()),
        num_gt=total_gt,
    )


def evaluate_3d(preds_by_image, gts_by_image, thresholds=None, jobs: int = 1) -> EvalReport:
    """Full 3D protocol over {image_id: [Detection3D]} / {image_id: [GroundTruth3D]}."""
    return _evaluate(preds_by_image, gts_by_image, thresholds, "3d", jobs)


def evaluate_2d(preds_by_image, gts_by_image, thresholds=None, jobs: int = 1) -> EvalReport:
    """2D mirror of evaluate_3d using axis-aligned pixel IoU."""
    return _evaluate(preds_by_image, gts_by_image, thresholds, "2d", jobs)


def evaluate_gcot(records: Sequence[GCoTRecord]) -> GCoTMetrics:
    """Answer accuracy, grounding accuracy (IoU strictly above 0.5), and
    their conjunction. A missing predicted box counts as incorrect."""
    records = list(records)
    if not records:
        raise EmptyEvaluation("no grounded-CoT records to evaluate")
    n = len(records)
    a_hits = 0
    g_hits = 0
    both = 0
    for rec in records:
        a_ok = bool(rec.answer_correct)
        g_ok = False
        if rec.predicted_box is not None:
            try:
                g_ok = iou2d(rec.predicted_box, rec.gt_box) > 0.5
            except Exception:
                g_ok = False
        a_hits += a_ok
        g_hits += g_ok
        both += a_ok and g_ok
    return GCoTMetrics(a_hits / n, g_hits / n, both / n)
