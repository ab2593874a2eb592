"""Line-delimited record files: detections, ground truth, reports.

One JSON object per line with fields
{image_id, category, score?, box2d?, box3d?, ignore?}; box2d is
[x1, y1, x2, y2] and box3d is the 9-number tuple (center, size, normalized
Euler angles). Diagnostics always carry the file path and the byte offset
of the offending line.
"""

from __future__ import annotations

import json
from typing import Iterator, Optional

from gr3dkit.errors import GR3DKitError
from gr3dkit.evaluation import (
    Detection2D,
    Detection3D,
    EvalReport,
    GCoTRecord,
    GroundTruth2D,
    GroundTruth3D,
)
from gr3dkit.geom2d import Box2D
from gr3dkit.geom3d import Box3D


class RecordError(GR3DKitError):
    """A record file failed to parse or validate."""

    def __init__(self, path, offset, message):
        super().__init__(f"{path}: byte {offset}: {message}")
        self.path = str(path)
        self.offset = offset


def iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    """Yield (byte_offset, object) per non-empty line."""
    offset = 0
    with open(path, "rb") as fh:
        for line in fh:
            stripped = line.strip()
            if stripped:
                try:
                    obj = json.loads(stripped.decode("utf-8"))
                except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                    extra = getattr(exc, "pos", 0)
                    raise RecordError(path, offset + int(extra), str(exc))
                yield offset, obj
            offset += len(line)


def write_jsonl(path, objects) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objects:
            fh.write(json.dumps(obj, sort_keys=True))
            fh.write("\n")


def _require(obj, key, path, offset):
    if key not in obj:
        raise RecordError(path, offset, f"missing field {key!r}")
    return obj[key]


def _box2d(values, path, offset) -> Box2D:
    if not isinstance(values, (list, tuple)) or len(values) != 4:
        raise RecordError(path, offset, f"box2d must have 4 numbers, got {values!r}")
    try:
        return Box2D(*values)
    except (TypeError, ValueError) as exc:
        raise RecordError(path, offset, f"bad box2d: {exc}")


def _box3d(values, path, offset) -> Box3D:
    if not isinstance(values, (list, tuple)) or len(values) != 9:
        raise RecordError(path, offset, f"box3d must have 9 numbers, got {values!r}")
    try:
        return Box3D(tuple(values[0:3]), tuple(values[3:6]), tuple(values[6:9]))
    except (TypeError, ValueError) as exc:
        raise RecordError(path, offset, f"bad box3d: {exc}")


def load_detections(path, kind: str) -> dict[str, list]:
    """Group prediction records by image, preserving input order per image."""
    out: dict[str, list] = {}
    for offset, obj in iter_jsonl(path):
        image_id = str(_require(obj, "image_id", path, offset))
        category = str(_require(obj, "category", path, offset))
        score = _require(obj, "score", path, offset)
        try:
            if kind == "3d":
                det = Detection3D(category, _box3d(_require(obj, "box3d", path, offset), path, offset), score)
            else:
                det = Detection2D(category, _box2d(_require(obj, "box2d", path, offset), path, offset), score)
        except ValueError as exc:
            raise RecordError(path, offset, str(exc))
        out.setdefault(image_id, []).append(det)
    return out


def load_ground_truth(path, kind: str) -> dict[str, list]:
    out: dict[str, list] = {}
    for offset, obj in iter_jsonl(path):
        image_id = str(_require(obj, "image_id", path, offset))
        category = str(_require(obj, "category", path, offset))
        ignore = bool(obj.get("ignore", False))
        if kind == "3d":
            gt = GroundTruth3D(category, _box3d(_require(obj, "box3d", path, offset), path, offset), ignore)
        else:
            gt = GroundTruth2D(category, _box2d(_require(obj, "box2d", path, offset), path, offset), ignore)
        out.setdefault(image_id, []).append(gt)
    return out


def load_gcot_records(path) -> list[GCoTRecord]:
    records = []
    for offset, obj in iter_jsonl(path):
        answer = bool(_require(obj, "answer_correct", path, offset))
        gt_box = _box2d(_require(obj, "gt_box", path, offset), path, offset)
        pred = obj.get("predicted_box")
        pred_box = _box2d(pred, path, offset) if pred is not None else None
        records.append(GCoTRecord(answer, pred_box, gt_box))
    return records


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n"


def write_report(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report_to_json(report))


def _fmt_ap(value: Optional[float]) -> str:
    return "  n/a" if value is None else f"{value:.3f}"


def report_table(report: EvalReport) -> str:
    """Human-readable AP15 / mAP table, one row per category."""
    lines = []
    label = "AP3D" if report.kind == "3d" else "AP2D"
    lines.append(f"{'category':<24} {'AP15':>8} {'mAP':>8}")
    for cat in sorted(report.per_category_ap):
        row = report.per_category_ap[cat]
        vals = [v for v in row.values() if v is not None]
        cat_mean = sum(vals) / len(vals) if vals else None
        cat_ap15 = None
        for t, v in row.items():
            if abs(t - 0.15) < 1e-12:
                cat_ap15 = v
        lines.append(f"{cat:<24} {_fmt_ap(cat_ap15):>8} {_fmt_ap(cat_mean):>8}")
    lines.append(f"{'overall (' + label + ')':<24} {_fmt_ap(report.ap15):>8} {_fmt_ap(report.mean_ap):>8}")
    if report.categories_without_gt:
        lines.append("categories without ground truth (all predictions false): "
                     + ", ".join(report.categories_without_gt))
    return "\n".join(lines) + "\n"
