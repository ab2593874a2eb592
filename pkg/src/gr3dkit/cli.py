"""Command-line surface. All randomness flows from explicit --seed flags and
repeated runs produce byte-identical artifacts.

Core commands: eval3d, eval2d, eval-gcot, gen, simulate-stream, normalize.
Plumbing commands (parse, serialize, iou3d, sample-points) expose the text
and geometry primitives over the same file formats so foreign-language
callers need nothing but this executable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from gr3dkit import _kernels, datagen, records
from gr3dkit.errors import GR3DKitError, ProtocolViolation
from gr3dkit.evaluation import evaluate_2d, evaluate_3d, evaluate_gcot
from gr3dkit.camera import CameraIntrinsics, DepthMap, normalize_intrinsics, sample_region_points
from gr3dkit.geom2d import Box2D, JitterParams
from gr3dkit.geom3d import Box3D, encode_boxes
from gr3dkit.ground_text import (
    BBox2DToken,
    BBox3DToken,
    MalformedToken,
    Points3DToken,
    TextToken,
    format_number,
    parse,
    serialize,
)
from gr3dkit.region_protocol import ProtocolState, skeleton

log = logging.getLogger("gr3dkit")

DEFAULT_SEED = 0


def _parse_thresholds(spec: str) -> tuple[float, ...]:
    """start:stop:step, inclusive; e.g. 0.05:0.50:0.05."""
    try:
        start, stop, step = (float(v) for v in spec.split(":"))
    except ValueError:
        raise GR3DKitError(f"bad thresholds spec {spec!r}, expected start:stop:step")
    if step <= 0 or stop < start:
        raise GR3DKitError(f"bad thresholds spec {spec!r}")
    count = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 10) for i in range(count))


def _write_or_print(text: str, out_path) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_eval(args, kind: str) -> int:
    thresholds = _parse_thresholds(args.thresholds) if args.thresholds else None
    preds = records.load_detections(args.pred, kind)
    gts = records.load_ground_truth(args.gt, kind)
    fn = evaluate_3d if kind == "3d" else evaluate_2d
    report = fn(preds, gts, thresholds=thresholds, jobs=args.jobs)
    sys.stdout.write(records.report_table(report))
    if args.out:
        records.write_report(report, args.out)
    return 0


def _cmd_eval_gcot(args) -> int:
    recs = records.load_gcot_records(args.records)
    metrics = evaluate_gcot(recs)
    sys.stdout.write(
        f"A-Acc {metrics.a_acc:.4f}  G-Acc {metrics.g_acc:.4f}  "
        f"Consistency {metrics.consistency:.4f}\n"
    )
    if args.out:
        payload = {
            "a_acc": metrics.a_acc,
            "g_acc": metrics.g_acc,
            "consistency": metrics.consistency,
            "count": len(recs),
        }
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return 0


def _cmd_gen(args) -> int:
    kind_map = {
        "cot": datagen.KIND_GROUNDED,
        "detect": datagen.KIND_DETECT,
        "points": datagen.KIND_POINTS,
    }
    jitter_params = None
    if args.jitter:
        try:
            center_frac, size_frac = (float(v) for v in args.jitter.split(","))
        except ValueError:
            raise GR3DKitError(f"bad --jitter spec {args.jitter!r}, expected c,s")
        jitter_params = JitterParams(center_frac, size_frac, args.seed)
    scenes = datagen.load_manifest(args.manifest)
    recs = datagen.generate_records(
        scenes, kind_map[args.kind], seed=args.seed, jitter_params=jitter_params
    )
    records.write_jsonl(args.out, (datagen.record_to_dict(r) for r in recs))
    log.info("wrote %d records to %s", len(recs), args.out)
    return 0


def _replay_steps(path):
    for offset, obj in records.iter_jsonl(path):
        if "chunk" in obj:
            yield "chunk", obj["chunk"]
        elif "ack" in obj:
            yield "ack", Box2D(*obj["ack"])
        else:
            raise records.RecordError(path, offset, "replay line needs 'chunk' or 'ack'")


def _cmd_simulate_stream(args) -> int:
    state = ProtocolState()
    for kind, payload in _replay_steps(args.replay):
        if kind == "chunk":
            state.on_decode(payload)
        else:
            state.on_region_inserted(payload)
    state.finish()
    lines = []
    for tag, payload in skeleton(state.emitted):
        if tag == "text":
            lines.append(f"text {payload!r}")
        else:
            coords = "[" + ", ".join(format_number(v) for v in payload) + "]"
            lines.append(f"{tag} {coords}")
    sys.stdout.write("\n".join(lines) + ("\n" if lines else ""))
    return 0


def _cmd_normalize(args) -> int:
    k = CameraIntrinsics(
        fx=args.fx,
        fy=args.fy if args.fy is not None else args.fx,
        cx=args.width / 2.0,
        cy=args.height / 2.0,
        width=args.width,
        height=args.height,
    )
    new_w, new_h, scale = normalize_intrinsics(k)
    sys.stdout.write(f"width={new_w} height={new_h} scale={format_number(scale)}\n")
    return 0


def _token_to_dict(tok) -> dict:
    if isinstance(tok, TextToken):
        return {"type": "text", "text": tok.text, "byte_range": list(tok.byte_range)}
    if isinstance(tok, BBox2DToken):
        return {"type": "bbox2d", "box": list(tok.box.as_tuple()),
                "byte_range": list(tok.byte_range)}
    if isinstance(tok, BBox3DToken):
        return {"type": "bbox3d", "box": list(tok.box.as_tuple()),
                "byte_range": list(tok.byte_range)}
    if isinstance(tok, Points3DToken):
        return {"type": "points3d", "points": [list(p) for p in tok.points],
                "byte_range": list(tok.byte_range)}
    return {"type": "malformed", "reason": tok.reason, "raw": tok.raw,
            "byte_range": list(tok.byte_range)}


def _dict_to_token(obj, path, offset):
    kind = obj.get("type")
    if kind == "text":
        return TextToken(obj["text"], tuple(obj.get("byte_range", (0, 0))))
    if kind == "bbox2d":
        return BBox2DToken(Box2D(*obj["box"]), tuple(obj.get("byte_range", (0, 0))))
    if kind == "bbox3d":
        v = obj["box"]
        return BBox3DToken(Box3D(tuple(v[0:3]), tuple(v[3:6]), tuple(v[6:9])),
                           tuple(obj.get("byte_range", (0, 0))))
    if kind == "points3d":
        return Points3DToken(tuple(tuple(p) for p in obj["points"]),
                             tuple(obj.get("byte_range", (0, 0))))
    raise records.RecordError(path, offset, f"cannot serialize token type {kind!r}")


def _cmd_parse(args) -> int:
    with open(args.infile, "rb") as fh:
        data = fh.read()
    tokens = parse(data, strict=args.strict)
    payload = "".join(json.dumps(_token_to_dict(t), sort_keys=True) + "\n" for t in tokens)
    _write_or_print(payload, args.out)
    return 0


def _cmd_serialize(args) -> int:
    tokens = [
        _dict_to_token(obj, args.infile, offset)
        for offset, obj in records.iter_jsonl(args.infile)
    ]
    _write_or_print(serialize(tokens), args.out)
    return 0


def _load_box3d_lines(path) -> list[Box3D]:
    out = []
    for offset, obj in records.iter_jsonl(path):
        if not isinstance(obj, list) or len(obj) != 9:
            raise records.RecordError(path, offset, "each line must be a 9-number array")
        out.append(Box3D(tuple(obj[0:3]), tuple(obj[3:6]), tuple(obj[6:9])))
    return out


def _cmd_iou3d(args) -> int:
    boxes_a = _load_box3d_lines(args.boxes_a)
    boxes_b = _load_box3d_lines(args.boxes_b)
    matrix = _kernels.iou_matrix(encode_boxes(boxes_a), encode_boxes(boxes_b))
    np.clip(matrix, 0.0, 1.0, out=matrix)
    lines = []
    for row in matrix:
        lines.append("[" + ", ".join(format_number(v) for v in row) + "]\n")
    _write_or_print("".join(lines), args.out)
    return 0


def _cmd_sample_points(args) -> int:
    raster = np.load(args.depth)
    depth = DepthMap.from_raster(raster, scale=args.scale)
    k = CameraIntrinsics(args.fx, args.fy, args.cx, args.cy,
                         depth.width, depth.height)
    try:
        x1, y1, x2, y2 = (float(v) for v in args.region.split(","))
    except ValueError:
        raise GR3DKitError(f"bad --region spec {args.region!r}, expected x1,y1,x2,y2")
    points = sample_region_points(depth, k, Box2D(x1, y1, x2, y2), args.n, args.seed)
    payload = "".join(
        "[" + ", ".join(format_number(v) for v in p) + "]\n" for p in points
    )
    _write_or_print(payload, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gr3dkit", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval3d", help="3D detection AP over prediction/GT files")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--thresholds", default=None, help="start:stop:step (default 0.05:0.50:0.05)")
    p.add_argument("--out", default=None, help="write the machine-readable report here")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=lambda a: _cmd_eval(a, "3d"))

    p = sub.add_parser("eval2d", help="2D detection AP over prediction/GT files")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--thresholds", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=lambda a: _cmd_eval(a, "2d"))

    p = sub.add_parser("eval-gcot", help="grounded-CoT accuracy triple")
    p.add_argument("--records", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_eval_gcot)

    p = sub.add_parser("gen", help="generate training records from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kind", required=True, choices=("cot", "detect", "points"))
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--jitter", default=None, help="center_frac,size_frac")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("simulate-stream", help="replay a scripted decode stream")
    p.add_argument("--replay", required=True)
    p.set_defaults(fn=_cmd_simulate_stream)

    p = sub.add_parser("normalize", help="focal-normalized image dimensions")
    p.add_argument("--fx", type=float, required=True)
    p.add_argument("--fy", type=float, default=None)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.set_defaults(fn=_cmd_normalize)

    p = sub.add_parser("parse", help="tokenize grounding text to JSONL")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(fn=_cmd_parse)

    p = sub.add_parser("serialize", help="render token JSONL to canonical text")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_serialize)

    p = sub.add_parser("iou3d", help="pairwise 3D IoU matrix of two box files")
    p.add_argument("--boxes-a", required=True)
    p.add_argument("--boxes-b", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_iou3d)

    p = sub.add_parser("sample-points", help="sample and backproject region depth pixels")
    p.add_argument("--depth", required=True, help=".npy float raster")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--fx", type=float, required=True)
    p.add_argument("--fy", type=float, required=True)
    p.add_argument("--cx", type=float, required=True)
    p.add_argument("--cy", type=float, required=True)
    p.add_argument("--region", required=True, help="x1,y1,x2,y2")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_sample_points)

    return ap


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("GR3DKIT_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ProtocolViolation as exc:
        sys.stderr.write(f"protocol violation: {exc}\n")
        return 2
    except (GR3DKitError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
