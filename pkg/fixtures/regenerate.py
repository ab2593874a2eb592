"""Regenerate the committed CLI fixtures.

Inputs are constructed deterministically here; expected outputs are produced
by running the installed CLI, so the fixtures pin the exact bytes the
command-line surface (and any foreign-language wrapper of it) must
reproduce. Run from the repository root:

    python fixtures/regenerate.py
"""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent
PY = [sys.executable, "-m", "gr3dkit"]


def run(*args):
    proc = subprocess.run(PY + list(args), capture_output=True, text=True)
    if proc.returncode != 0:
        raise SystemExit(f"command failed: {args}\n{proc.stderr}")
    return proc.stdout


def write_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def eval3d_fixture():
    rng = np.random.default_rng(7)
    cats = ["chair", "table", "lamp"]
    preds = []
    gts = []
    for img in range(4):
        image_id = f"img{img:02d}"
        for k in range(5):
            cat = cats[(img + k) % len(cats)]
            center = [float(v) for v in rng.uniform(-1.5, 1.5, 3)]
            center[2] = abs(center[2]) + 1.0
            size = [float(v) for v in rng.uniform(0.4, 1.6, 3)]
            angles = [float(rng.uniform(-0.5, 0.5)),
                      float(rng.uniform(-0.99, 0.99)),
                      float(rng.uniform(-0.99, 0.99))]
            gts.append({"image_id": image_id, "category": cat,
                        "box3d": center + size + angles})
            # noisy copy of the ground truth plus an occasional wild miss
            noisy = [c + float(rng.normal(0, 0.08)) for c in center]
            pred_box = noisy + size + angles
            preds.append({"image_id": image_id, "category": cat,
                          "score": round(float(rng.uniform(0.3, 1.0)), 2),
                          "box3d": pred_box})
            if k == 0:
                far = [c + 5.0 for c in center] + size + angles
                preds.append({"image_id": image_id, "category": cat,
                              "score": round(float(rng.uniform(0.0, 0.4)), 2),
                              "box3d": far})
    write_jsonl(ROOT / "eval3d" / "preds.jsonl", preds)
    write_jsonl(ROOT / "eval3d" / "gts.jsonl", gts)
    stdout = run("eval3d",
                 "--pred", str(ROOT / "eval3d" / "preds.jsonl"),
                 "--gt", str(ROOT / "eval3d" / "gts.jsonl"),
                 "--out", str(ROOT / "eval3d" / "report.json"))
    (ROOT / "eval3d" / "table.txt").write_text(stdout)


def eval2d_fixture():
    rng = np.random.default_rng(11)
    preds = []
    gts = []
    for img in range(3):
        image_id = f"im{img}"
        for k in range(4):
            cat = "obj" if k % 2 == 0 else "person"
            x1, y1 = [float(v) for v in rng.uniform(0, 80, 2)]
            w, h = [float(v) for v in rng.uniform(10, 40, 2)]
            gts.append({"image_id": image_id, "category": cat,
                        "box2d": [x1, y1, x1 + w, y1 + h],
                        "ignore": bool(img == 2 and k == 3)})
            # noise scaled to the box so some predictions drop below the
            # higher IoU thresholds
            dx, dy = [float(v) for v in rng.normal(0, 0.12, 2) * (w, h)]
            preds.append({"image_id": image_id, "category": cat,
                          "score": round(float(rng.uniform(0.2, 1.0)), 2),
                          "box2d": [x1 + dx, y1 + dy, x1 + w + dx, y1 + h + dy]})
        # one stray false positive per image
        preds.append({"image_id": image_id, "category": "obj",
                      "score": round(float(rng.uniform(0.0, 0.5)), 2),
                      "box2d": [100.0, 100.0, 118.0, 126.0]})
    write_jsonl(ROOT / "eval2d" / "preds.jsonl", preds)
    write_jsonl(ROOT / "eval2d" / "gts.jsonl", gts)
    stdout = run("eval2d",
                 "--pred", str(ROOT / "eval2d" / "preds.jsonl"),
                 "--gt", str(ROOT / "eval2d" / "gts.jsonl"),
                 "--out", str(ROOT / "eval2d" / "report.json"))
    (ROOT / "eval2d" / "table.txt").write_text(stdout)


def gcot_fixture():
    # answers T, T, F with grounding IoUs 0.6, 0.4, 0.9
    def boxes(iou):
        y = 10.0 * (1.0 - iou) / (1.0 + iou)
        return [0.0, y, 10.0, y + 10.0], [0.0, 0.0, 10.0, 10.0]

    rows = []
    for answer, iou in [(True, 0.6), (True, 0.4), (False, 0.9)]:
        pred, gt = boxes(iou)
        rows.append({"answer_correct": answer, "predicted_box": pred, "gt_box": gt})
    rows.append({"answer_correct": True, "predicted_box": None,
                 "gt_box": [0.0, 0.0, 5.0, 5.0]})
    write_jsonl(ROOT / "gcot" / "records.jsonl", rows)
    run("eval-gcot", "--records", str(ROOT / "gcot" / "records.jsonl"),
        "--out", str(ROOT / "gcot" / "report.json"))


def iou3d_fixture():
    rng = np.random.default_rng(3)
    def rand_rows(n):
        rows = []
        for _ in range(n):
            center = [float(v) for v in rng.uniform(-1, 1, 3)]
            size = [float(v) for v in rng.uniform(0.3, 1.8, 3)]
            angles = [float(rng.uniform(-0.5, 0.5)),
                      float(rng.uniform(-0.99, 0.99)),
                      float(rng.uniform(-0.99, 0.99))]
            rows.append(center + size + angles)
        return rows

    write_jsonl(ROOT / "iou3d" / "boxes_a.jsonl", rand_rows(6))
    write_jsonl(ROOT / "iou3d" / "boxes_b.jsonl", rand_rows(5))
    run("iou3d",
        "--boxes-a", str(ROOT / "iou3d" / "boxes_a.jsonl"),
        "--boxes-b", str(ROOT / "iou3d" / "boxes_b.jsonl"),
        "--out", str(ROOT / "iou3d" / "matrix.txt"))


def parse_fixture():
    text = (
        "Scene check: the mug <bbox>[12, 8, 44.5, 60]</bbox> sits on the desk "
        "<bbox>[0, 40, 128, 96]</bbox>, lifted to "
        "<bbox3d>[0.4, -0.1, 2.25, 0.3, 0.12, 0.3, 0.0, 0.0, 0.25]</bbox3d> with "
        "surface samples <points3d>[(0.4, -0.1, 2.2), (0.38, -0.05, 2.31)]</points3d>. "
        "Noise: <bbox>[5, 5]</bbox> and a dangling <bbo tail."
    )
    (ROOT / "parse").mkdir(parents=True, exist_ok=True)
    (ROOT / "parse" / "input.txt").write_text(text, encoding="utf-8")
    run("parse", "--in", str(ROOT / "parse" / "input.txt"),
        "--out", str(ROOT / "parse" / "tokens.jsonl"))
    # canonical serialization of the well-formed tokens only
    tokens = []
    for line in (ROOT / "parse" / "tokens.jsonl").read_text().splitlines():
        obj = json.loads(line)
        if obj["type"] != "malformed":
            tokens.append(obj)
    write_jsonl(ROOT / "parse" / "clean_tokens.jsonl", tokens)
    run("serialize", "--in", str(ROOT / "parse" / "clean_tokens.jsonl"),
        "--out", str(ROOT / "parse" / "canonical.txt"))


def replay_fixture():
    steps = [
        {"chunk": "I see a cup "},
        {"chunk": "<bbox>[10, 10"},
        {"chunk": ", 30, 42]</bbox>"},
        {"ack": [10.0, 10.0, 30.0, 42.0]},
        {"chunk": " next to a plate <bbox>[40, 20, 90, 55]</bbox>"},
        {"ack": [40.0, 20.0, 90.0, 55.0]},
        {"chunk": " on the table."},
    ]
    write_jsonl(ROOT / "replay" / "two_entity.jsonl", steps)
    stdout = run("simulate-stream", "--replay", str(ROOT / "replay" / "two_entity.jsonl"))
    (ROOT / "replay" / "skeleton.txt").write_text(stdout)
    write_jsonl(ROOT / "replay" / "bad_ack.jsonl", [{"ack": [1.0, 2.0, 3.0, 4.0]}])
    write_jsonl(ROOT / "replay" / "empty.jsonl", [])


def gen_fixture():
    gen_dir = ROOT / "gen"
    gen_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(13)
    depth = rng.uniform(0.8, 4.0, (24, 32)).astype(np.float32)
    depth[rng.random((24, 32)) < 0.15] = 0.0  # invalid holes
    np.save(gen_dir / "depth_scene0.npy", depth)

    scenes = [
        {
            "image_id": "scene0",
            "intrinsics": {"fx": 400.0, "fy": 400.0, "cx": 16.0, "cy": 12.0,
                           "width": 32, "height": 24},
            "depth": {"file": "depth_scene0.npy", "scale": 1.0},
            "objects": [
                {"category": "mug", "description": "a blue mug",
                 "box2d": [2.0, 3.0, 14.0, 16.0],
                 "box3d": [0.1, 0.05, 1.6, 0.1, 0.12, 0.1, 0.0, 0.0, 0.1]},
                {"category": "laptop", "description": "an open laptop",
                 "box2d": [10.0, 5.0, 30.0, 22.0],
                 "box3d": [0.0, 0.1, 2.1, 0.35, 0.25, 0.3, 0.05, 0.0, -0.2]},
            ],
        },
        {
            "image_id": "scene1",
            "intrinsics": {"fx": 500.0, "fy": 500.0, "cx": 16.0, "cy": 12.0,
                           "width": 32, "height": 24},
            "objects": [
                {"category": "chair", "description": "a wooden chair",
                 "box2d": [4.0, 2.0, 28.0, 23.0],
                 "box3d": [0.2, 0.3, 3.0, 0.5, 0.9, 0.5, 0.0, 0.0, 0.4]},
            ],
        },
    ]
    write_jsonl(gen_dir / "manifest.jsonl", scenes)
    write_jsonl(gen_dir / "manifest_depthless.jsonl",
                [s for s in scenes if "depth" not in s])

    run("gen", "--manifest", str(gen_dir / "manifest.jsonl"), "--kind", "detect",
        "--seed", "0", "--out", str(gen_dir / "detect.jsonl"))
    run("gen", "--manifest", str(gen_dir / "manifest.jsonl"), "--kind", "cot",
        "--seed", "0", "--jitter", "0.1,0.1", "--out", str(gen_dir / "cot.jsonl"))
    # points need depth: restrict to scene0
    write_jsonl(gen_dir / "manifest_scene0.jsonl", scenes[:1])
    run("gen", "--manifest", str(gen_dir / "manifest_scene0.jsonl"), "--kind", "points",
        "--seed", "0", "--out", str(gen_dir / "points.jsonl"))

    stdout = run("sample-points", "--depth", str(gen_dir / "depth_scene0.npy"),
                 "--scale", "1.0", "--fx", "400", "--fy", "400",
                 "--cx", "16", "--cy", "12", "--region", "2,3,14,16",
                 "--n", "10", "--seed", "5")
    (gen_dir / "sample_points.txt").write_text(stdout)


def normalize_fixture():
    (ROOT / "normalize").mkdir(parents=True, exist_ok=True)
    out = run("normalize", "--fx", "500", "--fy", "500",
              "--width", "640", "--height", "480")
    (ROOT / "normalize" / "output.txt").write_text(out)


if __name__ == "__main__":
    eval3d_fixture()
    eval2d_fixture()
    gcot_fixture()
    iou3d_fixture()
    parse_fixture()
    replay_fixture()
    gen_fixture()
    normalize_fixture()
    print("fixtures regenerated under", ROOT)
