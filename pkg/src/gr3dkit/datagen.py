"""Training-record construction: grounded CoT, detect-then-lift CoT,
dense point supervision, and multi-turn conversation assembly.

Everything here is a pure function of (scene, config, seed); generating the
same manifest twice yields byte-identical output files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from gr3dkit import camera as cam
from gr3dkit.errors import GR3DKitError, NothingToGenerate
from gr3dkit.geom2d import Box2D, JitterParams, jitter
from gr3dkit.geom3d import Box3D
from gr3dkit.ground_text import format_bbox3d, format_points3d
from gr3dkit.region_protocol import (
    GROUND_TRUTH,
    BoxLiteral,
    RegionSlot,
    SequenceSegment,
    TextSpan,
    build_training_sequence,
    rendered_text,
)

KIND_GROUNDED = "grounded_cot"
KIND_DETECT = "detect_cot"
KIND_POINTS = "point_supervision"

DEFAULT_MAX_OBJECTS = 20
DEFAULT_MAX_ROUNDS = 10
DEFAULT_POINT_COUNT = 100


@dataclass(frozen=True)
class SceneObject:
    category: str
    description: str
    box2d: Box2D
    box3d: Optional[Box3D] = None


@dataclass(frozen=True)
class AnnotatedScene:
    image_id: str
    intrinsics: cam.CameraIntrinsics
    objects: tuple[SceneObject, ...]
    depth: Optional[cam.DepthMap] = None
    pose: Optional[cam.Pose] = None

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        w, h = self.intrinsics.width, self.intrinsics.height
        for obj in self.objects:
            if not obj.description:
                raise ValueError(f"object in {self.image_id} has an empty description")
            b = obj.box2d
            if b.x1 < 0 or b.y1 < 0 or b.x2 > w or b.y2 > h:
                raise ValueError(
                    f"box {b.as_tuple()} of {self.image_id} exceeds the {w}x{h} image"
                )


@dataclass(frozen=True)
class TrainingRecord:
    kind: str
    segments: tuple[SequenceSegment, ...]
    metadata: dict

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        prev = None
        for seg in self.segments:
            if isinstance(seg, RegionSlot) and not isinstance(prev, BoxLiteral):
                raise ValueError("every region slot must follow a box literal")
            prev = seg

    @property
    def text(self) -> str:
        return rendered_text(self.segments)


@dataclass(frozen=True)
class ConversationRecord:
    turns: tuple[tuple[str, TrainingRecord], ...]
    metadata: dict


def _load_templates() -> dict:
    payload = resources.files("gr3dkit.data").joinpath("templates.json").read_text()
    return json.loads(payload)


_TEMPLATES = _load_templates()


def question_for(kind: str, turn_index: int) -> str:
    bank = _TEMPLATES["questions"][kind]
    return bank[turn_index % len(bank)]


def make_grounded_cot(scene: AnnotatedScene, max_objects: Optional[int] = None) -> TrainingRecord:
    """One grounded-CoT record: a scene description whose object mentions
    are each followed by their box literal and a ground-truth region slot."""
    objects = list(scene.objects)
    if max_objects is not None:
        objects = objects[:max_objects]
    if not objects:
        raise NothingToGenerate(f"scene {scene.image_id} has no objects")
    prefix = "The scene contains "
    parts = []
    mentions = []
    cursor = len(prefix.encode("utf-8"))
    for i, obj in enumerate(objects):
        if i > 0:
            sep = " and " if i == len(objects) - 1 else ", "
            parts.append(sep)
            cursor += len(sep.encode("utf-8"))
        desc_len = len(obj.description.encode("utf-8"))
        mentions.append(((cursor, cursor + desc_len), obj.box2d))
        parts.append(obj.description)
        cursor += desc_len
    text = prefix + "".join(parts) + "."
    segments = build_training_sequence(text, mentions)
    return TrainingRecord(
        kind=KIND_GROUNDED,
        segments=tuple(segments),
        metadata={"image_id": scene.image_id, "num_objects": len(objects)},
    )


def make_detect_cot(
    scene: AnnotatedScene,
    max_objects: int = DEFAULT_MAX_OBJECTS,
    object_filter: Optional[Callable[[SceneObject], bool]] = None,
) -> TrainingRecord:
    """Detect-then-lift record: per object, a 2D box literal and region slot
    followed by the serialized 3D box target.

    Objects are ordered by descending 2D area (ties keep input order) and
    capped at ``max_objects``. ``object_filter`` hooks in dataset-specific
    selection rules; the default keeps everything.
    """
    eligible = [
        (i, obj) for i, obj in enumerate(scene.objects)
        if obj.box3d is not None and (object_filter is None or object_filter(obj))
    ]
    if not eligible:
        raise NothingToGenerate(f"scene {scene.image_id} has no 3D-annotated objects")
    eligible.sort(key=lambda pair: (-pair[1].box2d.area, pair[0]))
    eligible = eligible[:max_objects]
    segments: list[SequenceSegment] = []
    categories = []
    for _, obj in eligible:
        segments.append(BoxLiteral(obj.box2d))
        segments.append(RegionSlot(GROUND_TRUTH, True, obj.box2d))
        segments.append(TextSpan(format_bbox3d(obj.box3d)))
        categories.append(obj.category)
    return TrainingRecord(
        kind=KIND_DETECT,
        segments=tuple(segments),
        metadata={"image_id": scene.image_id, "categories": categories},
    )


def make_point_supervision(
    scene: AnnotatedScene,
    region: Box2D,
    n: int = DEFAULT_POINT_COUNT,
    seed: int = 0,
) -> TrainingRecord:
    """Dense supervision record: region prompt plus up to n surface points
    sampled from the scene's depth map and lifted to camera coordinates."""
    if scene.depth is None:
        raise GR3DKitError(f"scene {scene.image_id} has no depth map")
    points = cam.sample_region_points(scene.depth, scene.intrinsics, region, n, seed)
    segments = (
        BoxLiteral(region),
        RegionSlot(GROUND_TRUTH, True, region),
        TextSpan(format_points3d(points)),
    )
    return TrainingRecord(
        kind=KIND_POINTS,
        segments=segments,
        metadata={"image_id": scene.image_id, "num_points": len(points), "seed": seed},
    )


def assemble_conversation(
    records: Iterable[TrainingRecord],
    max_rounds: int = DEFAULT_MAX_ROUNDS,
) -> list[ConversationRecord]:
    """Pack records into question/answer conversations of up to max_rounds
    turns; overflow spills into follow-up conversations."""
    records = list(records)
    if not records:
        raise NothingToGenerate("no records to assemble")
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    conversations = []
    for base in range(0, len(records), max_rounds):
        chunk = records[base:base + max_rounds]
        turns = tuple(
            (question_for(rec.kind, i), rec) for i, rec in enumerate(chunk)
        )
        conversations.append(ConversationRecord(
            turns=turns,
            metadata={"num_rounds": len(turns), "part": base // max_rounds},
        ))
    return conversations


def augment_record(
    record: TrainingRecord,
    params: JitterParams,
    image_w: float,
    image_h: float,
) -> TrainingRecord:
    """Jitter every region slot's conditioning box; the supervised text
    (box literals and 3D targets) stays byte-identical. Slot i uses seed
    ``params.seed + i`` so records remain reproducible."""
    if record.kind not in (KIND_GROUNDED, KIND_DETECT):
        raise ValueError(f"cannot augment records of kind {record.kind}")
    segments = []
    slot_index = 0
    for seg in record.segments:
        if isinstance(seg, RegionSlot):
            noisy = jitter(seg.region, replace(params, seed=params.seed + slot_index),
                           image_w, image_h)
            segments.append(RegionSlot(seg.source, seg.gradient_barrier, noisy))
            slot_index += 1
        else:
            segments.append(seg)
    metadata = dict(record.metadata)
    metadata["jitter"] = {"center_frac": params.center_frac,
                          "size_frac": params.size_frac, "seed": params.seed}
    return TrainingRecord(record.kind, tuple(segments), metadata)


# ---------------------------------------------------------------------------
# Manifest ingestion and record serialization

def load_manifest(path) -> list[AnnotatedScene]:
    """Read a line-delimited scene manifest; depth rasters are .npy files
    resolved relative to the manifest."""
    from gr3dkit.records import RecordError, iter_jsonl

    base = Path(path).parent
    scenes = []
    for offset, obj in iter_jsonl(path):
        try:
            intr = obj["intrinsics"]
            k = cam.CameraIntrinsics(
                fx=intr["fx"], fy=intr["fy"], cx=intr["cx"], cy=intr["cy"],
                width=intr["width"], height=intr["height"],
            )
            objects = []
            for o in obj.get("objects", []):
                box3d = None
                if o.get("box3d") is not None:
                    v = o["box3d"]
                    box3d = Box3D(tuple(v[0:3]), tuple(v[3:6]), tuple(v[6:9]))
                objects.append(SceneObject(
                    category=str(o["category"]),
                    description=str(o["description"]),
                    box2d=Box2D(*o["box2d"]),
                    box3d=box3d,
                ))
            depth = None
            if obj.get("depth") is not None:
                spec = obj["depth"]
                raster = np.load(base / spec["file"])
                mask = np.load(base / spec["mask_file"]) if spec.get("mask_file") else None
                depth = cam.DepthMap.from_raster(raster, spec.get("scale", 1.0), mask)
            pose = None
            if obj.get("pose") is not None:
                p = obj["pose"]
                r = p["rotation"]
                rows = (tuple(r[0:3]), tuple(r[3:6]), tuple(r[6:9]))
                from gr3dkit.geom3d import RotationMatrix
                pose = cam.Pose(RotationMatrix(rows), tuple(p["translation"]))
            scenes.append(AnnotatedScene(
                image_id=str(obj["image_id"]),
                intrinsics=k,
                objects=tuple(objects),
                depth=depth,
                pose=pose,
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordError(path, offset, f"bad scene record: {exc}")
    return scenes


def _segment_to_dict(seg: SequenceSegment) -> dict:
    if isinstance(seg, TextSpan):
        return {"type": "text", "text": seg.text}
    if isinstance(seg, BoxLiteral):
        return {"type": "box", "box": list(seg.box.as_tuple())}
    return {
        "type": "slot",
        "source": seg.source,
        "gradient_barrier": seg.gradient_barrier,
        "region": list(seg.region.as_tuple()),
    }


def record_to_dict(record: TrainingRecord) -> dict:
    return {
        "kind": record.kind,
        "text": record.text,
        "segments": [_segment_to_dict(s) for s in record.segments],
        "metadata": record.metadata,
    }


def conversation_to_dict(conv: ConversationRecord) -> dict:
    return {
        "turns": [
            {"question": q, "answer": record_to_dict(rec)} for q, rec in conv.turns
        ],
        "metadata": conv.metadata,
    }


def generate_records(
    scenes: Iterable[AnnotatedScene],
    kind: str,
    seed: int = 0,
    jitter_params: Optional[JitterParams] = None,
    max_objects: int = DEFAULT_MAX_OBJECTS,
    point_count: int = DEFAULT_POINT_COUNT,
) -> list[TrainingRecord]:
    """Generate one flavor of records over a manifest, deterministically.

    Scenes are processed in sorted image_id order. For point supervision one
    record is emitted per object region, seeded by (seed + object index).
    """
    out = []
    for scene in sorted(scenes, key=lambda s: s.image_id):
        if kind == KIND_GROUNDED:
            rec = make_grounded_cot(scene)
            if jitter_params is not None:
                rec = augment_record(rec, replace(jitter_params, seed=jitter_params.seed + seed),
                                     scene.intrinsics.width, scene.intrinsics.height)
            out.append(rec)
        elif kind == KIND_DETECT:
            rec = make_detect_cot(scene, max_objects=max_objects)
            if jitter_params is not None:
                rec = augment_record(rec, replace(jitter_params, seed=jitter_params.seed + seed),
                                     scene.intrinsics.width, scene.intrinsics.height)
            out.append(rec)
        elif kind == KIND_POINTS:
            if scene.depth is None:
                raise GR3DKitError(
                    f"scene {scene.image_id} has no depth map; cannot build point supervision"
                )
            for i, obj in enumerate(scene.objects):
                out.append(make_point_supervision(
                    scene, obj.box2d, n=point_count, seed=seed + i
                ))
        else:
            raise ValueError(f"unknown record kind {kind!r}")
    return out
