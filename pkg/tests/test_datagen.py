import json

import numpy as np
import pytest

from gr3dkit.camera import CameraIntrinsics, DepthMap
from gr3dkit.datagen import (
    AnnotatedScene,
    ConversationRecord,
    SceneObject,
    TrainingRecord,
    assemble_conversation,
    augment_record,
    conversation_to_dict,
    generate_records,
    make_detect_cot,
    make_grounded_cot,
    make_point_supervision,
    record_to_dict,
)
from gr3dkit.errors import NoValidDepth, NothingToGenerate
from gr3dkit.geom2d import Box2D, JitterParams
from gr3dkit.geom3d import Box3D
from gr3dkit.ground_text import BBox2DToken, BBox3DToken, Points3DToken, parse
from gr3dkit.region_protocol import BoxLiteral, RegionSlot, TextSpan


def make_scene(n_objects=2, with_depth=False, image_id="scene0"):
    k = CameraIntrinsics(fx=500, fy=500, cx=32, cy=24, width=64, height=48)
    objects = []
    for i in range(n_objects):
        x = 2.0 * (i % 8)
        objects.append(SceneObject(
            category=f"cat{i}",
            description=f"object number {i}",
            box2d=Box2D(x, 1, x + 10 + (i % 12), 20),
            box3d=Box3D((0.1 * i, 0.2, 2.0 + i), (0.5, 0.6, 0.7), (0.1, 0.0, -0.25)),
        ))
    depth = None
    if with_depth:
        values = np.full((48, 64), 2.0, dtype=np.float32)
        depth = DepthMap.from_raster(values)
    return AnnotatedScene(image_id=image_id, intrinsics=k,
                          objects=tuple(objects), depth=depth)


class TestSceneValidation:
    def test_box_outside_image_rejected(self):
        k = CameraIntrinsics(fx=500, fy=500, cx=16, cy=12, width=32, height=24)
        with pytest.raises(ValueError):
            AnnotatedScene("x", k, (SceneObject("c", "d", Box2D(0, 0, 40, 10)),))

    def test_empty_description_rejected(self):
        k = CameraIntrinsics(fx=500, fy=500, cx=16, cy=12, width=32, height=24)
        with pytest.raises(ValueError):
            AnnotatedScene("x", k, (SceneObject("c", "", Box2D(0, 0, 4, 4)),))


class TestDetectCoT:
    def test_single_object_triple(self):
        rec = make_detect_cot(make_scene(1))
        assert rec.kind == "detect_cot"
        assert [type(s) for s in rec.segments] == [BoxLiteral, RegionSlot, TextSpan]

    def test_cap_at_max_objects(self):
        scene = make_scene(25)
        rec = make_detect_cot(scene)
        assert sum(isinstance(s, BoxLiteral) for s in rec.segments) == 20

    def test_area_descending_order(self):
        scene = make_scene(5)
        rec = make_detect_cot(scene)
        areas = [s.box.area for s in rec.segments if isinstance(s, BoxLiteral)]
        assert areas == sorted(areas, reverse=True)

    def test_round_trip_recovers_boxes(self):
        scene = make_scene(3)
        rec = make_detect_cot(scene)
        tokens = parse(rec.text, strict=True)
        got_2d = [t.box for t in tokens if isinstance(t, BBox2DToken)]
        got_3d = [t.box for t in tokens if isinstance(t, BBox3DToken)]
        by_area = sorted(scene.objects, key=lambda o: -o.box2d.area)
        assert got_2d == [o.box2d for o in by_area]
        assert got_3d == [o.box3d for o in by_area]

    def test_nothing_to_generate(self):
        k = CameraIntrinsics(fx=500, fy=500, cx=16, cy=12, width=32, height=24)
        scene = AnnotatedScene(
            "x", k, (SceneObject("c", "thing", Box2D(0, 0, 4, 4), None),)
        )
        with pytest.raises(NothingToGenerate):
            make_detect_cot(scene)

    def test_object_filter_hook(self):
        scene = make_scene(4)
        rec = make_detect_cot(scene, object_filter=lambda o: o.category != "cat0")
        cats = rec.metadata["categories"]
        assert "cat0" not in cats and len(cats) == 3


class TestPointSupervision:
    def test_constant_depth_all_z_equal(self):
        scene = make_scene(1, with_depth=True)
        rec = make_point_supervision(scene, Box2D(4, 4, 30, 30), n=16, seed=5)
        tokens = parse(rec.text, strict=True)
        pts = [t for t in tokens if isinstance(t, Points3DToken)][0].points
        assert len(pts) == 16
        assert all(p[2] == 2.0 for p in pts)

    def test_seed_determinism_bytes(self):
        scene = make_scene(1, with_depth=True)
        a = record_to_dict(make_point_supervision(scene, Box2D(0, 0, 20, 20), 25, seed=9))
        b = record_to_dict(make_point_supervision(scene, Box2D(0, 0, 20, 20), 25, seed=9))
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_reprojection_within_region(self):
        from gr3dkit.camera import project

        scene = make_scene(1, with_depth=True)
        region = Box2D(10, 6, 40, 30)
        rec = make_point_supervision(scene, region, n=50, seed=1)
        tokens = parse(rec.text, strict=True)
        pts = [t for t in tokens if isinstance(t, Points3DToken)][0].points
        for p in pts:
            u, v = project(scene.intrinsics, p)
            assert region.x1 <= u <= region.x2
            assert region.y1 <= v <= region.y2

    def test_no_depth_propagates(self):
        scene = make_scene(1, with_depth=True)
        masked = DepthMap(np.zeros((48, 64)))
        bad = AnnotatedScene(scene.image_id, scene.intrinsics, scene.objects, masked)
        with pytest.raises(NoValidDepth):
            make_point_supervision(bad, Box2D(0, 0, 10, 10), 5, seed=0)


class TestGroundedCoT:
    def test_mentions_follow_descriptions(self):
        scene = make_scene(2)
        rec = make_grounded_cot(scene)
        assert rec.kind == "grounded_cot"
        text = rec.text
        assert text.startswith("The scene contains object number 0<bbox>[")
        tokens = parse(text, strict=True)
        boxes = [t.box for t in tokens if isinstance(t, BBox2DToken)]
        assert boxes == [o.box2d for o in scene.objects]


class TestConversations:
    def test_three_records_three_turns(self):
        recs = [make_detect_cot(make_scene(1, image_id=f"s{i}")) for i in range(3)]
        convs = assemble_conversation(recs)
        assert len(convs) == 1
        assert len(convs[0].turns) == 3

    def test_spillover(self):
        recs = [make_detect_cot(make_scene(1, image_id=f"s{i}")) for i in range(12)]
        convs = assemble_conversation(recs, max_rounds=10)
        assert [len(c.turns) for c in convs] == [10, 2]

    def test_concatenated_answers_strict_parse(self):
        recs = [make_detect_cot(make_scene(2, image_id=f"s{i}")) for i in range(4)]
        convs = assemble_conversation(recs)
        combined = "".join(rec.text for _, rec in convs[0].turns)
        parse(combined, strict=True)

    def test_questions_cycle_templates(self):
        recs = [make_detect_cot(make_scene(1, image_id=f"s{i}")) for i in range(5)]
        convs = assemble_conversation(recs)
        questions = [q for q, _ in convs[0].turns]
        assert questions[0] == questions[3]
        assert questions[0] != questions[1]


class TestAugment:
    def test_zero_jitter_identity(self):
        rec = make_detect_cot(make_scene(3))
        out = augment_record(rec, JitterParams(0.0, 0.0, seed=1), 64, 48)
        assert out.segments == rec.segments

    def test_targets_unchanged_regions_moved(self):
        rec = make_detect_cot(make_scene(3))
        out = augment_record(rec, JitterParams(0.2, 0.2, seed=1), 64, 48)
        for a, b in zip(rec.segments, out.segments):
            if isinstance(a, (TextSpan, BoxLiteral)):
                assert a == b
        assert rec.text == out.text
        moved = [
            (a.region, b.region)
            for a, b in zip(rec.segments, out.segments)
            if isinstance(a, RegionSlot)
        ]
        assert any(x != y for x, y in moved)

    def test_regions_stay_inside_image(self):
        rec = make_grounded_cot(make_scene(2))
        for seed in range(10_000):
            out = augment_record(rec, JitterParams(0.4, 0.4, seed=seed), 64, 48)
            for seg in out.segments:
                if isinstance(seg, RegionSlot):
                    r = seg.region
                    assert 0.0 <= r.x1 <= r.x2 <= 64.0
                    assert 0.0 <= r.y1 <= r.y2 <= 48.0

    def test_points_record_not_augmentable(self):
        scene = make_scene(1, with_depth=True)
        rec = make_point_supervision(scene, Box2D(0, 0, 20, 20), 5, seed=0)
        with pytest.raises(ValueError):
            augment_record(rec, JitterParams(0.1, 0.1, 0), 64, 48)


class TestGenerateRecords:
    def test_deterministic_across_calls(self):
        scenes = [make_scene(3, with_depth=True, image_id=f"s{i}") for i in range(3)]
        a = [record_to_dict(r) for r in generate_records(scenes, "detect_cot", seed=4)]
        b = [record_to_dict(r) for r in generate_records(scenes, "detect_cot", seed=4)]
        assert a == b

    def test_points_kind_requires_depth(self):
        scenes = [make_scene(2, with_depth=False)]
        with pytest.raises(Exception, match="depth"):
            generate_records(scenes, "point_supervision", seed=0)

    def test_scenes_sorted_by_image_id(self):
        scenes = [make_scene(1, image_id="b"), make_scene(1, image_id="a")]
        recs = generate_records(scenes, "grounded_cot", seed=0)
        assert [r.metadata["image_id"] for r in recs] == ["a", "b"]

    def test_record_slot_invariant_enforced(self):
        with pytest.raises(ValueError):
            TrainingRecord("detect_cot",
                           (RegionSlot("ground_truth", True, Box2D(0, 0, 1, 1)),),
                           {})
