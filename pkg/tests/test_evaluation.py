import numpy as np
import pytest

from gr3dkit.errors import EmptyEvaluation
from gr3dkit.evaluation import (
    DEFAULT_THRESHOLDS,
    Detection2D,
    Detection3D,
    GCoTRecord,
    GroundTruth2D,
    GroundTruth3D,
    average_precision,
    evaluate_2d,
    evaluate_3d,
    evaluate_gcot,
    match_greedy,
)
from gr3dkit.geom2d import Box2D
from gr3dkit.geom3d import Box3D, iou3d
from gr3dkit.records import report_to_json

from conftest import interpolated_ap_oracle, random_box3d


def det(box, score, cat="obj"):
    return Detection3D(cat, box, score)


def gt(box, cat="obj", ignore=False):
    return GroundTruth3D(cat, box, ignore)


def cube(x=0.0, y=0.0, z=2.0, s=1.0):
    return Box3D((x, y, z), (s, s, s), (0, 0, 0))


def greedy_oracle(preds, gts, thr):
    """Independent re-statement of the matching rule."""
    order = sorted(range(len(preds)), key=lambda i: -preds[i].score)
    used = set()
    out = {}
    for i in order:
        best, best_v = None, thr
        for j, g in enumerate(gts):
            if j in used or g.ignore:
                continue
            v = iou3d(preds[i].box, g.box)
            if v > best_v or (best is None and v == best_v):
                best, best_v = j, v
        if best is not None:
            used.add(best)
        out[i] = best
    return out


class TestMatchGreedy:
    def test_simple_match(self):
        matches = match_greedy([det(cube(), 0.9)], [gt(cube(0.05))], 0.5)
        assert matches == [(0, 0)]

    def test_empty_gt(self):
        matches = match_greedy([det(cube(), 0.9), det(cube(1), 0.8)], [], 0.5)
        assert matches == [(0, None), (1, None)]

    def test_score_order_priority(self):
        # Lower-scored prediction loses the shared ground truth.
        g = [gt(cube())]
        preds = [det(cube(0.10), 0.2), det(cube(0.05), 0.9)]
        matches = dict(match_greedy(preds, g, 0.3))
        assert matches[1] == 0
        assert matches[0] is None

    def test_score_tie_input_order(self):
        g = [gt(cube())]
        preds = [det(cube(0.2), 0.5), det(cube(0.01), 0.5)]
        matches = dict(match_greedy(preds, g, 0.3))
        assert matches[0] == 0 and matches[1] is None

    def test_iou_tie_lowest_gt_index(self):
        g = [gt(cube(0.5)), gt(cube(-0.5))]
        preds = [det(cube(), 0.9)]
        matches = dict(match_greedy(preds, g, 0.1))
        assert matches[0] == 0

    def test_threshold_inclusive(self):
        a, b = cube(), cube(0.5)
        v = iou3d(a, b)
        matches = match_greedy([det(a, 1.0)], [gt(b)], v)
        assert matches == [(0, 0)]

    def test_ignored_gt_not_matchable(self):
        g = [gt(cube(), ignore=True)]
        matches = match_greedy([det(cube(), 0.9)], g, 0.5)
        assert matches == [(0, None)]

    def test_against_enumeration_oracle(self, rng):
        for _ in range(100):
            preds = [det(random_box3d(rng, 0.6), round(float(rng.uniform(0, 1)), 2))
                     for _ in range(int(rng.integers(1, 4)))]
            gts = [gt(random_box3d(rng, 0.6)) for _ in range(int(rng.integers(1, 3)))]
            got = dict(match_greedy(preds, gts, 0.1))
            assert got == greedy_oracle(preds, gts, 0.1)


class TestAveragePrecision:
    def test_single_perfect(self):
        assert average_precision([(0.9, True)], 1) == 1.0

    def test_no_tp(self):
        assert average_precision([(0.9, False), (0.5, False)], 3) == 0.0

    def test_undefined_case(self):
        assert average_precision([], 0) is None
        assert average_precision([], 2) == 0.0
        assert average_precision([(0.5, False)], 0) == 0.0

    def test_against_literal_oracle(self, rng):
        for _ in range(300):
            num_gt = int(rng.integers(0, 4))
            n = int(rng.integers(0, 6))
            max_tp = num_gt
            labels = []
            tp_used = 0
            for _ in range(n):
                is_tp = bool(rng.random() < 0.5 and tp_used < max_tp)
                tp_used += is_tp
                labels.append((round(float(rng.uniform(0, 1)), 2), is_tp))
            got = average_precision(labels, num_gt)
            want = interpolated_ap_oracle(labels, num_gt)
            if want is None:
                assert got is None
            else:
                assert got == pytest.approx(want, abs=1e-9)

    def test_lowest_score_false_positive_never_increases_ap(self, rng):
        for _ in range(200):
            num_gt = int(rng.integers(1, 4))
            labels = []
            tp_used = 0
            for _ in range(int(rng.integers(1, 6))):
                is_tp = bool(rng.random() < 0.6 and tp_used < num_gt)
                tp_used += is_tp
                labels.append((round(float(rng.uniform(0.2, 1)), 2), is_tp))
            base = average_precision(labels, num_gt)
            worse = average_precision(labels + [(0.01, False)], num_gt)
            assert worse <= base + 1e-12


class TestEvaluate3D:
    def test_default_thresholds(self):
        assert DEFAULT_THRESHOLDS == (0.05, 0.10, 0.15, 0.20, 0.25,
                                      0.30, 0.35, 0.40, 0.45, 0.50)

    def test_perfect_predictions(self):
        preds = {"im0": [det(cube(), 0.9)], "im1": [det(cube(3), 0.8)]}
        gts = {"im0": [gt(cube())], "im1": [gt(cube(3))]}
        report = evaluate_3d(preds, gts)
        assert report.mean_ap == 1.0
        assert report.ap15 == 1.0
        for t, c in report.counts.items():
            assert (c.tp, c.fp, c.fn) == (2, 0, 0)

    def test_empty_predictions(self):
        report = evaluate_3d({}, {"im0": [gt(cube())]})
        assert report.mean_ap == 0.0
        assert report.num_gt == 1

    def test_image_order_bit_identical(self, rng):
        preds = {}
        gts = {}
        for i in range(6):
            img = f"im{i}"
            preds[img] = [det(random_box3d(rng, 0.5), round(float(rng.uniform(0, 1)), 1))
                          for _ in range(3)]
            gts[img] = [gt(random_box3d(rng, 0.5)) for _ in range(2)]
        a = report_to_json(evaluate_3d(preds, gts))
        shuffled_p = dict(reversed(list(preds.items())))
        shuffled_g = dict(reversed(list(gts.items())))
        b = report_to_json(evaluate_3d(shuffled_p, shuffled_g))
        assert a == b

    def test_jobs_bit_identical(self, rng):
        preds = {}
        gts = {}
        for i in range(8):
            img = f"im{i}"
            preds[img] = [det(random_box3d(rng, 0.5), round(float(rng.uniform(0, 1)), 1))
                          for _ in range(3)]
            gts[img] = [gt(random_box3d(rng, 0.5)) for _ in range(2)]
        a = report_to_json(evaluate_3d(preds, gts, jobs=1))
        b = report_to_json(evaluate_3d(preds, gts, jobs=2))
        assert a == b

    def test_category_never_in_gt_flagged(self):
        preds = {"im0": [det(cube(), 0.9, cat="ghost"), det(cube(), 0.9)]}
        gts = {"im0": [gt(cube())]}
        report = evaluate_3d(preds, gts)
        assert report.categories_without_gt == ("ghost",)
        assert report.per_category_ap["ghost"][0.05] == 0.0
        assert report.per_category_ap["obj"][0.05] == 1.0
        # the phantom category is counted all-false and drags the mean down
        assert report.mean_ap == 0.5

    def test_ignored_gt_forgives_overlap(self):
        region = cube()
        preds = {"im0": [det(region, 0.9)]}
        gts_ignore = {"im0": [gt(region, ignore=True)]}
        report = evaluate_3d(preds, gts_ignore)
        # not a false positive, not a true positive, no ground truth: undefined
        assert report.mean_ap is None
        for c in report.counts.values():
            assert (c.tp, c.fp, c.ignored) == (0, 0, 1)

    def test_per_image_matching_not_cross_image(self):
        # a prediction cannot match ground truth from another image
        preds = {"im0": [det(cube(), 0.9)], "im1": []}
        gts = {"im0": [], "im1": [gt(cube())]}
        report = evaluate_3d(preds, gts)
        assert report.mean_ap == 0.0

    def test_oracle_small_instances(self, rng):
        # dataset = 1 image, 1 category: AP per threshold equals the direct
        # PR-curve integration over oracle matches
        for seed in range(50):
            r = np.random.default_rng(seed)
            preds = [det(random_box3d(r, 0.4), round(float(r.uniform(0, 1)), 2))
                     for _ in range(int(r.integers(1, 6)))]
            gts_l = [gt(random_box3d(r, 0.4)) for _ in range(int(r.integers(0, 4)))]
            report = evaluate_3d({"im": preds}, {"im": gts_l})
            for t in report.thresholds:
                matches = greedy_oracle(preds, gts_l, t)
                labels = [(p.score, matches[i] is not None) for i, p in enumerate(preds)]
                want = interpolated_ap_oracle(labels, len(gts_l))
                got = report.per_category_ap["obj"][t]
                if want is None:
                    assert got is None
                else:
                    assert got == pytest.approx(want, abs=1e-9)


class TestFootprintEquivalence:
    def test_3d_matches_2d_on_full_height_overlap_fixture(self, rng):
        # Degenerate fixture: axis-aligned boxes sharing one y-slab, so the
        # 3D IoU reduces to the 2D IoU of the xz footprints and both
        # protocols must produce the same report numbers.
        def footprint(box3):
            (xc, _, zc), (w, _, l), _ = box3.center, box3.size, box3.angles
            return Box2D(xc - w / 2, zc - l / 2, xc + w / 2, zc + l / 2)

        preds3, gts3 = {}, {}
        preds2, gts2 = {}, {}
        for i in range(4):
            img = f"im{i}"
            p3, g3, p2, g2 = [], [], [], []
            for k in range(4):
                xc, zc = rng.uniform(-2, 2, 2)
                w, l = rng.uniform(0.4, 1.5, 2)
                box = Box3D((xc, 0.0, zc + 10.0), (w, 1.0, l), (0, 0, 0))
                score = round(float(rng.uniform(0, 1)), 2)
                if k % 2 == 0:
                    p3.append(Detection3D("obj", box, score))
                    p2.append(Detection2D("obj", footprint(box), score))
                else:
                    g3.append(GroundTruth3D("obj", box))
                    g2.append(GroundTruth2D("obj", footprint(box)))
            preds3[img], gts3[img] = p3, g3
            preds2[img], gts2[img] = p2, g2
        r3 = evaluate_3d(preds3, gts3, thresholds=[0.25])
        r2 = evaluate_2d(preds2, gts2, thresholds=[0.25])
        assert r3.per_category_ap["obj"][0.25] == pytest.approx(
            r2.per_category_ap["obj"][0.25], abs=1e-9)
        assert r3.counts[0.25] == r2.counts[0.25]


class TestEvaluate2D:
    def test_perfect(self):
        b = Box2D(0, 0, 10, 10)
        report = evaluate_2d(
            {"im": [Detection2D("obj", b, 0.9)]},
            {"im": [GroundTruth2D("obj", b)]},
        )
        assert report.mean_ap == 1.0

    def test_empty_predictions(self):
        report = evaluate_2d({}, {"im": [GroundTruth2D("obj", Box2D(0, 0, 1, 1))]})
        assert report.mean_ap == 0.0

    def test_mixed(self):
        gt_box = Box2D(0, 0, 10, 10)
        near = Box2D(0, 0, 10, 9)    # IoU 0.9
        far = Box2D(50, 50, 60, 60)
        report = evaluate_2d(
            {"im": [Detection2D("obj", near, 0.9), Detection2D("obj", far, 0.8)]},
            {"im": [GroundTruth2D("obj", gt_box)]},
        )
        assert report.ap15 == pytest.approx(interpolated_ap_oracle(
            [(0.9, True), (0.8, False)], 1), abs=1e-12)


class TestGCoT:
    @staticmethod
    def boxes_with_iou(target: float) -> tuple[Box2D, Box2D]:
        # (10 - y) / (10 + y) = target  =>  y = 10 (1 - t) / (1 + t)
        y = 10.0 * (1.0 - target) / (1.0 + target)
        return Box2D(0, y, 10, y + 10), Box2D(0, 0, 10, 10)

    def test_fixture_counts(self):
        answers = [True, True, False]
        ious = [0.6, 0.4, 0.9]
        records = []
        for a, v in zip(answers, ious):
            pred, gtb = self.boxes_with_iou(v)
            records.append(GCoTRecord(a, pred, gtb))
        m = evaluate_gcot(records)
        assert m.a_acc == pytest.approx(2 / 3, abs=1e-12)
        assert m.g_acc == pytest.approx(2 / 3, abs=1e-12)
        assert m.consistency == pytest.approx(1 / 3, abs=1e-12)

    def test_all_perfect(self):
        b = Box2D(0, 0, 4, 4)
        m = evaluate_gcot([GCoTRecord(True, b, b)] * 3)
        assert m == (1.0, 1.0, 1.0)

    def test_strictly_exceeds_half(self):
        pred, gtb = self.boxes_with_iou(0.5)
        m = evaluate_gcot([GCoTRecord(True, pred, gtb)])
        assert m.g_acc == 0.0  # exactly 0.5 does not exceed 0.5

    def test_missing_prediction_incorrect(self):
        m = evaluate_gcot([GCoTRecord(True, None, Box2D(0, 0, 1, 1))])
        assert m == (1.0, 0.0, 0.0)

    def test_empty_raises(self):
        with pytest.raises(EmptyEvaluation):
            evaluate_gcot([])

    def test_conjunction_bound(self, rng):
        for _ in range(1000):
            n = int(rng.integers(1, 8))
            records = []
            for _ in range(n):
                pred, gtb = self.boxes_with_iou(float(rng.uniform(0.05, 0.95)))
                if rng.random() < 0.1:
                    pred = None
                records.append(GCoTRecord(bool(rng.random() < 0.6), pred, gtb))
            m = evaluate_gcot(records)
            assert m.consistency <= min(m.a_acc, m.g_acc) + 1e-12
