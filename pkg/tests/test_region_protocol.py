import numpy as np
import pytest

from gr3dkit.errors import InvalidMentions, ProtocolViolation
from gr3dkit.geom2d import Box2D
from gr3dkit.ground_text import format_bbox2d
from gr3dkit.region_protocol import (
    GROUND_TRUTH,
    PREDICTED,
    BoxLiteral,
    PauseForRegion,
    ProtocolState,
    RegionSlot,
    TextSpan,
    build_training_sequence,
    rendered_text,
    replay,
    skeleton,
)

BOX_A = Box2D(1, 2, 3, 4)
BOX_B = Box2D(5, 6, 7, 8)


def drive(grounded: str, chunk_sizes=None) -> ProtocolState:
    """Scripted decoder: stream the grounded string, acking every pause."""
    state = ProtocolState()
    if chunk_sizes is None:
        chunks = [grounded]
    else:
        chunks = []
        pos = 0
        for size in chunk_sizes:
            chunks.append(grounded[pos:pos + size])
            pos += size
        if pos < len(grounded):
            chunks.append(grounded[pos:])
    for chunk in chunks:
        _, action = state.on_decode(chunk)
        while state.phase == "awaiting_region":
            state.on_region_inserted(state.awaiting)
    state.finish()
    return state


class TestSegments:
    def test_ground_truth_slot_requires_barrier(self):
        with pytest.raises(ValueError):
            RegionSlot(GROUND_TRUTH, False, BOX_A)

    def test_predicted_slot_free(self):
        slot = RegionSlot(PREDICTED, False, BOX_A)
        assert slot.region == BOX_A


class TestBuildTrainingSequence:
    def test_no_mentions(self):
        assert build_training_sequence("the cup", []) == [TextSpan("the cup")]

    def test_single_mention_at_end(self):
        segs = build_training_sequence("the cup", [((0, 7), BOX_A)])
        assert segs == [
            TextSpan("the cup"),
            BoxLiteral(BOX_A),
            RegionSlot(GROUND_TRUTH, True, BOX_A),
        ]

    def test_mention_mid_text(self):
        segs = build_training_sequence("a cup here", [((2, 5), BOX_A)])
        assert skeleton(segs) == (
            ("text", "a cup"),
            ("box", BOX_A.as_tuple()),
            ("slot", BOX_A.as_tuple()),
            ("text", " here"),
        )

    def test_reconstruction(self):
        text = "the cup and the plate"
        segs = build_training_sequence(text, [((0, 7), BOX_A), ((12, 21), BOX_B)])
        expected = (
            "the cup" + format_bbox2d(BOX_A) + " and the plate" + format_bbox2d(BOX_B)
        )
        assert rendered_text(segs) == expected

    def test_out_of_range_rejected(self):
        with pytest.raises(InvalidMentions):
            build_training_sequence("ab", [((0, 5), BOX_A)])

    def test_overlap_rejected(self):
        with pytest.raises(InvalidMentions):
            build_training_sequence("abcdef", [((0, 4), BOX_A), ((2, 6), BOX_B)])

    def test_unsorted_rejected(self):
        with pytest.raises(InvalidMentions):
            build_training_sequence("abcdef", [((4, 6), BOX_A), ((0, 2), BOX_B)])

    def test_codepoint_split_rejected(self):
        with pytest.raises(InvalidMentions):
            build_training_sequence("☃x", [((0, 1), BOX_A)])

    def test_reconstruction_fuzz(self, rng):
        words = ["cup", "plate", "tiny ☃", "red chair", "box"]
        for _ in range(1000):
            n_words = int(rng.integers(1, 6))
            picked = [words[rng.integers(0, len(words))] for _ in range(n_words)]
            text = " ".join(picked)
            data = text.encode("utf-8")
            mentions = []
            cursor = 0
            for w in picked:
                if rng.random() < 0.5:
                    start = cursor
                    end = cursor + len(w.encode("utf-8"))
                    x = np.sort(rng.uniform(0, 50, 2))
                    y = np.sort(rng.uniform(0, 50, 2))
                    mentions.append(((start, end), Box2D(x[0], y[0], x[1], y[1])))
                cursor += len(w.encode("utf-8")) + 1
            segs = build_training_sequence(text, mentions)
            expected_parts = []
            prev = 0
            for (s, e), box in mentions:
                expected_parts.append(data[prev:e].decode("utf-8"))
                expected_parts.append(format_bbox2d(box))
                prev = e
            expected_parts.append(data[prev:].decode("utf-8"))
            assert rendered_text(segs) == "".join(expected_parts)


class TestProtocol:
    def test_plain_text_continues(self):
        state = ProtocolState()
        events, action = state.on_decode("hello")
        assert action is None
        assert state.phase == "generating"

    def test_box_completion_pauses(self):
        state = ProtocolState()
        _, action = state.on_decode(format_bbox2d(BOX_A))
        assert action == PauseForRegion(BOX_A)
        assert state.phase == "awaiting_region"

    def test_decode_while_awaiting_rejected(self):
        state = ProtocolState()
        state.on_decode(format_bbox2d(BOX_A))
        with pytest.raises(ProtocolViolation):
            state.on_decode("more")

    def test_ack_while_generating_rejected(self):
        state = ProtocolState()
        with pytest.raises(ProtocolViolation):
            state.on_region_inserted(BOX_A)

    def test_mismatched_ack_rejected(self):
        state = ProtocolState()
        state.on_decode(format_bbox2d(BOX_A))
        with pytest.raises(ProtocolViolation):
            state.on_region_inserted(BOX_B)

    def test_finish_while_awaiting_rejected(self):
        state = ProtocolState()
        state.on_decode(format_bbox2d(BOX_A))
        with pytest.raises(ProtocolViolation):
            state.finish()

    def test_trailing_text_deferred_until_resume(self):
        state = ProtocolState()
        _, action = state.on_decode(format_bbox2d(BOX_A) + " trailing")
        assert action == PauseForRegion(BOX_A)
        assert state.emitted == [BoxLiteral(BOX_A)]
        state.on_region_inserted(BOX_A)
        state.finish()
        assert state.emitted == [
            BoxLiteral(BOX_A),
            RegionSlot(PREDICTED, False, BOX_A),
            TextSpan(" trailing"),
        ]

    def test_second_box_in_same_chunk_buffered(self):
        chunk = format_bbox2d(BOX_A) + format_bbox2d(BOX_B)
        state = ProtocolState()
        _, action = state.on_decode(chunk)
        assert action == PauseForRegion(BOX_A)
        state.on_region_inserted(BOX_A)
        # the buffered second box pauses again immediately
        assert state.phase == "awaiting_region"
        assert state.awaiting == BOX_B
        state.on_region_inserted(BOX_B)
        state.finish()
        assert skeleton(state.emitted) == (
            ("box", BOX_A.as_tuple()), ("slot", BOX_A.as_tuple()),
            ("box", BOX_B.as_tuple()), ("slot", BOX_B.as_tuple()),
        )

    def test_malformed_box_stays_text(self):
        state = ProtocolState()
        state.on_decode("see <bbox>[1, 2]</bbox> there")
        state.finish()
        assert state.emitted == [TextSpan("see <bbox>[1, 2]</bbox> there")]

    def test_bbox3d_stays_inline(self):
        text = "box: <bbox3d>[1, 2, 3, 1, 1, 1, 0.0, 0.0, 0.0]</bbox3d> done"
        state = ProtocolState()
        state.on_decode(text)
        state.finish()
        assert state.emitted == [TextSpan(text)]

    def test_replay_helper_and_violation(self):
        steps = [("chunk", format_bbox2d(BOX_A)), ("ack", BOX_A), ("chunk", " tail")]
        state = replay(steps)
        assert state.phase == "finished"
        with pytest.raises(ProtocolViolation):
            replay([("ack", BOX_A)])


class TestTrainInferEquivalence:
    def test_single_case(self):
        text = "the cup and the plate sit"
        mentions = [((0, 7), BOX_A), ((12, 21), BOX_B)]
        segs = build_training_sequence(text, mentions)
        state = drive(rendered_text(segs), chunk_sizes=[3, 11, 20, 1])
        assert skeleton(state.emitted) == skeleton(segs)
        for seg in segs:
            if isinstance(seg, RegionSlot):
                assert seg.source == GROUND_TRUTH and seg.gradient_barrier
        for seg in state.emitted:
            if isinstance(seg, RegionSlot):
                assert seg.source == PREDICTED and not seg.gradient_barrier

    def test_fuzzed_equivalence(self, rng):
        words = ["cup", "plate", "glass ☃", "chair"]
        for case in range(100):
            n_words = int(rng.integers(1, 5))
            picked = [words[rng.integers(0, len(words))] for _ in range(n_words)]
            text = " ".join(picked) + "."
            mentions = []
            cursor = 0
            for w in picked:
                end = cursor + len(w.encode("utf-8"))
                if rng.random() < 0.7:
                    x = np.sort(rng.uniform(0, 30, 2))
                    y = np.sort(rng.uniform(0, 30, 2))
                    mentions.append(((cursor, end), Box2D(x[0], y[0], x[1], y[1])))
                cursor = end + 1
            segs = build_training_sequence(text, mentions)
            grounded = rendered_text(segs)
            sizes = []
            remaining = len(grounded)
            while remaining > 0:
                s = int(rng.integers(1, min(9, remaining + 1)))
                sizes.append(s)
                remaining -= s
            state = drive(grounded, chunk_sizes=sizes)
            assert skeleton(state.emitted) == skeleton(segs)
