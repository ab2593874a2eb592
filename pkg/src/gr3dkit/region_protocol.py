"""Streaming region insertion: training layout and inference state machine.

A grounded response interleaves plain text, 2D box literals, and region
slots. During training the layout is built directly from ground-truth
mentions (teacher forcing): the slot after each box literal carries the
ground-truth region and a gradient barrier, because the region embedding is
detached and no gradient flows through it. During inference the same layout
emerges from the decode stream: whenever the incremental parser completes a
2D box, generation pauses until the caller acknowledges the region, after
which a predicted, barrier-free slot is appended and buffered output is
replayed.

The toolkit is weight-free, so the "region token" is modeled as a slot with
provenance flags rather than an embedding.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Union

from gr3dkit.errors import InvalidMentions, ProtocolViolation
from gr3dkit.geom2d import Box2D
from gr3dkit.ground_text import (
    BBox3DCompleted,
    BBoxCompleted,
    BBoxOpened,
    MalformedSpan,
    StreamParser,
    StreamEvent,
    TextDelta,
    format_bbox2d,
)

GROUND_TRUTH = "ground_truth"
PREDICTED = "predicted"

GENERATING = "generating"
AWAITING_REGION = "awaiting_region"
FINISHED = "finished"


@dataclass(frozen=True)
class TextSpan:
    text: str


@dataclass(frozen=True)
class BoxLiteral:
    box: Box2D


@dataclass(frozen=True)
class RegionSlot:
    source: str
    gradient_barrier: bool
    region: Box2D

    def __post_init__(self):
        if self.source not in (GROUND_TRUTH, PREDICTED):
            raise ValueError(f"unknown slot source {self.source!r}")
        if self.source == GROUND_TRUTH and not self.gradient_barrier:
            raise ValueError("ground-truth slots always carry a gradient barrier")


SequenceSegment = Union[TextSpan, BoxLiteral, RegionSlot]


@dataclass(frozen=True)
class PauseForRegion:
    """Decode action: generation stops until this region is acknowledged."""

    box: Box2D


def rendered_text(segments: Iterable[SequenceSegment]) -> str:
    """The grounded target string: text plus serialized box literals."""
    parts = []
    for seg in segments:
        if isinstance(seg, TextSpan):
            parts.append(seg.text)
        elif isinstance(seg, BoxLiteral):
            parts.append(format_bbox2d(seg.box))
    return "".join(parts)


def skeleton(segments: Iterable[SequenceSegment]) -> tuple:
    """Layout with provenance flags erased, for train/infer comparison."""
    out = []
    for seg in segments:
        if isinstance(seg, TextSpan):
            out.append(("text", seg.text))
        elif isinstance(seg, BoxLiteral):
            out.append(("box", seg.box.as_tuple()))
        elif isinstance(seg, RegionSlot):
            out.append(("slot", seg.region.as_tuple()))
        else:
            raise TypeError(f"unknown segment {type(seg).__name__}")
    return tuple(out)


def build_training_sequence(
    text: str,
    mentions: Iterable[tuple[tuple[int, int], Box2D]],
) -> list[SequenceSegment]:
    """Teacher-forced layout for a response whose mentions are known.

    ``mentions`` holds (byte_range, box) pairs over the UTF-8 encoding of
    ``text``, sorted and non-overlapping. The text is split at each mention
    end; the mention's box literal and a ground-truth region slot follow.
    Concatenating the text spans with the serialized literals reconstructs
    the fully grounded target string.
    """
    data = text.encode("utf-8")
    ordered = list(mentions)
    cursor = 0
    prev_end = 0
    segments: list[SequenceSegment] = []
    for (start, end), box in ordered:
        if not (0 <= start <= end <= len(data)):
            raise InvalidMentions(f"mention range ({start}, {end}) outside text")
        if start < prev_end:
            raise InvalidMentions("mention ranges must be sorted and non-overlapping")
        prev_end = end
        if end > cursor:
            try:
                span = data[cursor:end].decode("utf-8")
            except UnicodeDecodeError as exc:
                raise InvalidMentions(f"mention boundary splits a code point: {exc}")
            segments.append(TextSpan(span))
        segments.append(BoxLiteral(box))
        segments.append(RegionSlot(GROUND_TRUTH, True, box))
        cursor = end
    if cursor < len(data):
        segments.append(TextSpan(data[cursor:].decode("utf-8")))
    return segments


class ProtocolState:
    """Single-consumer state machine for one generation stream."""

    def __init__(self):
        self.phase = GENERATING
        self.awaiting: Optional[Box2D] = None
        self.emitted: list[SequenceSegment] = []
        self._parser = StreamParser()
        self._text_parts: list[str] = []
        self._pending: deque = deque()

    def _flush_text(self) -> None:
        if self._text_parts:
            self.emitted.append(TextSpan("".join(self._text_parts)))
            self._text_parts = []

    def _process(self, events) -> tuple[list[StreamEvent], Optional[PauseForRegion]]:
        consumed: list[StreamEvent] = []
        queue = deque(events)
        while queue:
            ev = queue.popleft()
            consumed.append(ev)
            if isinstance(ev, TextDelta):
                self._text_parts.append(ev.text)
            elif isinstance(ev, BBoxOpened):
                pass
            elif isinstance(ev, BBox3DCompleted):
                # 3D boxes impose no protocol action; their text stays inline.
                self._text_parts.append(ev.raw)
            elif isinstance(ev, MalformedSpan):
                # Degenerate or garbled boxes are surfaced to the caller via
                # the event list; their bytes remain part of the text flow.
                self._text_parts.append(ev.raw)
            elif isinstance(ev, BBoxCompleted):
                self._flush_text()
                self.emitted.append(BoxLiteral(ev.box))
                self.phase = AWAITING_REGION
                self.awaiting = ev.box
                self._pending.extend(queue)
                return consumed, PauseForRegion(ev.box)
            else:
                raise TypeError(f"unexpected event {type(ev).__name__}")
        return consumed, None

    def on_decode(self, chunk) -> tuple[list[StreamEvent], Optional[PauseForRegion]]:
        """Feed a decoded chunk; returns (events, action).

        A PauseForRegion action means a 2D box just completed: no further
        text is consumed until on_region_inserted acknowledges it. Trailing
        bytes of the chunk are buffered and replayed after the resume, so the
        final segment list is independent of chunk boundaries.
        """
        if self.phase != GENERATING:
            raise ProtocolViolation(f"on_decode called while {self.phase}")
        return self._process(self._parser.feed(chunk))

    def on_region_inserted(self, region: Box2D) -> None:
        """Acknowledge the requested region and resume generation."""
        if self.phase != AWAITING_REGION:
            raise ProtocolViolation(f"no region outstanding (phase {self.phase})")
        if region != self.awaiting:
            raise ProtocolViolation(
                f"inserted region {region.as_tuple()} does not match "
                f"requested {self.awaiting.as_tuple()}"
            )
        self.emitted.append(RegionSlot(PREDICTED, False, region))
        self.phase = GENERATING
        self.awaiting = None
        pending = list(self._pending)
        self._pending.clear()
        self._process(pending)

    def finish(self) -> list[StreamEvent]:
        """End of stream: flush the parser and close the segment list."""
        if self.phase == AWAITING_REGION:
            raise ProtocolViolation("stream finished while awaiting a region")
        if self.phase == FINISHED:
            return []
        events, _ = self._process(self._parser.finish())
        self._flush_text()
        self.phase = FINISHED
        return events


def replay(steps: Iterable[tuple[str, object]]) -> ProtocolState:
    """Drive a state machine from scripted (kind, payload) steps.

    ``kind`` is "chunk" (payload: text) or "ack" (payload: Box2D). The state
    is finished at the end; any protocol misuse raises ProtocolViolation.
    """
    state = ProtocolState()
    for kind, payload in steps:
        if kind == "chunk":
            state.on_decode(payload)
        elif kind == "ack":
            state.on_region_inserted(payload)
        else:
            raise ValueError(f"unknown replay step kind {kind!r}")
    state.finish()
    return state
