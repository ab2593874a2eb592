"""HTML-style grounding text: grammar, parser, serializer, incremental parser.

Wire format (UTF-8, whitespace optional around commas and brackets):

    bbox2d   := "<bbox>[" num "," num "," num "," num "]</bbox>"
    bbox3d   := "<bbox3d>[" num x9 comma-separated "]</bbox3d>"
    points3d := "<points3d>[" "(" num "," num "," num ")"
                ("," "(" num "," num "," num ")")* "]</points3d>"

The nine bbox3d fields are center (x, y, z), size (w, h, l) and the
normalized Euler angles (pitch, roll, yaw). Anything that is not one of
these elements is plain text.

The incremental parser consumes byte chunks that may split tags, numbers,
and UTF-8 code points anywhere; the emitted events depend only on the total
input, never on the chunk boundaries (text deltas coalesce).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

from gr3dkit.errors import ParseError, SerializeError
from gr3dkit.geom2d import Box2D
from gr3dkit.geom3d import Box3D

# ---------------------------------------------------------------------------
# Stream events

@dataclass(frozen=True)
class TextDelta:
    text: str
    start: int
    end: int


@dataclass(frozen=True)
class BBoxOpened:
    start: int


@dataclass(frozen=True)
class BBoxCompleted:
    box: Box2D
    start: int
    end: int
    raw: str


@dataclass(frozen=True)
class BBox3DCompleted:
    box: Box3D
    start: int
    end: int
    raw: str


@dataclass(frozen=True)
class PointsCompleted:
    points: tuple[tuple[float, float, float], ...]
    start: int
    end: int
    raw: str


@dataclass(frozen=True)
class MalformedSpan:
    reason: str
    start: int
    end: int
    raw: str

    @property
    def byte_range(self) -> tuple[int, int]:
        return (self.start, self.end)


StreamEvent = Union[TextDelta, BBoxOpened, BBoxCompleted, BBox3DCompleted,
                    PointsCompleted, MalformedSpan]

# ---------------------------------------------------------------------------
# Tokens (batch parse results)

@dataclass(frozen=True)
class TextToken:
    text: str
    byte_range: tuple[int, int]


@dataclass(frozen=True)
class BBox2DToken:
    box: Box2D
    byte_range: tuple[int, int]


@dataclass(frozen=True)
class BBox3DToken:
    box: Box3D
    byte_range: tuple[int, int]


@dataclass(frozen=True)
class Points3DToken:
    points: tuple[tuple[float, float, float], ...]
    byte_range: tuple[int, int]


@dataclass(frozen=True)
class MalformedToken:
    reason: str
    byte_range: tuple[int, int]
    raw: str


GroundingToken = Union[TextToken, BBox2DToken, BBox3DToken, Points3DToken,
                       MalformedToken]

# ---------------------------------------------------------------------------
# Incremental parser

_WS = frozenset(b" \t\r\n")
_NUM_CHARS = frozenset(b"0123456789+-.eE")
_LT = 0x3C

_OPEN_2D = b"<bbox>"
_OPEN_3D = b"<bbox3d>"
_OPEN_PTS = b"<points3d>"
_OPENINGS = (_OPEN_2D, _OPEN_3D, _OPEN_PTS)
_CLOSERS = {_OPEN_2D: b"</bbox>", _OPEN_3D: b"</bbox3d>", _OPEN_PTS: b"</points3d>"}
_ARITY = {_OPEN_2D: 4, _OPEN_3D: 9}

_MODE_TEXT = 0
_MODE_TAG = 1
_MODE_ELEM = 2

_SUB_LBRACKET = 0
_SUB_GROUP = 1
_SUB_NUM_START = 2
_SUB_NUM = 3
_SUB_AFTER_NUM = 4
_SUB_AFTER_GROUP = 5
_SUB_CLOSE_WS = 6
_SUB_CLOSE = 7


def _utf8_tail(buf: bytearray) -> int:
    """Length of an incomplete trailing UTF-8 sequence (0 if none)."""
    n = len(buf)
    i = n - 1
    k = 0
    while i >= 0 and k < 3 and (buf[i] & 0xC0) == 0x80:
        i -= 1
        k += 1
    if i < 0:
        return 0
    lead = buf[i]
    if lead < 0x80:
        need = 1
    elif lead >> 5 == 0b110:
        need = 2
    elif lead >> 4 == 0b1110:
        need = 3
    elif lead >> 3 == 0b11110:
        need = 4
    else:
        return 0
    have = k + 1
    return have if have < need else 0


class StreamParser:
    """Incremental parser over byte chunks.

    ``emit_points`` controls what happens to well-formed points3d elements:
    the batch parser receives them as PointsCompleted events, while the
    streaming surface (which has no points event) folds their bytes back
    into the surrounding text.
    """

    def __init__(self, emit_points: bool = False):
        self._emit_points = emit_points
        self._pos = 0
        self._mode = _MODE_TEXT
        self._text = bytearray()
        self._text_start = 0
        self._tag = bytearray()
        self._tag_start = 0
        self._finished = False
        # element state
        self._opening = b""
        self._sub = 0
        self._estart = 0
        self._eraw = bytearray()
        self._nums: list[float] = []
        self._points: list[tuple[float, float, float]] = []
        self._group_len = 0
        self._numlen = 0
        self._close = b""
        self._close_idx = 0

    # -- internals ---------------------------------------------------------

    def _flush_text(self, events: list, hold_partial: bool) -> None:
        if not self._text:
            return
        hold = _utf8_tail(self._text) if hold_partial else 0
        cut = len(self._text) - hold
        if cut <= 0:
            return
        chunk = bytes(self._text[:cut])
        events.append(TextDelta(
            chunk.decode("utf-8", errors="replace"),
            self._text_start,
            self._text_start + cut,
        ))
        del self._text[:cut]
        self._text_start += cut

    def _begin_element(self, opening: bytes, events: list) -> None:
        self._flush_text(events, hold_partial=False)
        self._mode = _MODE_ELEM
        self._opening = opening
        self._sub = _SUB_LBRACKET
        self._estart = self._tag_start
        self._eraw = bytearray(opening)
        self._nums = []
        self._points = []
        self._group_len = 0
        self._close = _CLOSERS[opening]
        self._close_idx = 0
        if opening == _OPEN_2D:
            events.append(BBoxOpened(self._tag_start))

    def _malform(self, reason: str, events: list) -> None:
        # The offending byte is not consumed; it is reprocessed as text.
        events.append(MalformedSpan(
            reason,
            self._estart,
            self._pos,
            bytes(self._eraw).decode("utf-8", errors="replace"),
        ))
        self._mode = _MODE_TEXT
        self._text_start = self._pos

    def _finish_number(self, events: list) -> bool:
        raw = bytes(self._eraw[len(self._eraw) - self._numlen:])
        try:
            value = float(raw)
        except ValueError:
            self._malform("invalid number literal", events)
            return False
        if not math.isfinite(value):
            self._malform("non-finite number", events)
            return False
        self._nums.append(value)
        if self._opening == _OPEN_PTS:
            self._group_len += 1
        return True

    def _complete_element(self, events: list) -> None:
        end = self._pos + 1
        raw = bytes(self._eraw).decode("utf-8", errors="replace")
        start = self._estart
        opening = self._opening
        self._mode = _MODE_TEXT
        self._text_start = end
        if opening == _OPEN_2D:
            try:
                box2 = Box2D(*self._nums)
            except ValueError:
                events.append(MalformedSpan("invalid box values", start, end, raw))
                return
            events.append(BBoxCompleted(box2, start, end, raw))
        elif opening == _OPEN_3D:
            n = self._nums
            try:
                box3 = Box3D(tuple(n[0:3]), tuple(n[3:6]), tuple(n[6:9]))
            except ValueError:
                events.append(MalformedSpan("invalid box values", start, end, raw))
                return
            events.append(BBox3DCompleted(box3, start, end, raw))
        else:
            if self._emit_points:
                events.append(PointsCompleted(tuple(self._points), start, end, raw))
            else:
                # No stream event exists for point lists; their bytes stay in
                # the text flow.
                self._text_start = start
                self._text.extend(self._eraw)

    def _step(self, b: int, events: list) -> None:
        while True:
            mode = self._mode
            if mode == _MODE_TEXT:
                if b == _LT:
                    self._tag = bytearray((b,))
                    self._tag_start = self._pos
                    self._mode = _MODE_TAG
                else:
                    if not self._text:
                        self._text_start = self._pos
                    self._text.append(b)
                return

            if mode == _MODE_TAG:
                self._tag.append(b)
                t = bytes(self._tag)
                alive = False
                for cand in _OPENINGS:
                    if t == cand:
                        self._begin_element(cand, events)
                        return
                    if cand.startswith(t):
                        alive = True
                if alive:
                    return
                # Not an element opening after all; everything before the
                # current byte was plain text and the byte itself is
                # reprocessed (it may start a new tag).
                if not self._text:
                    self._text_start = self._tag_start
                self._text.extend(self._tag[:-1])
                self._mode = _MODE_TEXT
                continue

            # _MODE_ELEM
            sub = self._sub
            if sub == _SUB_LBRACKET:
                if b in _WS:
                    self._eraw.append(b)
                    return
                if b == 0x5B:  # '['
                    self._eraw.append(b)
                    self._sub = _SUB_GROUP if self._opening == _OPEN_PTS else _SUB_NUM_START
                    return
                self._malform("expected '['", events)
                continue

            if sub == _SUB_GROUP:
                if b in _WS:
                    self._eraw.append(b)
                    return
                if b == 0x28:  # '('
                    self._eraw.append(b)
                    self._group_len = 0
                    self._sub = _SUB_NUM_START
                    return
                self._malform("expected '('", events)
                continue

            if sub == _SUB_NUM_START:
                if b in _WS:
                    self._eraw.append(b)
                    return
                if b in _NUM_CHARS:
                    self._eraw.append(b)
                    self._numlen = 1
                    self._sub = _SUB_NUM
                    return
                self._malform("expected a number", events)
                continue

            if sub == _SUB_NUM:
                if b in _NUM_CHARS:
                    self._eraw.append(b)
                    self._numlen += 1
                    return
                if not self._finish_number(events):
                    continue
                self._sub = _SUB_AFTER_NUM
                continue

            if sub == _SUB_AFTER_NUM:
                if b in _WS:
                    self._eraw.append(b)
                    return
                if b == 0x2C:  # ','
                    if self._opening == _OPEN_PTS:
                        if self._group_len >= 3:
                            self._malform("expected ')'", events)
                            continue
                    elif len(self._nums) >= _ARITY[self._opening]:
                        self._malform("too many fields", events)
                        continue
                    self._eraw.append(b)
                    self._sub = _SUB_NUM_START
                    return
                if b == 0x29 and self._opening == _OPEN_PTS:  # ')'
                    if self._group_len != 3:
                        self._malform("expected 3 coordinates per point", events)
                        continue
                    self._eraw.append(b)
                    self._points.append(tuple(self._nums[-3:]))
                    self._sub = _SUB_AFTER_GROUP
                    return
                if b == 0x5D and self._opening != _OPEN_PTS:  # ']'
                    arity = _ARITY[self._opening]
                    if len(self._nums) != arity:
                        self._malform(f"expected {arity} fields", events)
                        continue
                    self._eraw.append(b)
                    self._sub = _SUB_CLOSE_WS
                    return
                self._malform("expected ',' or closing bracket", events)
                continue

            if sub == _SUB_AFTER_GROUP:
                if b in _WS:
                    self._eraw.append(b)
                    return
                if b == 0x2C:  # ','
                    self._eraw.append(b)
                    self._sub = _SUB_GROUP
                    return
                if b == 0x5D:  # ']'
                    self._eraw.append(b)
                    self._sub = _SUB_CLOSE_WS
                    return
                self._malform("expected ',' or ']'", events)
                continue

            if sub == _SUB_CLOSE_WS:
                if b in _WS:
                    self._eraw.append(b)
                    return
                if b == _LT:
                    self._eraw.append(b)
                    self._close_idx = 1
                    self._sub = _SUB_CLOSE
                    return
                self._malform("expected closing tag", events)
                continue

            # _SUB_CLOSE
            if b == self._close[self._close_idx]:
                self._eraw.append(b)
                self._close_idx += 1
                if self._close_idx == len(self._close):
                    self._complete_element(events)
                return
            self._malform("malformed closing tag", events)
            continue

    # -- public surface ------------------------------------------------------

    def feed(self, chunk) -> list[StreamEvent]:
        """Consume one chunk and return the events it settled."""
        if self._finished:
            raise RuntimeError("parser already finished")
        if isinstance(chunk, str):
            data = chunk.encode("utf-8")
        else:
            data = bytes(chunk)
        events: list[StreamEvent] = []
        for b in data:
            self._step(b, events)
            self._pos += 1
        self._flush_text(events, hold_partial=True)
        return events

    def finish(self) -> list[StreamEvent]:
        """Flush trailing state; unterminated elements become malformed spans."""
        if self._finished:
            raise RuntimeError("parser already finished")
        self._finished = True
        events: list[StreamEvent] = []
        if self._mode == _MODE_TAG:
            # A dangling opening prefix never became a tag: it is text.
            if not self._text:
                self._text_start = self._tag_start
            self._text.extend(self._tag)
            self._mode = _MODE_TEXT
        elif self._mode == _MODE_ELEM:
            events.append(MalformedSpan(
                "unterminated element",
                self._estart,
                self._pos,
                bytes(self._eraw).decode("utf-8", errors="replace"),
            ))
            self._mode = _MODE_TEXT
        self._flush_text(events, hold_partial=False)
        return events


def coalesce_events(events) -> list[StreamEvent]:
    """Merge adjacent text deltas; the normal form for comparing streams."""
    out: list[StreamEvent] = []
    for ev in events:
        if isinstance(ev, TextDelta) and out and isinstance(out[-1], TextDelta):
            prev = out[-1]
            out[-1] = TextDelta(prev.text + ev.text, prev.start, ev.end)
        else:
            out.append(ev)
    return out

# ---------------------------------------------------------------------------
# Batch parse / serialize

def parse(text, strict: bool = False) -> list[GroundingToken]:
    """Tokenize grounding text.

    In strict mode any malformed element raises ParseError carrying the byte
    offset where parsing failed; in lenient mode (the default for model
    output ingestion) malformed spans become MalformedToken entries and no
    input bytes are lost.
    """
    if isinstance(text, str):
        data = text.encode("utf-8")
    else:
        data = bytes(text)
    parser = StreamParser(emit_points=True)
    events = parser.feed(data)
    events.extend(parser.finish())
    tokens: list[GroundingToken] = []
    for ev in coalesce_events(events):
        if isinstance(ev, TextDelta):
            tokens.append(TextToken(ev.text, (ev.start, ev.end)))
        elif isinstance(ev, BBoxCompleted):
            tokens.append(BBox2DToken(ev.box, (ev.start, ev.end)))
        elif isinstance(ev, BBox3DCompleted):
            tokens.append(BBox3DToken(ev.box, (ev.start, ev.end)))
        elif isinstance(ev, PointsCompleted):
            tokens.append(Points3DToken(ev.points, (ev.start, ev.end)))
        elif isinstance(ev, MalformedSpan):
            if strict:
                raise ParseError(ev.reason, ev.end)
            tokens.append(MalformedToken(ev.reason, (ev.start, ev.end), ev.raw))
    return tokens


def format_number(x: float) -> str:
    """Shortest round-trip decimal with at least one fractional digit."""
    v = float(x)
    if not math.isfinite(v):
        raise SerializeError(f"cannot format non-finite value {v}")
    s = repr(v)
    if "e" in s or "E" in s:
        mant, _, exp = s.partition("e" if "e" in s else "E")
        if "." not in mant:
            mant += ".0"
        return mant + "e" + exp
    if "." not in s:
        s += ".0"
    return s


def format_bbox2d(box: Box2D) -> str:
    f = format_number
    return f"<bbox>[{f(box.x1)}, {f(box.y1)}, {f(box.x2)}, {f(box.y2)}]</bbox>"


def format_bbox3d(box: Box3D) -> str:
    vals = ", ".join(format_number(v) for v in box.as_tuple())
    return f"<bbox3d>[{vals}]</bbox3d>"


def format_points3d(points) -> str:
    pts = list(points)
    if not pts:
        raise SerializeError("a points3d element needs at least one point")
    groups = []
    for p in pts:
        if len(p) != 3:
            raise SerializeError(f"points must have 3 coordinates, got {p}")
        groups.append("(" + ", ".join(format_number(v) for v in p) + ")")
    return "<points3d>[" + ", ".join(groups) + "]</points3d>"


def serialize(tokens) -> str:
    """Render tokens to canonical text; parse() recovers them exactly.

    Text spans are emitted verbatim, so a text span that itself contains a
    well-formed element is outside the round-trip contract.
    """
    parts = []
    for tok in tokens:
        if isinstance(tok, TextToken):
            parts.append(tok.text)
        elif isinstance(tok, BBox2DToken):
            parts.append(format_bbox2d(tok.box))
        elif isinstance(tok, BBox3DToken):
            parts.append(format_bbox3d(tok.box))
        elif isinstance(tok, Points3DToken):
            parts.append(format_points3d(tok.points))
        elif isinstance(tok, MalformedToken):
            raise SerializeError("malformed tokens cannot be serialized")
        else:
            raise SerializeError(f"unknown token type {type(tok).__name__}")
    return "".join(parts)
