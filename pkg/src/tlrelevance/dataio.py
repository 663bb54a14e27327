"""JSON Lines interchange format for detections and annotations.

One JSON object per line. A record line::

    {"frame_id": "f1", "kind": "tl", "bbox": [cx, cy, w, h], "cls": "green_circle",
     "confidence": 0.9, "timestamp_ms": 1200}

``confidence`` marks a prediction; records without it are ground truth.
``relevant`` is only allowed on ``kind == "arrow"``. Corner boxes may be given
as ``"bbox_xyxy": [x1, y1, x2, y2]`` instead of ``bbox``.

A manifest line carries the image size of a frame (records alone don't)::

    {"frame_id": "f1", "width": 2048, "height": 1024}
"""
from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional

from .errors import InputError, ParseError, ValidationError
from .geometry import BBox, Detection, Frame, GroundTruth
from .taxonomy import ArrowClass, DatasetSchema, parse_arrow_class, parse_class, render_class

log = logging.getLogger(__name__)

RECORD_FIELDS = {"frame_id", "kind", "bbox", "bbox_xyxy", "cls", "confidence", "relevant", "timestamp_ms"}
MANIFEST_FIELDS = {"frame_id", "width", "height", "timestamp_ms"}
KINDS = ("tl", "arrow")


@dataclass
class ParseStats:
    lines: int = 0
    records: int = 0
    manifests: int = 0
    unknown_fields: Counter = field(default_factory=Counter)

    @property
    def unknown_field_count(self) -> int:
        return sum(self.unknown_fields.values())


class _FrameBuilder:
    __slots__ = ("id", "width", "height", "timestamp_ms", "detections", "ground_truths", "pending")

    def __init__(self, frame_id):
        self.id = frame_id
        self.width = None
        self.height = None
        self.timestamp_ms = None
        self.detections = []
        self.ground_truths = []
        # raw boxes awaiting clamping once the frame size is known
        self.pending = []

    def set_timestamp(self, ts, lineno):
        if ts is None:
            return
        if self.timestamp_ms is not None and self.timestamp_ms != ts:
            raise ParseError(f"frame {self.id!r} has conflicting timestamps {self.timestamp_ms} and {ts}", lineno)
        self.timestamp_ms = ts


def _number(value, name, lineno):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{name} must be a number, got {value!r}", lineno)
    value = float(value)
    if not math.isfinite(value):
        raise ParseError(f"{name} must be finite", lineno)
    return value


def _timestamp(obj, lineno):
    ts = obj.get("timestamp_ms")
    if ts is None:
        return None
    if isinstance(ts, bool) or not isinstance(ts, int):
        raise ParseError(f"timestamp_ms must be an integer, got {ts!r}", lineno)
    return ts


def _box(obj, lineno):
    if "bbox" in obj:
        raw = obj["bbox"]
        if not isinstance(raw, list) or len(raw) != 4:
            raise ParseError("bbox must be [cx, cy, w, h]", lineno)
        cx, cy, w, h = (_number(v, "bbox", lineno) for v in raw)
    elif "bbox_xyxy" in obj:
        raw = obj["bbox_xyxy"]
        if not isinstance(raw, list) or len(raw) != 4:
            raise ParseError("bbox_xyxy must be [x1, y1, x2, y2]", lineno)
        x1, y1, x2, y2 = (_number(v, "bbox_xyxy", lineno) for v in raw)
        cx, cy, w, h = (x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1
    else:
        raise ParseError("record has no bbox", lineno)
    if w <= 0 or h <= 0:
        raise ValidationError(f"line {lineno}: box size must be positive, got w={w}, h={h}")
    return BBox(cx, cy, w, h)


def parse_records(
    stream: Iterable[str],
    schema: DatasetSchema,
    stats: Optional[ParseStats] = None,
) -> List[Frame]:
    """Group the records of a JSON Lines stream into frames, in order of first appearance.

    Classes are validated against ``schema``; frames without a manifest line take
    the schema's image size. Boxes are clamped to the image.
    """
    stats = stats if stats is not None else ParseStats()
    frames = {}
    for lineno, line in enumerate(stream, start=1):
        stats.lines += 1
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
        if not isinstance(obj, dict):
            raise ParseError("expected a JSON object", lineno)
        frame_id = obj.get("frame_id")
        if not isinstance(frame_id, str) or not frame_id:
            raise ParseError("missing or non-string frame_id", lineno)
        fb = frames.get(frame_id)
        if fb is None:
            fb = frames[frame_id] = _FrameBuilder(frame_id)

        if "kind" not in obj:
            if "width" not in obj or "height" not in obj:
                raise ParseError("line is neither a record (no kind) nor a manifest (no width/height)", lineno)
            _manifest(obj, fb, lineno, stats)
            continue

        stats.records += 1
        for key in obj.keys() - RECORD_FIELDS:
            stats.unknown_fields[key] += 1
        kind = obj["kind"]
        if kind not in KINDS:
            raise ParseError(f"kind must be one of {KINDS}, got {kind!r}", lineno)
        label = obj.get("cls")
        if not isinstance(label, str):
            raise ParseError("missing or non-string cls", lineno)
        try:
            cls = parse_arrow_class(label) if kind == "arrow" else parse_class(label, schema)
        except InputError as exc:
            raise type(exc)(f"line {lineno}: {exc}") from None
        bbox = _box(obj, lineno)
        fb.set_timestamp(_timestamp(obj, lineno), lineno)
        relevant = obj.get("relevant")
        if relevant is not None:
            if kind != "arrow":
                raise ValidationError(f"line {lineno}: relevant is only allowed on arrow records")
            if not isinstance(relevant, bool):
                raise ParseError("relevant must be a boolean", lineno)
        confidence = obj.get("confidence")
        if confidence is not None:
            confidence = _number(confidence, "confidence", lineno)
            if not 0.0 <= confidence <= 1.0:
                raise ValidationError(f"line {lineno}: confidence {confidence} outside [0, 1]")
        fb.pending.append((lineno, bbox, cls, confidence, relevant))

    if stats.unknown_field_count:
        log.warning("ignored %d unknown field(s): %s", stats.unknown_field_count, dict(stats.unknown_fields))
    return [_finish(fb, schema) for fb in frames.values()]


def _manifest(obj, fb, lineno, stats):
    stats.manifests += 1
    for key in obj.keys() - MANIFEST_FIELDS:
        stats.unknown_fields[key] += 1
    width, height = obj["width"], obj["height"]
    for name, val in (("width", width), ("height", height)):
        if isinstance(val, bool) or not isinstance(val, int) or val <= 0:
            raise ValidationError(f"line {lineno}: {name} must be a positive integer, got {val!r}")
    if fb.width is not None and (fb.width, fb.height) != (width, height):
        raise ParseError(f"frame {fb.id!r} has conflicting manifests", lineno)
    fb.width, fb.height = width, height
    fb.set_timestamp(_timestamp(obj, lineno), lineno)


def _finish(fb: _FrameBuilder, schema: DatasetSchema) -> Frame:
    width = fb.width if fb.width is not None else schema.image_width
    height = fb.height if fb.height is not None else schema.image_height
    detections, gts = [], []
    for lineno, bbox, cls, confidence, relevant in fb.pending:
        try:
            bbox = bbox.clamped(width, height)
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
        if confidence is None:
            gts.append(GroundTruth(bbox, cls, relevant))
        else:
            # relevance labels on predicted arrows are training targets, kept as ground truth too
            detections.append(Detection(bbox, cls, confidence))
            if relevant is not None:
                gts.append(GroundTruth(bbox, cls, relevant))
    return Frame(fb.id, width, height, tuple(detections), tuple(gts), fb.timestamp_ms)


def _record(frame_id, kind, box, cls, ts, confidence=None, relevant=None):
    obj = {"frame_id": frame_id, "kind": kind, "bbox": box.as_list(), "cls": render_class(cls)}
    if confidence is not None:
        obj["confidence"] = confidence
    if relevant is not None:
        obj["relevant"] = relevant
    if ts is not None:
        obj["timestamp_ms"] = ts
    return obj


def write_records(frames: Iterable[Frame]) -> List[str]:
    """Serialize frames to JSON Lines (without trailing newlines).

    A frame with no records produces no lines at all.
    """
    lines = []
    for fr in frames:
        if not fr.detections and not fr.ground_truths:
            continue
        manifest = {"frame_id": fr.id, "width": fr.width, "height": fr.height}
        if fr.timestamp_ms is not None:
            manifest["timestamp_ms"] = fr.timestamp_ms
        lines.append(json.dumps(manifest))
        for d in fr.detections:
            kind = "arrow" if isinstance(d.cls, ArrowClass) else "tl"
            lines.append(json.dumps(_record(fr.id, kind, d.bbox, d.cls, fr.timestamp_ms, confidence=d.confidence)))
        for g in fr.ground_truths:
            kind = "arrow" if isinstance(g.cls, ArrowClass) else "tl"
            lines.append(json.dumps(_record(fr.id, kind, g.bbox, g.cls, fr.timestamp_ms, relevant=g.relevant)))
    return lines


def to_sequence(frames: Iterable[Frame]) -> List[Frame]:
    """Order frames by ``(timestamp_ms, frame_id)``; duplicate ids are rejected."""
    frames = list(frames)
    seen = set()
    for fr in frames:
        if fr.id in seen:
            raise ValidationError(f"duplicate frame id {fr.id!r} in sequence")
        seen.add(fr.id)
    return sorted(frames, key=Frame.order_key)


def read_frames(path, schema: DatasetSchema, stats: Optional[ParseStats] = None) -> List[Frame]:
    with open(path, encoding="utf-8") as fh:
        return parse_records(fh, schema, stats)


def dump_frames(frames: Iterable[Frame]) -> str:
    lines = write_records(frames)
    return "\n".join(lines) + ("\n" if lines else "")


def atomic_write_text(path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see a partial file."""
    import os
    import tempfile

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
