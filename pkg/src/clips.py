"""
Therblig annotations and clip slicing.

Annotators split each action into contact-demarcated sub-actions
(Therbligs), mark the ones that belong to the manipulation as used, and
name the dominant hand. A clip runs from the first used sub-action to the
end of the last used one; extraneous sub-actions in between stay in the
clip so the frame sequence remains contiguous for look-ahead labels.

Spans are half-open [start, end): abutting sub-actions share a boundary
frame number without overlapping.

Record schema (one JSON object per action instance):

    {"video_id": "P01_01", "action": "open", "dominant_hand": "right",
     "sub_actions": [{"name": "grasp", "start": 12, "end": 40, "used": true}, ...]}
"""

from __future__ import annotations

import pathlib
from dataclasses import dataclass
from typing import List, Union

import orjson
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from src.errors import (
    AnnotationError,
    NoUsedSubActions,
    OverlappingSubActions,
    UnknownHand,
    UnorderedSpans,
)
from src.retarget import HandSide


class SubAction(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    start: int
    end: int
    used: bool = True

    @model_validator(mode="after")
    def _ordered(self):
        if self.start >= self.end:
            raise UnorderedSpans(f"sub-action {self.name!r} has start {self.start} >= end {self.end}")
        return self


class TherbligAnnotation(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    video_id: str
    action: str
    dominant_hand: HandSide
    sub_actions: List[SubAction]

    @field_validator("dominant_hand", mode="before")
    @classmethod
    def _hand(cls, v):
        return HandSide.parse(v)

    @model_validator(mode="after")
    def _non_overlapping(self):
        for prev, cur in zip(self.sub_actions, self.sub_actions[1:]):
            if cur.start < prev.start:
                raise UnorderedSpans(f"sub-action {cur.name!r} starts before {prev.name!r}")
            if cur.start < prev.end:
                raise OverlappingSubActions(
                    f"sub-actions {prev.name!r} [{prev.start},{prev.end}) and "
                    f"{cur.name!r} [{cur.start},{cur.end}) overlap"
                )
        return self

    def to_record(self) -> dict:
        return self.model_dump(mode="json")


@dataclass(frozen=True)
class ClipSpan:
    video_id: str
    start_frame: int
    end_frame: int
    action: str
    dominant_hand: HandSide

    def __post_init__(self):
        if self.start_frame >= self.end_frame:
            raise AnnotationError(f"clip span [{self.start_frame}, {self.end_frame}) is empty")

    def contains(self, frame: int) -> bool:
        return self.start_frame <= frame < self.end_frame

    def __len__(self) -> int:
        return self.end_frame - self.start_frame


def _validate(obj, where: str) -> TherbligAnnotation:
    """Validate one record, prefixing errors with where it came from."""
    try:
        return TherbligAnnotation.model_validate(obj)
    except (AnnotationError, UnknownHand) as err:
        # raised from our validators; pydantic lets non-ValueError exceptions through
        raise type(err)(f"{where}: {err}") from None
    except ValidationError as err:
        raise AnnotationError(f"{where}: {err}") from None


def parse_annotations(document: Union[str, bytes]) -> List[TherbligAnnotation]:
    """
    Parse an annotation document.

    Args:
        document: JSON Lines (one record per line), or a single JSON
            object, or a JSON array of records

    Returns:
        Validated annotations in document order

    Raises:
        OverlappingSubActions, UnorderedSpans, UnknownHand, AnnotationError;
        messages start with "line N" (JSON Lines) or "record N" (arrays)
    """
    text = document.decode("utf-8") if isinstance(document, bytes) else document
    stripped = text.strip()
    if not stripped:
        return []

    # A whole-document JSON value (pretty-printed object or array) takes precedence
    try:
        whole = orjson.loads(stripped)
    except orjson.JSONDecodeError:
        whole = None
    if isinstance(whole, list):
        return [_validate(rec, f"record {i + 1}") for i, rec in enumerate(whole)]
    if isinstance(whole, dict):
        return [_validate(whole, "record 1")]

    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = orjson.loads(line)
        except orjson.JSONDecodeError as err:
            raise AnnotationError(f"line {lineno}: invalid JSON ({err})") from None
        out.append(_validate(rec, f"line {lineno}"))
    return out


def serialize_annotations(annotations: List[TherbligAnnotation]) -> str:
    """JSON Lines text; parse_annotations(serialize_annotations(x)) == x."""
    return "".join(orjson.dumps(a.to_record()).decode("utf-8") + "\n" for a in annotations)


def load_annotation(path) -> TherbligAnnotation:
    """Read the single annotation stored in a clip bundle."""
    anns = parse_annotations(pathlib.Path(path).read_bytes())
    if len(anns) != 1:
        raise AnnotationError(f"{path}: expected exactly one annotation, found {len(anns)}")
    return anns[0]


def slice_clip(ann: TherbligAnnotation) -> ClipSpan:
    """
    Temporal hull of the used sub-actions.

    Raises:
        NoUsedSubActions when every sub-action is marked extraneous
    """
    used = [s for s in ann.sub_actions if s.used]
    if not used:
        raise NoUsedSubActions(f"annotation for {ann.video_id!r} ({ann.action}) has no used sub-actions")
    return ClipSpan(ann.video_id, used[0].start, used[-1].end, ann.action, ann.dominant_hand)


def clip_frames(span: ClipSpan) -> range:
    return range(span.start_frame, span.end_frame)
