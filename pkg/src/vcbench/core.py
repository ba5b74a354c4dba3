"""Domain types shared by every module.

All types are immutable after construction (numpy buffers are frozen via the
writeable flag) and may be shared freely across threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ValidationError


class VideoKind(enum.Enum):
    QUERY = "query"
    REFERENCE = "reference"
    TRAINING = "training"


# Prefix convention used by every file format: the first character of a video
# id encodes its kind.
_KIND_PREFIX = {"Q": VideoKind.QUERY, "R": VideoKind.REFERENCE, "T": VideoKind.TRAINING}


@dataclass(frozen=True, order=True)
class VideoId:
    """Opaque video identifier plus its role in the benchmark."""

    kind: VideoKind = field(compare=False)
    id: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("video id must be non-empty")
        prefix_kind = _KIND_PREFIX.get(self.id[0])
        if prefix_kind is not None and prefix_kind is not self.kind:
            raise ValidationError(
                f"video id {self.id!r} has prefix {self.id[0]!r} but kind {self.kind.value}"
            )

    @classmethod
    def parse(cls, raw: str) -> "VideoId":
        """Derive the kind from the Q/R/T prefix convention."""
        if not raw:
            raise ValidationError("video id must be non-empty")
        kind = _KIND_PREFIX.get(raw[0])
        if kind is None:
            raise ValidationError(f"cannot derive video kind from id {raw!r} (expected Q/R/T prefix)")
        return cls(kind, raw)

    def __str__(self) -> str:
        return self.id


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DescriptorSet:
    """Per-video matrix of frame descriptors with one timestamp per row."""

    video: VideoId
    timestamps: np.ndarray
    vectors: np.ndarray

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=np.float64)
        vecs = np.asarray(self.vectors)
        if vecs.dtype != np.float32:
            vecs = vecs.astype(np.float64)
        if ts.ndim != 1:
            raise ValidationError("timestamps must be one-dimensional")
        if vecs.ndim != 2:
            raise ValidationError("vectors must be a (count x dim) matrix")
        if vecs.shape[1] < 1:
            raise ValidationError("descriptor dimension must be positive")
        if len(ts) != vecs.shape[0]:
            raise ValidationError(
                f"{self.video}: {len(ts)} timestamps for {vecs.shape[0]} descriptor rows"
            )
        if len(ts) and np.any(np.diff(ts) < 0):
            raise ValidationError(f"{self.video}: timestamps must be non-decreasing")
        if len(ts) and ts[0] < 0:
            raise ValidationError(f"{self.video}: timestamps must be non-negative")
        if not np.isfinite(ts).all() or not np.isfinite(vecs).all():
            raise ValidationError(f"{self.video}: descriptors contain NaN or Inf")
        object.__setattr__(self, "timestamps", _freeze(ts))
        object.__setattr__(self, "vectors", _freeze(vecs))

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def frame_period(self) -> float:
        """Median timestamp spacing; 1.0 for fewer than two frames."""
        if self.count < 2:
            return 1.0
        return float(np.median(np.diff(self.timestamps)))

    def duration(self) -> float:
        """Span covered by the frames, last frame padded by one period."""
        if self.count == 0:
            return 0.0
        return float(self.timestamps[-1]) + self.frame_period()


@dataclass(frozen=True)
class SegmentBox:
    """Half-open 2D temporal box: [query_start, query_end) x [ref_start, ref_end)."""

    query_start: float
    query_end: float
    ref_start: float
    ref_end: float

    def __post_init__(self) -> None:
        for v in (self.query_start, self.query_end, self.ref_start, self.ref_end):
            if not math.isfinite(v):
                raise ValidationError("box coordinates must be finite")
        if not self.query_start < self.query_end:
            raise ValidationError(
                f"query interval [{self.query_start}, {self.query_end}) has no extent"
            )
        if not self.ref_start < self.ref_end:
            raise ValidationError(f"ref interval [{self.ref_start}, {self.ref_end}) has no extent")

    @property
    def query_extent(self) -> float:
        return self.query_end - self.query_start

    @property
    def ref_extent(self) -> float:
        return self.ref_end - self.ref_start

    @property
    def area(self) -> float:
        return self.query_extent * self.ref_extent

    def intersection(self, other: "SegmentBox") -> "SegmentBox | None":
        """Overlapping box, or None when the boxes are disjoint on either axis."""
        qs = max(self.query_start, other.query_start)
        qe = min(self.query_end, other.query_end)
        rs = max(self.ref_start, other.ref_start)
        re = min(self.ref_end, other.ref_end)
        if qs >= qe or rs >= re:
            return None
        return SegmentBox(qs, qe, rs, re)

    def iou(self, other: "SegmentBox") -> float:
        """2D intersection-over-union of the temporal boxes."""
        inter = self.intersection(other)
        if inter is None:
            return 0.0
        return inter.area / (self.area + other.area - inter.area)

    def coords(self) -> tuple[float, float, float, float]:
        return (self.query_start, self.query_end, self.ref_start, self.ref_end)


def _check_pair_kinds(query: VideoId, reference: VideoId) -> None:
    if query.kind is not VideoKind.QUERY:
        raise ValidationError(f"prediction query {query} is not a query video")
    if reference.kind is not VideoKind.REFERENCE:
        raise ValidationError(f"prediction reference {reference} is not a reference video")


@dataclass(frozen=True)
class DetectionPrediction:
    """Scored claim that a query/reference pair shares copied content."""

    query: VideoId
    reference: VideoId
    score: float

    def __post_init__(self) -> None:
        _check_pair_kinds(self.query, self.reference)
        if not math.isfinite(self.score):
            raise ValidationError(f"non-finite score for pair ({self.query}, {self.reference})")


@dataclass(frozen=True)
class LocalizationPrediction:
    """Scored temporal box localizing copied content within a video pair."""

    query: VideoId
    reference: VideoId
    box: SegmentBox
    score: float

    def __post_init__(self) -> None:
        _check_pair_kinds(self.query, self.reference)
        if not math.isfinite(self.score):
            raise ValidationError(f"non-finite score for pair ({self.query}, {self.reference})")


class GtBox(NamedTuple):
    query: VideoId
    reference: VideoId
    box: SegmentBox


@dataclass(frozen=True)
class GroundTruth:
    """True copied-segment boxes plus the derived video-pair match set.

    Boxes for one pair may overlap each other; the metrics rely on union
    semantics so overlapping annotations are legal.
    """

    boxes: tuple[GtBox, ...]

    def __init__(self, boxes: Iterable[GtBox | tuple[VideoId, VideoId, SegmentBox]]):
        object.__setattr__(self, "boxes", tuple(GtBox(*b) for b in boxes))
        for b in self.boxes:
            _check_pair_kinds(b.query, b.reference)

    @cached_property
    def pair_set(self) -> frozenset[tuple[VideoId, VideoId]]:
        return frozenset((b.query, b.reference) for b in self.boxes)

    @cached_property
    def matched_queries(self) -> frozenset[VideoId]:
        """Queries having at least one box; all other queries are distractors."""
        return frozenset(q for q, _ in self.pair_set)

    @cached_property
    def boxes_by_pair(self) -> dict[tuple[VideoId, VideoId], tuple[SegmentBox, ...]]:
        grouped: dict[tuple[VideoId, VideoId], list[SegmentBox]] = {}
        for b in self.boxes:
            grouped.setdefault((b.query, b.reference), []).append(b.box)
        return {k: tuple(v) for k, v in grouped.items()}


@dataclass(frozen=True)
class TransformTag:
    """Set of transform names applied to one query; empty for unedited queries."""

    query: VideoId
    tags: frozenset[str]

    def __init__(self, query: VideoId, tags: Iterable[str] = ()):
        object.__setattr__(self, "query", query)
        object.__setattr__(self, "tags", frozenset(tags))
        if any(not t for t in self.tags):
            raise ValidationError(f"{query}: transform names must be non-empty")

    @property
    def n_transforms(self) -> int:
        return len(self.tags)
