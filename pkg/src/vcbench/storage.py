"""File formats: binary descriptor sets, CSV annotations/predictions, budget checks.

Binary descriptor layout (little-endian throughout):

    magic  b"VCBD"
    u32    format version (currently 1)
    u32    descriptor dimension
    u32    video count
    per video:
        u16    id byte length, then UTF-8 id
        u32    row count
        f32[row count]        timestamps (seconds)
        f32[row count * dim]  descriptors, row-major

CSV artifacts use "," separators, "." decimal points, "\\n" line ends, UTF-8.
"""

from __future__ import annotations

import csv
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import (
    DescriptorSet,
    DetectionPrediction,
    GroundTruth,
    GtBox,
    LocalizationPrediction,
    SegmentBox,
    TransformTag,
    VideoId,
)
from .errors import FormatError, ValidationError

MAGIC = b"VCBD"
FORMAT_VERSION = 1

GROUND_TRUTH_HEADER = ["query_id", "ref_id", "query_start", "query_end", "ref_start", "ref_end"]
DETECTION_HEADER = ["query_id", "ref_id", "score"]
LOCALIZATION_HEADER = GROUND_TRUTH_HEADER + ["score"]
PAIR_HEADER = ["query_id", "ref_id"]
TAGS_HEADER = ["query_id", "transforms", "n_transforms"]
DURATIONS_HEADER = ["video_id", "duration"]
MATCHES_HEADER = ["query_id", "query_frame_idx", "ref_id", "ref_frame_idx", "similarity"]

MAX_DESCRIPTOR_DIM = 512


def write_descriptors(path: str | os.PathLike, sets: Sequence[DescriptorSet]) -> None:
    """Write descriptor sets to the binary format; all sets must share one dim."""
    dims = {s.dim for s in sets}
    if len(dims) > 1:
        raise FormatError(f"descriptor sets have mixed dimensions: {sorted(dims)}")
    dim = dims.pop() if dims else 0
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", FORMAT_VERSION, dim, len(sets)))
        for s in sets:
            raw_id = s.video.id.encode("utf-8")
            if len(raw_id) > 0xFFFF:
                raise FormatError(f"video id too long: {len(raw_id)} bytes")
            f.write(struct.pack("<H", len(raw_id)))
            f.write(raw_id)
            f.write(struct.pack("<I", s.count))
            f.write(np.asarray(s.timestamps, dtype="<f4").tobytes())
            f.write(np.asarray(s.vectors, dtype="<f4").tobytes())


def read_descriptors(path: str | os.PathLike) -> list[DescriptorSet]:
    """Exact inverse of write_descriptors.

    Declared counts are validated against the remaining file size before any
    bulk read, so truncated files fail fast instead of over-allocating.
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 16 or data[:4] != MAGIC:
        raise FormatError(f"{path}: not a descriptor file (bad magic)")
    version, dim, n_videos = struct.unpack_from("<III", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    # Smallest possible per-video record is 6 bytes (empty id, zero rows).
    if n_videos * 6 > len(data) - 16:
        raise FormatError(f"{path}: video count {n_videos} exceeds file size")
    off = 16
    sets: list[DescriptorSet] = []
    for _ in range(n_videos):
        if off + 2 > len(data):
            raise FormatError(f"{path}: truncated file")
        (id_len,) = struct.unpack_from("<H", data, off)
        off += 2
        if off + id_len + 4 > len(data):
            raise FormatError(f"{path}: truncated file")
        video = VideoId.parse(data[off : off + id_len].decode("utf-8"))
        off += id_len
        (n_rows,) = struct.unpack_from("<I", data, off)
        off += 4
        need = 4 * n_rows * (1 + dim)
        if off + need > len(data):
            raise FormatError(f"{path}: truncated file ({video})")
        ts = np.frombuffer(data, dtype="<f4", count=n_rows, offset=off)
        off += 4 * n_rows
        vecs = np.frombuffer(data, dtype="<f4", count=n_rows * dim, offset=off)
        off += 4 * n_rows * dim
        sets.append(DescriptorSet(video, ts.astype(np.float64), vecs.reshape(n_rows, dim).copy()))
    if off != len(data):
        raise FormatError(f"{path}: {len(data) - off} trailing bytes")
    return sets


def _open_csv_reader(path: str | os.PathLike, header: list[str]):
    f = open(path, "r", encoding="utf-8", newline="")
    reader = csv.reader(f)
    try:
        first = next(reader)
    except StopIteration:
        f.close()
        raise ValidationError(f"{path}: empty file (expected header {','.join(header)})")
    if first != header:
        f.close()
        raise ValidationError(f"{path}: expected header {','.join(header)}, got {','.join(first)}")
    return f, reader


def _open_csv_writer(path: str | os.PathLike, header: list[str]):
    f = open(path, "w", encoding="utf-8", newline="")
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(header)
    return f, writer


def _parse_float(raw: str, path, line: int, what: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ValidationError(f"{path}:{line}: bad {what} {raw!r}")
    if not math.isfinite(value):
        raise ValidationError(f"{path}:{line}: non-finite {what} {raw!r}")
    return value


def _parse_box(row: list[str], path, line: int) -> SegmentBox:
    qs, qe, rs, re = (_parse_float(v, path, line, "box coordinate") for v in row)
    try:
        return SegmentBox(qs, qe, rs, re)
    except ValidationError as exc:
        raise ValidationError(f"{path}:{line}: {exc}")


def read_ground_truth(path: str | os.PathLike) -> GroundTruth:
    f, reader = _open_csv_reader(path, GROUND_TRUTH_HEADER)
    with f:
        boxes = []
        for line, row in enumerate(reader, start=2):
            if len(row) != 6:
                raise ValidationError(f"{path}:{line}: expected 6 fields, got {len(row)}")
            boxes.append(
                GtBox(VideoId.parse(row[0]), VideoId.parse(row[1]), _parse_box(row[2:6], path, line))
            )
    return GroundTruth(boxes)


def write_ground_truth(path: str | os.PathLike, gt: GroundTruth) -> None:
    f, writer = _open_csv_writer(path, GROUND_TRUTH_HEADER)
    with f:
        for b in gt.boxes:
            writer.writerow([b.query.id, b.reference.id, *(repr(float(c)) for c in b.box.coords())])


def read_detection_predictions(path: str | os.PathLike) -> list[DetectionPrediction]:
    """Predictions in file order; duplicate pairs are returned as-is."""
    f, reader = _open_csv_reader(path, DETECTION_HEADER)
    with f:
        preds = []
        for line, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ValidationError(f"{path}:{line}: expected 3 fields, got {len(row)}")
            preds.append(
                DetectionPrediction(
                    VideoId.parse(row[0]), VideoId.parse(row[1]), _parse_float(row[2], path, line, "score")
                )
            )
    return preds


def write_detection_predictions(path: str | os.PathLike, preds: Iterable[DetectionPrediction]) -> None:
    f, writer = _open_csv_writer(path, DETECTION_HEADER)
    with f:
        for p in preds:
            writer.writerow([p.query.id, p.reference.id, repr(float(p.score))])


def read_localization_predictions(path: str | os.PathLike) -> list[LocalizationPrediction]:
    f, reader = _open_csv_reader(path, LOCALIZATION_HEADER)
    with f:
        preds = []
        for line, row in enumerate(reader, start=2):
            if len(row) != 7:
                raise ValidationError(f"{path}:{line}: expected 7 fields, got {len(row)}")
            preds.append(
                LocalizationPrediction(
                    VideoId.parse(row[0]),
                    VideoId.parse(row[1]),
                    _parse_box(row[2:6], path, line),
                    _parse_float(row[6], path, line, "score"),
                )
            )
    return preds


def write_localization_predictions(
    path: str | os.PathLike, preds: Iterable[LocalizationPrediction]
) -> None:
    f, writer = _open_csv_writer(path, LOCALIZATION_HEADER)
    with f:
        for p in preds:
            writer.writerow(
                [p.query.id, p.reference.id, *(repr(float(c)) for c in p.box.coords()), repr(float(p.score))]
            )


def read_pairs(path: str | os.PathLike) -> list[tuple[VideoId, VideoId]]:
    """Plain (query, reference) pair list; used for candidates and hard negatives."""
    f, reader = _open_csv_reader(path, PAIR_HEADER)
    with f:
        pairs = []
        for line, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ValidationError(f"{path}:{line}: expected 2 fields, got {len(row)}")
            pairs.append((VideoId.parse(row[0]), VideoId.parse(row[1])))
    return pairs


def write_pairs(path: str | os.PathLike, pairs: Iterable[tuple[VideoId, VideoId]]) -> None:
    f, writer = _open_csv_writer(path, PAIR_HEADER)
    with f:
        for q, r in pairs:
            writer.writerow([q.id, r.id])


def read_tags(path: str | os.PathLike) -> list[TransformTag]:
    f, reader = _open_csv_reader(path, TAGS_HEADER)
    with f:
        tags = []
        for line, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ValidationError(f"{path}:{line}: expected 3 fields, got {len(row)}")
            names = frozenset(t for t in row[1].split(";") if t)
            tag = TransformTag(VideoId.parse(row[0]), names)
            declared = int(row[2])
            if declared != tag.n_transforms:
                raise ValidationError(
                    f"{path}:{line}: n_transforms {declared} does not match {tag.n_transforms} tags"
                )
            tags.append(tag)
    return tags


def write_tags(path: str | os.PathLike, tags: Iterable[TransformTag]) -> None:
    f, writer = _open_csv_writer(path, TAGS_HEADER)
    with f:
        for t in tags:
            writer.writerow([t.query.id, ";".join(sorted(t.tags)), t.n_transforms])


def read_durations(path: str | os.PathLike) -> dict[VideoId, float]:
    f, reader = _open_csv_reader(path, DURATIONS_HEADER)
    with f:
        durations: dict[VideoId, float] = {}
        for line, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ValidationError(f"{path}:{line}: expected 2 fields, got {len(row)}")
            d = _parse_float(row[1], path, line, "duration")
            if d <= 0:
                raise ValidationError(f"{path}:{line}: duration must be positive")
            durations[VideoId.parse(row[0])] = d
    return durations


def write_durations(path: str | os.PathLike, durations: dict[VideoId, float]) -> None:
    f, writer = _open_csv_writer(path, DURATIONS_HEADER)
    with f:
        for video in sorted(durations, key=lambda v: v.id):
            writer.writerow([video.id, repr(float(durations[video]))])


def write_matches(path: str | os.PathLike, matches: Iterable) -> None:
    """Frame-level match list as written by the search command."""
    f, writer = _open_csv_writer(path, MATCHES_HEADER)
    with f:
        for m in matches:
            writer.writerow(
                [m.query.id, int(m.query_frame_idx), m.reference.id, int(m.ref_frame_idx), repr(float(m.similarity))]
            )


def read_matches(path: str | os.PathLike) -> list:
    from .search import FrameMatch

    f, reader = _open_csv_reader(path, MATCHES_HEADER)
    with f:
        matches = []
        for line, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise ValidationError(f"{path}:{line}: expected 5 fields, got {len(row)}")
            matches.append(
                FrameMatch(
                    VideoId.parse(row[0]),
                    int(row[1]),
                    VideoId.parse(row[2]),
                    int(row[3]),
                    _parse_float(row[4], path, line, "similarity"),
                )
            )
    return matches


@dataclass
class ValidationReport:
    """Outcome of the submission budget check.

    The budget passes when the dimension cap holds and the aggregate
    descriptor rate does not exceed one per video second. Individual videos
    above that rate are legal as long as the aggregate holds; they are
    reported as advisories.
    """

    passed: bool
    violations: list[str] = field(default_factory=list)
    advisories: list[str] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = ["PASS" if self.passed else "FAIL"]
        out += [f"violation: {v}" for v in self.violations]
        out += [f"advisory: {a}" for a in self.advisories]
        return out


def validate_descriptor_budget(
    sets: Sequence[DescriptorSet], durations: dict[VideoId, float]
) -> ValidationReport:
    """Check the dimension cap (512) and the average 1 descriptor/second rate."""
    violations: list[str] = []
    advisories: list[str] = []
    for s in sets:
        if s.video not in durations:
            raise ValidationError(f"no duration provided for {s.video}")
    dims = {s.dim for s in sets}
    for d in sorted(dims):
        if d > MAX_DESCRIPTOR_DIM:
            violations.append(f"descriptor dimension {d} exceeds {MAX_DESCRIPTOR_DIM}")
    total_count = sum(s.count for s in sets)
    total_seconds = sum(durations[s.video] for s in sets)
    if total_count > total_seconds:
        violations.append(
            f"aggregate rate {total_count} descriptors over {total_seconds:g} video seconds "
            "exceeds 1 descriptor/second"
        )
    for s in sets:
        if s.count > durations[s.video]:
            advisories.append(
                f"{s.video}: {s.count} descriptors over {durations[s.video]:g} s exceeds 1/second"
            )
    return ValidationReport(passed=not violations, violations=violations, advisories=advisories)
