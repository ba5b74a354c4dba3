"""Seeded descriptor-level benchmark generator and end-to-end baseline runner.

The generator replicates the benchmark's structure one level below pixels:
unit-norm Gaussian frame descriptors at one frame per second, copied queries
built by splicing reference sub-segments into a distractor-style base
sequence, temporal edits (speed change, time decimation, multi-segment and
multi-reference insertions) applied by exact index arithmetic, and hard
negative pairs built as correlated mixtures of a shared background sequence.
Ground-truth boxes are recorded from the splice arithmetic, so the instance
doubles as an exact oracle for search, localization, and the metrics.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    DescriptorSet,
    GroundTruth,
    GtBox,
    SegmentBox,
    TransformTag,
    VideoId,
    VideoKind,
)
from .errors import ValidationError
from .localize import TNConfig, localize_candidates
from .metrics import PRCurve, detection_uap, localization_uap
from .search import (
    SearchConfig,
    detection_scores,
    fit_normalizer,
    apply_normalizer,
    global_topk_pairs,
    l2_normalize,
)
from . import storage

TAG_NOISE = "noise"
TAG_SPEED = "speed_change"
TAG_DECIMATE = "time_decimate"
TAG_MULTI_SEGMENT = "multi_segment"
TAG_MULTI_REFERENCE = "multi_reference"


@dataclass(frozen=True)
class SimConfig:
    """Benchmark generation parameters; identical configs yield identical bytes."""

    seed: int
    dim: int = 64
    n_references: int = 20
    n_distractor_queries: int = 30
    n_copied_queries: int = 10
    n_training: int = 16
    duration_range: tuple[int, int] = (5, 60)
    noise_sigma: float = 0.0
    p_multi_segment: float = 0.0
    p_multi_reference: float = 0.0
    p_speed_change: float = 0.0
    speed_factors: tuple[float, ...] = (0.5, 2.0)
    p_time_decimate: float = 0.0
    n_hard_negative_pairs: int = 0
    hard_negative_correlation: float = 0.0
    segment_length_range: tuple[int, int] = (4, 20)
    min_segment_separation: int = 12
    decimate_chunk_range: tuple[int, int] = (3, 5)

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        if self.dim < 2:
            raise ValidationError("dim must be at least 2")
        for name in ("n_references", "n_distractor_queries", "n_copied_queries",
                     "n_training", "n_hard_negative_pairs"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")
        for name in ("p_multi_segment", "p_multi_reference", "p_speed_change", "p_time_decimate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must be a probability")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be non-negative")
        if not 0.0 <= self.hard_negative_correlation < 1.0:
            raise ValidationError("hard_negative_correlation must be in [0, 1)")
        lo, hi = self.duration_range
        if lo < 1 or hi < lo:
            raise ValidationError(f"bad duration_range ({lo}, {hi})")
        lo, hi = self.segment_length_range
        if lo < 2 or hi < lo:
            raise ValidationError(f"bad segment_length_range ({lo}, {hi}); segments need >= 2 s")
        if self.min_segment_separation < 1:
            raise ValidationError("min_segment_separation must be at least 1 s")
        lo, hi = self.decimate_chunk_range
        if lo < 1 or hi < lo:
            raise ValidationError(f"bad decimate_chunk_range ({lo}, {hi})")
        if not self.speed_factors or any(f <= 0 for f in self.speed_factors):
            raise ValidationError("speed_factors must be positive")


@dataclass(frozen=True)
class BenchmarkInstance:
    queries: tuple[DescriptorSet, ...]
    references: tuple[DescriptorSet, ...]
    training: tuple[DescriptorSet, ...]
    gt: GroundTruth
    tags: tuple[TransformTag, ...]
    hard_negative_pairs: tuple[tuple[VideoId, VideoId], ...]

    def durations(self) -> dict[VideoId, float]:
        all_sets = (*self.queries, *self.references, *self.training)
        return {s.video: s.duration() for s in all_sets}

    def summary(self) -> dict[str, int]:
        distractors = [q for q in self.queries if q.video not in self.gt.matched_queries]
        return {
            "queries": len(self.queries),
            "references": len(self.references),
            "training": len(self.training),
            "copied_segments": len(self.gt.boxes),
            "queries_with_copies": len(self.gt.matched_queries),
            "distractor_queries": len(distractors),
            "hard_negative_pairs": len(self.hard_negative_pairs),
        }


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g.astype(np.float32)


def _make_set(rng: np.random.Generator, video: VideoId, duration: int, dim: int) -> DescriptorSet:
    return DescriptorSet(video, np.arange(duration, dtype=np.float64), _unit_rows(rng, duration, dim))


@dataclass
class _Segment:
    ref_index: int
    chunks: list[tuple[int, int]]  # (ref start second, ref length) per kept chunk
    factor: float

    def query_length(self) -> int:
        return sum(math.ceil(length / self.factor) for _, length in self.chunks)


def _decimate(rng: np.random.Generator, start: int, length: int, chunk_range: tuple[int, int]) -> list[tuple[int, int]]:
    """Alternating evenly-spaced kept/skipped chunks of the reference span."""
    width = int(rng.integers(chunk_range[0], chunk_range[1] + 1))
    chunks = []
    pos = 0
    keep = True
    while pos < length:
        w = min(width, length - pos)
        if keep and w >= 1:
            chunks.append((start + pos, w))
        pos += width
        keep = not keep
    return chunks


def _splice_frames(
    rng: np.random.Generator,
    reference: DescriptorSet,
    segment: _Segment,
    sigma: float,
) -> tuple[np.ndarray, list[tuple[int, int, int, int]]]:
    """Frames for one spliced segment plus (q_off, q_len, ref_start, ref_len) per chunk."""
    rows = []
    spans = []
    q_off = 0
    for ref_start, ref_len in segment.chunks:
        m = math.ceil(ref_len / segment.factor)
        idx = [ref_start + int(math.floor(u * segment.factor)) for u in range(m)]
        chunk = reference.vectors[idx].astype(np.float64)
        noise = rng.standard_normal(chunk.shape)
        chunk = chunk + sigma * noise
        if sigma > 0:
            chunk /= np.linalg.norm(chunk, axis=1, keepdims=True)
        rows.append(chunk.astype(np.float32))
        spans.append((q_off, m, ref_start, ref_len))
        q_off += m
    return np.vstack(rows), spans


def generate(cfg: SimConfig) -> BenchmarkInstance:
    """Build a benchmark instance; identical cfg (including seed) gives identical bytes."""
    rng = np.random.default_rng(cfg.seed)
    dur_lo, dur_hi = cfg.duration_range
    seg_lo, seg_hi = cfg.segment_length_range

    if cfg.n_hard_negative_pairs > cfg.n_distractor_queries:
        raise ValidationError("need one distractor query per hard negative pair")
    if cfg.n_hard_negative_pairs > cfg.n_references:
        raise ValidationError("need one reference per hard negative pair")
    if cfg.n_hard_negative_pairs > 0 and cfg.n_training == 0:
        raise ValidationError("hard negatives require a training set for their shared content")

    references = [
        _make_set(rng, VideoId(VideoKind.REFERENCE, f"R{100000 + i}"),
                  int(rng.integers(dur_lo, dur_hi + 1)), cfg.dim)
        for i in range(cfg.n_references)
    ]
    training = [
        _make_set(rng, VideoId(VideoKind.TRAINING, f"T{100000 + i}"),
                  int(rng.integers(dur_lo, dur_hi + 1)), cfg.dim)
        for i in range(cfg.n_training)
    ]
    distractors = [
        _make_set(rng, VideoId(VideoKind.QUERY, f"Q{200000 + i}"),
                  int(rng.integers(dur_lo, dur_hi + 1)), cfg.dim)
        for i in range(cfg.n_distractor_queries)
    ]

    # Hard negatives pair the first distractors with the first references and
    # rebuild both sides as mixtures of a shared training sequence, so they
    # look alike (and look like background content) without being copies.
    # Copied queries splice only from the remaining references.
    hard_pairs: list[tuple[VideoId, VideoId]] = []
    mix = math.sqrt(cfg.hard_negative_correlation)
    residual = math.sqrt(1.0 - cfg.hard_negative_correlation)
    for t in range(cfg.n_hard_negative_pairs):
        ref = references[t]
        query = distractors[t]
        latent = training[t % cfg.n_training].vectors.astype(np.float64)

        def mixture(base: DescriptorSet) -> DescriptorSet:
            # Unit residual directions keep the frame-pair inner product close
            # to the configured correlation coefficient.
            n = min(base.count, ref.count, query.count)
            rows = base.vectors.astype(np.float64).copy()
            shared = np.stack([latent[u % len(latent)] for u in range(n)])
            own = rng.standard_normal((n, cfg.dim))
            own /= np.linalg.norm(own, axis=1, keepdims=True)
            rows[:n] = mix * shared + residual * own
            rows[:n] /= np.linalg.norm(rows[:n], axis=1, keepdims=True)
            return DescriptorSet(base.video, base.timestamps, rows.astype(np.float32))

        references[t] = mixture(ref)
        distractors[t] = mixture(query)
        hard_pairs.append((query.video, references[t].video))

    splice_pool = list(range(cfg.n_hard_negative_pairs, cfg.n_references))
    if cfg.n_copied_queries > 0 and not splice_pool:
        raise ValidationError("no references left to splice copied segments from")

    copied: list[DescriptorSet] = []
    gt_boxes: list[GtBox] = []
    tags: list[TransformTag] = []
    for i in range(cfg.n_copied_queries):
        video = VideoId(VideoKind.QUERY, f"Q{100000 + i}")
        base_dur = int(rng.integers(dur_lo, dur_hi + 1))
        base = _unit_rows(rng, base_dur, cfg.dim)

        eligible = [j for j in splice_pool if references[j].count >= seg_lo]
        if not eligible:
            raise ValidationError(
                f"no reference is long enough to host a {seg_lo} s copied segment"
            )
        primary = int(rng.choice(eligible))
        want_same = rng.random() < cfg.p_multi_segment
        want_diff = rng.random() < cfg.p_multi_reference
        factor = 1.0
        if rng.random() < cfg.p_speed_change:
            factor = float(cfg.speed_factors[int(rng.integers(0, len(cfg.speed_factors)))])
        decimate = rng.random() < cfg.p_time_decimate

        ref_choices = [primary]
        if want_same:
            ref_choices.append(primary)
        if want_diff:
            others = [j for j in eligible if j != primary]
            if others:
                ref_choices.append(int(rng.choice(others)))
        # Later segments are dropped when the base sequence cannot keep them
        # min_segment_separation apart (separation keeps the temporal network
        # from merging distinct segments into one path).
        max_k = base_dur // cfg.min_segment_separation + 1
        ref_choices = ref_choices[:max_k]

        segments: list[_Segment] = []
        for j in ref_choices:
            ref = references[j]
            length = int(rng.integers(seg_lo, min(seg_hi, ref.count) + 1))
            start = int(rng.integers(0, ref.count - length + 1))
            chunks = (
                _decimate(rng, start, length, cfg.decimate_chunk_range)
                if decimate
                else [(start, length)]
            )
            segments.append(_Segment(j, chunks, factor))

        k = len(segments)
        avail = base_dur - (k - 1) * cfg.min_segment_separation
        offsets = np.sort(rng.integers(0, avail + 1, size=k))
        inserts = [int(offsets[t]) + t * cfg.min_segment_separation for t in range(k)]

        pieces = []
        q_boxes: list[tuple[int, int, int, int, int]] = []  # (qs, qe, ref_idx, rs, re)
        final_off = 0
        prev = 0
        for ins, seg in zip(inserts, segments):
            pieces.append(base[prev:ins])
            final_off += ins - prev
            prev = ins
            frames, spans = _splice_frames(rng, references[seg.ref_index], seg, cfg.noise_sigma)
            for q_off, q_len, ref_start, ref_len in spans:
                q_boxes.append(
                    (final_off + q_off, final_off + q_off + q_len, seg.ref_index,
                     ref_start, ref_start + ref_len)
                )
            pieces.append(frames)
            final_off += seg.query_length()
        pieces.append(base[prev:])

        vectors = np.vstack(pieces)
        copied.append(DescriptorSet(video, np.arange(len(vectors), dtype=np.float64), vectors))
        for qs, qe, ref_idx, rs, re in q_boxes:
            gt_boxes.append(
                GtBox(video, references[ref_idx].video, SegmentBox(float(qs), float(qe), float(rs), float(re)))
            )

        applied = set()
        if cfg.noise_sigma > 0:
            applied.add(TAG_NOISE)
        if factor != 1.0:
            applied.add(TAG_SPEED)
        if decimate:
            applied.add(TAG_DECIMATE)
        by_ref: dict[int, int] = {}
        for seg in segments:
            by_ref[seg.ref_index] = by_ref.get(seg.ref_index, 0) + 1
        if any(n >= 2 for n in by_ref.values()):
            applied.add(TAG_MULTI_SEGMENT)
        if len(by_ref) >= 2:
            applied.add(TAG_MULTI_REFERENCE)
        tags.append(TransformTag(video, applied))

    tags.extend(TransformTag(d.video) for d in distractors)
    queries = tuple(copied) + tuple(distractors)
    return BenchmarkInstance(
        queries=queries,
        references=tuple(references),
        training=tuple(training),
        gt=GroundTruth(gt_boxes),
        tags=tuple(tags),
        hard_negative_pairs=tuple(hard_pairs),
    )


def write_instance(instance: BenchmarkInstance, out_dir: str | os.PathLike) -> None:
    """Write every instance artifact to out_dir in the toolkit formats."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    storage.write_descriptors(out / "queries.vcbd", list(instance.queries))
    storage.write_descriptors(out / "references.vcbd", list(instance.references))
    storage.write_descriptors(out / "training.vcbd", list(instance.training))
    storage.write_ground_truth(out / "ground_truth.csv", instance.gt)
    storage.write_tags(out / "tags.csv", list(instance.tags))
    storage.write_pairs(out / "hard_negatives.csv", list(instance.hard_negative_pairs))
    storage.write_durations(out / "durations.csv", instance.durations())


def read_instance(in_dir: str | os.PathLike) -> BenchmarkInstance:
    src = Path(in_dir)
    return BenchmarkInstance(
        queries=tuple(storage.read_descriptors(src / "queries.vcbd")),
        references=tuple(storage.read_descriptors(src / "references.vcbd")),
        training=tuple(storage.read_descriptors(src / "training.vcbd")),
        gt=storage.read_ground_truth(src / "ground_truth.csv"),
        tags=tuple(storage.read_tags(src / "tags.csv")),
        hard_negative_pairs=tuple(storage.read_pairs(src / "hard_negatives.csv")),
    )


@dataclass
class BaselineResult:
    matches_used: int
    detection_predictions: list
    localization_predictions: list
    detection_uap: float
    detection_curve: PRCurve
    localization_uap: float
    localization_curve: PRCurve


def run_baseline(
    instance: BenchmarkInstance,
    search_cfg: SearchConfig = SearchConfig(),
    tn_cfg: TNConfig | None = None,
) -> BaselineResult:
    """Descriptor search, detection scoring, localization, and both micro-APs.

    With score normalization the temporal network defaults to the +0.5
    similarity offset, since normalized similarities can be negative.
    """
    queries = list(instance.queries)
    references = list(instance.references)
    training = list(instance.training)
    if search_cfg.l2_normalize:
        queries, _ = l2_normalize(queries)
        references, _ = l2_normalize(references)
        training, _ = l2_normalize(training)
    if search_cfg.score_normalize:
        normalizer = fit_normalizer(training, search_cfg.norm_k, search_cfg.norm_beta, training)
        queries, references = apply_normalizer(normalizer, queries, references)
    if tn_cfg is None:
        tn_cfg = TNConfig(offset=0.5 if search_cfg.score_normalize else 0.0)

    matches = global_topk_pairs(queries, references, search_cfg.k, search_cfg.threads)
    detections = detection_scores(matches)
    candidates = [(p.query, p.reference) for p in detections]
    localizations = localize_candidates(candidates, queries, references, tn_cfg, search_cfg.threads)
    d_uap, d_curve = detection_uap(detections, instance.gt)
    l_uap, l_curve = localization_uap(localizations, instance.gt)
    return BaselineResult(
        matches_used=len(matches),
        detection_predictions=detections,
        localization_predictions=localizations,
        detection_uap=d_uap,
        detection_curve=d_curve,
        localization_uap=l_uap,
        localization_curve=l_curve,
    )
