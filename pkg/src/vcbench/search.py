"""Exact global nearest-pair retrieval and descriptor score normalization.

Search retrieves the k most similar (query frame, reference frame) pairs
jointly over all queries, not the k nearest neighbors of each query frame.
Results are exact and byte-identical regardless of input ordering or thread
count: ties are broken by (query id, query frame, reference id, reference
frame) lexicographic order, which is a total order over pairs.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DescriptorSet, DetectionPrediction, VideoId, VideoKind
from .errors import DimError, ValidationError


@dataclass(frozen=True)
class FrameMatch:
    """One retrieved (query frame, reference frame) pair with its inner product."""

    query: VideoId
    query_frame_idx: int
    reference: VideoId
    ref_frame_idx: int
    similarity: float


@dataclass(frozen=True)
class ScoreNormalizer:
    """Background-similarity normalizer embedded into one descriptor dimension.

    For a query frame q the correction term is -beta times the similarity of q
    to its k-th most similar training frame; it is written into the descriptor
    dimension with the lowest variance (embed_dim_index), whose original
    content is zeroed on both sides so the correction rides the inner product
    unpolluted.
    """

    training_vectors: np.ndarray
    k: int
    beta: float
    embed_dim_index: int

    def __post_init__(self) -> None:
        vecs = np.ascontiguousarray(np.asarray(self.training_vectors, dtype=np.float64))
        if vecs.ndim != 2 or vecs.shape[0] == 0:
            raise ValidationError("normalizer needs a non-empty training matrix")
        if not 1 <= self.k <= vecs.shape[0]:
            raise ValidationError(f"k={self.k} out of range for {vecs.shape[0]} training vectors")
        if self.beta < 0:
            raise ValidationError("beta must be non-negative")
        if not 0 <= self.embed_dim_index < vecs.shape[1]:
            raise ValidationError(f"embed dimension {self.embed_dim_index} out of range")
        vecs.setflags(write=False)
        object.__setattr__(self, "training_vectors", vecs)

    @property
    def dim(self) -> int:
        return self.training_vectors.shape[1]


def _common_dim(*groups: Sequence[DescriptorSet]) -> int:
    dims = {s.dim for group in groups for s in group}
    if len(dims) > 1:
        raise DimError(f"descriptor sets have mixed dimensions: {sorted(dims)}")
    return dims.pop() if dims else 0


def _check_unique_ids(sets: Sequence[DescriptorSet], label: str) -> None:
    ids = [s.video.id for s in sets]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"duplicate video ids among {label}")


def global_topk_pairs(
    queries: Sequence[DescriptorSet],
    references: Sequence[DescriptorSet],
    k: int,
    threads: int = 1,
) -> list[FrameMatch]:
    """Globally largest inner products over all query frames x reference frames.

    Returns min(k, total pair count) matches in descending similarity with the
    deterministic lexicographic tie-break.
    """
    if k < 1:
        raise ValidationError("k must be at least 1")
    _common_dim(queries, references)
    _check_unique_ids(queries, "queries")
    _check_unique_ids(references, "references")

    q_sorted = [s for s in sorted(queries, key=lambda s: s.video.id) if s.count]
    r_sorted = [s for s in sorted(references, key=lambda s: s.video.id) if s.count]
    if not q_sorted or not r_sorted:
        return []
    ref_mats = [s.vectors.astype(np.float64) for s in r_sorted]

    def candidates(qcode: int) -> tuple[np.ndarray, ...]:
        # One block per (query video, reference video); within a block the flat
        # cell index runs in (query frame, ref frame) order, which is exactly
        # the tie-break order once video ids are fixed. Per query video only
        # the top-k cells (plus value ties at the boundary) can reach the
        # global top-k, so everything below the k-th value is dropped here.
        q_mat = q_sorted[qcode].vectors.astype(np.float64)
        sims_parts, qidx_parts, ridx_parts, rcode_parts = [], [], [], []
        for rcode, r_mat in enumerate(ref_mats):
            flat = (q_mat @ r_mat.T).ravel()
            sims_parts.append(flat)
            cells = np.arange(flat.size)
            qidx_parts.append(cells // r_mat.shape[0])
            ridx_parts.append(cells % r_mat.shape[0])
            rcode_parts.append(np.full(flat.size, rcode, dtype=np.int64))
        sims = np.concatenate(sims_parts)
        keep = np.arange(sims.size)
        if sims.size > k:
            kth = np.partition(sims, sims.size - k)[sims.size - k]
            keep = np.flatnonzero(sims >= kth)
        return (
            sims[keep],
            np.concatenate(qidx_parts)[keep],
            np.concatenate(ridx_parts)[keep],
            np.concatenate(rcode_parts)[keep],
            np.full(keep.size, qcode, dtype=np.int64),
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_video = list(pool.map(candidates, range(len(q_sorted))))
    else:
        per_video = [candidates(i) for i in range(len(q_sorted))]

    sims, q_idx, r_idx, rcodes, qcodes = (
        np.concatenate([parts[field] for parts in per_video]) for field in range(5)
    )
    order = np.lexsort((r_idx, rcodes, q_idx, qcodes, -sims))[:k]
    return [
        FrameMatch(
            q_sorted[qcodes[i]].video,
            int(q_idx[i]),
            r_sorted[rcodes[i]].video,
            int(r_idx[i]),
            float(sims[i]),
        )
        for i in order
    ]


def detection_scores(matches: Sequence[FrameMatch]) -> list[DetectionPrediction]:
    """Collapse frame matches to one prediction per video pair (max similarity)."""
    best: dict[tuple[VideoId, VideoId], float] = {}
    for m in matches:
        key = (m.query, m.reference)
        if key not in best or m.similarity > best[key]:
            best[key] = m.similarity
    preds = [DetectionPrediction(q, r, s) for (q, r), s in best.items()]
    preds.sort(key=lambda p: (-p.score, p.query.id, p.reference.id))
    return preds


def fit_normalizer(
    training: Sequence[DescriptorSet],
    k: int,
    beta: float,
    dim_stats_source: Sequence[DescriptorSet],
) -> ScoreNormalizer:
    """Build a ScoreNormalizer from background (training) descriptors.

    The embedded dimension is the argmin of the per-dimension variance over
    dim_stats_source; only training-kind videos may supply the background set.
    """
    if not training or sum(s.count for s in training) == 0:
        raise ValidationError("training set must be non-empty")
    for s in training:
        if s.video.kind is not VideoKind.TRAINING:
            raise ValidationError(f"{s.video} is not a training video")
    dim = _common_dim(training, dim_stats_source)
    if not dim_stats_source or sum(s.count for s in dim_stats_source) == 0:
        raise ValidationError("dim_stats_source must be non-empty")
    stats = np.vstack([s.vectors.astype(np.float64) for s in dim_stats_source if s.count])
    embed_dim = int(np.argmin(stats.var(axis=0)))
    train = np.vstack([s.vectors.astype(np.float64) for s in training if s.count])
    return ScoreNormalizer(train, k, beta, embed_dim)


def _zero_column(matrix: np.ndarray, col: int) -> np.ndarray:
    out = matrix.astype(np.float64).copy()
    out[:, col] = 0.0
    return out


def kth_training_similarity(normalizer: ScoreNormalizer, vectors: np.ndarray) -> np.ndarray:
    """Similarity of each row to its k-th most similar training vector.

    Both sides are compared with the embedded dimension zeroed.
    """
    train = _zero_column(normalizer.training_vectors, normalizer.embed_dim_index)
    rows = _zero_column(np.atleast_2d(vectors), normalizer.embed_dim_index)
    sims = rows @ train.T
    pos = train.shape[0] - normalizer.k
    return np.partition(sims, pos, axis=1)[:, pos]


def apply_normalizer(
    normalizer: ScoreNormalizer,
    queries: Sequence[DescriptorSet],
    references: Sequence[DescriptorSet],
) -> tuple[list[DescriptorSet], list[DescriptorSet]]:
    """Embed the score-normalization term into the descriptors.

    Query frames carry -beta * s_k(q) in the embedded dimension and reference
    frames carry the constant 1, so that inner(q', r') equals
    inner(q~, r~) - beta * s_k(q) where q~, r~ are the originals with the
    embedded dimension zeroed.
    """
    if _common_dim(queries, references) not in (0, normalizer.dim):
        raise DimError("descriptor dimension does not match the normalizer")
    new_queries = []
    for s in queries:
        vecs = _zero_column(s.vectors, normalizer.embed_dim_index)
        if s.count:
            vecs[:, normalizer.embed_dim_index] = -normalizer.beta * kth_training_similarity(
                normalizer, s.vectors
            )
        new_queries.append(DescriptorSet(s.video, s.timestamps, vecs))
    new_references = []
    for s in references:
        vecs = _zero_column(s.vectors, normalizer.embed_dim_index)
        vecs[:, normalizer.embed_dim_index] = 1.0
        new_references.append(DescriptorSet(s.video, s.timestamps, vecs))
    return new_queries, new_references


def l2_normalize(sets: Sequence[DescriptorSet]) -> tuple[list[DescriptorSet], int]:
    """Scale every descriptor row to unit L2 norm.

    Zero rows are left as zero; the second return value counts them so callers
    can surface a warning.
    """
    out = []
    zero_rows = 0
    for s in sets:
        vecs = s.vectors.astype(np.float64)
        norms = np.linalg.norm(vecs, axis=1)
        zero = norms == 0.0
        zero_rows += int(zero.sum())
        scaled = np.divide(vecs, norms[:, None], out=np.zeros_like(vecs), where=~zero[:, None])
        out.append(DescriptorSet(s.video, s.timestamps, scaled))
    return out, zero_rows


@dataclass
class SearchConfig:
    """Knobs for the descriptor search stage of the baseline pipeline."""

    k: int = 2000
    l2_normalize: bool = False
    score_normalize: bool = False
    norm_k: int = 1
    norm_beta: float = 1.2
    threads: int = 1
