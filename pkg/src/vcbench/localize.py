"""Temporal-network localization of copied segments for candidate video pairs.

Above-threshold cells of the temporal similarity matrix become graph nodes;
edges connect nodes that advance strictly in time on both axes within a
bounded gap. Heaviest paths (by total node weight) are extracted one at a
time by dynamic programming over the DAG and reported as temporal boxes.
"""

from __future__ import annotations

from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DescriptorSet, LocalizationPrediction, SegmentBox, VideoId
from .errors import DimError, ValidationError


@dataclass(frozen=True)
class SimilarityMatrix:
    """Frame-by-frame inner products between one query and one reference."""

    query: VideoId
    reference: VideoId
    query_times: np.ndarray
    ref_times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        qt = np.asarray(self.query_times, dtype=np.float64)
        rt = np.asarray(self.ref_times, dtype=np.float64)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (len(qt), len(rt)):
            raise ValidationError(
                f"similarity matrix shape {vals.shape} does not match "
                f"({len(qt)} query times, {len(rt)} ref times)"
            )
        if vals.size and not np.isfinite(vals).all():
            raise ValidationError("similarity matrix contains NaN or Inf")
        object.__setattr__(self, "query_times", qt)
        object.__setattr__(self, "ref_times", rt)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class TNConfig:
    """Temporal network parameters.

    offset is added to similarities before thresholding and path weighting
    (use 0.5 with score-normalized descriptors, whose similarities can be
    negative); the reported box score always uses the raw similarity.
    """

    similarity_threshold: float = 0.0
    offset: float = 0.0
    max_time_gap: float = 10.0
    min_path_length: int = 3
    max_paths_per_pair: int = 5

    def __post_init__(self) -> None:
        if self.max_time_gap <= 0:
            raise ValidationError("max_time_gap must be positive")
        if self.min_path_length < 1:
            raise ValidationError("min_path_length must be at least 1")
        if self.max_paths_per_pair < 0:
            raise ValidationError("max_paths_per_pair must be non-negative")


def similarity_matrix(query: DescriptorSet, reference: DescriptorSet) -> SimilarityMatrix:
    """values[i][j] = inner(query frame i, reference frame j)."""
    if query.dim != reference.dim:
        raise DimError(f"dim mismatch: {query.dim} vs {reference.dim}")
    values = query.vectors.astype(np.float64) @ reference.vectors.astype(np.float64).T
    return SimilarityMatrix(query.video, reference.video, query.timestamps, reference.timestamps, values)


def _period(times: np.ndarray) -> float:
    if len(times) < 2:
        return 1.0
    return float(np.median(np.diff(times)))


def _heaviest_path(
    weights: np.ndarray,
    active: np.ndarray,
    q_lo: np.ndarray,
    q_hi: np.ndarray,
    r_lo: np.ndarray,
    r_strict: np.ndarray,
) -> list[tuple[int, int]] | None:
    """Maximum-total-node-weight path over the active nodes.

    Weight ties are broken toward the lexicographically smallest path start,
    then the smallest end node, so extraction is fully deterministic.
    """
    nq, nr = weights.shape
    NEG = float("-inf")
    best = np.full((nq, nr), NEG)
    start_i = np.zeros((nq, nr), dtype=np.int32)
    start_j = np.zeros((nq, nr), dtype=np.int32)
    parent_i = np.full((nq, nr), -1, dtype=np.int32)
    parent_j = np.full((nq, nr), -1, dtype=np.int32)

    for i in range(nq):
        row_nodes = np.flatnonzero(active[i])
        if row_nodes.size == 0:
            continue
        lo, hi = q_lo[i], q_hi[i]
        # Stage 1: per reference frame, the best path ending in the admissible
        # query-time window, aggregated column-wise with the tie rule.
        c_val = np.full(nr, NEG)
        c_si = np.zeros(nr, dtype=np.int32)
        c_sj = np.zeros(nr, dtype=np.int32)
        c_row = np.full(nr, -1, dtype=np.int32)
        for w in range(lo, hi):
            b = best[w]
            upd = b > c_val
            eq = b == c_val
            upd |= eq & (start_i[w] < c_si)
            eq &= start_i[w] == c_si
            upd |= eq & (start_j[w] < c_sj)
            if upd.any():
                c_val[upd] = b[upd]
                c_si[upd] = start_i[w][upd]
                c_sj[upd] = start_j[w][upd]
                c_row[upd] = w
        # Stage 2: slide the reference-time window over columns with a
        # monotonic deque keyed by (value, start, end) preference.
        dq: deque = deque()
        pushed = 0
        row_w = weights[i]
        for j in row_nodes:
            hi_j = r_strict[j]
            while pushed < hi_j:
                key = (c_val[pushed], -c_si[pushed], -c_sj[pushed], -int(c_row[pushed]), -pushed)
                while dq and dq[-1][0] <= key:
                    dq.pop()
                dq.append((key, pushed))
                pushed += 1
            lo_j = r_lo[j]
            while dq and dq[0][1] < lo_j:
                dq.popleft()
            prefix = dq[0] if dq else None
            if prefix is not None and prefix[0][0] >= 0.0:
                val, nsi, nsj, nrow, ncol = prefix[0]
                best[i, j] = row_w[j] + val
                start_i[i, j] = -nsi
                start_j[i, j] = -nsj
                parent_i[i, j] = -nrow
                parent_j[i, j] = -ncol
            else:
                best[i, j] = row_w[j]
                start_i[i, j] = i
                start_j[i, j] = j
                parent_i[i, j] = -1
                parent_j[i, j] = -1

    top = best.max() if best.size else NEG
    if top == NEG:
        return None
    ends = np.argwhere(best == top)
    ci, cj = min(
        ((int(i), int(j)) for i, j in ends),
        key=lambda ij: (start_i[ij], start_j[ij], ij[0], ij[1]),
    )
    path = []
    while ci != -1:
        path.append((ci, cj))
        ci, cj = int(parent_i[ci, cj]), int(parent_j[ci, cj])
    path.reverse()
    return path


def extract_paths(matrix: SimilarityMatrix, cfg: TNConfig) -> list[list[tuple[int, int]]]:
    """Paths of matched (query frame, reference frame) indices, heaviest first.

    Every extracted path is removed from the node set before the next search;
    only paths of at least min_path_length nodes are returned, and extraction
    stops after max_paths_per_pair of them.
    """
    values = matrix.values
    nq, nr = values.shape
    if nq == 0 or nr == 0 or cfg.max_paths_per_pair == 0:
        return []
    qt, rt = matrix.query_times, matrix.ref_times
    weights = values + cfg.offset
    active = weights > cfg.similarity_threshold
    # Window bounds use the exact edge predicate (t - t' <= gap); deriving
    # them from t - gap instead would round differently at the boundary.
    q_lo = ((qt[:, None] - qt[None, :]) <= cfg.max_time_gap).argmax(axis=1)
    q_hi = np.searchsorted(qt, qt, side="left")
    r_lo = ((rt[:, None] - rt[None, :]) <= cfg.max_time_gap).argmax(axis=1)
    r_strict = np.searchsorted(rt, rt, side="left")

    paths: list[list[tuple[int, int]]] = []
    for _ in range(int(active.sum())):
        if len(paths) == cfg.max_paths_per_pair or not active.any():
            break
        path = _heaviest_path(weights, active, q_lo, q_hi, r_lo, r_strict)
        if path is None:
            break
        for i, j in path:
            active[i, j] = False
        if len(path) >= cfg.min_path_length:
            paths.append(path)
    return paths


def temporal_network_localize(
    matrix: SimilarityMatrix, cfg: TNConfig = TNConfig()
) -> list[LocalizationPrediction]:
    """Localized copied-segment boxes for one video pair.

    Boxes span the matched timestamps padded by one frame period per axis, so
    a single match covers one frame's worth of content instead of an instant.
    The score of a box is the maximum raw similarity on its path.
    """
    paths = extract_paths(matrix, cfg)
    if not paths:
        return []
    qt, rt = matrix.query_times, matrix.ref_times
    period_q, period_r = _period(qt), _period(rt)
    preds = []
    for path in paths:
        qi = [i for i, _ in path]
        rj = [j for _, j in path]
        box = SegmentBox(
            float(qt[min(qi)]),
            float(qt[max(qi)]) + period_q,
            float(rt[min(rj)]),
            float(rt[max(rj)]) + period_r,
        )
        score = max(float(matrix.values[i, j]) for i, j in path)
        preds.append(LocalizationPrediction(matrix.query, matrix.reference, box, score))
    return preds


def localize_candidates(
    candidates: Sequence[tuple[VideoId, VideoId]],
    queries: Sequence[DescriptorSet],
    references: Sequence[DescriptorSet],
    cfg: TNConfig = TNConfig(),
    threads: int = 1,
) -> list[LocalizationPrediction]:
    """Run temporal-network localization over candidate pairs.

    Output is globally sorted by descending score with a deterministic
    tie-break, so it does not depend on candidate order or thread count.
    """
    qmap = {s.video: s for s in queries}
    rmap = {s.video: s for s in references}
    pairs = sorted(set(candidates), key=lambda p: (p[0].id, p[1].id))
    for q, r in pairs:
        if q not in qmap:
            raise ValidationError(f"no descriptor set for candidate query {q}")
        if r not in rmap:
            raise ValidationError(f"no descriptor set for candidate reference {r}")

    def run(pair: tuple[VideoId, VideoId]) -> list[LocalizationPrediction]:
        q, r = pair
        return temporal_network_localize(similarity_matrix(qmap[q], rmap[r]), cfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(run, pairs))
    else:
        chunks = [run(p) for p in pairs]
    preds = [p for chunk in chunks for p in chunk]
    preds.sort(key=lambda p: (-p.score, p.query.id, p.reference.id, p.box.coords()))
    return preds
