"""Detection and localization micro-AP, per-query mAP, and analysis tooling.

Both micro-AP variants build one precision/recall curve over all queries
jointly, ranked by confidence, and integrate it with the rectangle rule:

    uAP = sum_i P(i) * (R(i) - R(i-1))

Equal scores are ordered lexicographically by pair (and box); micro-AP is
sensitive to intra-tie order, so the tie-break is part of the contract.
"""

from __future__ import annotations

import bisect
import csv
import math
import os
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

from .core import (
    DetectionPrediction,
    GroundTruth,
    LocalizationPrediction,
    TransformTag,
    VideoId,
)
from .errors import ValidationError

Pair = tuple[VideoId, VideoId]


class PRPoint(NamedTuple):
    rank: int
    precision: float
    recall: float
    threshold: float


@dataclass(frozen=True)
class PRCurve:
    """Joint precision/recall walk over the ranked prediction list."""

    points: tuple[PRPoint, ...]
    uap: float

    def __post_init__(self) -> None:
        ranks = [p.rank for p in self.points]
        if any(b <= a for a, b in zip(ranks, ranks[1:])):
            raise ValidationError("curve ranks must be strictly increasing")

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["rank", "threshold", "precision", "recall"])
            for p in self.points:
                writer.writerow(
                    [p.rank, repr(float(p.threshold)), repr(float(p.precision)), repr(float(p.recall))]
                )


class IntervalUnion:
    """Union of half-open intervals kept as a disjoint sorted list."""

    __slots__ = ("_starts", "_ends", "_length")

    def __init__(self) -> None:
        self._starts: list[float] = []
        self._ends: list[float] = []
        self._length = 0.0

    @property
    def length(self) -> float:
        return self._length

    def intervals(self) -> list[tuple[float, float]]:
        return list(zip(self._starts, self._ends))

    def insert(self, start: float, end: float) -> None:
        if not start < end:
            raise ValidationError(f"interval [{start}, {end}) has no extent")
        # Find the run of intervals that overlap or touch [start, end);
        # touching intervals merge without changing the total length.
        i = bisect.bisect_left(self._starts, start)
        if i > 0 and self._ends[i - 1] >= start:
            i -= 1
        j = i
        while j < len(self._starts) and self._starts[j] <= end:
            j += 1
        if i < j:
            start = min(start, self._starts[i])
            end = max(end, self._ends[j - 1])
            self._length -= sum(self._ends[k] - self._starts[k] for k in range(i, j))
        self._starts[i:j] = [start]
        self._ends[i:j] = [end]
        self._length += end - start
        if __debug__:
            assert all(a < b for a, b in zip(self._starts, self._ends))
            assert all(
                e < s for e, s in zip(self._ends, self._starts[1:])
            ), "intervals must stay disjoint and sorted"
            assert math.isclose(
                self._length,
                sum(e - s for s, e in zip(self._starts, self._ends)),
                rel_tol=1e-9,
                abs_tol=1e-9,
            )


def _dedupe_max(preds: Iterable[DetectionPrediction]) -> dict[Pair, float]:
    best: dict[Pair, float] = {}
    for p in preds:
        key = (p.query, p.reference)
        if key not in best or p.score > best[key]:
            best[key] = p.score
    return best


def _ranked_pairs(preds: Iterable[DetectionPrediction]) -> list[tuple[Pair, float]]:
    return sorted(_dedupe_max(preds).items(), key=lambda kv: (-kv[1], kv[0][0].id, kv[0][1].id))


def detection_uap(
    preds: Sequence[DetectionPrediction], gt: GroundTruth
) -> tuple[float, PRCurve]:
    """Micro-AP over video pairs; a prediction is correct iff its pair has a box.

    Duplicate pairs collapse to their maximum score before ranking. Any
    prediction for a distractor query counts as incorrect.
    """
    if not gt.pair_set:
        raise ValidationError("ground truth has no matching pairs (recall undefined)")
    n_pos = len(gt.pair_set)
    correct = 0
    uap = 0.0
    prev_recall = 0.0
    points = []
    for rank, (pair, score) in enumerate(_ranked_pairs(preds), start=1):
        if pair in gt.pair_set:
            correct += 1
        precision = correct / rank
        recall = correct / n_pos
        uap += precision * (recall - prev_recall)
        prev_recall = recall
        points.append(PRPoint(rank, precision, recall, score))
    return uap, PRCurve(tuple(points), uap)


def _union_lengths_by_pair(gt: GroundTruth) -> tuple[float, float]:
    total_x = 0.0
    total_y = 0.0
    for boxes in gt.boxes_by_pair.values():
        ux = IntervalUnion()
        uy = IntervalUnion()
        for b in boxes:
            ux.insert(b.ref_start, b.ref_end)
            uy.insert(b.query_start, b.query_end)
        total_x += ux.length
        total_y += uy.length
    return total_x, total_y


class _PairUnions:
    __slots__ = ("px", "py", "ox", "oy")

    def __init__(self) -> None:
        self.px = IntervalUnion()
        self.py = IntervalUnion()
        self.ox = IntervalUnion()
        self.oy = IntervalUnion()


def localization_uap(
    preds: Sequence[LocalizationPrediction], gt: GroundTruth
) -> tuple[float, PRCurve]:
    """Localization-aware micro-AP with incremental box-union bookkeeping.

    At each rank, precision and recall compare the union lengths of the
    prediction, overlap, and ground-truth box projections per pair, summed
    over pairs and combined with the square-root form:

        P(i) = sqrt(L_ox * L_oy / (L_px * L_py))
        R(i) = sqrt(L_ox * L_oy / (L_gx * L_gy))

    The overlap union collects the intersections of each predicted box with
    each ground-truth box of the same pair. The x-axis is reference time and
    the y-axis is query time; the ground-truth lengths are constant in rank.
    """
    if not gt.boxes:
        raise ValidationError("ground truth has no boxes")
    ranked = sorted(preds, key=lambda p: (-p.score, p.query.id, p.reference.id, p.box.coords()))
    l_gx, l_gy = _union_lengths_by_pair(gt)
    state: dict[Pair, _PairUnions] = {}
    l_px = l_py = l_ox = l_oy = 0.0
    uap = 0.0
    prev_recall = 0.0
    points = []
    for rank, pred in enumerate(ranked, start=1):
        pair = (pred.query, pred.reference)
        st = state.get(pair)
        if st is None:
            st = state[pair] = _PairUnions()
        l_px -= st.px.length
        l_py -= st.py.length
        st.px.insert(pred.box.ref_start, pred.box.ref_end)
        st.py.insert(pred.box.query_start, pred.box.query_end)
        l_px += st.px.length
        l_py += st.py.length
        for gt_box in gt.boxes_by_pair.get(pair, ()):
            inter = pred.box.intersection(gt_box)
            if inter is not None:
                l_ox -= st.ox.length
                l_oy -= st.oy.length
                st.ox.insert(inter.ref_start, inter.ref_end)
                st.oy.insert(inter.query_start, inter.query_end)
                l_ox += st.ox.length
                l_oy += st.oy.length
        denom = l_px * l_py
        precision = math.sqrt(l_ox * l_oy / denom) if denom > 0 else 0.0
        recall = math.sqrt(l_ox * l_oy / (l_gx * l_gy))
        uap += precision * (recall - prev_recall)
        prev_recall = recall
        points.append(PRPoint(rank, precision, recall, pred.score))
    return uap, PRCurve(tuple(points), uap)


def mean_ap(preds: Sequence[DetectionPrediction], gt: GroundTruth) -> float:
    """Per-query average precision, averaged over queries that have matches.

    Queries with matches but no predictions contribute zero; predictions for
    distractor queries are ignored entirely.
    """
    if not gt.pair_set:
        raise ValidationError("ground truth has no matching pairs")
    by_query: dict[VideoId, list[tuple[VideoId, float]]] = {}
    for (q, r), score in _dedupe_max(preds).items():
        by_query.setdefault(q, []).append((r, score))
    positives_by_query: dict[VideoId, set[VideoId]] = {}
    for q, r in gt.pair_set:
        positives_by_query.setdefault(q, set()).add(r)
    total = 0.0
    for q, positives in positives_by_query.items():
        ranked = sorted(by_query.get(q, []), key=lambda rs: (-rs[1], rs[0].id))
        hits = 0
        ap = 0.0
        for rank, (r, _) in enumerate(ranked, start=1):
            if r in positives:
                hits += 1
                ap += hits / rank
        total += ap / len(positives)
    return total / len(positives_by_query)


def evaluate_subset(
    preds: Sequence,
    gt: GroundTruth,
    tags: Sequence[TransformTag],
    keep: Callable[[VideoId, TransformTag], bool],
    metric: Callable[[Sequence, GroundTruth], object],
):
    """Evaluate a metric on the queries selected by the predicate.

    The predicate sees each matched query and its transform tag; distractor
    queries are always retained, so the subset keeps its false-positive
    pressure. Predictions for matched-but-excluded queries are dropped along
    with their ground truth.
    """
    tag_map = {t.query: t for t in tags}
    kept = {
        q for q in gt.matched_queries if keep(q, tag_map.get(q) or TransformTag(q))
    }
    if not kept:
        raise ValidationError("subset keeps no matched queries")
    sub_gt = GroundTruth(b for b in gt.boxes if b.query in kept)
    sub_preds = [p for p in preds if p.query not in gt.matched_queries or p.query in kept]
    return metric(sub_preds, sub_gt)


def drop_distractor_predictions(preds: Sequence, gt: GroundTruth) -> list:
    """Remove predictions whose query has no ground-truth match."""
    return [p for p in preds if p.query in gt.matched_queries]


class HardNegativePoint(NamedTuple):
    query: VideoId
    reference: VideoId
    precision_a: float
    precision_b: float


def hard_negative_comparison(
    run_a: Sequence[DetectionPrediction],
    run_b: Sequence[DetectionPrediction],
    gt: GroundTruth,
    top_n: int,
) -> list[HardNegativePoint]:
    """Cross-method precision at the ranks of each run's top negatives.

    A negative is a pair outside the ground truth ranked within top_n of
    either run; the point carries the precision at its rank in both runs,
    with precision 0 for pairs a run never predicted.
    """

    def precision_at_pair(preds: Sequence[DetectionPrediction]) -> dict[Pair, float]:
        out = {}
        correct = 0
        for rank, (pair, _) in enumerate(_ranked_pairs(preds), start=1):
            if pair in gt.pair_set:
                correct += 1
            out[pair] = correct / rank
        return out

    def top_negatives(preds: Sequence[DetectionPrediction]) -> set[Pair]:
        ranked = _ranked_pairs(preds)[:top_n]
        return {pair for pair, _ in ranked if pair not in gt.pair_set}

    prec_a = precision_at_pair(run_a)
    prec_b = precision_at_pair(run_b)
    negatives = top_negatives(run_a) | top_negatives(run_b)
    return [
        HardNegativePoint(q, r, prec_a.get((q, r), 0.0), prec_b.get((q, r), 0.0))
        for q, r in sorted(negatives, key=lambda p: (p[0].id, p[1].id))
    ]
