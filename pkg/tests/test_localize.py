import numpy as np
import pytest

from vcbench import (
    DimError,
    SimConfig,
    TNConfig,
    ValidationError,
    generate,
    localize_candidates,
    similarity_matrix,
    temporal_network_localize,
)
from vcbench.localize import SimilarityMatrix, extract_paths

from conftest import dset, vid


def matrix(values, query="Q1", ref="R1", query_times=None, ref_times=None):
    values = np.asarray(values, dtype=np.float64)
    qt = np.arange(values.shape[0], dtype=float) if query_times is None else query_times
    rt = np.arange(values.shape[1], dtype=float) if ref_times is None else ref_times
    return SimilarityMatrix(vid(query), vid(ref), qt, rt, values)


class TestSimilarityMatrix:
    def test_orthonormal_rows_give_identity(self):
        q = dset("Q1", np.eye(4))
        r = dset("R1", np.eye(4))
        np.testing.assert_array_equal(similarity_matrix(q, r).values, np.eye(4))

    def test_one_by_one(self):
        s = similarity_matrix(dset("Q1", [[2.0]]), dset("R1", [[3.0]]))
        assert s.values.tolist() == [[6.0]]

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(3)
        q = dset("Q1", rng.standard_normal((7, 4)))
        r = dset("R1", rng.standard_normal((5, 4)))
        got = similarity_matrix(q, r).values
        for i in range(7):
            for j in range(5):
                expected = sum(q.vectors[i][d] * r.vectors[j][d] for d in range(4))
                assert got[i, j] == pytest.approx(expected, abs=1e-6)

    def test_dim_mismatch(self):
        with pytest.raises(DimError):
            similarity_matrix(dset("Q1", [[1.0, 0.0]]), dset("R1", [[1.0, 0.0, 0.0]]))

    def test_shape_validation(self):
        with pytest.raises(ValidationError):
            SimilarityMatrix(vid("Q1"), vid("R1"), np.arange(2.0), np.arange(2.0), np.zeros((2, 3)))


class TestTemporalNetworkLocalize:
    def test_all_zero_matrix_yields_nothing(self):
        assert temporal_network_localize(matrix(np.zeros((6, 6))), TNConfig()) == []

    def test_single_diagonal_band(self):
        values = np.full((15, 20), -1.0)
        band_max = 0.0
        for t in range(9):
            values[2 + t, 5 + t] = 0.9 + 0.01 * t
            band_max = max(band_max, values[2 + t, 5 + t])
        (pred,) = temporal_network_localize(matrix(values), TNConfig())
        assert pred.box.coords() == (2.0, 11.0, 5.0, 14.0)
        assert pred.score == band_max

    def test_simulated_disjoint_segments_recovered(self):
        cfg = SimConfig(
            seed=5,
            n_references=3,
            n_distractor_queries=0,
            n_copied_queries=2,
            duration_range=(30, 40),
            segment_length_range=(8, 12),
            p_multi_segment=1.0,
        )
        inst = generate(cfg)
        tn = TNConfig(similarity_threshold=0.5)
        checked = 0
        for (q, r), boxes in inst.gt.boxes_by_pair.items():
            if len(boxes) < 2:
                continue
            qset = next(s for s in inst.queries if s.video == q)
            rset = next(s for s in inst.references if s.video == r)
            preds = temporal_network_localize(similarity_matrix(qset, rset), tn)
            assert len(preds) == len(boxes)
            for box in boxes:
                assert max(p.box.iou(box) for p in preds) >= 0.9
            checked += 1
        assert checked >= 1

    def test_paths_strictly_monotone_in_both_axes(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            values = rng.uniform(-0.5, 1.0, size=(12, 14))
            m = matrix(values)
            for path in extract_paths(m, TNConfig(min_path_length=1)):
                for (i1, j1), (i2, j2) in zip(path, path[1:]):
                    assert m.query_times[i2] > m.query_times[i1]
                    assert m.ref_times[j2] > m.ref_times[j1]
                    assert m.query_times[i2] - m.query_times[i1] <= 10.0
                    assert m.ref_times[j2] - m.ref_times[j1] <= 10.0

    def test_boxes_stay_inside_video_spans(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            nq, nr = int(rng.integers(2, 15)), int(rng.integers(2, 15))
            values = rng.uniform(-1.0, 1.0, size=(nq, nr))
            preds = temporal_network_localize(matrix(values), TNConfig(min_path_length=1))
            for p in preds:
                assert 0.0 <= p.box.query_start < p.box.query_end <= nq
                assert 0.0 <= p.box.ref_start < p.box.ref_end <= nr

    def test_equal_weight_paths_pick_smallest_start(self):
        # Two identical diagonals out of reach of each other (gap 1 only
        # connects adjacent frames); extraction must prefer the path starting
        # at the smaller (query, ref) corner.
        values = np.full((8, 8), -1.0)
        for t in range(3):
            values[t, t] = 1.0
            values[t + 4, t + 4] = 1.0
        preds = temporal_network_localize(matrix(values), TNConfig(max_time_gap=1.0))
        assert len(preds) == 2
        assert preds[0].box.coords() == (0.0, 3.0, 0.0, 3.0)
        assert preds[1].box.coords() == (4.0, 7.0, 4.0, 7.0)

    def test_max_time_gap_splits_paths(self):
        values = np.full((30, 30), -1.0)
        for t in range(3):
            values[t, t] = 1.0
            values[t + 20, t + 20] = 1.0  # 18 s gap from the first band
        preds = temporal_network_localize(matrix(values), TNConfig(max_time_gap=10.0))
        assert len(preds) == 2
        preds_wide = temporal_network_localize(matrix(values), TNConfig(max_time_gap=25.0))
        assert len(preds_wide) == 1

    def test_min_path_length_filters_short_paths(self):
        values = np.full((6, 6), -1.0)
        values[1, 1] = values[2, 2] = 1.0
        assert temporal_network_localize(matrix(values), TNConfig(min_path_length=3)) == []
        assert len(temporal_network_localize(matrix(values), TNConfig(min_path_length=2))) == 1

    def test_max_paths_per_pair_caps_output(self):
        values = np.full((12, 12), -1.0)
        for start in (0, 4, 8):
            for t in range(3):
                values[start + t, start + t] = 1.0
        cfg = TNConfig(max_time_gap=1.0)  # adjacent steps only: bands stay separate
        m = matrix(values)
        assert len(temporal_network_localize(m, cfg)) == 3
        assert len(temporal_network_localize(m, TNConfig(max_time_gap=1.0, max_paths_per_pair=2))) == 2

    def test_score_uses_raw_similarity_not_offset(self):
        values = np.full((5, 5), -1.0)
        for t in range(3):
            values[t, t] = -0.2 + 0.05 * t
        (pred,) = temporal_network_localize(matrix(values), TNConfig(offset=0.5))
        assert pred.score == pytest.approx(-0.1)

    def test_threshold_anti_monotone_on_separated_bands(self):
        # Bands no longer than the gap and separated by more than the gap:
        # each band contributes one box while >= 3 of its cells survive, so
        # the box count cannot increase as the threshold rises.
        rng = np.random.default_rng(17)
        for _ in range(10):
            n_bands = int(rng.integers(1, 4))
            size = n_bands * 24
            values = np.full((size, size), -1.0)
            for b in range(n_bands):
                off = b * 24
                for t in range(int(rng.integers(3, 9))):
                    values[off + t, off + t] = rng.uniform(0.2, 1.0)
            m = matrix(values)
            counts = [
                len(temporal_network_localize(m, TNConfig(similarity_threshold=th)))
                for th in np.linspace(0.1, 0.95, 8)
            ]
            assert counts == sorted(counts, reverse=True)

    def test_first_path_matches_exhaustive_oracle(self):
        # Enumerate every monotone path on tiny matrices and check the DP
        # extracts a maximum-weight one, breaking ties toward the smallest
        # start and then the smallest end node.
        rng = np.random.default_rng(31)
        for case in range(40):
            n = int(rng.integers(3, 6))
            values = rng.uniform(-0.6, 1.0, size=(n, n))
            offset = float(rng.choice([0.0, 0.3]))
            gap = float(rng.choice([1.0, 2.0, 3.0, 10.0]))
            if case % 2:
                # Non-uniform fractional timestamps exercise the boundary
                # arithmetic of the time-gap windows.
                qt = np.sort(np.round(rng.uniform(0, 6, size=n), 1))
                rt = np.sort(np.round(rng.uniform(0, 6, size=n), 1))
            else:
                qt = rt = np.arange(float(n))
            cfg = TNConfig(offset=offset, max_time_gap=gap, min_path_length=1, max_paths_per_pair=1)
            m = matrix(values, query_times=qt, ref_times=rt)
            weights = values + offset
            nodes = [(i, j) for i in range(n) for j in range(n) if weights[i, j] > 0.0]

            def successors(u):
                return [
                    v for v in nodes
                    if qt[v[0]] > qt[u[0]] and rt[v[1]] > rt[u[1]]
                    and qt[v[0]] - qt[u[0]] <= gap and rt[v[1]] - rt[u[1]] <= gap
                ]

            all_paths = []

            def walk(path):
                all_paths.append(path)
                for v in successors(path[-1]):
                    walk(path + [v])

            for u in nodes:
                walk([u])
            if not all_paths:
                assert extract_paths(m, cfg) == []
                continue
            (got,) = extract_paths(m, cfg)
            got_weight = sum(weights[i, j] for i, j in got)
            best_weight = max(sum(weights[i, j] for i, j in p) for p in all_paths)
            assert got_weight == pytest.approx(best_weight, abs=1e-9)
            contenders = [
                p for p in all_paths
                if abs(sum(weights[i, j] for i, j in p) - best_weight) < 1e-9
            ]
            best_start = min(p[0] for p in contenders)
            assert got[0] == best_start
            best_end = min(p[-1] for p in contenders if p[0] == best_start)
            assert got[-1] == best_end

    def test_extraction_terminates_when_no_path_is_long_enough(self):
        rng = np.random.default_rng(19)
        values = rng.uniform(0.0, 1.0, size=(10, 10))
        preds = temporal_network_localize(matrix(values), TNConfig(min_path_length=50))
        assert preds == []

    def test_empty_matrix(self):
        m = SimilarityMatrix(vid("Q1"), vid("R1"), np.array([]), np.arange(3.0), np.zeros((0, 3)))
        assert temporal_network_localize(m, TNConfig()) == []


class TestLocalizeCandidates:
    def _instance(self):
        rng = np.random.default_rng(23)
        queries = [dset(f"Q{i}", rng.standard_normal((10, 8))) for i in range(3)]
        references = [dset(f"R{i}", rng.standard_normal((12, 8))) for i in range(3)]
        return queries, references

    def test_empty_candidates(self):
        queries, references = self._instance()
        assert localize_candidates([], queries, references) == []

    def test_single_pair_equals_direct_call(self):
        queries, references = self._instance()
        direct = temporal_network_localize(similarity_matrix(queries[0], references[1]), TNConfig())
        via = localize_candidates([(queries[0].video, references[1].video)], queries, references)
        assert sorted(via, key=lambda p: p.score) == sorted(direct, key=lambda p: p.score)

    def test_candidate_order_invariance(self):
        queries, references = self._instance()
        pairs = [(q.video, r.video) for q in queries for r in references]
        base = localize_candidates(pairs, queries, references)
        assert localize_candidates(pairs[::-1], queries, references) == base
        rng = np.random.default_rng(29)
        shuffled = list(pairs)
        rng.shuffle(shuffled)
        assert localize_candidates(shuffled, queries, references) == base

    def test_thread_invariance(self):
        queries, references = self._instance()
        pairs = [(q.video, r.video) for q in queries for r in references]
        base = localize_candidates(pairs, queries, references, threads=1)
        assert localize_candidates(pairs, queries, references, threads=4) == base

    def test_missing_descriptor_set_rejected(self):
        queries, references = self._instance()
        with pytest.raises(ValidationError):
            localize_candidates([(vid("Q9"), references[0].video)], queries, references)

    def test_scores_sorted_descending(self):
        queries, references = self._instance()
        pairs = [(q.video, r.video) for q in queries for r in references]
        preds = localize_candidates(pairs, queries, references, TNConfig(min_path_length=2))
        scores = [p.score for p in preds]
        assert scores == sorted(scores, reverse=True)
