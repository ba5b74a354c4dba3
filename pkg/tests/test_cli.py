import numpy as np
import pytest

from vcbench import storage
from vcbench.cli import main
from vcbench.simulate import read_instance

from conftest import dset, unit_rows


BASE_CONFIG = """\
seed = 21
dim = 64
n_references = 10
n_distractor_queries = 12
n_copied_queries = 5
duration_range = 20,32
segment_length_range = 8,12
p_speed_change = 0.3
"""


@pytest.fixture()
def instance_dir(tmp_path):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text(BASE_CONFIG)
    out = tmp_path / "inst"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    return out


class TestSimulateCommand:
    def test_writes_all_artifacts_and_matching_summary(self, tmp_path, capsys):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text(BASE_CONFIG)
        out = tmp_path / "inst"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        printed = capsys.readouterr().out
        for name in (
            "queries.vcbd",
            "references.vcbd",
            "training.vcbd",
            "ground_truth.csv",
            "tags.csv",
            "hard_negatives.csv",
            "durations.csv",
        ):
            assert (out / name).exists()
        instance = read_instance(out)
        s = instance.summary()
        assert f"queries: {s['queries']}" in printed
        assert f"copied segments: {s['copied_segments']}" in printed
        assert f"queries with copies: {s['queries_with_copies']}" in printed
        assert f"distractor queries: {s['distractor_queries']}" in printed

    def test_missing_seed_exits_2_and_names_the_key(self, tmp_path, capsys):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text("dim = 16\n")
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
        assert "seed" in capsys.readouterr().err

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text("seed = 1\nbogus = 3\n")
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
        assert "bogus" in capsys.readouterr().err

    def test_invalid_config_value_exits_2(self, tmp_path):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text("seed = 1\np_speed_change = 1.7\n")
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2

    def test_missing_config_file_exits_1(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "x")]) == 1

    def test_byte_identical_across_runs_and_threads(self, tmp_path):
        cfg = tmp_path / "sim.cfg"
        cfg.write_text(BASE_CONFIG)
        outs = []
        for name, threads in (("a", "1"), ("b", "8")):
            out = tmp_path / name
            assert main(["simulate", "--config", str(cfg), "--out", str(out),
                         "--threads", threads]) == 0
            outs.append(out)
        for f in outs[0].iterdir():
            assert f.read_bytes() == (outs[1] / f.name).read_bytes()


class TestSearchCommand:
    def test_search_writes_matches_and_detections(self, instance_dir, tmp_path):
        det = tmp_path / "det.csv"
        matches = tmp_path / "matches.csv"
        rc = main([
            "search",
            "--queries", str(instance_dir / "queries.vcbd"),
            "--refs", str(instance_dir / "references.vcbd"),
            "--k", "300",
            "--matches", str(matches),
            "--detections", str(det),
        ])
        assert rc == 0
        assert len(storage.read_matches(matches)) == 300
        preds = storage.read_detection_predictions(det)
        assert preds
        scores = [p.score for p in preds]
        assert scores == sorted(scores, reverse=True)

    def test_threads_do_not_change_outputs(self, instance_dir, tmp_path):
        outs = []
        for name, threads in (("d1.csv", "1"), ("d2.csv", "8")):
            det = tmp_path / name
            assert main([
                "search",
                "--queries", str(instance_dir / "queries.vcbd"),
                "--refs", str(instance_dir / "references.vcbd"),
                "--k", "250",
                "--detections", str(det),
                "--threads", threads,
            ]) == 0
            outs.append(det.read_bytes())
        assert outs[0] == outs[1]

    def test_score_norm_flags(self, instance_dir, tmp_path):
        det = tmp_path / "det.csv"
        rc = main([
            "search",
            "--queries", str(instance_dir / "queries.vcbd"),
            "--refs", str(instance_dir / "references.vcbd"),
            "--normalize", "l2",
            "--score-norm", str(instance_dir / "training.vcbd"),
            "--k-sn", "1",
            "--beta", "1.2",
            "--k", "200",
            "--detections", str(det),
        ])
        assert rc == 0
        assert storage.read_detection_predictions(det)

    def test_missing_input_exits_1(self, tmp_path):
        rc = main([
            "search",
            "--queries", str(tmp_path / "missing.vcbd"),
            "--refs", str(tmp_path / "missing.vcbd"),
            "--k", "10",
            "--detections", str(tmp_path / "out.csv"),
        ])
        assert rc == 1


class TestLocalizeCommand:
    def test_from_search(self, instance_dir, tmp_path):
        out = tmp_path / "loc.csv"
        rc = main([
            "localize",
            "--queries", str(instance_dir / "queries.vcbd"),
            "--refs", str(instance_dir / "references.vcbd"),
            "--from-search", "--k", "300",
            "--threshold", "0.5",
            "--out", str(out),
        ])
        assert rc == 0
        preds = storage.read_localization_predictions(out)
        gt = storage.read_ground_truth(instance_dir / "ground_truth.csv")
        assert preds
        # Exact copies dominate the ranking; every true pair gets localized.
        top = preds[: len(gt.pair_set)]
        assert all((p.query, p.reference) in gt.pair_set for p in top)
        assert {(p.query, p.reference) for p in preds} >= gt.pair_set

    def test_candidates_file(self, instance_dir, tmp_path):
        gt = storage.read_ground_truth(instance_dir / "ground_truth.csv")
        candidates = tmp_path / "cand.csv"
        storage.write_pairs(candidates, sorted(gt.pair_set, key=lambda p: (p[0].id, p[1].id)))
        out = tmp_path / "loc.csv"
        rc = main([
            "localize",
            "--queries", str(instance_dir / "queries.vcbd"),
            "--refs", str(instance_dir / "references.vcbd"),
            "--candidates", str(candidates),
            "--threshold", "0.5",
            "--out", str(out),
        ])
        assert rc == 0
        assert storage.read_localization_predictions(out)

    def test_candidates_and_from_search_are_exclusive(self, instance_dir, tmp_path):
        rc = main([
            "localize",
            "--queries", str(instance_dir / "queries.vcbd"),
            "--refs", str(instance_dir / "references.vcbd"),
            "--candidates", "x.csv", "--from-search",
            "--out", str(tmp_path / "loc.csv"),
        ])
        assert rc == 2


class TestEvaluateCommand:
    def _perfect_files(self, tmp_path):
        gt = tmp_path / "gt.csv"
        gt.write_text(
            "query_id,ref_id,query_start,query_end,ref_start,ref_end\nQ1,R1,0,10,5,15\n"
        )
        preds = tmp_path / "preds.csv"
        preds.write_text("query_id,ref_id,score\nQ1,R1,0.9\n")
        return gt, preds

    def test_perfect_detection_prints_one(self, tmp_path, capsys):
        gt, preds = self._perfect_files(tmp_path)
        assert main(["evaluate", "--task", "detection", "--preds", str(preds), "--gt", str(gt)]) == 0
        assert "1.000000" in capsys.readouterr().out

    def test_map_task(self, tmp_path, capsys):
        gt, preds = self._perfect_files(tmp_path)
        assert main(["evaluate", "--task", "map", "--preds", str(preds), "--gt", str(gt)]) == 0
        assert "mAP: 1.000000" in capsys.readouterr().out

    def test_curve_csv_and_figure_written(self, tmp_path, capsys):
        gt, preds = self._perfect_files(tmp_path)
        curve = tmp_path / "curve.csv"
        assert main([
            "evaluate", "--task", "detection", "--preds", str(preds), "--gt", str(gt),
            "--curve", str(curve),
        ]) == 0
        assert curve.exists()
        assert (tmp_path / "curve.png").exists()
        assert curve.read_text().splitlines()[0] == "rank,threshold,precision,recall"

    def test_localization_task(self, tmp_path, capsys):
        gt = tmp_path / "gt.csv"
        gt.write_text(
            "query_id,ref_id,query_start,query_end,ref_start,ref_end\nQ1,R1,0,10,0,10\n"
        )
        preds = tmp_path / "preds.csv"
        preds.write_text(
            "query_id,ref_id,query_start,query_end,ref_start,ref_end,score\nQ1,R1,0,5,0,10,0.9\n"
        )
        assert main(["evaluate", "--task", "localization", "--preds", str(preds), "--gt", str(gt)]) == 0
        assert "0.707107" in capsys.readouterr().out

    def test_curve_with_map_is_usage_error(self, tmp_path):
        gt, preds = self._perfect_files(tmp_path)
        rc = main(["evaluate", "--task", "map", "--preds", str(preds), "--gt", str(gt),
                   "--curve", str(tmp_path / "c.csv")])
        assert rc == 2

    def test_subset_requires_tags(self, tmp_path):
        gt, preds = self._perfect_files(tmp_path)
        rc = main(["evaluate", "--task", "detection", "--preds", str(preds), "--gt", str(gt),
                   "--subset", "transform:crop"])
        assert rc == 2

    def test_subset_transform_expression(self, instance_dir, tmp_path, capsys):
        det = tmp_path / "det.csv"
        assert main([
            "search",
            "--queries", str(instance_dir / "queries.vcbd"),
            "--refs", str(instance_dir / "references.vcbd"),
            "--k", "300",
            "--detections", str(det),
        ]) == 0
        rc = main([
            "evaluate", "--task", "detection", "--preds", str(det),
            "--gt", str(instance_dir / "ground_truth.csv"),
            "--tags", str(instance_dir / "tags.csv"),
            "--subset", "transform:speed_change",
        ])
        assert rc == 0
        assert "uAP" in capsys.readouterr().out

    def test_subset_no_distractors(self, instance_dir, tmp_path, capsys):
        det = tmp_path / "det.csv"
        assert main([
            "search",
            "--queries", str(instance_dir / "queries.vcbd"),
            "--refs", str(instance_dir / "references.vcbd"),
            "--k", "300",
            "--detections", str(det),
        ]) == 0
        rc = main([
            "evaluate", "--task", "detection", "--preds", str(det),
            "--gt", str(instance_dir / "ground_truth.csv"),
            "--subset", "no-distractors",
        ])
        assert rc == 0

    def test_invalid_predictions_exit_3(self, tmp_path):
        gt, _ = self._perfect_files(tmp_path)
        bad = tmp_path / "bad.csv"
        bad.write_text("query_id,ref_id,score\nQ1,R1,NaN\n")
        rc = main(["evaluate", "--task", "detection", "--preds", str(bad), "--gt", str(gt)])
        assert rc == 3

    def test_empty_ground_truth_exit_3(self, tmp_path):
        _, preds = self._perfect_files(tmp_path)
        empty_gt = tmp_path / "empty_gt.csv"
        empty_gt.write_text("query_id,ref_id,query_start,query_end,ref_start,ref_end\n")
        rc = main(["evaluate", "--task", "detection", "--preds", str(preds), "--gt", str(empty_gt)])
        assert rc == 3

    def test_full_pipeline_scores_near_one_on_exact_copies(self, instance_dir, tmp_path, capsys):
        det = tmp_path / "det.csv"
        assert main([
            "search",
            "--queries", str(instance_dir / "queries.vcbd"),
            "--refs", str(instance_dir / "references.vcbd"),
            "--k", "400",
            "--detections", str(det),
        ]) == 0
        assert main([
            "evaluate", "--task", "detection", "--preds", str(det),
            "--gt", str(instance_dir / "ground_truth.csv"),
        ]) == 0
        out = capsys.readouterr().out
        value = float(out.strip().rsplit(" ", 1)[-1])
        assert value >= 0.99


class TestValidateSubmissionCommand:
    def test_passing_submission(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        desc = tmp_path / "d.vcbd"
        storage.write_descriptors(desc, [dset("Q1", unit_rows(rng, 10, 64))])
        durations = tmp_path / "durations.csv"
        durations.write_text("video_id,duration\nQ1,20\n")
        assert main(["validate-submission", "--descriptors", str(desc),
                     "--durations", str(durations)]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_failing_submission_exits_3(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        desc = tmp_path / "d.vcbd"
        storage.write_descriptors(desc, [dset("Q1", unit_rows(rng, 50, 64))])
        durations = tmp_path / "durations.csv"
        durations.write_text("video_id,duration\nQ1,20\n")
        assert main(["validate-submission", "--descriptors", str(desc),
                     "--durations", str(durations)]) == 3
        assert "FAIL" in capsys.readouterr().out

    def test_missing_duration_exits_3(self, tmp_path):
        rng = np.random.default_rng(0)
        desc = tmp_path / "d.vcbd"
        storage.write_descriptors(desc, [dset("Q1", unit_rows(rng, 10, 64))])
        durations = tmp_path / "durations.csv"
        durations.write_text("video_id,duration\nQ2,20\n")
        assert main(["validate-submission", "--descriptors", str(desc),
                     "--durations", str(durations)]) == 3


class TestTopLevel:
    def test_version_flag(self, capsys):
        assert main(["--version"]) == 0
        out = capsys.readouterr().out
        assert "vcbench" in out and "format v1" in out

    def test_unknown_command_exits_2(self):
        assert main(["frobnicate"]) == 2

    def test_no_command_exits_2(self):
        assert main([]) == 2
