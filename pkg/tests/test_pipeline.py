"""End-to-end behavior: config files, threshold selection, final rows, CLI.

All model scales are cut far below the production defaults so the whole
file runs in seconds; the production values themselves are asserted in
the learner tests.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

import relikit.cli as cli
import relikit.pipeline as pl
from relikit.data import load_csv
from relikit.errors import ConfigError, DataError, NumericError
from relikit.hardness import CvProtocol
from relikit.learners import LearnerSpec, MainModelConfig
from relikit.search import CostWeights


def blob_csv(path: Path, n: int, seed: int, gap: float = 2.0, d: int = 3) -> Path:
    """Two Gaussian classes along the first feature, CSV with string labels."""
    rng = np.random.default_rng(seed)
    half = n // 2
    X0 = rng.normal(0.0, 1.0, size=(half, d))
    X1 = rng.normal(0.0, 1.0, size=(n - half, d))
    X0[:, 0] -= gap / 2
    X1[:, 0] += gap / 2
    header = ",".join(f"f{j}" for j in range(d)) + ",label"
    lines = [header]
    for row in X0:
        lines.append(",".join(f"{v:.6f}" for v in row) + ",neg")
    for row in X1:
        lines.append(",".join(f"{v:.6f}" for v in row) + ",pos")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


FAST_POOL = (LearnerSpec("logistic"), LearnerSpec("naive_bayes"))
FAST_MODEL = MainModelConfig(n_estimators=8, max_depth=2, learning_rate=0.3)
FAST_PROTOCOL = CvProtocol(n_folds=3, n_repeats=1, calibration_folds=2)


def tiny_config(tmp_path: Path, **overrides) -> pl.ExperimentConfig:
    train = tmp_path / "train.csv"
    test = tmp_path / "test.csv"
    if not train.exists():
        blob_csv(train, 60, seed=1)
        blob_csv(test, 40, seed=2)
    defaults = dict(
        train_path=str(train),
        test_path=str(test),
        label_column="label",
        seeds=(0, 1),
        protocol=FAST_PROTOCOL,
        pool=FAST_POOL,
        main_model=FAST_MODEL,
        t_f_grid=(0.0, 0.2),
        t_r_grid=(0.5, 0.6, 0.7, 0.8),
        search="grid",
        output_dir=str(tmp_path / "out"),
    )
    defaults.update(overrides)
    return pl.ExperimentConfig(**defaults)


class TestConfig:
    def test_file_round_trip(self, tmp_path):
        config = tiny_config(tmp_path)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(pl.config_to_dict(config)), encoding="utf-8")
        assert pl.load_config(path) == config

    def test_unknown_key_rejected(self, tmp_path):
        doc = pl.config_to_dict(tiny_config(tmp_path))
        doc["typo_key"] = 1
        with pytest.raises(ConfigError, match="typo_key"):
            pl.config_from_dict(doc)

    def test_missing_required_key(self):
        with pytest.raises(ConfigError, match="train_path"):
            pl.config_from_dict({"test_path": "x", "label_column": "y"})

    def test_wrong_schema_version(self, tmp_path):
        doc = pl.config_to_dict(tiny_config(tmp_path))
        doc["schema_version"] = 99
        with pytest.raises(ConfigError, match="schema_version"):
            pl.config_from_dict(doc)

    def test_bad_enum_values(self, tmp_path):
        with pytest.raises(ConfigError):
            tiny_config(tmp_path, filter_method="bogus")
        with pytest.raises(ConfigError):
            tiny_config(tmp_path, reject_method="bogus")
        with pytest.raises(ConfigError):
            tiny_config(tmp_path, search="bogus")
        with pytest.raises(ConfigError):
            tiny_config(tmp_path, t_f_mode="bogus")
        with pytest.raises(ConfigError):
            tiny_config(tmp_path, seeds=())
        with pytest.raises(ConfigError):
            tiny_config(tmp_path, split_ratio=1.0)

    def test_score_kind_property(self, tmp_path):
        assert tiny_config(tmp_path).score_kind == "confidence"
        assert tiny_config(tmp_path, reject_method="certainty").score_kind == "certainty"
        # no rejection still reports a confidence column
        assert tiny_config(tmp_path, reject_method="none").score_kind == "confidence"

    def test_not_json_object(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigError):
            pl.load_config(path)


class TestManifest:
    def test_round_trip(self, tmp_path):
        config = tiny_config(tmp_path)
        manifest = pl.RunManifest(
            config=pl.config_to_dict(config),
            stage="search",
            t_f=0.2,
            t_r=0.66,
            score_kind="confidence",
            breakdown={"cost": 1.0},
            per_split=({"seed": 0, "macro_f1": 0.9},),
            search={"method": "grid", "n_evaluations": 6},
            certainty_batches=(),
            notes=("a note",),
            wall_clock_seconds=1.5,
        )
        path = tmp_path / "manifest.json"
        pl.write_manifest(path, manifest)
        loaded = pl.load_manifest(path)
        assert loaded.t_f == 0.2 and loaded.t_r == 0.66
        assert loaded.notes == ("a note",)
        assert loaded.per_split[0]["seed"] == 0
        assert pl.config_from_dict(loaded.config) == config

    def test_bad_manifest_version(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text('{"schema_version": 9}', encoding="utf-8")
        with pytest.raises(DataError):
            pl.load_manifest(path)


class TestSelectThresholds:
    def test_reject_only_pins_filtering(self, tmp_path):
        config = tiny_config(tmp_path, filter_method="none")
        train = load_csv(config.train_path, "label")
        outcome = pl.select_thresholds(config, train)
        assert outcome.t_f == 0.0
        assert outcome.t_r in config.t_r_grid
        assert outcome.manifest.stage == "search"
        assert outcome.search_result.method == "fixed"
        assert outcome.hardness is None

    def test_standard_setup_needs_no_search(self, tmp_path):
        config = tiny_config(tmp_path, filter_method="none", reject_method="none")
        train = load_csv(config.train_path, "label")
        outcome = pl.select_thresholds(config, train)
        assert outcome.t_f == 0.0 and outcome.t_r == pl.ACCEPT_ALL
        assert outcome.manifest.t_r is None  # rejection not active

    def test_both_thresholds_searched(self, tmp_path):
        config = tiny_config(tmp_path)
        train = load_csv(config.train_path, "label")
        outcome = pl.select_thresholds(config, train)
        assert outcome.t_f in config.t_f_grid
        assert outcome.t_r in config.t_r_grid
        assert outcome.hardness is not None
        assert outcome.manifest.search["method"] == "grid"
        assert len(outcome.manifest.per_split) == len(config.seeds)

    def test_deterministic(self, tmp_path):
        config = tiny_config(tmp_path)
        train = load_csv(config.train_path, "label")
        a = pl.select_thresholds(config, train)
        b = pl.select_thresholds(config, train)
        assert a.t_f == b.t_f and a.t_r == b.t_r
        assert a.breakdown == b.breakdown
        assert a.manifest.per_split == b.manifest.per_split

    def test_mean_cost_matches_cache(self, tmp_path):
        # the chosen breakdown must equal a direct evaluation at (t_f, t_r)
        config = tiny_config(tmp_path)
        train = load_csv(config.train_path, "label")
        outcome = pl.select_thresholds(config, train)
        cache = pl.SplitEvaluationCache(
            train, outcome.hardness, config, config.score_kind
        )
        direct = [
            b
            for b in cache.evaluate(outcome.t_f, config.t_r_grid)
            if b.t_r == outcome.t_r
        ]
        assert len(direct) == 1
        assert abs(direct[0].cost - outcome.breakdown.cost) <= 1e-12

    def test_certainty_batches_recorded(self, tmp_path):
        config = tiny_config(tmp_path, reject_method="certainty")
        train = load_csv(config.train_path, "label")
        outcome = pl.select_thresholds(config, train)
        assert len(outcome.manifest.certainty_batches) == len(config.seeds)
        for batch in outcome.manifest.certainty_batches:
            assert batch["entropy_max"] >= batch["entropy_min"]

    def test_score_mode_reject_only_removes_nothing(self, tmp_path):
        config = tiny_config(tmp_path, filter_method="none", t_f_mode="score")
        train = load_csv(config.train_path, "label")
        outcome = pl.select_thresholds(config, train)
        assert outcome.t_f == 1.0  # the score threshold that keeps everything


class TestCacheReuse:
    def test_fits_shared_across_equal_signatures(self, tmp_path, monkeypatch):
        config = tiny_config(tmp_path, filter_method="none")
        train = load_csv(config.train_path, "label")
        calls = {"n": 0}
        real_fit = pl.fit_main_model

        def counting_fit(X, y, cfg=None):
            calls["n"] += 1
            return real_fit(X, y, cfg)

        monkeypatch.setattr(pl, "fit_main_model", counting_fit)
        cache = pl.SplitEvaluationCache(train, None, config, "confidence")
        cache.evaluate(0.0, (0.5, 0.6))
        first = calls["n"]
        cache.evaluate(0.0, (0.7, 0.8))  # same signature, new grid
        assert calls["n"] == first == len(config.seeds)


class TestFinalize:
    def test_separable_data_perfect_row(self, tmp_path):
        # wide class gap: every prediction correct at any rejection level
        train = blob_csv(tmp_path / "sep_train.csv", 60, seed=3, gap=14.0)
        test = blob_csv(tmp_path / "sep_test.csv", 40, seed=4, gap=14.0)
        config = tiny_config(
            tmp_path,
            train_path=str(train),
            test_path=str(test),
            filter_method="none",
        )
        final = pl.finalize_and_test(config, 0.0, 0.5)
        assert final.metrics.macro_f1 == 1.0
        assert final.metrics.rejection_rate == 0.0

    def test_accept_all_floor(self, tmp_path):
        config = tiny_config(tmp_path, filter_method="none")
        final = pl.finalize_and_test(config, 0.0, pl.ACCEPT_ALL)
        assert final.metrics.n_accepted == final.metrics.n_total
        assert final.metrics.acceptance == (1.0, 1.0)

    def test_zero_accepted_note(self, tmp_path):
        # overlapping classes: calibrated confidence stays below 1.0
        train = blob_csv(tmp_path / "ov_train.csv", 60, seed=5, gap=0.5)
        test = blob_csv(tmp_path / "ov_test.csv", 40, seed=6, gap=0.5)
        config = tiny_config(
            tmp_path,
            train_path=str(train),
            test_path=str(test),
            filter_method="none",
        )
        final = pl.finalize_and_test(config, 0.0, 1.0)
        if final.metrics.n_accepted == 0:
            assert "no instances accepted on the test set" in final.manifest.notes
            assert final.metrics.macro_f1 == 0.0
        else:
            # scores saturated at 1.0; every accepted row must score 1.0
            assert final.metrics.mean_score == 1.0

    def test_certainty_final_row(self, tmp_path):
        config = tiny_config(tmp_path, reject_method="certainty")
        final = pl.finalize_and_test(config, 0.0, 0.6)
        assert final.ensemble is not None
        # calibration is part of the artifact set on every run; the
        # certainty path just does not use it for scoring
        assert final.calibration is not None
        assert final.certainty is not None
        assert len(final.manifest.certainty_batches) == 1
        assert all(p.score_kind == "certainty" for p in final.predictions)

    def test_filtering_shrinks_training_side(self, tmp_path):
        config = tiny_config(tmp_path)
        train = load_csv(config.train_path, "label")
        hardness = pl.compute_hardness(train, config)
        model, _, _, used = pl.train_final_model(config, 0.2, train, hardness)
        # ceil(0.2 * 30) = 6 removed per class
        assert used.labels.size == 60 - 12

    def test_predictions_align_with_test_ids(self, tmp_path):
        config = tiny_config(tmp_path, filter_method="none")
        test = load_csv(config.test_path, "label")
        final = pl.finalize_and_test(config, 0.0, 0.6)
        assert tuple(p.instance_id for p in final.predictions) == test.instance_ids


@pytest.fixture(scope="module")
def rows(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("cmp")
    config = tiny_config(tmp_path)
    return pl.run_comparison(config), config


class TestComparison:
    def test_thirteen_rows_in_pair_order(self, rows):
        table, _ = rows
        assert len(table) == 13
        assert [r.index for r in table] == list(range(1, 14))
        expected_pairs = [
            ("ih", "confidence"),
            ("ih", "certainty"),
            ("if", "confidence"),
            ("if", "certainty"),
        ]
        for p, (method, kind) in enumerate(expected_pairs):
            chunk = table[3 * p : 3 * p + 3]
            assert [r.setup for r in chunk] == ["reject-only", "both", "filter-only"]
            assert all(r.filter_method == method for r in chunk)
            assert all(r.reject_method == kind for r in chunk)
        assert table[12].setup == "standard"

    def test_visibility_flags(self, rows):
        table, _ = rows
        for r in table:
            if r.setup == "reject-only":
                assert not r.filter_shown and r.reject_shown
            elif r.setup == "both":
                assert r.filter_shown and r.reject_shown
            elif r.setup == "filter-only":
                assert r.filter_shown and not r.reject_shown
            else:
                assert not r.filter_shown and not r.reject_shown

    def test_table_lines_format(self, rows):
        table, _ = rows
        lines = pl.results_table_lines(table)
        assert lines[0] == (
            "experiment,F,R,T_f,T_r,PRC_0,PRC_1,RCL_0,RCL_1,ACP_0,ACP_1,score,note"
        )
        assert len(lines) == 14
        for line in lines[1:]:
            cells = line.split(",")
            assert len(cells) == 13
        standard = lines[13].split(",")
        assert standard[1] == "--" and standard[2] == "--"
        assert standard[3] == "--" and standard[4] == "--"
        reject_only = lines[1].split(",")
        assert reject_only[1] == "--" and reject_only[2] == "C"
        assert reject_only[3] == "--"
        filter_only = lines[3].split(",")
        assert filter_only[1] == "IH" and filter_only[2] == "--"
        assert filter_only[4] == "--"

    def test_metric_cells_are_three_decimals(self, rows):
        table, _ = rows
        for line in pl.results_table_lines(table)[1:]:
            for cell in line.split(",")[5:12]:
                whole, _, frac = cell.partition(".")
                assert len(frac) == 3

    def test_collapse_annotation_when_rejection_disabled(self, rows):
        table, _ = rows
        for r in table:
            if r.setup == "both" and r.t_r == pl.ACCEPT_ALL:
                assert "collapses to filter-only" in r.note

    def test_write_results_table(self, rows, tmp_path):
        table, _ = rows
        out = tmp_path / "results.csv"
        pl.write_results_table(out, table)
        written = out.read_text(encoding="utf-8").strip().splitlines()
        assert written == pl.results_table_lines(table)


def write_config_file(tmp_path: Path, config: pl.ExperimentConfig) -> Path:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(pl.config_to_dict(config)), encoding="utf-8")
    return path


class TestCli:
    def test_missing_config_flag_exits_1(self, capsys):
        assert cli.main(["search"]) == 1

    def test_unreadable_config_exits_1(self, capsys):
        assert cli.main(["search", "--config", "/nonexistent.json"]) == 1

    def test_invalid_json_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        assert cli.main(["search", "--config", str(bad)]) == 1

    def test_single_class_data_exits_2(self, tmp_path, capsys):
        csv = tmp_path / "one.csv"
        csv.write_text("f0,label\n1.0,pos\n2.0,pos\n", encoding="utf-8")
        config = tiny_config(tmp_path, train_path=str(csv), test_path=str(csv))
        path = write_config_file(tmp_path, config)
        assert cli.main(["search", "--config", str(path)]) == 2

    def test_numeric_error_exits_3(self, tmp_path, capsys, monkeypatch):
        config = tiny_config(tmp_path)
        path = write_config_file(tmp_path, config)

        def boom(*args, **kwargs):
            raise NumericError("synthetic failure")

        monkeypatch.setattr(cli, "select_thresholds", boom)
        assert cli.main(["search", "--config", str(path)]) == 3

    def test_hardness_command(self, tmp_path, capsys):
        config = tiny_config(tmp_path)
        path = write_config_file(tmp_path, config)
        assert cli.main(["hardness", "--config", str(path)]) == 0
        out = Path(config.output_dir)
        assert (out / "scores.csv").exists()
        assert (out / "scores.json").exists()
        assert (out / "hardness.png").exists()

    def test_hardness_without_method_exits_1(self, tmp_path, capsys):
        config = tiny_config(tmp_path, filter_method="none")
        path = write_config_file(tmp_path, config)
        assert cli.main(["hardness", "--config", str(path)]) == 1

    def test_seed_list_override_lands_in_manifest(self, tmp_path, capsys):
        config = tiny_config(tmp_path, filter_method="none")
        path = write_config_file(tmp_path, config)
        assert (
            cli.main(["search", "--config", str(path), "--seed-list", "7,8,9"]) == 0
        )
        manifest = pl.load_manifest(Path(config.output_dir) / "manifest.json")
        assert manifest.config["seeds"] == [7, 8, 9]
        assert len(manifest.per_split) == 3

    def test_run_twice_is_byte_identical(self, tmp_path, capsys):
        config = tiny_config(tmp_path, filter_method="none")
        path = write_config_file(tmp_path, config)
        out = Path(config.output_dir)
        assert cli.main(["run", "--config", str(path)]) == 0
        first_row = (out / "row.csv").read_bytes()
        first_preds = (out / "predictions.csv").read_bytes()
        assert cli.main(["run", "--config", str(path)]) == 0
        assert (out / "row.csv").read_bytes() == first_row
        assert (out / "predictions.csv").read_bytes() == first_preds

    def test_run_equals_composed_stages(self, tmp_path, capsys):
        config = tiny_config(tmp_path, filter_method="none")
        run_dir = tmp_path / "run_out"
        stage_dir = tmp_path / "stage_out"
        path = write_config_file(tmp_path, config)
        assert cli.main(["run", "--config", str(path), "--out", str(run_dir)]) == 0
        for command in ("search", "train", "evaluate"):
            assert (
                cli.main([command, "--config", str(path), "--out", str(stage_dir)])
                == 0
            )
        assert (run_dir / "row.csv").read_bytes() == (
            stage_dir / "row.csv"
        ).read_bytes()
        assert (run_dir / "predictions.csv").read_bytes() == (
            stage_dir / "predictions.csv"
        ).read_bytes()

    def test_run_artifacts_exist(self, tmp_path, capsys):
        config = tiny_config(tmp_path)
        path = write_config_file(tmp_path, config)
        assert cli.main(["run", "--config", str(path)]) == 0
        out = Path(config.output_dir)
        for name in (
            "manifest.json",
            "manifest_final.json",
            "scores.csv",
            "trace.csv",
            "trace.png",
            "model.json",
            "calibration.json",
            "row.csv",
            "predictions.csv",
        ):
            assert (out / name).exists(), name

    def test_run_certainty_saves_ensemble(self, tmp_path, capsys):
        config = tiny_config(
            tmp_path, filter_method="none", reject_method="certainty"
        )
        path = write_config_file(tmp_path, config)
        assert cli.main(["run", "--config", str(path)]) == 0
        out = Path(config.output_dir)
        assert (out / "ensemble.json").exists()
        assert (out / "calibration.json").exists()

    def test_curve_command(self, tmp_path, capsys):
        config = tiny_config(tmp_path, filter_method="none")
        path = write_config_file(tmp_path, config)
        assert cli.main(["curve", "--config", str(path)]) == 0
        out = Path(config.output_dir)
        assert (out / "curve.csv").exists()
        assert (out / "curve.png").exists()
        header = (out / "curve.csv").read_text(encoding="utf-8").splitlines()[0]
        assert header.startswith("t_r,")

    def test_compare_command(self, tmp_path, capsys):
        config = tiny_config(
            tmp_path,
            seeds=(0,),
            t_f_grid=(0.0, 0.2),
            t_r_grid=(0.5, 0.7),
        )
        path = write_config_file(tmp_path, config)
        assert cli.main(["compare", "--config", str(path)]) == 0
        out = Path(config.output_dir)
        lines = (out / "results.csv").read_text(encoding="utf-8").strip().splitlines()
        assert len(lines) == 14
        assert (out / "comparison.png").exists()

    def test_mode_override(self, tmp_path, capsys):
        config = tiny_config(tmp_path, filter_method="none")
        path = write_config_file(tmp_path, config)
        assert (
            cli.main(["search", "--config", str(path), "--mode", "score"]) == 0
        )
        manifest = pl.load_manifest(Path(config.output_dir) / "manifest.json")
        assert manifest.config["t_f_mode"] == "score"
        assert manifest.t_f == 1.0  # keep-everything threshold in score mode
