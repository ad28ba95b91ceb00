"""Tests for the evaluation harness: reports, modes, and throughput."""

import json

import numpy as np
import pytest

import rewardkit
from rewardkit.datamodel import DimensionSet, SampleRecord, ScoreScale
from rewardkit.dataset_io import DatasetManifest
from rewardkit.embedding_store import store_from_entries
from rewardkit.errors import EmptyInputError
from rewardkit.harness import (
    DEFAULT_BINARY_GOLD_THRESHOLD,
    BenchReport,
    EvalReport,
    bench,
    evaluate,
    format_table,
    render_report,
    report_to_dict,
)
from rewardkit.metrics import kendall_tau_b, kendall_tau_c
from rewardkit.multi_head import RidgeModel
from rewardkit.reward_head import RewardHeadModel
from worlds import multi_world, pairwise_world, pointwise_world


def metric_dict(report: EvalReport) -> dict:
    return dict(report.metrics)


class TestPointwise:
    def test_perfect_predictor_scores_one_hundred(self):
        store, manifest, model, _ = pointwise_world()
        report = evaluate(model, store, manifest, mode="pointwise")
        assert metric_dict(report) == {"tau_b_x100": 100.0, "tau_c_x100": 100.0}
        assert report.mode == "pointwise"
        assert report.n_samples == len(manifest.records)
        assert report.warnings == ()
        assert report.version == rewardkit.__version__
        assert report.wall_seconds >= 0.0
        assert report.samples_per_second > 0.0

    def test_tau_is_library_value_times_one_hundred_exactly(self):
        store, manifest, model, gold = pointwise_world(seed=5)
        noisy = RewardHeadModel(
            w=np.zeros(model.dim), b0=0.0, dim=model.dim
        )
        rng = np.random.default_rng(8)
        w = rng.standard_normal(model.dim)
        scored = RewardHeadModel(w=w, b0=0.1, dim=model.dim)
        report = evaluate(scored, store, manifest, mode="pointwise")
        Z = store.gather([rec.id for rec in manifest.records])
        pred = Z @ w + 0.1
        assert metric_dict(report)["tau_b_x100"] == 100.0 * kendall_tau_b(pred, gold)
        assert metric_dict(report)["tau_c_x100"] == 100.0 * kendall_tau_c(pred, gold)
        del noisy

    def test_constant_predictor_reports_null_with_warning(self):
        store, manifest, model, _ = pointwise_world()
        flat = RewardHeadModel(w=np.zeros(model.dim), b0=0.5, dim=model.dim)
        report = evaluate(flat, store, manifest, mode="pointwise")
        assert metric_dict(report) == {"tau_b_x100": None, "tau_c_x100": None}
        assert report.warnings

    def test_gold_dimension_resolution(self):
        store, manifest, model, _ = multi_world()
        head = RewardHeadModel(w=np.zeros(5), b0=0.0, dim=5)
        with pytest.raises(ValueError):
            evaluate(head, store, manifest, mode="pointwise")
        report = evaluate(
            head, store, manifest, mode="pointwise", gold_dim="fidelity"
        )
        assert report.n_samples == len(manifest.records)
        with pytest.raises(KeyError):
            evaluate(head, store, manifest, mode="pointwise", gold_dim="nope")


class TestPairwise:
    def test_perfect_and_inverted_predictors(self):
        store, pairs, model = pairwise_world()
        report = evaluate(model, store, pairs, mode="pairwise")
        assert metric_dict(report) == {"pairwise_acc": 100.0}
        inverted = RewardHeadModel(w=-model.w, b0=0.0, dim=model.dim)
        flipped = evaluate(inverted, store, pairs, mode="pairwise")
        assert metric_dict(flipped) == {"pairwise_acc": 0.0}

    def test_sample_count_is_pair_count(self):
        store, pairs, model = pairwise_world()
        report = evaluate(model, store, pairs, mode="pairwise")
        assert report.n_samples == len(pairs.records) // 2

    def test_tie_rule_flag(self):
        store, pairs, model = pairwise_world()
        flat = RewardHeadModel(w=np.zeros(model.dim), b0=1.0, dim=model.dim)
        strict = evaluate(flat, store, pairs, mode="pairwise")
        half = evaluate(flat, store, pairs, mode="pairwise", tie_rule="half")
        assert metric_dict(strict) == {"pairwise_acc": 0.0}
        assert metric_dict(half) == {"pairwise_acc": 50.0}

    def test_requires_pairwise_manifest(self):
        store, manifest, model, _ = pointwise_world()
        with pytest.raises(ValueError, match="pairwise"):
            evaluate(model, store, manifest, mode="pairwise")


class TestMulti:
    def test_gold_threshold_default_constant(self):
        assert DEFAULT_BINARY_GOLD_THRESHOLD == 2.0

    def test_binary_rows_and_average(self):
        store, manifest, model, Y = multi_world()
        margins = np.abs(Y - DEFAULT_BINARY_GOLD_THRESHOLD).min()
        assert margins > 1e-3, "fixture must keep gold away from the threshold"
        report = evaluate(model, store, manifest, mode="multi")
        rows = metric_dict(report)
        assert list(rows) == ["fidelity", "detail", "Avg"]
        assert rows["fidelity"] == 100.0
        assert rows["detail"] == 100.0
        assert rows["Avg"] == 100.0
        assert report.n_samples == len(manifest.records)

    def test_average_is_mean_of_dimension_rows(self):
        store, manifest, model, _ = multi_world()
        skewed = RidgeModel(
            W=np.zeros_like(model.W),
            b=np.array([3.0, 1.5]),
            alpha=1.0,
            dimensions=model.dimensions,
        )
        report = evaluate(skewed, store, manifest, mode="multi")
        rows = metric_dict(report)
        expected = float(np.mean([rows["fidelity"], rows["detail"]]))
        assert rows["Avg"] == expected

    def test_median_gold_rule(self):
        store, manifest, model, Y = multi_world()
        report = evaluate(model, store, manifest, mode="multi", gold_rule="median")
        rows = metric_dict(report)
        medians = np.median(Y, axis=0)
        spacing = min(
            np.abs(Y[:, 0] - medians[0])[np.abs(Y[:, 0] - medians[0]) > 0].min(),
            np.abs(Y[:, 1] - medians[1])[np.abs(Y[:, 1] - medians[1]) > 0].min(),
        )
        assert spacing > 1e-4, "fixture must keep gold away from its median"
        assert rows["Avg"] == 100.0

    def test_explicit_thresholds_override_defaults(self):
        store, manifest, model, _ = multi_world()
        # Everything sits above 1.0, so both binarizations become constant
        # True and every thresholded prediction agrees.
        report = evaluate(
            model,
            store,
            manifest,
            mode="multi",
            gold_threshold=1.05,
            pred_threshold=1.05,
        )
        assert metric_dict(report)["Avg"] == 100.0

    def test_level_accuracy_rows(self):
        store, manifest, _, _ = multi_world()
        levels = (1.0, 2.0, 3.0, 4.0)
        scaled = DatasetManifest(
            kind=manifest.kind,
            dimensions=manifest.dimensions,
            scales={
                name: ScoreScale(1.0, 4.0, admissible_levels=levels)
                for name in manifest.dimensions.names
            },
            records=tuple(
                SampleRecord(
                    id=rec.id,
                    image_ref=rec.image_ref,
                    candidate=rec.candidate,
                    scores={"fidelity": 2.0, "detail": 3.0},
                )
                for rec in manifest.records
            ),
        )
        # Constant heads: 2.5 snaps down to level 2, 3.2 snaps to 3.
        head = RidgeModel(
            W=np.zeros((2, 5)),
            b=np.array([2.5, 3.2]),
            alpha=1.0,
            dimensions=manifest.dimensions,
        )
        report = evaluate(head, store, scaled, mode="multi", accuracy="level")
        rows = metric_dict(report)
        assert rows == {"fidelity": 100.0, "detail": 100.0, "Avg": 100.0}

    def test_level_accuracy_requires_admissible_levels(self):
        store, manifest, model, _ = multi_world()
        with pytest.raises(ValueError, match="levels"):
            evaluate(model, store, manifest, mode="multi", accuracy="level")

    def test_model_dimensions_must_match_manifest(self):
        store, manifest, model, _ = multi_world()
        renamed = RidgeModel(
            W=model.W,
            b=model.b,
            alpha=model.alpha,
            dimensions=DimensionSet(("a", "b")),
        )
        with pytest.raises(ValueError, match="dimension"):
            evaluate(renamed, store, manifest, mode="multi")

    def test_rejects_pairwise_manifest(self):
        store, pairs, _ = pairwise_world()
        head = RidgeModel(
            W=np.zeros((1, 6)),
            b=np.zeros(1),
            alpha=1.0,
            dimensions=DimensionSet(("overall",)),
        )
        with pytest.raises(ValueError, match="pairwise"):
            evaluate(head, store, pairs, mode="multi")

    def test_reserved_average_row_name(self):
        store, manifest, model, _ = multi_world(n=12)
        dims = DimensionSet(("Avg", "detail"))
        clashing = DatasetManifest(
            kind=manifest.kind,
            dimensions=dims,
            scales={name: ScoreScale(1.0, 4.0) for name in dims.names},
            records=tuple(
                SampleRecord(
                    id=rec.id,
                    image_ref=rec.image_ref,
                    candidate=rec.candidate,
                    scores={"Avg": 2.0, "detail": 2.0},
                )
                for rec in manifest.records
            ),
        )
        head = RidgeModel(
            W=np.zeros((2, 5)), b=np.zeros(2), alpha=1.0, dimensions=dims
        )
        with pytest.raises(ValueError, match="Avg"):
            evaluate(head, store, clashing, mode="multi")


class TestReportPlumbing:
    def test_unknown_mode_is_rejected(self):
        store, manifest, model, _ = pointwise_world()
        with pytest.raises(ValueError, match="mode"):
            evaluate(model, store, manifest, mode="ranked")

    def test_metric_values_are_reproducible(self):
        store, manifest, model, _ = pointwise_world(seed=11)
        a = evaluate(model, store, manifest, mode="pointwise", config_hash="c0ffee")
        b = evaluate(model, store, manifest, mode="pointwise", config_hash="c0ffee")
        da, db = report_to_dict(a), report_to_dict(b)
        for key in ("wall_seconds", "samples_per_second"):
            da.pop(key), db.pop(key)
        assert da == db
        assert a.config_hash == "c0ffee"

    def test_dataset_id_defaults_to_fingerprint(self):
        store, manifest, model, _ = pointwise_world()
        report = evaluate(model, store, manifest, mode="pointwise")
        assert report.dataset_id == manifest.fingerprint()
        named = evaluate(
            model, store, manifest, mode="pointwise", dataset_id="flickr-dev"
        )
        assert named.dataset_id == "flickr-dev"

    def test_report_dict_layout(self):
        store, manifest, model, _ = pointwise_world()
        doc = report_to_dict(evaluate(model, store, manifest, mode="pointwise"))
        assert list(doc) == [
            "dataset_id",
            "mode",
            "n_samples",
            "metrics",
            "wall_seconds",
            "samples_per_second",
            "config_hash",
            "version",
            "warnings",
        ]
        assert doc["metrics"] == {"tau_b_x100": 100.0, "tau_c_x100": 100.0}

    def test_json_rendering_is_one_line(self):
        store, manifest, model, _ = pointwise_world()
        report = evaluate(model, store, manifest, mode="pointwise")
        text = render_report(report, "json")
        assert text.endswith("\n") and text.count("\n") == 1
        assert json.loads(text)["mode"] == "pointwise"

    def test_csv_and_md_renderings(self):
        store, manifest, model, _ = pointwise_world()
        report = evaluate(model, store, manifest, mode="pointwise")
        csv_text = render_report(report, "csv")
        lines = csv_text.strip().splitlines()
        assert lines[0] == "key,value"
        assert any(line.startswith("tau_b_x100,") for line in lines)
        md_text = render_report(report, "md")
        assert md_text.startswith("| key | value |")
        with pytest.raises(ValueError, match="format"):
            render_report(report, "xml")

    def test_table_shows_null_as_na(self):
        store, manifest, model, _ = pointwise_world()
        flat = RewardHeadModel(w=np.zeros(model.dim), b0=0.0, dim=model.dim)
        table = format_table(evaluate(flat, store, manifest, mode="pointwise"))
        assert "tau_b_x100" in table
        assert "n/a" in table
        assert "warning" in table


class TestBench:
    def test_reward_head_timing_report(self):
        store, manifest, model, _ = pointwise_world(n=20)
        report = bench(model, store, repetitions=2, config_hash="abc")
        assert isinstance(report, BenchReport)
        assert report.count == 20
        assert report.repetitions == 2
        assert report.warmup == 1
        assert report.mean_latency_s > 0.0
        assert report.p95_latency_s > 0.0
        assert report.samples_per_second > 0.0
        assert report.config_hash == "abc"
        doc = report_to_dict(report)
        assert doc["count"] == 20
        assert "| key | value |" in render_report(report, "md")
        assert "mean_latency_s" in format_table(report)

    def test_ridge_model_is_supported(self):
        store, manifest, model, _ = multi_world(n=10)
        report = bench(model, store, repetitions=1)
        assert report.count == 10

    def test_repetitions_must_be_positive(self):
        store, manifest, model, _ = pointwise_world(n=5)
        with pytest.raises(ValueError):
            bench(model, store, repetitions=0)

    def test_empty_store_is_rejected(self):
        _, manifest, model, _ = pointwise_world(n=5)
        empty = store_from_entries([])
        with pytest.raises(EmptyInputError):
            bench(model, empty, repetitions=1)
