"""Evaluation harness: turns models, stores, and manifests into reports.

Three evaluation modes mirror the three dataset kinds.  Pointwise mode
reports rank correlations against one gold dimension, pairwise mode
reports preference accuracy over chosen/rejected pairs, and multi mode
reports one thresholded (or level-snapped) accuracy row per dimension
plus their average.

Reporting conventions live here, not in the metric library: tau values
are multiplied by 100 for comparability with accuracies, and degenerate
correlation inputs produce a null metric plus a warning instead of a
failure so batch sweeps survive pathological models.  Timing numbers
are measured wall-clock and are the only non-reproducible report
fields.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .datamodel import PairRole, ManifestKind
from .dataset_io import DatasetManifest, binarize_median, binarize_threshold
from .embedding_store import EmbeddingStore
from .errors import DegenerateCorrelationError, EmptyInputError
from .metrics import (
    PairOutcome,
    binary_accuracy,
    kendall_tau_b,
    kendall_tau_c,
    level_accuracy,
    pairwise_accuracy,
)
from .multi_head import RidgeModel, predict_multi
from .reward_head import RewardHeadModel, predict_reward
from .validation import check_positive_int

__all__ = [
    "DEFAULT_BINARY_GOLD_THRESHOLD",
    "EVAL_MODES",
    "EvalReport",
    "BenchReport",
    "evaluate",
    "bench",
    "report_to_dict",
    "render_report",
    "format_table",
]

# Gold-label cut for thresholded binary accuracy, stated on the 1-4
# judgment scale: scores strictly above 2 count as acceptable.
DEFAULT_BINARY_GOLD_THRESHOLD = 2.0

EVAL_MODES = ("pointwise", "pairwise", "multi")

_AVG_ROW = "Avg"


@dataclass(frozen=True)
class EvalReport:
    """One evaluation run: metric rows plus provenance and throughput.

    ``metrics`` is an ordered (name, value) tuple; a ``None`` value
    marks a metric that could not be computed, explained in
    ``warnings``.
    """

    dataset_id: str
    mode: str
    metrics: tuple[tuple[str, float | None], ...]
    n_samples: int
    wall_seconds: float
    samples_per_second: float
    config_hash: str
    version: str
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class BenchReport:
    """Per-sample scoring latency over repeated passes of a store."""

    count: int
    repetitions: int
    warmup: int
    mean_latency_s: float
    p95_latency_s: float
    samples_per_second: float
    config_hash: str
    version: str


def _gold_dimension(manifest: DatasetManifest, gold_dim: str | None) -> str:
    if gold_dim is None:
        if manifest.dimensions.size == 1:
            return manifest.dimensions.names[0]
        if "overall" in manifest.dimensions.names:
            return "overall"
        raise ValueError("gold_dim is required for multi-dimension manifests")
    if gold_dim not in manifest.dimensions.names:
        raise KeyError(f"unknown dimension {gold_dim!r}")
    return gold_dim


def _gather(store: EmbeddingStore, manifest: DatasetManifest) -> np.ndarray:
    if not manifest.records:
        raise EmptyInputError("manifest has no records to evaluate")
    return store.gather([rec.id for rec in manifest.records])


def _finish(
    dataset_id, mode, metrics, n_samples, t0, config_hash, warnings
) -> EvalReport:
    wall = time.perf_counter() - t0
    return EvalReport(
        dataset_id=dataset_id,
        mode=mode,
        metrics=tuple(metrics),
        n_samples=n_samples,
        wall_seconds=wall,
        samples_per_second=n_samples / max(wall, 1e-9),
        config_hash=config_hash,
        version=__version__,
        warnings=tuple(warnings),
    )


def evaluate(
    model,
    store: EmbeddingStore,
    manifest: DatasetManifest,
    mode: str,
    *,
    gold_dim: str | None = None,
    tie_rule: str = "strict",
    accuracy: str = "binary",
    gold_rule: str = "threshold",
    gold_threshold: float | None = None,
    pred_threshold: float | None = None,
    config_hash: str = "",
    dataset_id: str | None = None,
) -> EvalReport:
    """Score the model over the store and report the mode's metrics.

    Mode-specific arguments are ignored by the other modes.  Pointwise
    needs a scalar head and a scored manifest (``gold_dim`` picks the
    gold column); pairwise needs a scalar head and a pairwise manifest;
    multi needs a multi-output head whose dimensions match the
    manifest.

    Multi-mode defaults: gold labels come from a strict threshold
    (``DEFAULT_BINARY_GOLD_THRESHOLD``) and predictions, which live on
    the same scale, are cut at the same value.  Under
    ``gold_rule="median"`` each side is cut at its own median instead,
    so the comparison is between top halves.
    """
    if mode not in EVAL_MODES:
        raise ValueError(f"mode must be one of {EVAL_MODES}, got {mode!r}")
    if dataset_id is None:
        dataset_id = manifest.fingerprint()
    if mode == "pointwise":
        return _eval_pointwise(model, store, manifest, gold_dim, config_hash, dataset_id)
    if mode == "pairwise":
        return _eval_pairwise(model, store, manifest, tie_rule, config_hash, dataset_id)
    return _eval_multi(
        model, store, manifest, accuracy, gold_rule,
        gold_threshold, pred_threshold, config_hash, dataset_id,
    )


def _eval_pointwise(model, store, manifest, gold_dim, config_hash, dataset_id):
    if manifest.kind is ManifestKind.PAIRWISE:
        raise ValueError("pointwise evaluation needs scored records, not a pairwise manifest")
    name = _gold_dimension(manifest, gold_dim)
    t0 = time.perf_counter()
    Z = _gather(store, manifest)
    pred = predict_reward(model, Z)
    gold = np.array([rec.scores[name] for rec in manifest.records], dtype=np.float64)
    metrics = []
    warnings = []
    for label, fn in (("tau_b_x100", kendall_tau_b), ("tau_c_x100", kendall_tau_c)):
        try:
            metrics.append((label, 100.0 * fn(pred, gold)))
        except DegenerateCorrelationError as exc:
            metrics.append((label, None))
            warnings.append(f"{label}: {exc}")
    return _finish(
        dataset_id, "pointwise", metrics, len(manifest.records), t0, config_hash, warnings
    )


def _eval_pairwise(model, store, manifest, tie_rule, config_hash, dataset_id):
    if manifest.kind is not ManifestKind.PAIRWISE:
        raise ValueError("pairwise evaluation requires a pairwise manifest")
    t0 = time.perf_counter()
    Z = _gather(store, manifest)
    scores = predict_reward(model, Z)
    by_pair: dict[str, dict[PairRole, float]] = {}
    for rec, score in zip(manifest.records, scores):
        by_pair.setdefault(rec.pair_id, {})[rec.pair_role] = float(score)
    outcomes = [
        PairOutcome(
            chosen_score=roles[PairRole.CHOSEN],
            rejected_score=roles[PairRole.REJECTED],
        )
        for _, roles in sorted(by_pair.items())
    ]
    acc = pairwise_accuracy(outcomes, tie_rule=tie_rule)
    return _finish(
        dataset_id, "pairwise", [("pairwise_acc", acc)], len(outcomes), t0, config_hash, []
    )


def _eval_multi(
    model, store, manifest, accuracy, gold_rule, gold_threshold,
    pred_threshold, config_hash, dataset_id,
):
    if manifest.kind is ManifestKind.PAIRWISE:
        raise ValueError("multi evaluation needs scored records, not a pairwise manifest")
    if accuracy not in ("binary", "level"):
        raise ValueError(f"accuracy must be 'binary' or 'level', got {accuracy!r}")
    if gold_rule not in ("threshold", "median"):
        raise ValueError(f"gold_rule must be 'threshold' or 'median', got {gold_rule!r}")
    names = manifest.dimensions.names
    if _AVG_ROW in names:
        raise ValueError(f"dimension name {_AVG_ROW!r} is reserved for the average row")
    if not isinstance(model, RidgeModel):
        raise ValueError("multi evaluation requires a multi-output head")
    if model.dimensions.names != names:
        raise ValueError(
            f"model dimensions {model.dimensions.names} do not match "
            f"manifest dimensions {names}"
        )
    t0 = time.perf_counter()
    Z = _gather(store, manifest)
    preds = predict_multi(model, Z)
    gold = np.array(
        [[rec.scores[name] for name in names] for rec in manifest.records],
        dtype=np.float64,
    )
    rows: list[tuple[str, float | None]] = []
    for k, name in enumerate(names):
        scale = manifest.scales[name]
        if accuracy == "level":
            if scale.admissible_levels is None:
                raise ValueError(f"dimension {name!r} declares no admissible levels")
            rows.append((name, level_accuracy(preds[:, k], gold[:, k], scale.admissible_levels)))
            continue
        if gold_rule == "median":
            labels = binarize_median(gold[:, k])
            cut = float(np.median(preds[:, k])) if pred_threshold is None else pred_threshold
        else:
            thr = DEFAULT_BINARY_GOLD_THRESHOLD if gold_threshold is None else gold_threshold
            labels = binarize_threshold(gold[:, k], thr)
            # Predictions live on the same scale as gold, so they get
            # the same cut unless the caller separates the two.
            cut = thr if pred_threshold is None else pred_threshold
        rows.append((name, binary_accuracy(preds[:, k], labels, cut)))
    rows.append((_AVG_ROW, float(np.mean([value for _, value in rows]))))
    return _finish(
        dataset_id, "multi", rows, len(manifest.records), t0, config_hash, []
    )


def bench(
    model,
    store: EmbeddingStore,
    repetitions: int = 3,
    warmup: int = 1,
    config_hash: str = "",
) -> BenchReport:
    """Time single-sample scoring over every store row.

    Runs ``warmup`` unmeasured full passes first, then ``repetitions``
    measured ones; latency statistics cover every measured call.
    """
    check_positive_int(repetitions, "repetitions")
    if not isinstance(warmup, int) or warmup < 0:
        raise ValueError(f"warmup must be a non-negative integer, got {warmup!r}")
    if store.count == 0:
        raise EmptyInputError("store has no embeddings to score")
    if isinstance(model, RewardHeadModel):
        predict_one = predict_reward
    elif isinstance(model, RidgeModel):
        predict_one = predict_multi
    else:
        raise ValueError(f"unsupported model type {type(model).__name__}")
    rows = [row for _, row in store.entries()]
    for _ in range(warmup):
        for row in rows:
            predict_one(model, row)
    latencies = np.empty(repetitions * len(rows))
    i = 0
    for _ in range(repetitions):
        for row in rows:
            t0 = time.perf_counter()
            predict_one(model, row)
            latencies[i] = time.perf_counter() - t0
            i += 1
    total = float(latencies.sum())
    return BenchReport(
        count=len(rows),
        repetitions=repetitions,
        warmup=warmup,
        mean_latency_s=float(latencies.mean()),
        p95_latency_s=float(np.percentile(latencies, 95)),
        samples_per_second=latencies.size / max(total, 1e-12),
        config_hash=config_hash,
        version=__version__,
    )


def report_to_dict(report) -> dict:
    """Flatten a report for machine consumption; key order is stable."""
    if isinstance(report, EvalReport):
        return {
            "dataset_id": report.dataset_id,
            "mode": report.mode,
            "n_samples": report.n_samples,
            "metrics": dict(report.metrics),
            "wall_seconds": report.wall_seconds,
            "samples_per_second": report.samples_per_second,
            "config_hash": report.config_hash,
            "version": report.version,
            "warnings": list(report.warnings),
        }
    if isinstance(report, BenchReport):
        return {
            "count": report.count,
            "repetitions": report.repetitions,
            "warmup": report.warmup,
            "mean_latency_s": report.mean_latency_s,
            "p95_latency_s": report.p95_latency_s,
            "samples_per_second": report.samples_per_second,
            "config_hash": report.config_hash,
            "version": report.version,
        }
    raise TypeError(f"not a report: {type(report).__name__}")


def _flat_rows(report, none_text: str) -> list[tuple[str, str]]:
    doc = report_to_dict(report)
    rows = []
    for key, value in doc.items():
        if key == "metrics":
            for name, metric in value.items():
                rows.append((name, none_text if metric is None else str(metric)))
        elif key == "warnings":
            rows.append((key, "; ".join(value)))
        else:
            rows.append((key, str(value)))
    return rows


def render_report(report, fmt: str) -> str:
    """Serialize a report: one JSON line, key/value CSV, or a Markdown table."""
    if fmt == "json":
        return json.dumps(report_to_dict(report)) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["key", "value"])
        writer.writerows(_flat_rows(report, none_text=""))
        return buf.getvalue()
    if fmt == "md":
        lines = ["| key | value |", "| --- | --- |"]
        lines += [f"| {k} | {v} |" for k, v in _flat_rows(report, none_text="n/a")]
        return "\n".join(lines) + "\n"
    raise ValueError(f"format must be json, csv, or md, got {fmt!r}")


def format_table(report) -> str:
    """Fixed-width human-readable view of a report."""
    rows = [
        (key, value)
        for key, value in _flat_rows(report, none_text="n/a")
        if key != "warnings"
    ]
    width = max(len(key) for key, _ in rows)
    lines = [f"{key:<{width}}  {value}" for key, value in rows]
    if isinstance(report, EvalReport):
        lines += [f"warning: {w}" for w in report.warnings]
    return "\n".join(lines) + "\n"
