"""Release acceptance gate.

One test per criterion, each printing a single pass or fail line with
the measured quantity, so a verbose run doubles as a checklist.  These
tests intentionally overlap the unit suites: they pin the contract the
package ships under, at the stated tolerances, end to end.
"""

import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

import oracles
from rewardkit.datamodel import DimensionSet, ManifestKind, SampleRecord, ScoreScale
from rewardkit.dataset_io import (
    DatasetManifest,
    reformulate_to_pairwise,
    save_manifest,
)
from rewardkit.embedding_store import (
    ToyFeaturizerConfig,
    featurize_manifest,
    read_store,
    store_from_entries,
    write_store,
)
from rewardkit.harness import DEFAULT_BINARY_GOLD_THRESHOLD, evaluate
from rewardkit.metrics import (
    PairOutcome,
    kendall_tau_b,
    kendall_tau_c,
    pairwise_accuracy,
)
from rewardkit.multi_head import DEFAULT_ALPHA_GRID, fit_ridge
from rewardkit.reward_head import (
    RewardHeadModel,
    TrainConfig,
    init_head,
    init_std,
    mse_grad,
    mse_loss,
    predict_reward,
    train_reward,
)
from worlds import multi_world, pointwise_world


def _line(name: str, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _nonconstant(draw, rng):
    while True:
        v = draw(rng)
        if len(np.unique(v)) > 1:
            return v


def _pointwise_manifest(ids, refs, cands, scores, hi=1.0):
    dims = DimensionSet(("overall",))
    records = tuple(
        SampleRecord(id=i, image_ref=r, candidate=c, scores={"overall": float(s)})
        for i, r, c, s in zip(ids, refs, cands, scores)
    )
    return DatasetManifest(
        kind=ManifestKind.POINTWISE,
        dimensions=dims,
        scales={"overall": ScoreScale(0.0, hi)},
        records=records,
    )


def test_tau_matches_bruteforce_on_random_vectors():
    rng = np.random.default_rng(20260801)
    start = time.perf_counter()
    worst = 0.0
    for trial in range(1000):
        n = int(rng.integers(2, 201))
        if trial % 2 == 0:
            draw = lambda r: r.integers(0, 5, size=n).astype(float)
        else:
            draw = lambda r: r.standard_normal(n)
        x = _nonconstant(draw, rng)
        y = _nonconstant(draw, rng)
        worst = max(worst, abs(kendall_tau_b(x, y) - oracles.tau_b_bruteforce(x, y)))
        worst = max(worst, abs(kendall_tau_c(x, y) - oracles.tau_c_bruteforce(x, y)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 30.0
    _line(
        "tau oracle equivalence",
        ok,
        f"max |delta| {worst:.2e} over 1000 vectors in {elapsed:.1f}s",
    )


def test_tau_hand_checked_fixtures():
    deltas = (
        abs(kendall_tau_b([1, 2, 3, 4], [1, 3, 2, 4]) - 4 / 6),
        abs(kendall_tau_b([1, 2, 2, 3], [1, 2, 3, 3]) - 0.8),
        abs(kendall_tau_c([1, 1, 2, 2], [1, 2, 1, 2]) - 0.0),
    )
    worst = max(deltas)
    _line("tau hand-checked fixtures", worst <= 1e-12, f"max |delta| {worst:.2e}")


def test_ridge_matches_iterative_minimizer():
    rng = np.random.default_rng(4)
    worst_rel = 0.0
    worst_grad = 0.0
    for alpha in DEFAULT_ALPHA_GRID:
        d = int(rng.integers(8, 65))
        n = int(rng.integers(4 * d, 501))
        k = int(rng.integers(1, 9))
        Z = rng.standard_normal((n, d))
        Y = rng.standard_normal((n, k))
        model = fit_ridge(Z, Y, alpha)
        f_lib = oracles.ridge_objective_reference(model.W, model.b, Z, Y, alpha)
        W_ref, b_ref = oracles.ridge_gradient_descent(Z, Y, alpha)
        f_ref = oracles.ridge_objective_reference(W_ref, b_ref, Z, Y, alpha)
        worst_rel = max(worst_rel, abs(f_lib - f_ref) / f_ref)
        resid = Y - Z @ model.W.T - model.b[None, :]
        grad_w = -2.0 * resid.T @ Z + 2.0 * alpha * model.W
        grad_b = -2.0 * resid.sum(axis=0)
        worst_grad = max(worst_grad, float(np.abs(grad_w).max()), float(np.abs(grad_b).max()))
    ok = worst_rel <= 1e-8 and worst_grad <= 1e-8
    _line(
        "ridge closed form vs iterative oracle",
        ok,
        f"max rel objective gap {worst_rel:.2e}, max gradient {worst_grad:.2e}",
    )


def test_minibatch_training_reaches_least_squares_optimum():
    rng = np.random.default_rng(7)
    n, d = 1000, 64
    Z = rng.standard_normal((n, d))
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    w_star = rng.standard_normal(d)
    raw = Z @ w_star + 0.3
    h = (raw - raw.min()) / (raw.max() - raw.min())
    ids = [f"s{i:04d}" for i in range(n)]
    manifest = _pointwise_manifest(
        ids, [f"img/{i}.png" for i in range(n)], [f"c{i}" for i in range(n)], h
    )
    store = store_from_entries(list(zip(ids, Z)))
    start = time.perf_counter()
    cfg = TrainConfig(learning_rate=1.0, epochs=100, batch_size=8, grad_accum=4, seed=42)
    model, _ = train_reward(store, manifest, cfg)
    elapsed = time.perf_counter() - start
    w_opt, b_opt = oracles.least_squares_affine(Z, h)
    optimum = float(np.mean((Z @ w_opt + b_opt - h) ** 2))
    gap = mse_loss(model, Z, h) - optimum
    ok = gap <= 1e-4 and elapsed < 60.0
    _line(
        "minibatch head reaches normal-equations optimum",
        ok,
        f"MSE gap {gap:.2e} in {elapsed:.1f}s",
    )


def test_mse_gradient_matches_central_differences():
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 51))
        d = int(rng.integers(1, 17))
        Z = rng.standard_normal((n, d))
        h = rng.standard_normal(n)
        w = rng.standard_normal(d)
        b0 = float(rng.standard_normal())
        model = RewardHeadModel(w=w, b0=b0, dim=d)
        gw, gb = mse_grad(model, Z, h)
        analytic = np.concatenate([gw, [gb]])

        def func(theta):
            probe = RewardHeadModel(w=theta[:d], b0=float(theta[d]), dim=d)
            return mse_loss(probe, Z, h)

        numeric = oracles.finite_difference_gradient(func, np.concatenate([w, [b0]]))
        rel = np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric)
        worst = max(worst, float(rel))
    _line(
        "analytic MSE gradient vs central differences",
        worst < 1e-5,
        f"max relative error {worst:.2e} over 100 instances",
    )


def test_protocol_constants():
    std_ok = all(init_std(d) == 1.0 / math.sqrt(d + 1) for d in (1, 7, 64, 4096))
    seeded = init_head(16, 3)
    init_ok = np.array_equal(
        seeded.w, np.random.default_rng(3).normal(0.0, init_std(16), 16)
    )
    grid_ok = DEFAULT_ALPHA_GRID == (0.001, 0.01, 0.1, 1.0, 10.0, 100.0)
    threshold_ok = DEFAULT_BINARY_GOLD_THRESHOLD == 2.0

    store, manifest, model, gold = pointwise_world(n=30, seed=2)
    report = evaluate(model, store, manifest, "pointwise")
    Z = store.gather([rec.id for rec in manifest.records])
    pred = predict_reward(model, Z)
    scaled_ok = dict(report.metrics)["tau_b_x100"] == 100.0 * kendall_tau_b(pred, gold)

    ok = std_ok and init_ok and grid_ok and threshold_ok and scaled_ok
    _line(
        "protocol constants",
        ok,
        f"init std {std_ok}, seeded init {init_ok}, alpha grid {grid_ok}, "
        f"binary threshold {threshold_ok}, tau scaled x100 {scaled_ok}",
    )


def _random_words(rng, k):
    letters = np.array(list("abcdefghijklmnopqrstuvwxyz"))
    return " ".join(
        "".join(rng.choice(letters, size=int(rng.integers(3, 9)))) for _ in range(k)
    )


def test_synthetic_pipeline_end_to_end():
    rng = np.random.default_rng(11)
    start = time.perf_counter()
    cfg = ToyFeaturizerConfig(dim=128, seed=5)
    w_lin = rng.standard_normal(128)

    def build(n, tag, group):
        ids = [f"{tag}{i:05d}" for i in range(n)]
        refs = [f"img/{tag}{i // group:05d}.png" for i in range(n)]
        cands = [_random_words(rng, 6) for _ in range(n)]
        probe = _pointwise_manifest(ids, refs, cands, np.zeros(n))
        Z = featurize_manifest(probe, cfg).gather(ids)
        raw = Z @ w_lin + rng.normal(0.0, 0.01, size=n)
        h = (raw - raw.min()) / (raw.max() - raw.min())
        manifest = _pointwise_manifest(ids, refs, cands, h)
        return manifest, store_from_entries(list(zip(ids, Z))), Z

    train_man, train_store, _ = build(4000, "tr", 1)
    train_cfg = TrainConfig(
        learning_rate=0.25, epochs=60, batch_size=8, grad_accum=4, seed=42
    )
    model, _ = train_reward(train_store, train_man, train_cfg)

    point_man, point_store, _ = build(300, "po", 1)
    tau = dict(evaluate(model, point_store, point_man, "pointwise").metrics)[
        "tau_b_x100"
    ]

    pair_base_man, _, pair_Z = build(500, "pa", 4)
    pairs = reformulate_to_pairwise(pair_base_man)
    base_rows = {rec.id: pair_Z[i] for i, rec in enumerate(pair_base_man.records)}
    pair_store = store_from_entries(
        [(rec.id, base_rows[rec.id.rsplit("@", 1)[0]]) for rec in pairs.records]
    )
    pair_report = evaluate(model, pair_store, pairs, "pairwise")
    pacc = dict(pair_report.metrics)["pairwise_acc"]
    elapsed = time.perf_counter() - start

    ok = tau >= 90.0 and pacc >= 95.0 and pair_report.n_samples == 500 and elapsed < 120.0
    _line(
        "end-to-end synthetic pipeline",
        ok,
        f"held-out tau_b x100 {tau:.1f} (>= 90), P-Acc {pacc:.1f} (>= 95) "
        f"on {pair_report.n_samples} pairs in {elapsed:.1f}s",
    )


def test_rank_metrics_invariant_under_monotone_transforms():
    rng = np.random.default_rng(31)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(5, 40))
        draw = lambda r: r.integers(0, 10, size=n).astype(float)
        x = _nonconstant(draw, rng)
        y = _nonconstant(draw, rng)
        tx = oracles.monotone_relabel(x, rng)
        worst = max(worst, abs(kendall_tau_b(x, y) - kendall_tau_b(tx, y)))
        worst = max(worst, abs(kendall_tau_c(x, y) - kendall_tau_c(tx, y)))

        k = int(rng.integers(1, 30))
        chosen = rng.integers(0, 10, size=k).astype(float)
        rejected = rng.integers(0, 10, size=k).astype(float)
        before = pairwise_accuracy(
            [PairOutcome(c, r) for c, r in zip(chosen, rejected)]
        )
        relabeled = oracles.monotone_relabel(np.concatenate([chosen, rejected]), rng)
        after = pairwise_accuracy(
            [PairOutcome(c, r) for c, r in zip(relabeled[:k], relabeled[k:])]
        )
        worst = max(worst, abs(before - after))
    _line(
        "rank metrics invariant under monotone transforms",
        worst == 0.0,
        f"max |change| {worst} over 200 trials",
    )


def test_store_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(17)
    palette = "abXyZ09_é世界"
    failures = 0
    for trial in range(100):
        if trial == 0:
            dim, count = 1, 3
        elif trial == 1:
            dim, count = 0, 0
        else:
            dim = int(rng.integers(1, 49))
            count = int(rng.integers(0, 13))
        entries = []
        for i in range(count):
            suffix = "".join(rng.choice(list(palette), size=4))
            entries.append((f"{trial}-{i}-{suffix}", rng.standard_normal(dim)))
        first = tmp_path / f"a{trial}.mtap"
        second = tmp_path / f"b{trial}.mtap"
        write_store(first, entries)
        loaded = read_store(first)
        write_store(second, loaded)
        if first.read_bytes() != second.read_bytes():
            failures += 1
    _line(
        "store write/read round trip",
        failures == 0,
        f"{failures} byte mismatches over 100 stores",
    )


def _run_cli(cwd, *args):
    proc = subprocess.run(
        [sys.executable, "-m", "rewardkit", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
    )
    assert proc.returncode == 0, f"{args}: {proc.stderr}"
    return proc.stdout


def _pipeline_artifacts(root):
    root.mkdir()
    _, manifest, _, _ = pointwise_world(n=40, seed=6)
    save_manifest(manifest, root / "point.jsonl")
    m_store, m_manifest, _, _ = multi_world(n=48)
    save_manifest(m_manifest, root / "multi.jsonl")
    write_store(root / "multi.mtap", m_store)

    _run_cli(
        root,
        "featurize", "--manifest", "point.jsonl", "--out", "z.mtap",
        "--dim", "32", "--seed", "9",
    )
    _run_cli(
        root,
        "train-reward", "--store", "z.mtap", "--manifest", "point.jsonl",
        "--out", "head.json",
    )
    _run_cli(
        root,
        "eval", "--model", "head.json", "--store", "z.mtap",
        "--manifest", "point.jsonl", "--mode", "pointwise", "--out", "report1.json",
    )
    _run_cli(
        root,
        "train-multi", "--store", "multi.mtap", "--manifest", "multi.jsonl",
        "--out", "ridge.json",
    )
    _run_cli(
        root,
        "eval", "--model", "ridge.json", "--store", "multi.mtap",
        "--manifest", "multi.jsonl", "--mode", "multi", "--out", "report2.json",
    )
    metrics = [
        json.loads((root / name).read_text())["metrics"]
        for name in ("report1.json", "report2.json")
    ]
    models = [
        (root / name).read_bytes() for name in ("z.mtap", "head.json", "ridge.json")
    ]
    return models, metrics


def test_cross_process_determinism(tmp_path):
    models_a, metrics_a = _pipeline_artifacts(tmp_path / "a")
    models_b, metrics_b = _pipeline_artifacts(tmp_path / "b")
    models_ok = models_a == models_b
    metrics_ok = metrics_a == metrics_b
    ok = models_ok and metrics_ok
    _line(
        "cross-process determinism",
        ok,
        f"artifact bytes identical {models_ok}, metric values identical {metrics_ok}",
    )
