"""Command-line entry point.

Subcommands cover the full workflow: validate a manifest, featurize it
into an embedding store, train the scalar or multi-output head, evaluate
a trained model, and benchmark scoring throughput.

Option resolution is layered: built-in defaults, then a ``--config``
JSON file, then explicit flags.  The resolved options (minus output
locations) are hashed into every report so results can be traced back to
the exact configuration that produced them.

Exit status: 0 on success, 1 on usage errors, 2 on data or validation
errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset_io import load_manifest, normalize_manifest_scores
from .embedding_store import (
    ToyFeaturizerConfig,
    featurize_manifest,
    read_store,
    write_store,
)
from .errors import (
    DegenerateCorrelationError,
    DivergenceError,
    RewardKitError,
    SingularSystemError,
    UsageError,
)
from .harness import EVAL_MODES, bench, evaluate, format_table, render_report
from .multi_head import (
    DEFAULT_ALPHA_GRID,
    load_ridge_model,
    save_ridge_model,
    train_multi,
)
from .reward_head import (
    TrainConfig,
    _resolve_target_dim,
    load_reward_head,
    mse_loss,
    save_reward_head,
    train_reward,
)

_FORMATS = ("json", "csv", "md")

# Option values each command starts from.  A None here means "no default";
# the _REQUIRED table decides which of those must be filled in by the
# config file or a flag.
_DEFAULTS: dict[str, dict] = {
    "validate": {"manifest": None, "seed": None, "out": None, "format": "json"},
    "featurize": {
        "manifest": None,
        "out": None,
        "dim": 128,
        "ngram": 3,
        "seed": 0,
        "format": "json",
    },
    "train-reward": {
        "store": None,
        "manifest": None,
        "out": None,
        "learning_rate": 2e-6,
        "epochs": 1,
        "batch_size": 8,
        "grad_accum": 4,
        "seed": 42,
        "init_seed": None,
        "target_dim": None,
        "normalize": True,
        "trace_out": None,
        "format": "json",
    },
    "train-multi": {
        "store": None,
        "manifest": None,
        "out": None,
        "alpha_grid": list(DEFAULT_ALPHA_GRID),
        "selection": "cross_val",
        "n_folds": 5,
        "seed": None,
        "trace_out": None,
        "format": "json",
    },
    "eval": {
        "model": None,
        "store": None,
        "manifest": None,
        "mode": None,
        "gold_dim": None,
        "accuracy": "binary",
        "gold_rule": "threshold",
        "gold_threshold": None,
        "pred_threshold": None,
        "tie_rule": "strict",
        "seed": None,
        "out": None,
        "format": "json",
    },
    "bench": {
        "model": None,
        "store": None,
        "repetitions": 3,
        "warmup": 1,
        "seed": None,
        "out": None,
        "format": "json",
    },
}

_REQUIRED: dict[str, tuple[str, ...]] = {
    "validate": ("manifest",),
    "featurize": ("manifest", "out"),
    "train-reward": ("store", "manifest", "out"),
    "train-multi": ("store", "manifest", "out"),
    "eval": ("model", "store", "manifest", "mode"),
    "bench": ("model", "store"),
}

_CHOICES: dict[str, dict[str, tuple[str, ...]]] = {
    "train-multi": {"selection": ("cross_val", "paper_train_loss")},
    "eval": {
        "mode": EVAL_MODES,
        "accuracy": ("binary", "level"),
        "gold_rule": ("threshold", "median"),
        "tie_rule": ("strict", "half"),
    },
}

# Output destinations do not change what gets computed, so they stay out
# of the configuration hash.
_UNHASHED = ("out", "format", "trace_out")


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports problems as UsageError.

    Stock argparse prints to stderr and exits with status 2, which
    collides with this tool's data-error status.
    """

    def error(self, message):
        raise UsageError(message)


def _u64(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit value")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _nonnegative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be zero or more, got {value}")
    return value


def build_parser() -> _Parser:
    parser = _Parser(prog="rewardkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"rewardkit {__version__}")

    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of option values")
    common.add_argument("--seed", type=_u64, help="random seed")
    common.add_argument("--out", help="output path")
    common.add_argument("--format", choices=_FORMATS, help="report format")

    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", parents=[common], help="check a manifest file")
    p.add_argument("--manifest", help="dataset manifest (JSON lines)")

    p = sub.add_parser("featurize", parents=[common], help="embed a manifest")
    p.add_argument("--manifest", help="dataset manifest (JSON lines)")
    p.add_argument("--dim", type=_positive_int, help="embedding width")
    p.add_argument("--ngram", type=_positive_int, help="character n-gram order")

    p = sub.add_parser("train-reward", parents=[common], help="fit the scalar head")
    p.add_argument("--store", help="embedding store")
    p.add_argument("--manifest", help="dataset manifest (JSON lines)")
    p.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float)
    p.add_argument("--epochs", type=_positive_int)
    p.add_argument("--batch-size", type=_positive_int)
    p.add_argument("--grad-accum", type=_positive_int)
    p.add_argument("--init-seed", type=_u64, help="weight init seed (default: --seed)")
    p.add_argument("--target-dim", help="score dimension to regress on")
    p.add_argument(
        "--normalize",
        action=argparse.BooleanOptionalAction,
        help="map scores onto [0, 1] before training (default: on)",
    )
    p.add_argument("--trace-out", help="write per-step losses here")

    p = sub.add_parser("train-multi", parents=[common], help="fit the multi-score head")
    p.add_argument("--store", help="embedding store")
    p.add_argument("--manifest", help="dataset manifest (JSON lines)")
    p.add_argument("--alpha-grid", help="comma-separated ridge strengths")
    p.add_argument("--selection", choices=_CHOICES["train-multi"]["selection"])
    p.add_argument("--n-folds", type=_positive_int)
    p.add_argument("--trace-out", help="alpha search trace path (default: <out>.trace.jsonl)")

    p = sub.add_parser("eval", parents=[common], help="score a model against gold")
    p.add_argument("--model", help="trained model file")
    p.add_argument("--store", help="embedding store")
    p.add_argument("--manifest", help="dataset manifest (JSON lines)")
    p.add_argument("--mode", choices=EVAL_MODES)
    p.add_argument("--gold-dim", help="gold dimension for pointwise mode")
    p.add_argument("--accuracy", choices=_CHOICES["eval"]["accuracy"])
    p.add_argument("--gold-rule", choices=_CHOICES["eval"]["gold_rule"])
    p.add_argument("--gold-threshold", type=float)
    p.add_argument("--pred-threshold", type=float)
    p.add_argument("--tie-rule", choices=_CHOICES["eval"]["tie_rule"])

    p = sub.add_parser("bench", parents=[common], help="measure scoring latency")
    p.add_argument("--model", help="trained model file")
    p.add_argument("--store", help="embedding store")
    p.add_argument("--repetitions", type=_positive_int)
    p.add_argument("--warmup", type=_nonnegative_int)

    return parser


def _parse_grid(value) -> list[float]:
    if isinstance(value, str):
        parts = [part for part in value.split(",") if part.strip()]
    elif isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        raise UsageError(f"alpha grid must be a comma-separated list, got {value!r}")
    try:
        grid = [float(part) for part in parts]
    except (TypeError, ValueError):
        raise UsageError(f"alpha grid holds a non-numeric entry: {value!r}")
    if not grid:
        raise UsageError("alpha grid is empty")
    return grid


def resolve_options(args: argparse.Namespace) -> dict:
    """Layer defaults, the config file, and flags into one dict."""
    defaults = _DEFAULTS[args.command]
    resolved = dict(defaults)
    if getattr(args, "config", None) is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}")
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}")
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(loaded) - set(defaults))
        if unknown:
            raise UsageError(
                f"unknown config key(s) for {args.command}: {', '.join(unknown)}"
            )
        resolved.update(loaded)
    for key in resolved:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    if "alpha_grid" in resolved:
        resolved["alpha_grid"] = _parse_grid(resolved["alpha_grid"])
    if resolved.get("format") not in _FORMATS:
        raise UsageError(f"format must be one of {', '.join(_FORMATS)}")
    for key, allowed in _CHOICES.get(args.command, {}).items():
        value = resolved.get(key)
        if value is not None and value not in allowed:
            raise UsageError(f"{key} must be one of {', '.join(allowed)}, got {value!r}")
    for name in _REQUIRED[args.command]:
        if resolved.get(name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required for {args.command}")
    return resolved


def config_hash(command: str, resolved: dict) -> str:
    doc = {"command": command}
    doc.update((k, v) for k, v in resolved.items() if k not in _UNHASHED)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _emit(report, opts) -> None:
    table = format_table(report)
    sys.stdout.write(table if table.endswith("\n") else table + "\n")
    if opts["out"] is not None:
        Path(opts["out"]).write_text(render_report(report, opts["format"]), encoding="utf-8")


def _cmd_validate(opts: dict, digest: str) -> int:
    manifest = load_manifest(opts["manifest"])
    rows = [
        ("kind", manifest.kind.value),
        ("dimensions", ", ".join(manifest.dimensions.names)),
        ("records", str(len(manifest.records))),
        ("fingerprint", manifest.fingerprint()),
    ]
    for key, value in rows:
        print(f"{key:<12} {value}")
    return 0


def _cmd_featurize(opts: dict, digest: str) -> int:
    manifest = load_manifest(opts["manifest"])
    cfg = ToyFeaturizerConfig(dim=opts["dim"], seed=opts["seed"], ngram=opts["ngram"])
    store = featurize_manifest(manifest, cfg)
    write_store(opts["out"], store)
    print(f"wrote {store.count} embeddings (dim {store.dim}) to {opts['out']}")
    return 0


def _cmd_train_reward(opts: dict, digest: str) -> int:
    store = read_store(opts["store"])
    manifest = load_manifest(opts["manifest"])
    if opts["normalize"]:
        manifest = normalize_manifest_scores(manifest)
    cfg = TrainConfig(
        learning_rate=opts["learning_rate"],
        epochs=opts["epochs"],
        batch_size=opts["batch_size"],
        grad_accum=opts["grad_accum"],
        seed=opts["seed"],
    )
    model, trace = train_reward(
        store,
        manifest,
        cfg,
        init_seed=opts["init_seed"],
        target_dim=opts["target_dim"],
    )
    name = _resolve_target_dim(manifest, opts["target_dim"])
    Z = store.gather([rec.id for rec in manifest.records])
    h = np.array([rec.scores[name] for rec in manifest.records], dtype=np.float64)
    print(f"final training MSE: {mse_loss(model, Z, h):.6e}")
    save_reward_head(model, opts["out"])
    print(f"saved model to {opts['out']}")
    if opts["trace_out"] is not None:
        lines = "".join(f"{loss!r}\n" for loss in trace)
        Path(opts["trace_out"]).write_text(lines, encoding="utf-8")
        print(f"saved loss trace to {opts['trace_out']}")
    return 0


def _cmd_train_multi(opts: dict, digest: str) -> int:
    store = read_store(opts["store"])
    manifest = load_manifest(opts["manifest"])
    model, trace = train_multi(
        store,
        manifest,
        grid=tuple(opts["alpha_grid"]),
        selection=opts["selection"],
        n_folds=opts["n_folds"],
    )
    save_ridge_model(model, opts["out"])
    trace_out = opts["trace_out"] or f"{opts['out']}.trace.jsonl"
    with open(trace_out, "w", encoding="utf-8", newline="\n") as fh:
        for row in trace:
            fh.write(
                json.dumps(
                    {
                        "alpha": row.alpha,
                        "train_objective": row.train_objective,
                        "cv_mse": row.cv_mse,
                        "selected": row.selected,
                        "error": row.error,
                    }
                )
                + "\n"
            )
    print(f"selected alpha: {model.alpha:g}")
    print(f"saved model to {opts['out']}")
    print(f"saved search trace to {trace_out}")
    return 0


def _cmd_eval(opts: dict, digest: str) -> int:
    if opts["mode"] == "multi":
        model = load_ridge_model(opts["model"])
    else:
        model = load_reward_head(opts["model"])
    store = read_store(opts["store"])
    manifest = load_manifest(opts["manifest"])
    report = evaluate(
        model,
        store,
        manifest,
        opts["mode"],
        gold_dim=opts["gold_dim"],
        tie_rule=opts["tie_rule"],
        accuracy=opts["accuracy"],
        gold_rule=opts["gold_rule"],
        gold_threshold=opts["gold_threshold"],
        pred_threshold=opts["pred_threshold"],
        config_hash=digest,
        dataset_id=Path(opts["manifest"]).stem,
    )
    _emit(report, opts)
    return 0


def _load_any_model(path: str):
    try:
        return load_reward_head(path)
    except (ValueError, KeyError):
        return load_ridge_model(path)


def _cmd_bench(opts: dict, digest: str) -> int:
    model = _load_any_model(opts["model"])
    store = read_store(opts["store"])
    report = bench(
        model,
        store,
        repetitions=opts["repetitions"],
        warmup=opts["warmup"],
        config_hash=digest,
    )
    _emit(report, opts)
    return 0


_COMMANDS = {
    "validate": _cmd_validate,
    "featurize": _cmd_featurize,
    "train-reward": _cmd_train_reward,
    "train-multi": _cmd_train_multi,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        opts = resolve_options(args)
        digest = config_hash(args.command, opts)
        return _COMMANDS[args.command](opts, digest)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DivergenceError, SingularSystemError, DegenerateCorrelationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (RewardKitError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
