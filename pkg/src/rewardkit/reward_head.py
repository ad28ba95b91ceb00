"""Scalar reward head: an affine map trained with mini-batch MSE descent.

What it does
------------
Initializes, trains, applies, and serializes the reward scorer
r(z) = w . z + b0 over frozen embeddings, regressing onto human scores
already normalized to [0, 1].

Why it exists
-------------
This is the supervised core of the toolkit.  Keeping it a plain linear
model over a frozen feature store makes training cheap, deterministic,
and easy to verify against closed-form least squares.

Training protocol defaults follow the reference recipe: batch size 8
with 4 gradient accumulation steps (so each update applies the mean
gradient over 32 samples), a single epoch, and a seeded shuffle.  The
optimizer is plain gradient descent; there is no momentum or adaptive
state.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .dataset_io import DatasetManifest
from .datamodel import ManifestKind
from .embedding_store import EmbeddingStore
from .errors import DivergenceError, EmptyInputError
from .validation import check_matrix, check_same_length, check_vector

__all__ = [
    "MODEL_FORMAT_VERSION",
    "TrainConfig",
    "RewardHeadModel",
    "init_std",
    "init_head",
    "mse_loss",
    "mse_grad",
    "predict_reward",
    "train_reward",
    "RewardHead",
    "save_reward_head",
    "load_reward_head",
]

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Gradient-descent settings for the reward head.

    An optimizer step consumes ``batch_size * grad_accum`` samples and
    applies their mean gradient once, mirroring accumulated small
    batches.  ``seed`` drives the shuffle order only; weight
    initialization takes its own seed.
    """

    learning_rate: float = 2e-6
    epochs: int = 1
    batch_size: int = 8
    grad_accum: int = 4
    seed: int = 42
    shuffle: bool = True

    def __post_init__(self):
        if not math.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise ValueError(f"learning_rate must be finite and >= 0, got {self.learning_rate!r}")
        for name in ("epochs", "batch_size", "grad_accum"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not isinstance(self.seed, int) or not (0 <= self.seed < 2**64):
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


@dataclass(frozen=True, eq=False)
class RewardHeadModel:
    """Trained scalar head: weights, bias, and provenance metadata."""

    w: np.ndarray
    b0: float
    dim: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.shape != (self.dim,):
            raise ValueError(f"w has shape {w.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(w)) or not math.isfinite(self.b0):
            raise ValueError("model parameters must be finite")
        w = w.copy() if w.flags.writeable else w
        w.flags.writeable = False
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b0", float(self.b0))


def init_std(dim: int) -> float:
    """Initialization standard deviation 1 / sqrt(dim + 1)."""
    if dim < 1:
        raise ValueError("dim must be positive")
    return 1.0 / math.sqrt(dim + 1)


def init_head(dim: int, seed: int) -> RewardHeadModel:
    """Fresh head with zero-centered Gaussian weights and zero bias.

    Weights come from numpy's PCG64 generator seeded with ``seed`` at
    scale :func:`init_std`, so initialization is reproducible bit for
    bit.
    """
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, init_std(dim), size=dim)
    return RewardHeadModel(w=w, b0=0.0, dim=dim)


def _scores(model: RewardHeadModel, Z: np.ndarray) -> np.ndarray:
    return Z @ model.w + model.b0


def mse_loss(model: RewardHeadModel, Z, h) -> float:
    """Mean squared error of the head over (Z, h)."""
    Z = check_matrix(Z, "Z")
    h = check_vector(h, "h")
    check_same_length(Z, h, "Z and h")
    if Z.shape[1] != model.dim:
        raise ValueError(f"Z has {Z.shape[1]} columns, model expects {model.dim}")
    err = _scores(model, Z) - h
    return float(err @ err) / len(h)


def mse_grad(model: RewardHeadModel, Z, h) -> tuple[np.ndarray, float]:
    """Analytic MSE gradient: ((2/n) Z^T (Zw + b0 - h), (2/n) sum(r - h))."""
    Z = check_matrix(Z, "Z")
    h = check_vector(h, "h")
    check_same_length(Z, h, "Z and h")
    if Z.shape[1] != model.dim:
        raise ValueError(f"Z has {Z.shape[1]} columns, model expects {model.dim}")
    err = _scores(model, Z) - h
    n = len(h)
    return (2.0 / n) * (Z.T @ err), (2.0 / n) * float(err.sum())


def predict_reward(model: RewardHeadModel, z):
    """Score one embedding (1-D input) or a batch (2-D input)."""
    arr = np.asarray(z, dtype=np.float64)
    if arr.ndim == 1:
        if arr.shape != (model.dim,):
            raise ValueError(f"embedding has length {arr.shape[0]}, expected {model.dim}")
        return float(arr @ model.w + model.b0)
    if arr.ndim == 2:
        if arr.shape[1] != model.dim:
            raise ValueError(f"Z has {arr.shape[1]} columns, model expects {model.dim}")
        return arr @ model.w + model.b0
    raise ValueError(f"z must be 1-D or 2-D, got shape {arr.shape}")


def _fit_head_arrays(
    Z: np.ndarray, h: np.ndarray, cfg: TrainConfig, init_seed: int
) -> tuple[np.ndarray, float, list[float]]:
    n, d = Z.shape
    start = init_head(d, init_seed)
    w = start.w.copy()
    b0 = start.b0
    order_rng = np.random.default_rng(cfg.seed)
    window = cfg.batch_size * cfg.grad_accum
    trace: list[float] = []
    for _ in range(cfg.epochs):
        order = order_rng.permutation(n) if cfg.shuffle else np.arange(n)
        for begin in range(0, n, window):
            idx = order[begin : begin + window]
            Zb = Z[idx]
            hb = h[idx]
            m = len(idx)
            with np.errstate(over="ignore", invalid="ignore"):
                err = Zb @ w + b0 - hb
                loss = float(err @ err) / m
            if not math.isfinite(loss):
                raise DivergenceError(
                    "training loss became non-finite; lower the learning rate"
                )
            trace.append(loss)
            with np.errstate(over="ignore", invalid="ignore"):
                w = w - cfg.learning_rate * ((2.0 / m) * (Zb.T @ err))
                b0 = b0 - cfg.learning_rate * ((2.0 / m) * float(err.sum()))
    if not (np.all(np.isfinite(w)) and math.isfinite(b0)):
        raise DivergenceError("parameters became non-finite; lower the learning rate")
    return w, b0, trace


def _resolve_target_dim(manifest: DatasetManifest, target_dim: str | None) -> str:
    if target_dim is None:
        if manifest.dimensions.size == 1:
            return manifest.dimensions.names[0]
        if "overall" in manifest.dimensions.names:
            return "overall"
        raise ValueError("target_dim is required for multi-dimension manifests")
    if target_dim not in manifest.dimensions.names:
        raise KeyError(f"unknown dimension {target_dim!r}")
    return target_dim


def train_reward(
    store: EmbeddingStore,
    manifest: DatasetManifest,
    cfg: TrainConfig = TrainConfig(),
    init_seed: int | None = None,
    target_dim: str | None = None,
) -> tuple[RewardHeadModel, list[float]]:
    """Train the head on a manifest's scores over a frozen store.

    Targets must already sit on [0, 1]; run the manifest through
    ``normalize_manifest_scores`` first if they do not.  Returns the
    final model plus the loss recorded before each optimizer step.
    ``init_seed`` defaults to the shuffle seed.
    """
    if manifest.kind is ManifestKind.PAIRWISE:
        raise ValueError("cannot train the scalar head on a pairwise manifest")
    if not manifest.records:
        raise EmptyInputError("manifest has no records to train on")
    name = _resolve_target_dim(manifest, target_dim)
    ids = [rec.id for rec in manifest.records]
    Z = store.gather(ids)
    h = np.array([rec.scores[name] for rec in manifest.records], dtype=np.float64)
    if np.any(h < 0.0) or np.any(h > 1.0):
        raise ValueError(
            "targets must be normalized to [0, 1]; apply normalize_manifest_scores first"
        )
    if init_seed is None:
        init_seed = cfg.seed
    w, b0, trace = _fit_head_arrays(Z, h, cfg, init_seed)
    meta = {
        "seed": cfg.seed,
        "init_seed": init_seed,
        "lr": cfg.learning_rate,
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "grad_accum": cfg.grad_accum,
        "dataset_fingerprint": manifest.fingerprint(),
    }
    return RewardHeadModel(w=w, b0=b0, dim=Z.shape[1], meta=meta), trace


class RewardHead(RegressorMixin, BaseEstimator):
    """Scikit-learn flavored wrapper over the training loop.

    Parameters mirror TrainConfig; ``init_seed`` (default: the shuffle
    seed) seeds weight initialization.  Fitted state lives in ``w_``,
    ``b0_``, and ``loss_trace_``.
    """

    def __init__(
        self,
        learning_rate: float = 2e-6,
        epochs: int = 1,
        batch_size: int = 8,
        grad_accum: int = 4,
        seed: int = 42,
        shuffle: bool = True,
        init_seed: int | None = None,
    ):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.grad_accum = grad_accum
        self.seed = seed
        self.shuffle = shuffle
        self.init_seed = init_seed

    def fit(self, X, y):
        cfg = TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            grad_accum=self.grad_accum,
            seed=self.seed,
            shuffle=self.shuffle,
        )
        X = check_matrix(X, "X")
        y = check_vector(y, "y")
        check_same_length(X, y, "X and y")
        if np.any(y < 0.0) or np.any(y > 1.0):
            raise ValueError("targets must be normalized to [0, 1]")
        init_seed = self.init_seed if self.init_seed is not None else self.seed
        w, b0, trace = _fit_head_arrays(X, y, cfg, init_seed)
        self.w_ = w
        self.b0_ = b0
        self.loss_trace_ = trace
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "w_")
        X = check_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return X @ self.w_ + self.b0_

    def to_model(self, meta: dict | None = None) -> RewardHeadModel:
        check_is_fitted(self, "w_")
        return RewardHeadModel(
            w=self.w_, b0=self.b0_, dim=self.n_features_in_, meta=dict(meta or {})
        )


def save_reward_head(model: RewardHeadModel, path: str | os.PathLike) -> None:
    """Write the model as a small JSON document; floats round-trip exactly."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "dim": model.dim,
        "w": [float(v) for v in model.w],
        "b0": model.b0,
        "meta": model.meta,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_reward_head(path: str | os.PathLike) -> RewardHeadModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or set(doc) != {"format_version", "dim", "w", "b0", "meta"}:
        raise ValueError("not a reward head file")
    if doc["format_version"] != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc['format_version']!r}")
    w = np.asarray(doc["w"], dtype=np.float64)
    if w.ndim != 1 or w.size != doc["dim"]:
        raise ValueError("weight vector does not match the declared dimension")
    return RewardHeadModel(w=w, b0=float(doc["b0"]), dim=int(doc["dim"]), meta=doc["meta"])
