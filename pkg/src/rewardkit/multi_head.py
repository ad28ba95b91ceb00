"""Multi-output ridge head mapping one embedding to every dimension score.

The head is a single affine map y_hat = W z + b fit by minimizing

    sum_i ||y_i - W z_i - b||^2 + alpha * ||W||_F^2

The intercept is not penalized, so both sides are centered by their
column means and only the weights go through the regularized solve:
(Z_c^T Z_c + alpha I) W^T = Z_c^T Y_c, then b = y_mean - W z_mean.
The d x d system is solved with a Cholesky factorization, which keeps
fits deterministic and exact up to floating-point rounding.

Alpha is chosen by grid search.  The default selection mode scores each
candidate by mean held-out MSE over five deterministic contiguous
folds.  The alternative "paper_train_loss" mode scores the full-data
penalized objective instead; since that objective can only grow with
alpha, the mode always elects the smallest grid value and is kept for
protocol-faithful comparisons rather than model selection.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .datamodel import DimensionSet, ManifestKind
from .dataset_io import DatasetManifest
from .embedding_store import EmbeddingStore
from .errors import EmptyInputError, SingularSystemError
from .validation import check_matrix, check_same_length

__all__ = [
    "MODEL_FORMAT_VERSION",
    "DEFAULT_ALPHA_GRID",
    "RidgeModel",
    "AlphaTrace",
    "fit_ridge",
    "predict_multi",
    "ridge_objective",
    "cross_val_mse",
    "alpha_search",
    "train_multi",
    "MultiObjectiveRidge",
    "save_ridge_model",
    "load_ridge_model",
]

MODEL_FORMAT_VERSION = 1
DEFAULT_ALPHA_GRID = (0.001, 0.01, 0.1, 1.0, 10.0, 100.0)

_SELECTION_MODES = ("cross_val", "paper_train_loss")


@dataclass(frozen=True, eq=False)
class RidgeModel:
    """Fitted multi-output head: weights, intercepts, and provenance."""

    W: np.ndarray
    b: np.ndarray
    alpha: float
    dimensions: DimensionSet
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if W.ndim != 2:
            raise ValueError(f"W must be 2-D, got shape {W.shape}")
        if b.shape != (W.shape[0],):
            raise ValueError(f"b has shape {b.shape}, expected ({W.shape[0]},)")
        if self.dimensions.size != W.shape[0]:
            raise ValueError(
                f"{self.dimensions.size} dimension name(s) for {W.shape[0]} output row(s)"
            )
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("model parameters must be finite")
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha!r}")
        W = W.copy() if W.flags.writeable else W
        b = b.copy() if b.flags.writeable else b
        W.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class AlphaTrace:
    """One grid-search row: the candidate alpha and its scores."""

    alpha: float
    train_objective: float | None
    cv_mse: float | None
    selected: bool
    error: str | None = None


def _check_alpha(alpha) -> float:
    alpha = float(alpha)
    if not math.isfinite(alpha) or alpha < 0:
        raise ValueError(f"alpha must be finite and >= 0, got {alpha!r}")
    return alpha


def _default_dimensions(n_outputs: int) -> DimensionSet:
    return DimensionSet(tuple(f"y{k}" for k in range(n_outputs)))


def _solve_centered(Z: np.ndarray, Y: np.ndarray, alpha: float):
    z_mean = Z.mean(axis=0)
    y_mean = Y.mean(axis=0)
    Zc = Z - z_mean
    Yc = Y - y_mean
    gram = Zc.T @ Zc + alpha * np.eye(Z.shape[1])
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            "centered design is rank deficient; refit with alpha > 0"
        ) from exc
    W = scipy.linalg.cho_solve(factor, Zc.T @ Yc).T
    b = y_mean - W @ z_mean
    return W, b


def fit_ridge(Z, Y, alpha, dimensions: DimensionSet | None = None) -> RidgeModel:
    """Exact minimizer of the penalized objective with a free intercept.

    ``alpha = 0`` is accepted as an explicit unregularized fit and fails
    with :class:`SingularSystemError` when the centered design is rank
    deficient.
    """
    Z = check_matrix(Z, "Z", min_rows=2)
    Y = check_matrix(Y, "Y", min_rows=2)
    check_same_length(Z, Y, "Z and Y")
    alpha = _check_alpha(alpha)
    if dimensions is None:
        dimensions = _default_dimensions(Y.shape[1])
    W, b = _solve_centered(Z, Y, alpha)
    return RidgeModel(W=W, b=b, alpha=alpha, dimensions=dimensions)


def predict_multi(model: RidgeModel, z) -> np.ndarray:
    """Apply the head: a K-vector for one embedding, n x K for a batch."""
    arr = np.asarray(z, dtype=np.float64)
    if arr.ndim == 1:
        if arr.shape[0] != model.dim:
            raise ValueError(f"embedding has dim {arr.shape[0]}, model expects {model.dim}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding contains non-finite entries")
        return model.W @ arr + model.b
    X = check_matrix(arr, "z")
    if X.shape[1] != model.dim:
        raise ValueError(f"embeddings have dim {X.shape[1]}, model expects {model.dim}")
    return X @ model.W.T + model.b


def ridge_objective(model: RidgeModel, Z, Y) -> float:
    """Penalized training objective of the model on the given data."""
    Z = check_matrix(Z, "Z")
    Y = check_matrix(Y, "Y")
    check_same_length(Z, Y, "Z and Y")
    resid = Y - Z @ model.W.T - model.b[None, :]
    return float(np.sum(resid**2) + model.alpha * np.sum(model.W**2))


def cross_val_mse(Z, Y, alpha, n_folds: int = 5) -> list[float]:
    """Held-out MSE per fold, deterministic contiguous splits in order."""
    Z = check_matrix(Z, "Z", min_rows=2)
    Y = check_matrix(Y, "Y", min_rows=2)
    check_same_length(Z, Y, "Z and Y")
    alpha = _check_alpha(alpha)
    if n_folds < 2:
        raise ValueError(f"n_folds must be >= 2, got {n_folds}")
    if len(Z) < n_folds:
        raise ValueError(f"{len(Z)} row(s) cannot fill {n_folds} folds")
    folds = np.array_split(np.arange(len(Z)), n_folds)
    losses = []
    for fold in folds:
        mask = np.ones(len(Z), dtype=bool)
        mask[fold] = False
        W, b = _solve_centered(Z[mask], Y[mask], alpha)
        pred = Z[fold] @ W.T + b
        losses.append(float(np.mean((pred - Y[fold]) ** 2)))
    return losses


def alpha_search(
    Z,
    Y,
    grid=DEFAULT_ALPHA_GRID,
    selection: str = "cross_val",
    n_folds: int = 5,
    dimensions: DimensionSet | None = None,
) -> tuple[RidgeModel, tuple[AlphaTrace, ...]]:
    """Fit one model per grid value and return the winner plus the trace.

    ``cross_val`` elects the alpha with the lowest mean held-out MSE;
    ``paper_train_loss`` elects the lowest full-data penalized
    objective.  A grid value whose fit fails is recorded in the trace
    and skipped; only a grid with no survivors raises.
    """
    if selection not in _SELECTION_MODES:
        raise ValueError(f"selection must be one of {_SELECTION_MODES}, got {selection!r}")
    grid = tuple(float(a) for a in grid)
    if not grid:
        raise EmptyInputError("alpha grid is empty")
    Z = check_matrix(Z, "Z", min_rows=2)
    Y = check_matrix(Y, "Y", min_rows=2)
    check_same_length(Z, Y, "Z and Y")

    candidates: list[RidgeModel | None] = []
    rows = []
    for alpha in grid:
        try:
            model = fit_ridge(Z, Y, alpha, dimensions=dimensions)
            objective = ridge_objective(model, Z, Y)
            score = objective
            cv = None
            if selection == "cross_val":
                cv = float(np.mean(cross_val_mse(Z, Y, alpha, n_folds=n_folds)))
                score = cv
        except SingularSystemError as exc:
            candidates.append(None)
            rows.append((alpha, None, None, math.inf, str(exc)))
            continue
        candidates.append(model)
        rows.append((alpha, objective, cv, score, None))

    scores = [row[3] for row in rows]
    best = int(np.argmin(scores))
    if candidates[best] is None:
        raise SingularSystemError("every alpha in the grid failed to fit")
    trace = tuple(
        AlphaTrace(
            alpha=alpha,
            train_objective=objective,
            cv_mse=cv,
            selected=(i == best),
            error=error,
        )
        for i, (alpha, objective, cv, _, error) in enumerate(rows)
    )
    return candidates[best], trace


def train_multi(
    store: EmbeddingStore,
    manifest: DatasetManifest,
    grid=DEFAULT_ALPHA_GRID,
    selection: str = "cross_val",
    n_folds: int = 5,
) -> tuple[RidgeModel, tuple[AlphaTrace, ...]]:
    """Grid-search the head on a manifest's scores over a frozen store.

    Targets are the raw per-dimension scores in manifest dimension
    order; outputs stay on that scale.  Returns the winning model with
    provenance metadata plus the search trace.
    """
    if manifest.kind is ManifestKind.PAIRWISE:
        raise ValueError("cannot train the multi-output head on a pairwise manifest")
    if not manifest.records:
        raise EmptyInputError("manifest has no records to train on")
    names = manifest.dimensions.names
    Z = store.gather([rec.id for rec in manifest.records])
    Y = np.array(
        [[rec.scores[name] for name in names] for rec in manifest.records],
        dtype=np.float64,
    )
    model, trace = alpha_search(
        Z, Y, grid=grid, selection=selection, n_folds=n_folds,
        dimensions=manifest.dimensions,
    )
    meta = {
        "fit_method": f"closed_form/{selection}",
        "dataset_fingerprint": manifest.fingerprint(),
    }
    return (
        RidgeModel(
            W=model.W, b=model.b, alpha=model.alpha,
            dimensions=model.dimensions, meta=meta,
        ),
        trace,
    )


class MultiObjectiveRidge(RegressorMixin, BaseEstimator):
    """Estimator wrapper around the closed-form fit at a fixed alpha.

    Accepts 1-D or 2-D targets; predictions mirror the target shape.
    Fitted state lives in ``W_`` and ``b_``.
    """

    def __init__(self, alpha: float = 1.0):
        self.alpha = alpha

    def fit(self, X, y):
        X = check_matrix(X, "X", min_rows=2)
        Y = np.asarray(y, dtype=np.float64)
        self._single_output = Y.ndim == 1
        if self._single_output:
            Y = Y[:, None]
        model = fit_ridge(X, Y, self.alpha)
        self.W_ = model.W
        self.b_ = model.b
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "W_")
        X = check_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        pred = X @ self.W_.T + self.b_
        return pred[:, 0] if self._single_output else pred

    def to_model(
        self, dimensions: DimensionSet | None = None, meta: dict | None = None
    ) -> RidgeModel:
        check_is_fitted(self, "W_")
        if dimensions is None:
            dimensions = _default_dimensions(self.W_.shape[0])
        return RidgeModel(
            W=self.W_, b=self.b_, alpha=float(self.alpha),
            dimensions=dimensions, meta=dict(meta or {}),
        )


def save_ridge_model(model: RidgeModel, path: str | os.PathLike) -> None:
    """Write the model as a JSON document; W is stored row-major."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "dim": model.dim,
        "K": model.n_outputs,
        "dimensions": list(model.dimensions.names),
        "alpha": model.alpha,
        "W": [float(v) for v in model.W.ravel()],
        "b": [float(v) for v in model.b],
        "meta": model.meta,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_ridge_model(path: str | os.PathLike) -> RidgeModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    expected = {"format_version", "dim", "K", "dimensions", "alpha", "W", "b", "meta"}
    if not isinstance(doc, dict) or set(doc) != expected:
        raise ValueError("not a ridge model file")
    if doc["format_version"] != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc['format_version']!r}")
    dim = int(doc["dim"])
    k = int(doc["K"])
    W = np.asarray(doc["W"], dtype=np.float64)
    if W.shape != (k * dim,):
        raise ValueError("weight matrix does not match the declared shape")
    b = np.asarray(doc["b"], dtype=np.float64)
    if b.shape != (k,):
        raise ValueError("intercept vector does not match the declared outputs")
    dimensions = DimensionSet(tuple(doc["dimensions"]))
    if dimensions.size != k:
        raise ValueError("dimension names do not match the declared outputs")
    return RidgeModel(
        W=W.reshape(k, dim), b=b, alpha=float(doc["alpha"]),
        dimensions=dimensions, meta=doc["meta"],
    )
