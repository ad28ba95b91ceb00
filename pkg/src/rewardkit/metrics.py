"""Rank correlation and accuracy metrics.

What it does
------------
Implements the evaluation statistics used by the harness: Kendall's
tau-b and tau-c over tied data, preference pair accuracy, thresholded
binary accuracy, and discrete level accuracy.

Why it exists
-------------
Ranking metrics with ties are easy to get subtly wrong, so the pair
counting here is exact integer arithmetic and the test suite pins it to
a brute-force pair enumeration.

Both tau functions run in O(n log n) via a single sweep over x-sorted
data with a binary indexed tree over y ranks, and produce results
identical to O(n^2) enumeration because every intermediate count is an
integer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateCorrelationError, EmptyInputError
from .validation import check_same_length, check_vector

__all__ = [
    "PairOutcome",
    "pair_counts",
    "kendall_tau_b",
    "kendall_tau_c",
    "pairwise_accuracy",
    "binary_accuracy",
    "level_accuracy",
]


class _BinaryIndexedTree:
    """Prefix-count structure over integer ranks 0..size-1."""

    def __init__(self, size: int):
        self._tree = [0] * (size + 1)

    def add(self, rank: int) -> None:
        i = rank + 1
        tree = self._tree
        while i < len(tree):
            tree[i] += 1
            i += i & (-i)

    def count_upto(self, rank: int) -> int:
        # number of inserted ranks <= rank; rank < 0 gives 0
        i = rank + 1
        total = 0
        tree = self._tree
        while i > 0:
            total += tree[i]
            i -= i & (-i)
        return total


def _check_rank_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = check_vector(x, "x", min_len=0)
    y = check_vector(y, "y", min_len=0)
    check_same_length(x, y, "x and y")
    if len(x) < 2:
        raise EmptyInputError(f"rank correlation needs at least 2 samples, got {len(x)}")
    return x, y


def pair_counts(x, y) -> tuple[int, int, int, int]:
    """Exact (concordant, discordant, ties_x_only, ties_y_only) pair counts.

    Pairs tied in both coordinates contribute to none of the four counts.
    Equality is exact floating-point equality.
    """
    x, y = _check_rank_pair(x, y)
    n = len(x)

    order = np.lexsort((y, x))
    xs = x[order]
    ys = y[order]
    y_rank = np.searchsorted(np.unique(ys), ys)
    n_y_ranks = int(y_rank.max()) + 1

    tree = _BinaryIndexedTree(n_y_ranks)
    concordant = 0
    discordant = 0
    processed = 0
    start = 0
    while start < n:
        stop = start
        while stop < n and xs[stop] == xs[start]:
            stop += 1
        for i in range(start, stop):
            r = int(y_rank[i])
            below = tree.count_upto(r - 1)
            at_or_below = tree.count_upto(r)
            concordant += below
            discordant += processed - at_or_below
        for i in range(start, stop):
            tree.add(int(y_rank[i]))
        processed += stop - start
        start = stop

    def tied_pairs(values: np.ndarray) -> int:
        _, counts = np.unique(values, return_counts=True)
        return int(np.sum(counts * (counts - 1) // 2))

    ties_x_all = tied_pairs(xs)
    ties_y_all = tied_pairs(ys)
    _, joint_counts = np.unique(np.stack([xs, ys], axis=1), axis=0, return_counts=True)
    both = int(np.sum(joint_counts * (joint_counts - 1) // 2))
    return concordant, discordant, ties_x_all - both, ties_y_all - both


def _require_varying(x: np.ndarray, y: np.ndarray) -> None:
    if np.all(x == x[0]):
        raise DegenerateCorrelationError("x is constant; rank correlation is undefined")
    if np.all(y == y[0]):
        raise DegenerateCorrelationError("y is constant; rank correlation is undefined")


def kendall_tau_b(x, y) -> float:
    """Kendall's tau-b, the tie-adjusted rank correlation.

    tau_b = (C - D) / sqrt((C + D + Tx) * (C + D + Ty)) where Tx and Ty
    count pairs tied only in x and only in y; pairs tied in both are
    excluded everywhere.  Raises DegenerateCorrelationError when either
    input is constant.
    """
    xv, yv = _check_rank_pair(x, y)
    _require_varying(xv, yv)
    c, d, tx, ty = pair_counts(xv, yv)
    return (c - d) / math.sqrt((c + d + tx) * (c + d + ty))


def kendall_tau_c(x, y) -> float:
    """Kendall's tau-c (Stuart's) for rectangular contingency shapes.

    tau_c = 2 m (C - D) / (n^2 (m - 1)) with m the smaller number of
    distinct values on either side.  Raises DegenerateCorrelationError
    when m < 2.
    """
    xv, yv = _check_rank_pair(x, y)
    _require_varying(xv, yv)
    m = min(np.unique(xv).size, np.unique(yv).size)
    c, d, _, _ = pair_counts(xv, yv)
    n = len(xv)
    return (c - d) * 2.0 * m / (n * n * (m - 1))


@dataclass(frozen=True)
class PairOutcome:
    """Model scores for the two members of one preference pair."""

    chosen_score: float
    rejected_score: float


def pairwise_accuracy(outcomes: Iterable[PairOutcome], tie_rule: str = "strict") -> float:
    """Percentage of pairs whose chosen member outscores the rejected one.

    Under the default ``strict`` rule a tied pair counts as incorrect;
    ``half`` grants tied pairs half credit for sensitivity studies.
    Returns a value on [0, 100].
    """
    if tie_rule not in ("strict", "half"):
        raise ValueError(f"tie_rule must be 'strict' or 'half', got {tie_rule!r}")
    outcomes = list(outcomes)
    if not outcomes:
        raise EmptyInputError("pairwise accuracy needs at least one pair")
    chosen = check_vector([o.chosen_score for o in outcomes], "chosen scores")
    rejected = check_vector([o.rejected_score for o in outcomes], "rejected scores")
    wins = np.sum(chosen > rejected)
    credit = float(wins)
    if tie_rule == "half":
        credit += 0.5 * float(np.sum(chosen == rejected))
    return 100.0 * credit / len(outcomes)


def binary_accuracy(predictions, labels, threshold: float) -> float:
    """Accuracy of thresholded continuous predictions against boolean labels.

    A prediction counts as positive only when strictly above the
    threshold, matching the strict binarization convention elsewhere.
    """
    pred = check_vector(predictions, "predictions", min_len=0)
    labels = np.asarray(labels, dtype=bool)
    if labels.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {labels.shape}")
    check_same_length(pred, labels, "predictions and labels")
    if len(pred) == 0:
        raise EmptyInputError("binary accuracy needs at least one sample")
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    return 100.0 * float(np.mean((pred > threshold) == labels))


def level_accuracy(predictions, gold, levels: Sequence[float]) -> float:
    """Exact-match accuracy after snapping predictions to admissible levels.

    Each prediction snaps to the nearest level; a prediction exactly
    midway between two levels snaps to the lower one.  Gold values must
    already be members of ``levels``.
    """
    pred = check_vector(predictions, "predictions", min_len=0)
    gold_v = check_vector(gold, "gold", min_len=0)
    check_same_length(pred, gold_v, "predictions and gold")
    if len(pred) == 0:
        raise EmptyInputError("level accuracy needs at least one sample")
    lv = check_vector(levels, "levels", min_len=2)
    if np.any(np.diff(lv) <= 0):
        raise ValueError("levels must be sorted ascending with no duplicates")
    if not np.all(np.isin(gold_v, lv)):
        bad = gold_v[~np.isin(gold_v, lv)][0]
        raise ValueError(f"gold value {bad} is not an admissible level")
    midpoints = (lv[:-1] + lv[1:]) / 2.0
    snapped = lv[np.searchsorted(midpoints, pred, side="left")]
    return 100.0 * float(np.mean(snapped == gold_v))
