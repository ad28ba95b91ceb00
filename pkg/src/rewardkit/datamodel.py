"""Core value objects shared by every other module.

What it does
------------
Defines the dataset vocabulary (sample records, score scales, dimension
sets, pair roles) and the structural validation that turns a bag of
records into something safe to train or evaluate on.

Why it exists
-------------
Loaders, trainers and the evaluation harness all need one agreed notion
of "a valid dataset".  Validation collects every violation instead of
stopping at the first so a bad file can be reported in one shot.

All objects here are immutable value types; none of them performs I/O,
and nothing ever opens ``image_ref``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "PairRole",
    "ManifestKind",
    "SampleRecord",
    "ScoreScale",
    "DimensionSet",
    "Violation",
    "validate_dataset",
    "as_embedding",
]


class PairRole(str, Enum):
    CHOSEN = "chosen"
    REJECTED = "rejected"


class ManifestKind(str, Enum):
    POINTWISE = "pointwise"
    PAIRWISE = "pairwise"
    MULTI_OBJECTIVE = "multi_objective"


@dataclass(frozen=True)
class SampleRecord:
    """One evaluated (image, request, candidate) triple.

    ``scores`` maps dimension name to a finite float.  ``pair_id`` and
    ``pair_role`` are only set on preference-pair members.  ``image_ref``
    is an opaque reference; this module never dereferences it.
    """

    id: str
    image_ref: str
    candidate: str
    request: str | None = None
    scores: Mapping[str, float] | None = None
    pair_id: str | None = None
    pair_role: PairRole | None = None
    refs: tuple[str, ...] | None = None


@dataclass(frozen=True)
class ScoreScale:
    """Inclusive numeric range human scores live on.

    ``admissible_levels``, when present, lists the discrete values the
    annotation protocol allowed, sorted ascending and inside [lo, hi].
    """

    lo: float
    hi: float
    admissible_levels: tuple[float, ...] | None = None

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("scale endpoints must be finite")
        if not self.lo < self.hi:
            raise ValueError(f"scale requires lo < hi, got [{self.lo}, {self.hi}]")
        if self.admissible_levels is not None:
            levels = tuple(float(v) for v in self.admissible_levels)
            if len(levels) < 2:
                raise ValueError("admissible_levels needs at least two values")
            if any(not math.isfinite(v) for v in levels):
                raise ValueError("admissible_levels must be finite")
            if list(levels) != sorted(set(levels)):
                raise ValueError("admissible_levels must be sorted and distinct")
            if levels[0] < self.lo or levels[-1] > self.hi:
                raise ValueError("admissible_levels must lie within [lo, hi]")
            object.__setattr__(self, "admissible_levels", levels)

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class DimensionSet:
    """Ordered collection of scored dimension names."""

    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        if len(names) == 0:
            raise ValueError("dimension set must name at least one dimension")
        if any(not isinstance(n, str) or n == "" for n in names):
            raise ValueError("dimension names must be non-empty strings")
        if len(set(names)) != len(names):
            raise ValueError("dimension names must be unique")
        object.__setattr__(self, "names", names)

    @property
    def size(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown dimension {name!r}") from None


def as_embedding(values, dim: int | None = None) -> np.ndarray:
    """Coerce to a 1-D float64 vector, checking finiteness and length."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise ValueError(f"embedding must be a non-empty 1-D vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("embedding contains non-finite entries")
    if dim is not None and vec.size != dim:
        raise ValueError(f"embedding has length {vec.size}, expected {dim}")
    return vec


@dataclass(frozen=True)
class Violation:
    """One broken invariant found during validation.

    ``code`` is a stable machine-readable tag; ``subject_id`` names the
    offending record id (or pair id for pair-level problems).
    """

    code: str
    subject_id: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.subject_id}: {self.message}"


def validate_dataset(records: Sequence[SampleRecord]) -> list[Violation]:
    """Check structural invariants over a record collection.

    Returns every violation found, in a deterministic order; an empty
    list means the dataset is valid.  An empty collection is valid.

    Checks: non-empty unique ids, finite scores, pair_role implies
    pair_id, and every referenced pair_id groups exactly one chosen
    record with exactly one rejected one.
    """
    violations: list[Violation] = []

    seen: dict[str, int] = {}
    for rec in records:
        if rec.id == "":
            violations.append(Violation("empty-id", "", "record has an empty id"))
        seen[rec.id] = seen.get(rec.id, 0) + 1
    for rec_id, n in seen.items():
        if n > 1 and rec_id != "":
            violations.append(
                Violation("duplicate-id", rec_id, f"id appears {n} times")
            )

    for rec in records:
        if rec.scores:
            for dim_name, value in rec.scores.items():
                if not isinstance(value, (int, float)) or not math.isfinite(value):
                    violations.append(
                        Violation(
                            "nonfinite-score",
                            rec.id,
                            f"score {dim_name!r} is not a finite number: {value!r}",
                        )
                    )
        if rec.pair_role is not None and rec.pair_id is None:
            violations.append(
                Violation("pair-missing-id", rec.id, "pair_role set without pair_id")
            )

    pairs: dict[str, list[SampleRecord]] = {}
    for rec in records:
        if rec.pair_id is not None:
            pairs.setdefault(rec.pair_id, []).append(rec)
    for pair_id in sorted(pairs):
        members = pairs[pair_id]
        n_chosen = sum(1 for r in members if r.pair_role is PairRole.CHOSEN)
        n_rejected = sum(1 for r in members if r.pair_role is PairRole.REJECTED)
        if not (len(members) == 2 and n_chosen == 1 and n_rejected == 1):
            violations.append(
                Violation(
                    "unbalanced-pair",
                    pair_id,
                    f"pair has {len(members)} member(s), "
                    f"{n_chosen} chosen, {n_rejected} rejected",
                )
            )
    return violations
