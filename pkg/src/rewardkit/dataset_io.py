"""Manifest loading, label transforms, and pairwise reformulation.

What it does
------------
Reads and writes the line-delimited manifest format, normalizes raw
human scores onto [0, 1], averages annotator ratings, binarizes scores
at a median or fixed threshold, and rewrites pointwise datasets into
chosen/rejected preference pairs.

Why it exists
-------------
Every dataset enters the toolkit through this module, so the score
conventions (strict inequality at binarization boundaries, midpoint
median for even counts, per-dimension scales) live in exactly one place.

File format: UTF-8, one JSON object per line.  The first line holds a
single "_meta" key with "kind", ordered "dimensions", and a per-dimension
"scale" of {"lo", "hi"}.  Every following line is a record with keys
drawn from: id, image_ref, request, candidate, refs, scores, pair_id,
pair_role.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .datamodel import (
    DimensionSet,
    ManifestKind,
    PairRole,
    SampleRecord,
    ScoreScale,
    Violation,
    validate_dataset,
)
from .errors import DatasetValidationError, EmptyInputError, ManifestParseError
from .hashing import fingerprint_hex

__all__ = [
    "DatasetManifest",
    "load_manifest",
    "save_manifest",
    "serialize_manifest",
    "validate_manifest",
    "normalize_scale",
    "normalize_manifest_scores",
    "aggregate_annotators",
    "binarize_median",
    "binarize_threshold",
    "reformulate_to_pairwise",
]

_RECORD_KEYS = (
    "id",
    "image_ref",
    "request",
    "candidate",
    "refs",
    "scores",
    "pair_id",
    "pair_role",
)


@dataclass(frozen=True)
class DatasetManifest:
    """A typed dataset: records plus the scoring contract they follow."""

    kind: ManifestKind
    dimensions: DimensionSet
    scales: Mapping[str, ScoreScale]
    records: tuple[SampleRecord, ...]
    source_fingerprint: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        scales = dict(self.scales)
        if set(scales) != set(self.dimensions.names):
            raise ValueError("scales must cover exactly the declared dimensions")
        object.__setattr__(self, "scales", scales)

    def fingerprint(self) -> str:
        """Stable content hash: the source file's bytes when loaded from
        disk, otherwise the canonical serialization."""
        if self.source_fingerprint is not None:
            return self.source_fingerprint
        return fingerprint_hex(serialize_manifest(self).encode("utf-8"))


def _parse_meta(obj, fail) -> tuple[ManifestKind, DimensionSet, dict[str, ScoreScale]]:
    if not isinstance(obj, dict) or set(obj) != {"_meta"}:
        fail('first line must be an object with the single key "_meta"')
    meta = obj["_meta"]
    if not isinstance(meta, dict) or set(meta) != {"kind", "dimensions", "scale"}:
        fail('"_meta" must carry exactly "kind", "dimensions", "scale"')
    try:
        kind = ManifestKind(meta["kind"])
    except ValueError:
        fail(f'unknown manifest kind {meta["kind"]!r}')
    dims_raw = meta["dimensions"]
    if not isinstance(dims_raw, list) or not all(isinstance(d, str) for d in dims_raw):
        fail('"dimensions" must be a list of strings')
    try:
        dims = DimensionSet(tuple(dims_raw))
    except ValueError as exc:
        fail(str(exc))
    scale_raw = meta["scale"]
    if not isinstance(scale_raw, dict) or set(scale_raw) != set(dims.names):
        fail('"scale" must map every declared dimension to {"lo", "hi"}')
    scales = {}
    for name in dims.names:
        entry = scale_raw[name]
        if (
            not isinstance(entry, dict)
            or set(entry) != {"lo", "hi"}
            or any(isinstance(entry[k], bool) or not isinstance(entry[k], (int, float))
                   for k in ("lo", "hi"))
        ):
            fail(f'scale for {name!r} must be {{"lo": number, "hi": number}}')
        try:
            scales[name] = ScoreScale(float(entry["lo"]), float(entry["hi"]))
        except ValueError as exc:
            fail(f"scale for {name!r}: {exc}")
    return kind, dims, scales


def _parse_record(obj, fail) -> SampleRecord:
    if not isinstance(obj, dict):
        fail("record line must be a JSON object")
    unknown = set(obj) - set(_RECORD_KEYS)
    if unknown:
        fail(f"unknown record key(s): {sorted(unknown)}")
    for key in ("id", "image_ref", "candidate"):
        if key not in obj:
            fail(f"record is missing required key {key!r}")
        if not isinstance(obj[key], str):
            fail(f"record key {key!r} must be a string")
    request = obj.get("request")
    if request is not None and not isinstance(request, str):
        fail('"request" must be a string')
    refs = obj.get("refs")
    if refs is not None:
        if not isinstance(refs, list) or not all(isinstance(r, str) for r in refs):
            fail('"refs" must be a list of strings')
        refs = tuple(refs)
    scores = obj.get("scores")
    if scores is not None:
        if not isinstance(scores, dict):
            fail('"scores" must be an object')
        parsed = {}
        for name, value in scores.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                fail(f"score {name!r} must be a number")
            parsed[name] = float(value)
        scores = parsed
    pair_id = obj.get("pair_id")
    if pair_id is not None and not isinstance(pair_id, str):
        fail('"pair_id" must be a string')
    pair_role = obj.get("pair_role")
    if pair_role is not None:
        try:
            pair_role = PairRole(pair_role)
        except ValueError:
            fail(f'"pair_role" must be "chosen" or "rejected", got {pair_role!r}')
    return SampleRecord(
        id=obj["id"],
        image_ref=obj["image_ref"],
        candidate=obj["candidate"],
        request=request,
        scores=scores,
        pair_id=pair_id,
        pair_role=pair_role,
        refs=refs,
    )


def load_manifest(path: str | os.PathLike) -> DatasetManifest:
    """Parse and validate a manifest file.

    Parse problems raise ManifestParseError naming the offending line;
    structural problems raise DatasetValidationError carrying every
    violation found.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ManifestParseError(f"manifest is not valid UTF-8: {exc}") from exc

    lines = text.split("\n")
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ManifestParseError("manifest is empty")

    def parse_line(line_no: int, line: str):
        def fail(message: str):
            raise ManifestParseError(message, line_no)

        if line.strip() == "":
            fail("blank line")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            fail(f"invalid JSON: {exc.msg}")
        return obj, fail

    meta_obj, fail = parse_line(1, lines[0])
    kind, dims, scales = _parse_meta(meta_obj, fail)

    records = []
    for i, line in enumerate(lines[1:], start=2):
        obj, fail = parse_line(i, line)
        records.append(_parse_record(obj, fail))

    manifest = DatasetManifest(
        kind=kind,
        dimensions=dims,
        scales=scales,
        records=tuple(records),
        source_fingerprint=fingerprint_hex(raw),
    )
    violations = validate_manifest(manifest)
    if violations:
        raise DatasetValidationError(violations)
    return manifest


def validate_manifest(manifest: DatasetManifest) -> list[Violation]:
    """Record-collection invariants plus kind-specific ones."""
    violations = validate_dataset(manifest.records)
    names = set(manifest.dimensions.names)
    for rec in manifest.records:
        scores = rec.scores or {}
        if manifest.kind is ManifestKind.PAIRWISE:
            if rec.pair_id is None or rec.pair_role is None:
                violations.append(
                    Violation(
                        "missing-pair-fields",
                        rec.id,
                        "pairwise manifests require pair_id and pair_role on every record",
                    )
                )
        else:
            missing = [n for n in manifest.dimensions.names if n not in scores]
            if missing:
                violations.append(
                    Violation(
                        "missing-score",
                        rec.id,
                        f"record lacks score(s) for {missing}",
                    )
                )
        for name, value in scores.items():
            if name not in names:
                violations.append(
                    Violation(
                        "unknown-dimension",
                        rec.id,
                        f"score names undeclared dimension {name!r}",
                    )
                )
            elif math.isfinite(value):
                scale = manifest.scales[name]
                if not (scale.lo <= value <= scale.hi):
                    violations.append(
                        Violation(
                            "score-out-of-range",
                            rec.id,
                            f"score {name!r}={value} outside [{scale.lo}, {scale.hi}]",
                        )
                    )
    return violations


def serialize_manifest(manifest: DatasetManifest) -> str:
    """Canonical textual form; stable under save/load round trips."""
    meta = {
        "_meta": {
            "kind": manifest.kind.value,
            "dimensions": list(manifest.dimensions.names),
            "scale": {
                name: {"lo": manifest.scales[name].lo, "hi": manifest.scales[name].hi}
                for name in manifest.dimensions.names
            },
        }
    }
    lines = [json.dumps(meta, separators=(",", ":"))]
    dim_order = {n: i for i, n in enumerate(manifest.dimensions.names)}
    for rec in manifest.records:
        obj: dict = {"id": rec.id, "image_ref": rec.image_ref}
        if rec.request is not None:
            obj["request"] = rec.request
        obj["candidate"] = rec.candidate
        if rec.refs is not None:
            obj["refs"] = list(rec.refs)
        if rec.scores is not None:
            ordered = sorted(rec.scores, key=lambda n: (dim_order.get(n, len(dim_order)), n))
            obj["scores"] = {n: rec.scores[n] for n in ordered}
        if rec.pair_id is not None:
            obj["pair_id"] = rec.pair_id
        if rec.pair_role is not None:
            obj["pair_role"] = rec.pair_role.value
        lines.append(json.dumps(obj, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def save_manifest(manifest: DatasetManifest, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_manifest(manifest))


def normalize_scale(score, scale: ScoreScale):
    """Map a score (or array of scores) on ``scale`` linearly onto [0, 1]."""
    arr = np.asarray(score, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("score must be finite")
    if np.any(arr < scale.lo) or np.any(arr > scale.hi):
        raise ValueError(
            f"score outside scale [{scale.lo}, {scale.hi}]"
        )
    out = (arr - scale.lo) / scale.width
    return float(out) if np.ndim(score) == 0 else out


def aggregate_annotators(ratings: Iterable[float], scale: ScoreScale) -> float:
    """Arithmetic mean of per-annotator ratings, each checked against the scale."""
    arr = np.asarray(list(ratings), dtype=np.float64)
    if arr.size == 0:
        raise EmptyInputError("need at least one annotator rating")
    if not np.all(np.isfinite(arr)):
        raise ValueError("ratings must be finite")
    if np.any(arr < scale.lo) or np.any(arr > scale.hi):
        raise ValueError(f"rating outside scale [{scale.lo}, {scale.hi}]")
    return float(arr.mean())


def _check_rule(rule: str) -> bool:
    if rule not in ("strict", "inclusive"):
        raise ValueError(f"rule must be 'strict' or 'inclusive', got {rule!r}")
    return rule == "strict"


def binarize_median(scores, rule: str = "strict") -> np.ndarray:
    """Label each score positive iff above (or at, under ``inclusive``) the median.

    The median of an even count is the midpoint of the two central order
    statistics.  Returns a boolean array aligned with the input.
    """
    strict = _check_rule(rule)
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInputError("cannot take the median of zero scores")
    if arr.ndim != 1:
        raise ValueError(f"scores must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("scores must be finite")
    med = float(np.median(arr))
    return arr > med if strict else arr >= med


def binarize_threshold(score, threshold: float, rule: str = "strict"):
    """Positive iff strictly above the threshold (or at it, under ``inclusive``)."""
    strict = _check_rule(rule)
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    arr = np.asarray(score, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("score must be finite")
    labels = arr > threshold if strict else arr >= threshold
    return bool(labels) if np.ndim(score) == 0 else labels


def normalize_manifest_scores(manifest: DatasetManifest) -> DatasetManifest:
    """Rewrite every score onto [0, 1] via its dimension's scale.

    Dimensions already on a 0..1 scale (dichotomous ones in particular)
    come through unchanged.
    """
    new_scales = {}
    for name in manifest.dimensions.names:
        scale = manifest.scales[name]
        levels = None
        if scale.admissible_levels is not None:
            levels = tuple((v - scale.lo) / scale.width for v in scale.admissible_levels)
        new_scales[name] = ScoreScale(0.0, 1.0, levels)
    new_records = []
    for rec in manifest.records:
        scores = rec.scores
        if scores is not None:
            scores = {
                name: normalize_scale(value, manifest.scales[name])
                for name, value in scores.items()
            }
        new_records.append(
            SampleRecord(
                id=rec.id,
                image_ref=rec.image_ref,
                candidate=rec.candidate,
                request=rec.request,
                scores=scores,
                pair_id=rec.pair_id,
                pair_role=rec.pair_role,
                refs=rec.refs,
            )
        )
    return DatasetManifest(
        kind=manifest.kind,
        dimensions=manifest.dimensions,
        scales=new_scales,
        records=tuple(new_records),
    )


def _paired_copy(rec: SampleRecord, pair_id: str, role: PairRole) -> SampleRecord:
    return SampleRecord(
        id=f"{rec.id}@{pair_id}",
        image_ref=rec.image_ref,
        candidate=rec.candidate,
        request=rec.request,
        scores=dict(rec.scores) if rec.scores is not None else None,
        pair_id=pair_id,
        pair_role=role,
        refs=rec.refs,
    )


def reformulate_to_pairwise(
    manifest: DatasetManifest,
    group_key: str = "image_ref",
    score_dim: str | None = None,
    rule: str = "strict",
    max_pairs_per_group: int | None = None,
    prefix_sep: str = "#",
) -> DatasetManifest:
    """Turn pointwise scores into chosen/rejected preference pairs.

    Records are grouped by ``group_key`` (the shared image_ref, or the id
    up to the last ``prefix_sep``).  Each group's scores on ``score_dim``
    are binarized at the group median; every positive record is paired
    against every negative one, so the chosen member always strictly
    outscores the rejected member.  Groups lacking either class emit no
    pairs.  ``max_pairs_per_group`` caps each group's output.

    Output order is deterministic: groups sorted by key, pairs in sorted
    (chosen id, rejected id) order, with synthetic pair ids unique across
    the manifest.
    """
    if manifest.kind is ManifestKind.PAIRWISE:
        raise ValueError("manifest is already pairwise")
    if group_key not in ("image_ref", "id_prefix"):
        raise ValueError(f"group_key must be 'image_ref' or 'id_prefix', got {group_key!r}")
    if max_pairs_per_group is not None and max_pairs_per_group < 1:
        raise ValueError("max_pairs_per_group must be positive")
    if not manifest.records:
        raise EmptyInputError("manifest has no records to pair")

    if score_dim is None:
        if manifest.dimensions.size == 1:
            score_dim = manifest.dimensions.names[0]
        elif "overall" in manifest.dimensions.names:
            score_dim = "overall"
        else:
            raise ValueError("score_dim is required for multi-dimension manifests")
    elif score_dim not in manifest.dimensions.names:
        raise KeyError(f"unknown dimension {score_dim!r}")

    groups: dict[str, list[SampleRecord]] = {}
    for rec in manifest.records:
        if group_key == "image_ref":
            key = rec.image_ref
        else:
            key = rec.id.rsplit(prefix_sep, 1)[0]
        groups.setdefault(key, []).append(rec)

    if all(len(members) < 2 for members in groups.values()):
        raise EmptyInputError(
            "every group has fewer than 2 records; nothing can be paired"
        )

    out_records: list[SampleRecord] = []
    for key in sorted(groups):
        members = groups[key]
        if len(members) < 2:
            continue
        scores = np.array([r.scores[score_dim] for r in members], dtype=np.float64)
        labels = binarize_median(scores, rule=rule)
        positives = sorted(
            (r for r, lab in zip(members, labels) if lab), key=lambda r: r.id
        )
        negatives = sorted(
            (r for r, lab in zip(members, labels) if not lab), key=lambda r: r.id
        )
        if not positives or not negatives:
            continue
        emitted = 0
        for chosen in positives:
            for rejected in negatives:
                if max_pairs_per_group is not None and emitted >= max_pairs_per_group:
                    break
                pair_id = f"{key}#{emitted}"
                out_records.append(_paired_copy(chosen, pair_id, PairRole.CHOSEN))
                out_records.append(_paired_copy(rejected, pair_id, PairRole.REJECTED))
                emitted += 1
            if max_pairs_per_group is not None and emitted >= max_pairs_per_group:
                break

    result = DatasetManifest(
        kind=ManifestKind.PAIRWISE,
        dimensions=manifest.dimensions,
        scales=manifest.scales,
        records=tuple(out_records),
    )
    violations = validate_manifest(result)
    if violations:
        raise DatasetValidationError(violations)
    return result
