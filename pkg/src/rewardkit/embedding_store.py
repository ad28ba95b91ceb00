"""Binary embedding store and the hermetic toy featurizer.

What it does
------------
Reads and writes the toolkit's embedding interchange file and offers a
deterministic hashing featurizer so every pipeline stage can run without
any model backend.

Why it exists
-------------
Frozen-backbone training only ever sees (id, vector) pairs, so the store
is the single interface between feature extraction and everything else.
The file format is fixed so independently produced stores interoperate.

File layout, all little-endian, no padding:

    magic   4 bytes  "MTAP" (4D 54 41 50)
    version u32      currently 1
    dim     u32
    count   u64
    then per record: id_length u32, id bytes (UTF-8), dim float32 values

Vectors are float32 on disk and promoted to float64 in memory.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from hashlib import blake2b
from typing import Iterable, Iterator, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .datamodel import SampleRecord
from .errors import MissingEmbeddingError, StoreFormatError, StoreTruncatedError

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "EmbeddingStore",
    "store_from_entries",
    "write_store",
    "read_store",
    "ToyFeaturizerConfig",
    "toy_featurize",
    "ToyFeaturizer",
    "featurize_manifest",
]

MAGIC = b"MTAP"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIIQ")
_U32 = struct.Struct("<I")


@dataclass(frozen=True, eq=False)
class EmbeddingStore:
    """Immutable in-memory collection of id-keyed embedding rows.

    ``index`` maps each id to its row position; ``rows`` is a read-only
    (count, dim) float64 matrix.  ``dim`` may be 0 only for an empty
    store.
    """

    dim: int
    index: dict[str, int]
    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        count = len(self.index)
        if rows.shape != (count, self.dim):
            raise ValueError(
                f"rows shape {rows.shape} does not match ({count}, {self.dim})"
            )
        if count > 0 and self.dim < 1:
            raise ValueError("non-empty store requires dim >= 1")
        if not np.all(np.isfinite(rows)):
            raise ValueError("embedding rows must be finite")
        if any(not isinstance(k, str) or k == "" for k in self.index):
            raise ValueError("ids must be non-empty strings")
        if sorted(self.index.values()) != list(range(count)):
            raise ValueError("index positions must be exactly 0..count-1")
        rows = rows.copy() if rows.flags.writeable else rows
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)

    @property
    def count(self) -> int:
        return len(self.index)

    def lookup(self, record_id: str) -> np.ndarray:
        """Read-only view of one embedding row."""
        try:
            pos = self.index[record_id]
        except KeyError:
            raise MissingEmbeddingError(record_id) from None
        return self.rows[pos]

    def gather(self, ids: Sequence[str]) -> np.ndarray:
        """Stack the rows for ``ids`` in the requested order."""
        positions = []
        for record_id in ids:
            if record_id not in self.index:
                raise MissingEmbeddingError(record_id)
            positions.append(self.index[record_id])
        if not positions:
            return np.empty((0, self.dim), dtype=np.float64)
        return self.rows[np.array(positions)]

    def entries(self) -> Iterator[tuple[str, np.ndarray]]:
        for record_id, pos in self.index.items():
            yield record_id, self.rows[pos]


def store_from_entries(entries: Iterable[tuple[str, np.ndarray]]) -> EmbeddingStore:
    """Build an in-memory store from (id, vector) pairs."""
    ids: list[str] = []
    vectors: list[np.ndarray] = []
    for record_id, values in entries:
        vec = np.asarray(values, dtype=np.float64)
        if not isinstance(record_id, str) or record_id == "":
            raise ValueError("ids must be non-empty strings")
        if vec.ndim != 1 or vec.size < 1:
            raise ValueError(f"vector for {record_id!r} must be 1-D and non-empty")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"vector for {record_id!r} contains non-finite entries")
        ids.append(record_id)
        vectors.append(vec)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate ids in entries")
    if not ids:
        return EmbeddingStore(dim=0, index={}, rows=np.empty((0, 0)))
    dims = {v.size for v in vectors}
    if len(dims) != 1:
        raise ValueError(f"entries have mixed dimensions: {sorted(dims)}")
    dim = dims.pop()
    return EmbeddingStore(
        dim=dim,
        index={record_id: i for i, record_id in enumerate(ids)},
        rows=np.vstack(vectors),
    )


def write_store(path: str | os.PathLike, entries) -> None:
    """Write (id, vector) pairs, or an EmbeddingStore, to ``path``.

    Vectors are cast to float32; values whose cast is non-finite are
    rejected.  An empty entry collection produces a valid file with
    count 0.
    """
    if isinstance(entries, EmbeddingStore):
        dim = entries.dim
        items = list(entries.entries())
    else:
        store = store_from_entries(entries)
        dim = store.dim
        items = list(store.entries())

    blob = bytearray()
    blob += _HEADER.pack(MAGIC, FORMAT_VERSION, dim, len(items))
    for record_id, values in items:
        payload = np.asarray(values, dtype=np.float64).astype("<f4")
        if not np.all(np.isfinite(payload)):
            raise ValueError(
                f"vector for {record_id!r} is not representable in float32"
            )
        encoded = record_id.encode("utf-8")
        blob += _U32.pack(len(encoded))
        blob += encoded
        blob += payload.tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def read_store(path: str | os.PathLike) -> EmbeddingStore:
    """Parse a store file, validating structure byte for byte."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise StoreTruncatedError("file ends inside the header", offset=0)
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise StoreFormatError(f"bad magic {magic!r}; not an embedding store")
    if version != FORMAT_VERSION:
        raise StoreFormatError(f"unsupported format version {version}")

    offset = _HEADER.size
    index: dict[str, int] = {}
    rows = np.empty((count, dim), dtype=np.float64)
    for i in range(count):
        if offset + _U32.size > len(data):
            raise StoreTruncatedError("file ends inside an id length", offset=offset)
        (id_len,) = _U32.unpack_from(data, offset)
        offset += _U32.size
        if offset + id_len > len(data):
            raise StoreTruncatedError("file ends inside an id", offset=offset)
        try:
            record_id = data[offset : offset + id_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise StoreFormatError(f"record {i}: id is not valid UTF-8: {exc}") from exc
        offset += id_len
        if record_id == "":
            raise StoreFormatError(f"record {i}: empty id")
        if record_id in index:
            raise StoreFormatError(f"duplicate id {record_id!r}")
        if offset + 4 * dim > len(data):
            raise StoreTruncatedError("file ends inside a vector", offset=offset)
        values = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += 4 * dim
        if not np.all(np.isfinite(values)):
            raise StoreFormatError(f"record {record_id!r}: non-finite values")
        rows[i] = values.astype(np.float64)
        index[record_id] = i
    if offset != len(data):
        raise StoreFormatError(
            f"{len(data) - offset} trailing byte(s) after the last record"
        )
    return EmbeddingStore(dim=dim, index=index, rows=rows)


@dataclass(frozen=True)
class ToyFeaturizerConfig:
    """Deterministic hashing featurizer settings.

    ``dim`` must be at least 8; ``seed`` is an unsigned 64-bit value that
    salts every hash.
    """

    dim: int = 128
    seed: int = 0
    ngram: int = 3

    def __post_init__(self):
        if not isinstance(self.dim, int) or self.dim < 8:
            raise ValueError(f"dim must be an integer >= 8, got {self.dim!r}")
        if not isinstance(self.ngram, int) or self.ngram < 1:
            raise ValueError(f"ngram must be a positive integer, got {self.ngram!r}")
        if not isinstance(self.seed, int) or not (0 <= self.seed < 2**64):
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


_FIELD_TAGS = (b"image\x00", b"request\x00", b"candidate\x00")


def toy_featurize(
    image_bytes_or_ref: bytes,
    request: str,
    candidate: str,
    cfg: ToyFeaturizerConfig = ToyFeaturizerConfig(),
) -> np.ndarray:
    """Hash byte n-grams of the three fields into a unit-norm vector.

    Each field is salted with its own tag plus the seed, so identical
    text in different fields lands in different buckets.  The function
    is pure: identical inputs and config give bit-identical vectors in
    any process.  Empty input falls back to a seeded single-bucket unit
    vector.
    """
    if not isinstance(image_bytes_or_ref, (bytes, bytearray, memoryview)):
        raise TypeError("image_bytes_or_ref must be a byte string")
    key = cfg.seed.to_bytes(8, "little")
    vec = np.zeros(cfg.dim, dtype=np.float64)
    fields = (
        bytes(image_bytes_or_ref),
        request.encode("utf-8"),
        candidate.encode("utf-8"),
    )
    for tag, data in zip(_FIELD_TAGS, fields):
        if not data:
            continue
        for start in range(max(1, len(data) - cfg.ngram + 1)):
            gram = data[start : start + cfg.ngram]
            digest = blake2b(tag + gram, key=key, digest_size=8).digest()
            value = int.from_bytes(digest, "little")
            vec[value % cfg.dim] += 1.0 if value < 1 << 63 else -1.0
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        digest = blake2b(b"fallback", key=key, digest_size=8).digest()
        vec[int.from_bytes(digest, "little") % cfg.dim] = 1.0
        return vec
    return vec / norm


class ToyFeaturizer(TransformerMixin, BaseEstimator):
    """Transformer wrapper around :func:`toy_featurize`.

    Accepts SampleRecord instances or (image_bytes, request, candidate)
    triples and returns one row per input.  Stateless; ``fit`` only
    validates the configuration.
    """

    def __init__(self, dim: int = 128, seed: int = 0, ngram: int = 3):
        self.dim = dim
        self.seed = seed
        self.ngram = ngram

    def _config(self) -> ToyFeaturizerConfig:
        return ToyFeaturizerConfig(dim=self.dim, seed=self.seed, ngram=self.ngram)

    def fit(self, X=None, y=None):
        self._config()
        return self

    def transform(self, X) -> np.ndarray:
        cfg = self._config()
        rows = []
        for item in X:
            if isinstance(item, SampleRecord):
                triple = (
                    item.image_ref.encode("utf-8"),
                    item.request or "",
                    item.candidate,
                )
            else:
                triple = tuple(item)
                if len(triple) != 3:
                    raise ValueError(
                        "inputs must be SampleRecord or (image_bytes, request, candidate)"
                    )
            rows.append(toy_featurize(triple[0], triple[1], triple[2], cfg))
        if not rows:
            return np.empty((0, cfg.dim), dtype=np.float64)
        return np.vstack(rows)


def featurize_manifest(manifest, cfg: ToyFeaturizerConfig) -> EmbeddingStore:
    """One toy embedding per manifest record, keyed by record id.

    The image reference string itself is hashed; nothing is read from
    disk.
    """
    entries = []
    for rec in manifest.records:
        vec = toy_featurize(
            rec.image_ref.encode("utf-8"), rec.request or "", rec.candidate, cfg
        )
        entries.append((rec.id, vec))
    return store_from_entries(entries)
