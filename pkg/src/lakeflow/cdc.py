"""Row hashing and change classification for hash-based incremental ingestion.

A row's hash is FNV-1a 64 over its canonical serialization: for each hashed
column in order, ``0x00`` for null or ``0x01`` followed by the UTF-8 canonical
text, with ``0x1F`` between cells.  Change classification is a left anti-join
of incoming (key, hash) pairs against the previous state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import csvscan
from .errors import DuplicateKeyInPrevious, NullPrimaryKey, UnknownColumn
from .table import Schema, TableData, render_cell, render_column

FNV_OFFSET = csvscan.FNV_OFFSET
FNV_PRIME = csvscan.FNV_PRIME
_MASK = (1 << 64) - 1

NULL_BYTE = b"\x00"
PRESENT_BYTE = b"\x01"
SEPARATOR = b"\x1f"


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & _MASK
    return h


def _column_indices(schema: Schema, columns: Sequence[str]) -> list[int]:
    try:
        return schema.indices(columns)
    except UnknownColumn:
        missing = [c for c in columns if c not in schema.names]
        raise UnknownColumn(f"columns not in schema: {missing}") from None


def canonical_serialize(row: Sequence, columns: Sequence[str], schema: Schema) -> bytes:
    parts = []
    for i in _column_indices(schema, columns):
        text = render_cell(row[i], schema.columns[i].type)
        parts.append(NULL_BYTE if text is None else PRESENT_BYTE + text.encode("utf-8"))
    return SEPARATOR.join(parts)


def row_hash(row: Sequence, columns: Sequence[str], schema: Schema) -> int:
    return fnv1a_64(canonical_serialize(row, columns, schema))


def _serialized_strings(data: TableData, idx: Sequence[int]) -> list[str]:
    # \x00 / \x01 / \x1f are single UTF-8 bytes, so building str and encoding once
    # gives the same bytes as canonical_serialize.
    if not idx:
        return ["" for _ in data.rows]
    cols = list(zip(*data.rows)) if data.rows else [() for _ in data.schema.columns]
    prefixed = []
    for i in idx:
        rendered = render_column(cols[i], data.schema.columns[i].type)
        prefixed.append(["\x00" if v is None else "\x01" + v for v in rendered])
    return list(map("\x1f".join, zip(*prefixed)))


def hash_strings(strings: Sequence[str]) -> np.ndarray:
    """FNV-1a of each string's UTF-8 bytes, batch-compiled."""
    joined = "".join(strings)
    if joined.isascii():
        lengths = np.fromiter(map(len, strings), np.int64, len(strings))
        buf = np.frombuffer(joined.encode("ascii"), np.uint8)
    else:
        encoded = [s.encode("utf-8") for s in strings]
        lengths = np.fromiter(map(len, encoded), np.int64, len(encoded))
        buf = np.frombuffer(b"".join(encoded), np.uint8)
    offsets = np.zeros(len(strings) + 1, np.int64)
    np.cumsum(lengths, out=offsets[1:])
    return csvscan.fnv1a_offsets(buf, offsets)


def hash_rows(data: TableData, columns: Sequence[str]) -> np.ndarray:
    """Vector of row_hash values for every row of ``data``."""
    idx = _column_indices(data.schema, columns)
    if not data.rows:
        return np.empty(0, np.uint64)
    return hash_strings(_serialized_strings(data, idx))


def default_hash_columns(schema: Schema, primary_key: Sequence[str]) -> list[str]:
    pk = set(primary_key)
    return [n for n in schema.names if n not in pk]


def key_texts(data: TableData, primary_key: Sequence[str]) -> list[tuple]:
    """Primary-key tuples in canonical text form; raises on a null key cell."""
    idx = _column_indices(data.schema, primary_key)
    cols = list(zip(*data.rows)) if data.rows else []
    rendered = [render_column(cols[i], data.schema.columns[i].type) for i in idx] if cols else []
    keys = list(zip(*rendered)) if rendered else [() for _ in data.rows]
    for r, k in enumerate(keys):
        if None in k:
            raise NullPrimaryKey(r)
    return keys


@dataclass
class KeyedRow:
    key: tuple
    hash: int
    row: tuple


@dataclass
class HashedRows:
    """Keys and hashes of a row sequence, in row order."""

    keys: list[tuple]
    hashes: np.ndarray

    def __len__(self) -> int:
        return len(self.keys)

    @classmethod
    def from_table(cls, data: TableData, primary_key: Sequence[str],
                   hash_columns: Sequence[str]) -> "HashedRows":
        return cls(key_texts(data, primary_key), hash_rows(data, hash_columns))

    def keyed_rows(self, data: TableData) -> list[KeyedRow]:
        return [KeyedRow(k, int(h), r) for k, h, r in zip(self.keys, self.hashes.tolist(), data.rows)]

    def latest_index(self) -> dict[tuple, int]:
        """key -> hash, later rows overriding earlier ones."""
        return dict(zip(self.keys, self.hashes.tolist()))


@dataclass
class ChangeSet:
    inserted: list[tuple] = field(default_factory=list)
    modified: list[tuple] = field(default_factory=list)
    unchanged_count: int = 0
    # positions in the incoming rows of everything emitted, in incoming order
    emitted: list[int] = field(default_factory=list)

    @property
    def emitted_count(self) -> int:
        return len(self.emitted)


@dataclass
class Classification:
    inserted: list[int]
    modified: list[int]
    unchanged_count: int

    @property
    def emitted(self) -> list[int]:
        return sorted(self.inserted + self.modified)


def classify_hashed(incoming: HashedRows, previous: dict[tuple, int]) -> Classification:
    """Anti-join incoming (key, hash) pairs against a key -> hash index."""
    inserted: list[int] = []
    modified: list[int] = []
    unchanged = 0
    get = previous.get
    for i, (k, h) in enumerate(zip(incoming.keys, incoming.hashes.tolist())):
        p = get(k)
        if p is None:
            inserted.append(i)
        elif p != h:
            modified.append(i)
        else:
            unchanged += 1
    return Classification(inserted, modified, unchanged)


def classify_changes(incoming: TableData, previous: TableData, primary_key: Sequence[str],
                     hash_columns: Sequence[str] | None = None,
                     schema: Schema | None = None) -> ChangeSet:
    """Split ``incoming`` into inserted, modified and unchanged rows.

    ``previous`` must hold at most one row per key.  Keys that exist only in
    ``previous`` are ignored: deletions are not observable this way.
    """
    if not primary_key:
        raise ValueError("primary_key must be non-empty")
    schema = schema or incoming.schema
    if hash_columns is None:
        hash_columns = default_hash_columns(schema, primary_key)
    inc = HashedRows.from_table(TableData(schema, incoming.rows), primary_key, hash_columns)
    prev = HashedRows.from_table(TableData(schema, previous.rows), primary_key, hash_columns)
    index: dict[tuple, int] = {}
    for k, h in zip(prev.keys, prev.hashes.tolist()):
        if k in index:
            raise DuplicateKeyInPrevious(k)
        index[k] = h
    c = classify_hashed(inc, index)
    rows = incoming.rows
    return ChangeSet(
        inserted=[rows[i] for i in c.inserted],
        modified=[rows[i] for i in c.modified],
        unchanged_count=c.unchanged_count,
        emitted=c.emitted,
    )
