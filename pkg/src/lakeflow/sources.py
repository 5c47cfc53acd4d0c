"""Batch source connectors.

Every handle offers a full snapshot; handles whose capabilities allow it also
offer a strict ``column > watermark`` filtered read.  Three connectors ship:
a CSV directory (``<root>/<source_name>/<table_name>.csv``), a wrapper that
hides history and exposes snapshots only, and an in-memory table for tests.

A source directory may carry ``_source.json``::

    {"snapshot_only": true, "secret_sha256": "<hex digest of the expected secret>"}

and declared schemas live in ``<root>/_schemas/<schema_ref>.json``.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .cdc import HashedRows, default_hash_columns
from .csvio import CsvFile
from .errors import (AuthFailure, ReadError, SchemaMismatch, SourceUnavailable,
                     UnknownColumn, UnsupportedCapability)
from .metadata import CredentialStore, MappingEntry, Secret
from .table import ColumnType, Schema, TableData, infer_schema

log = logging.getLogger(__name__)

SCHEMAS_DIR = "_schemas"
SOURCE_CONFIG = "_source.json"


@dataclass(frozen=True)
class SourceCapabilities:
    supports_watermark_filter: bool
    snapshot_only: bool

    def __post_init__(self):
        if self.snapshot_only and self.supports_watermark_filter:
            raise ValueError("a snapshot-only source cannot filter by watermark")


@dataclass
class HashedSnapshot:
    """Keys and hashes of a whole snapshot; rows are materialized on demand."""

    schema: Schema
    hashed: HashedRows
    materialize: Callable[[Sequence[int]], TableData]
    chunks: Callable[[Sequence[int]], Iterator[TableData]] | None = None

    def __len__(self) -> int:
        return len(self.hashed)

    def iter_materialize(self, indices: Sequence[int]) -> Iterator[TableData]:
        if self.chunks is not None:
            return self.chunks(indices)
        return iter([self.materialize(indices)])


class Source:
    """Base handle.  Subclasses provide ``schema`` and ``read_snapshot``."""

    name = "source"

    def capabilities(self) -> SourceCapabilities:
        return SourceCapabilities(supports_watermark_filter=True, snapshot_only=False)

    def schema(self) -> Schema:
        raise NotImplementedError

    def read_snapshot(self) -> TableData:
        raise NotImplementedError

    def iter_snapshot(self) -> Iterator[TableData]:
        yield self.read_snapshot()

    def _check_watermark(self, column: str) -> int:
        if not self.capabilities().supports_watermark_filter:
            raise UnsupportedCapability(f"{self.name} does not support watermark filtering")
        schema = self.schema()
        if column not in schema.names:
            raise UnknownColumn(f"{self.name} has no column {column!r}")
        if schema.type_of(column) is not ColumnType.TIMESTAMP:
            raise SchemaMismatch(f"watermark column {column!r} is not a timestamp")
        return schema.index(column)

    def scan_since(self, column: str, watermark: int) -> tuple[TableData, int]:
        """(rows with column > watermark, number of source rows scanned)."""
        i = self._check_watermark(column)
        snap = self.read_snapshot()
        return TableData(snap.schema, [r for r in snap.rows if r[i] is not None and r[i] > watermark],
                         snap.validated), len(snap)

    def read_since(self, column: str, watermark: int) -> TableData:
        return self.scan_since(column, watermark)[0]

    def hashed_snapshot(self, primary_key: Sequence[str],
                        hash_columns: Sequence[str] | None = None) -> HashedSnapshot:
        snap = self.read_snapshot()
        if hash_columns is None:
            hash_columns = default_hash_columns(snap.schema, primary_key)
        return HashedSnapshot(snap.schema, HashedRows.from_table(snap, primary_key, hash_columns),
                              snap.take)


class InMemorySource(Source):
    def __init__(self, data: TableData, name: str = "memory", snapshot_only: bool = False):
        self.data = data.validate() if not data.validated else data
        self.name = name
        self._snapshot_only = snapshot_only

    def capabilities(self) -> SourceCapabilities:
        return SourceCapabilities(not self._snapshot_only, self._snapshot_only)

    def schema(self) -> Schema:
        return self.data.schema

    def read_snapshot(self) -> TableData:
        return TableData(self.data.schema, list(self.data.rows), validated=True)


class SnapshotOnlySource(Source):
    """Hides any history of ``inner``: full snapshots only."""

    def __init__(self, inner: Source):
        self.inner = inner
        self.name = inner.name

    def capabilities(self) -> SourceCapabilities:
        return SourceCapabilities(supports_watermark_filter=False, snapshot_only=True)

    def schema(self) -> Schema:
        return self.inner.schema()

    def read_snapshot(self) -> TableData:
        return self.inner.read_snapshot()

    def iter_snapshot(self) -> Iterator[TableData]:
        return self.inner.iter_snapshot()

    def hashed_snapshot(self, primary_key, hash_columns=None) -> HashedSnapshot:
        return self.inner.hashed_snapshot(primary_key, hash_columns)


class CsvSource(Source):
    """One CSV file.  The file is re-read on every call, so reads see current contents."""

    def __init__(self, path: Path, declared_schema: Schema | None = None,
                 schema_hint: Schema | None = None, name: str | None = None):
        self.path = Path(path)
        if not self.path.is_file():
            raise SourceUnavailable(f"source file not found: {self.path}")
        self.declared_schema = declared_schema
        self.schema_hint = schema_hint
        self.name = name or self.path.stem
        self._schema: Schema | None = None

    def _open(self) -> tuple[CsvFile, Schema]:
        if not self.path.is_file():
            raise SourceUnavailable(f"source file not found: {self.path}")
        f = CsvFile(self.path)
        if self.declared_schema is not None:
            want = self.declared_schema.names
            if f.header != want:
                missing = [c for c in want if c not in f.header]
                extra = [c for c in f.header if c not in want]
                raise SchemaMismatch(
                    f"{self.path}: header does not match declared schema "
                    f"(missing {missing}, unexpected {extra}, header {f.header})")
            schema = self.declared_schema
        elif self.schema_hint is not None and self.schema_hint.names == f.header:
            schema = self.schema_hint
        else:
            if len(set(f.header)) != len(f.header):
                raise ReadError(f"{self.path}: duplicate header names")
            schema = infer_schema(f.header, f.text_rows())
        self._schema = schema
        return f, schema

    def schema(self) -> Schema:
        if self._schema is None:
            self._open()
        return self._schema

    def read_snapshot(self) -> TableData:
        f, schema = self._open()
        return f.scan(schema).table()

    def iter_snapshot(self) -> Iterator[TableData]:
        f, schema = self._open()
        return f.scan(schema).iter_tables()

    def scan_since(self, column: str, watermark: int) -> tuple[TableData, int]:
        f, schema = self._open()
        i = self._check_watermark(column)
        scan = f.scan(schema, ts_col=i)
        ts = scan.timestamps()
        keep = np.flatnonzero(ts > np.int64(watermark)).tolist()
        return scan.table(keep), scan.n

    def hashed_snapshot(self, primary_key, hash_columns=None) -> HashedSnapshot:
        f, schema = self._open()
        if hash_columns is None:
            hash_columns = default_hash_columns(schema, primary_key)
        scan = f.scan(schema, hash_cols=schema.indices(hash_columns),
                      key_cols=schema.indices(primary_key))
        return HashedSnapshot(schema, scan.hashed(), scan.table, scan.iter_take)


def load_schema(root: Path, ref: str) -> Schema:
    path = Path(root) / SCHEMAS_DIR / f"{ref}.json"
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SourceUnavailable(f"schema {ref!r} not found at {path}") from None
    except json.JSONDecodeError as e:
        raise ReadError(f"schema {ref!r}: {e}") from None
    cols = doc["columns"] if isinstance(doc, dict) else doc
    try:
        return Schema.from_json(cols)
    except (KeyError, TypeError, ValueError) as e:
        raise ReadError(f"schema {ref!r}: {e}") from None


def save_schema(root: Path, ref: str, schema: Schema) -> Path:
    path = Path(root) / SCHEMAS_DIR / f"{ref}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"columns": schema.to_json()}, indent=2) + "\n", encoding="utf-8")
    return path


def _source_config(src_dir: Path) -> dict:
    path = src_dir / SOURCE_CONFIG
    if not path.is_file():
        return {}
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SourceUnavailable(f"{path}: {e}") from None


def open_source(entry: MappingEntry, secret: Secret | None = None, *, root: str | Path,
                credentials: CredentialStore | None = None,
                schema_hint: Schema | None = None) -> Source:
    """Open the CSV-directory source named by ``entry``.

    A secret is only needed when the source directory declares one; if none is
    passed it is resolved from ``credentials`` at that point.
    """
    root = Path(root)
    src_dir = root / entry.source_name
    if not src_dir.is_dir():
        raise SourceUnavailable(f"source directory not found: {src_dir}")
    config = _source_config(src_dir)
    expected = config.get("secret_sha256")
    if expected:
        if secret is None and credentials is not None:
            secret = credentials.resolve(entry.credentials_ref)
        if secret is None:
            raise AuthFailure(f"{entry.source_name} requires credentials")
        digest = hashlib.sha256(bytes(secret)).hexdigest()
        if not hmac.compare_digest(digest, str(expected).lower()):
            raise AuthFailure(f"credentials rejected by {entry.source_name}")
    declared = load_schema(root, entry.schema_ref) if entry.schema_ref else None
    handle: Source = CsvSource(src_dir / f"{entry.table_name}.csv", declared, schema_hint,
                               name=f"{entry.source_name}/{entry.table_name}")
    if config.get("snapshot_only"):
        handle = SnapshotOnlySource(handle)
    return handle


def read_snapshot(handle: Source) -> TableData:
    return handle.read_snapshot()


def read_since(handle: Source, watermark_column: str, watermark: int) -> TableData:
    return handle.read_since(watermark_column, watermark)
