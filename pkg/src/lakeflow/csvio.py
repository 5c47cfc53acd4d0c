"""CSV dialect shared by sources and lake data files.

RFC-4180, UTF-8, header row, ``\\n`` line endings on write, empty field = null.
Reading goes through the compiled scanner so that incremental paths can hash
or filter every record while only materializing the ones they keep.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import csvscan
from .cdc import HashedRows, canonical_serialize, fnv1a_64
from .errors import NullPrimaryKey, ReadError
from .table import (TYPE_CODES, CellError, Schema, TableData, parse_timestamp, rows_from_text,
                    rows_to_text)

CHUNK_ROWS = 50_000


def write_csv(path: Path, data: TableData | Iterable[TableData], schema: Schema | None = None,
              durable: bool = False) -> int:
    """Write one table (or a stream of chunks sharing ``schema``); returns rows written."""
    chunks = [data] if isinstance(data, TableData) else data
    if schema is None:
        if not isinstance(data, TableData):
            raise ValueError("schema is required when writing a chunk stream")
        schema = data.schema
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(schema.names)
        for chunk in chunks:
            w.writerows(rows_to_text(chunk))
            count += len(chunk)
        if durable:
            f.flush()
            os.fsync(f.fileno())
    return count


def _parse_records(text: str) -> list[list[str]]:
    return [r for r in csv.reader(io.StringIO(text, newline="")) if r]


@dataclass
class Scan:
    """Per-record scanner output for one file."""

    file: "CsvFile"
    schema: Schema
    n: int
    rec_start: np.ndarray
    rec_end: np.ndarray
    hashes: np.ndarray
    flags: np.ndarray
    kstart: np.ndarray
    kend: np.ndarray
    ts: np.ndarray
    hash_cols: tuple[int, ...]
    key_cols: tuple[int, ...]
    ts_col: int

    def record_bytes(self, i: int) -> bytes:
        return self.file.raw[self.rec_start[i]:self.rec_end[i]]

    def text_rows(self, indices: Sequence[int]) -> list[list[str]]:
        raw = self.file.raw
        starts = self.rec_start.tolist()
        ends = self.rec_end.tolist()
        text = b"\n".join([raw[starts[i]:ends[i]] for i in indices]).decode("utf-8")
        rows = _parse_records(text)
        if len(rows) != len(indices):
            raise ReadError(f"{self.file.path}: record boundaries disagree with csv parser")
        return rows

    def _typed(self, indices: Sequence[int]) -> TableData:
        rows = self.text_rows(indices)
        try:
            return rows_from_text(self.schema, rows)
        except CellError as e:
            raise ReadError(f"{self.file.path}: {e}") from None

    def table(self, indices: Sequence[int] | None = None) -> TableData:
        if indices is None:
            return TableData.concat(self.schema, self.iter_tables())
        return TableData.concat(self.schema, self.iter_take(indices))

    def iter_take(self, indices: Sequence[int], chunk_rows: int = CHUNK_ROWS) -> Iterator[TableData]:
        """Typed rows at ``indices``, ``chunk_rows`` at a time."""
        for i in range(0, len(indices), chunk_rows):
            yield self._typed(indices[i:i + chunk_rows])

    def iter_tables(self, chunk_rows: int = CHUNK_ROWS) -> Iterator[TableData]:
        raw = self.file.raw
        for a in range(0, self.n, chunk_rows):
            b = min(a + chunk_rows, self.n)
            text = raw[self.rec_start[a]:self.rec_end[b - 1]].decode("utf-8")
            rows = _parse_records(text)
            if len(rows) != b - a:
                raise ReadError(f"{self.file.path}: record boundaries disagree with csv parser")
            try:
                yield rows_from_text(self.schema, rows, first_row=a)
            except CellError as e:
                raise ReadError(f"{self.file.path}: {e}") from None

    def _slow_rows(self) -> list[int]:
        return np.flatnonzero(self.flags & csvscan.SLOW).tolist()

    def hashed(self) -> HashedRows:
        """Keys (canonical text tuples) and row hashes for every record."""
        if not self.key_cols:
            raise ValueError("scan was made without key columns")
        null_key = np.flatnonzero(self.flags & csvscan.NULL_KEY)
        if null_key.size:
            raise NullPrimaryKey(int(null_key[0]))
        raw = self.file.raw
        spans = [list(zip(self.kstart[:self.n, j].tolist(), self.kend[:self.n, j].tolist()))
                 for j in range(len(self.key_cols))]
        if len(spans) == 1:
            keys = [(raw[s:e].decode("utf-8"),) for s, e in spans[0]]
        else:
            keys = [tuple(raw[s:e].decode("utf-8") for s, e in ks) for ks in zip(*spans)]
        hashes = self.hashes[:self.n].copy()
        slow = self._slow_rows()
        if slow:
            names = self.schema.names
            hcols = [names[i] for i in self.hash_cols]
            typed = self._typed(slow)
            for pos, row in zip(slow, typed.rows):
                hashes[pos] = fnv1a_64(canonical_serialize(row, hcols, self.schema))
                k = []
                for i in self.key_cols:
                    text = canonical_serialize(row, [names[i]], self.schema)
                    if text == b"\x00":
                        raise NullPrimaryKey(pos)
                    k.append(text[1:].decode("utf-8"))
                keys[pos] = tuple(k)
        return HashedRows(keys, hashes)

    def timestamps(self) -> np.ndarray:
        """Parsed timestamp column (NULL_TS for null) for every record."""
        if self.ts_col < 0:
            raise ValueError("scan was made without a timestamp column")
        ts = self.ts[:self.n].copy()
        slow = self._slow_rows()
        if slow:
            for pos, row in zip(slow, self.text_rows(slow)):
                cell = row[self.ts_col]
                try:
                    ts[pos] = csvscan.NULL_TS if cell == "" else parse_timestamp(cell)
                except CellError as e:
                    raise ReadError(f"{self.file.path}: row {pos}: {e}") from None
        return ts


class CsvFile:
    """A CSV file loaded into memory, header parsed."""

    def __init__(self, path: Path):
        self.path = Path(path)
        try:
            self.raw = self.path.read_bytes()
        except OSError as e:
            raise ReadError(f"{self.path}: {e}") from None
        self.buf = np.frombuffer(self.raw, np.uint8)
        if not self.raw.strip():
            raise ReadError(f"{self.path}: missing header row")
        self.body_start = int(csvscan.record_end(self.buf, 0))
        header = _parse_records(self.raw[:self.body_start].decode("utf-8"))
        if not header:
            raise ReadError(f"{self.path}: missing header row")
        self.header: list[str] = header[0]

    def scan(self, schema: Schema, hash_cols: Sequence[int] = (), key_cols: Sequence[int] = (),
             ts_col: int = -1) -> Scan:
        if schema.names != self.header:
            raise ReadError(f"{self.path}: header {self.header} does not match schema {schema.names}")
        types = np.array([TYPE_CODES[t] for t in schema.types], np.int8)
        (n, rs, re_, hashes, flags, ks, ke, ts, err, err_rec) = csvscan.scan(
            self.buf, self.body_start, len(schema), types,
            np.asarray(hash_cols, np.int64), np.asarray(key_cols, np.int64), ts_col)
        if err == csvscan.ERR_ARITY:
            raise ReadError(f"{self.path}: record {err_rec} does not have {len(schema)} fields")
        if err == csvscan.ERR_QUOTE:
            raise ReadError(f"{self.path}: record {err_rec} has a malformed quoted field")
        return Scan(self, schema, int(n), rs, re_, hashes, flags, ks, ke, ts,
                    tuple(hash_cols), tuple(key_cols), ts_col)

    def text_rows(self) -> list[list[str]]:
        return _parse_records(self.raw[self.body_start:].decode("utf-8"))
