"""Folder-per-table storage with a transactional commit log.

Layout::

    <lake>/<source_name>/<table_name>/
        _schema.json            mirror of the latest committed schema
        _log/000000000000.json  one CommitRecord per version
        _log/LOCK               present while a writer holds the table
        part-<version>-<n>.csv  data files

A version is visible iff its log file exists.  Log files are written to a
temporary name and renamed into place, so a writer that dies before the
rename leaves orphan data files that no reader ever looks at.
"""

from __future__ import annotations

import contextlib
import csv
import enum
import json
import logging
import os
import re
import socket
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .cdc import default_hash_columns
from .csvio import CsvFile
from .errors import (ConcurrentWriter, CorruptLog, ReadError, SchemaDrift, TableMissing,
                     UnknownColumn)
from .metadata import atomic_write_text
from .table import ColumnType, Schema, TableData, parse_timestamp, render_timestamp, rows_to_text

log = logging.getLogger(__name__)

LOG_DIR = "_log"
LOCK_FILE = "LOCK"
SCHEMA_FILE = "_schema.json"
DEFAULT_LOCK_TTL = 300.0

_LOG_NAME = re.compile(r"(\d{12})\.json")


class Operation(str, enum.Enum):
    OVERWRITE = "overwrite"
    APPEND = "append"


@dataclass(frozen=True)
class CommitRecord:
    version: int
    operation: Operation
    data_files: tuple[str, ...]
    row_count: int
    wall_timestamp: int
    schema_fingerprint: str
    schema: Schema
    # max epoch-ms per timestamp column over this commit's rows (None: all null)
    max_values: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "operation": self.operation.value,
            "data_files": list(self.data_files),
            "row_count": self.row_count,
            "wall_timestamp": render_timestamp(self.wall_timestamp),
            "schema_fingerprint": self.schema_fingerprint,
            "schema": self.schema.to_json(),
            "max_values": {k: None if v is None else render_timestamp(v)
                           for k, v in self.max_values.items()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CommitRecord":
        schema = Schema.from_json(obj["schema"])
        return cls(
            version=int(obj["version"]),
            operation=Operation(obj["operation"]),
            data_files=tuple(obj["data_files"]),
            row_count=int(obj["row_count"]),
            wall_timestamp=parse_timestamp(obj["wall_timestamp"]),
            schema_fingerprint=obj["schema_fingerprint"],
            schema=schema,
            max_values={k: None if v is None else parse_timestamp(v)
                        for k, v in obj.get("max_values", {}).items()},
        )


@dataclass
class TableState:
    path: Path
    current_version: int | None
    active_commits: list[CommitRecord]

    @property
    def active_files(self) -> list[str]:
        return [f for c in self.active_commits for f in c.data_files]

    @property
    def schema(self) -> Schema | None:
        return self.active_commits[-1].schema if self.active_commits else None

    @property
    def row_count(self) -> int:
        return sum(c.row_count for c in self.active_commits)


def replay(records: Sequence[CommitRecord]) -> list[CommitRecord]:
    """Commits that make up the snapshot after ``records``: last overwrite onward."""
    active: list[CommitRecord] = []
    for r in records:
        if r.operation is Operation.OVERWRITE:
            active = [r]
        else:
            active.append(r)
    return active


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


def _fsync_dir(path: Path) -> None:
    try:
        fd = os.open(path, os.O_RDONLY)
    except OSError:
        return
    try:
        os.fsync(fd)
    except OSError:
        pass
    finally:
        os.close(fd)


class LakeTable:
    def __init__(self, lake: "Lake", source_name: str, table_name: str):
        self.lake = lake
        self.source_name = source_name
        self.table_name = table_name
        self.path = lake.root / source_name / table_name
        self.log_dir = self.path / LOG_DIR
        self.lock_path = self.log_dir / LOCK_FILE
        self._lock_depth = 0
        self._lock_token: str | None = None

    def __repr__(self) -> str:
        return f"LakeTable({self.source_name}/{self.table_name})"

    # ---------------------------------------------------------------- log

    def log(self) -> list[CommitRecord]:
        if not self.log_dir.is_dir():
            return []
        versions = []
        for p in self.log_dir.iterdir():
            m = _LOG_NAME.fullmatch(p.name)
            if m:
                versions.append((int(m.group(1)), p))
        versions.sort()
        records = []
        for expected, (v, p) in enumerate(versions):
            if v != expected:
                raise CorruptLog(f"{self}: log gap, expected version {expected}, found {v}")
            try:
                rec = CommitRecord.from_json(json.loads(p.read_text(encoding="utf-8")))
            except (ValueError, KeyError, TypeError) as e:
                raise CorruptLog(f"{self}: unreadable log entry {p.name}: {e}") from None
            if rec.version != v:
                raise CorruptLog(f"{self}: {p.name} records version {rec.version}")
            records.append(rec)
        return records

    def exists(self) -> bool:
        return bool(self.log())

    def state(self, version: int | None = None) -> TableState:
        records = self.log()
        if version is not None:
            if not 0 <= version < len(records):
                raise TableMissing(f"{self}: no version {version}")
            records = records[:version + 1]
        current = records[-1].version if records else None
        return TableState(self.path, current, replay(records))

    def _require(self, version: int | None = None) -> TableState:
        st = self.state(version)
        if st.current_version is None:
            raise TableMissing(f"table {self.source_name}/{self.table_name} does not exist")
        return st

    def schema(self) -> Schema | None:
        return self.state().schema

    # ---------------------------------------------------------------- reads

    def _file(self, name: str) -> CsvFile:
        path = self.path / name
        if not path.is_file():
            raise CorruptLog(f"{self}: data file {name} referenced by the log is missing")
        try:
            return CsvFile(path)
        except ReadError as e:
            raise CorruptLog(str(e)) from None

    def iter_commit_scans(self, state: TableState, **scan_args):
        for c in state.active_commits:
            for name in c.data_files:
                try:
                    yield c, self._file(name).scan(c.schema, **scan_args)
                except ReadError as e:
                    raise CorruptLog(str(e)) from None

    def iter_chunks(self, version: int | None = None) -> Iterator[TableData]:
        st = self._require(version)
        for c, scan in self.iter_commit_scans(st):
            if c.schema != st.schema:
                raise SchemaDrift(f"{self}: commit {c.version} has a different schema")
            yield from scan.iter_tables()

    def read_latest(self) -> TableData:
        st = self._require()
        return TableData.concat(st.schema, self.iter_chunks())

    def read_version(self, version: int) -> TableData:
        st = self._require(version)
        return TableData.concat(st.schema, self.iter_chunks(version))

    def hashed_state(self, primary_key: Sequence[str],
                     hash_columns: Sequence[str] | None = None) -> dict[tuple, int]:
        """key -> row hash over the latest snapshot, later rows winning."""
        st = self._require()
        schema = st.schema
        if hash_columns is None:
            hash_columns = default_hash_columns(schema, primary_key)
        index: dict[tuple, int] = {}
        for _, scan in self.iter_commit_scans(st, hash_cols=schema.indices(hash_columns),
                                              key_cols=schema.indices(primary_key)):
            h = scan.hashed()
            index.update(zip(h.keys, h.hashes.tolist()))
        return index

    def max_watermark(self, column: str) -> int | None:
        st = self._require()
        schema = st.schema
        if column not in schema.names:
            raise UnknownColumn(f"{self}: no column {column!r}")
        if all(column in c.max_values for c in st.active_commits):
            vals = [c.max_values[column] for c in st.active_commits if c.max_values[column] is not None]
            return max(vals) if vals else None
        if schema.type_of(column) is ColumnType.TIMESTAMP:
            best = None
            for _, scan in self.iter_commit_scans(st, ts_col=schema.index(column)):
                ts = scan.timestamps()
                ts = ts[ts != np.iinfo(np.int64).min]
                if ts.size:
                    m = int(ts.max())
                    best = m if best is None else max(best, m)
            return best
        vals = [v for v in self.read_latest().column(column) if v is not None]
        return max(vals) if vals else None

    # ---------------------------------------------------------------- writes

    @contextlib.contextmanager
    def locked(self):
        """Hold the single-writer lock; re-entrant for this handle."""
        if self._lock_depth == 0:
            self._acquire()
        self._lock_depth += 1
        try:
            yield self
        finally:
            self._lock_depth -= 1
            if self._lock_depth == 0:
                self._release()

    def _acquire(self) -> None:
        self.log_dir.mkdir(parents=True, exist_ok=True)
        token = uuid.uuid4().hex
        payload = json.dumps({"pid": os.getpid(), "host": socket.gethostname(),
                              "token": token, "created": render_timestamp(_now_ms())})
        for attempt in range(2):
            try:
                fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)
            except FileExistsError:
                try:
                    age = time.time() - self.lock_path.stat().st_mtime
                    holder = self.lock_path.read_text(encoding="utf-8")
                except FileNotFoundError:
                    continue
                if attempt == 0 and age > self.lake.lock_ttl and self.lake.break_stale_locks:
                    log.warning("%s: breaking stale lock (age %.0fs): %s", self, age, holder)
                    with contextlib.suppress(FileNotFoundError):
                        self.lock_path.unlink()
                    continue
                stale = " (stale; rerun with stale-lock breaking enabled)" if age > self.lake.lock_ttl else ""
                raise ConcurrentWriter(f"{self} is locked by {holder} for {age:.0f}s{stale}")
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                f.write(payload)
            self._lock_token = token
            return
        raise ConcurrentWriter(f"{self}: could not acquire lock")

    def _release(self) -> None:
        try:
            holder = json.loads(self.lock_path.read_text(encoding="utf-8"))
        except (FileNotFoundError, ValueError):
            holder = {}
        if holder.get("token") == self._lock_token:
            with contextlib.suppress(FileNotFoundError):
                self.lock_path.unlink()
        self._lock_token = None

    def _write_parts(self, version: int, schema: Schema, chunks: Iterable[TableData]):
        """Write data files; returns (file names, row count, max per timestamp column)."""
        self.path.mkdir(parents=True, exist_ok=True)
        ts_cols = [(c.name, i) for i, c in enumerate(schema.columns) if c.type is ColumnType.TIMESTAMP]
        maxima: dict[str, int | None] = {name: None for name, _ in ts_cols}
        limit = self.lake.max_rows_per_file
        files: list[str] = []
        total = 0

        def tracked(parts):
            nonlocal total
            for chunk in parts:
                if chunk.schema != schema:
                    raise SchemaDrift(f"{self}: chunk schema differs from commit schema")
                if not chunk.validated:
                    chunk.validate()
                for name, i in ts_cols:
                    vals = [r[i] for r in chunk.rows if r[i] is not None]
                    if vals:
                        m = max(vals)
                        cur = maxima[name]
                        maxima[name] = m if cur is None else max(cur, m)
                total += len(chunk)
                yield chunk

        out = None

        def close():
            nonlocal out
            f, _, _ = out
            if self.lake.durable:
                f.flush()
                os.fsync(f.fileno())
            f.close()
            out = None

        try:
            for chunk in tracked(chunks):
                rows = chunk.rows
                start = 0
                while start < len(rows):
                    if out is None:
                        name = f"part-{version:012d}-{len(files)}.csv"
                        f = open(self.path / name, "w", encoding="utf-8", newline="")
                        w = csv.writer(f, lineterminator="\n")
                        w.writerow(schema.names)
                        files.append(name)
                        out = [f, w, 0]
                    take = min(len(rows) - start, limit - out[2])
                    out[1].writerows(rows_to_text(TableData(schema, rows[start:start + take], validated=True)))
                    out[2] += take
                    start += take
                    if out[2] >= limit:
                        close()
            if out is not None:
                close()
        finally:
            if out is not None:
                out[0].close()
        return files, total, maxima

    def _publish(self, record: CommitRecord) -> None:
        final = self.log_dir / f"{record.version:012d}.json"
        if final.exists():
            raise ConcurrentWriter(f"{self}: version {record.version} already committed")
        tmp = self.log_dir / f".{record.version:012d}.json.{uuid.uuid4().hex}.tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(record.to_json(), f, indent=1)
            f.flush()
            if self.lake.durable:
                os.fsync(f.fileno())
        os.replace(tmp, final)
        if self.lake.durable:
            _fsync_dir(self.log_dir)

    def commit(self, operation: Operation | str, chunks: Iterable[TableData] | TableData,
               schema: Schema | None = None) -> CommitRecord:
        """Write ``chunks`` as one new version.  Appends must keep the schema fingerprint."""
        operation = Operation(operation)
        if isinstance(chunks, TableData):
            schema = schema or chunks.schema
            chunks = [chunks]
        if schema is None:
            raise ValueError("schema is required when committing a chunk stream")
        with self.locked():
            records = self.log()
            version = len(records)
            if operation is Operation.APPEND and records:
                current = replay(records)[-1].schema
                if current.fingerprint() != schema.fingerprint():
                    raise SchemaDrift(
                        f"{self}: append schema {schema.names} does not match table schema "
                        f"{current.names}")
            files, total, maxima = self._write_parts(version, schema, chunks)
            record = CommitRecord(version, operation, tuple(files), total, _now_ms(),
                                  schema.fingerprint(), schema, maxima)
            self._publish(record)
            atomic_write_text(self.path / SCHEMA_FILE,
                              json.dumps({"columns": schema.to_json()}, indent=2) + "\n")
            log.debug("%s: committed v%d %s (%d rows)", self, version, operation.value, total)
            return record

    def commit_overwrite(self, data: TableData) -> CommitRecord:
        return self.commit(Operation.OVERWRITE, data)

    def commit_append(self, data: TableData) -> CommitRecord:
        return self.commit(Operation.APPEND, data)


class Lake:
    def __init__(self, root: str | Path, *, lock_ttl: float = DEFAULT_LOCK_TTL,
                 break_stale_locks: bool = False, durable: bool = True,
                 max_rows_per_file: int = 1_000_000):
        self.root = Path(root)
        self.lock_ttl = lock_ttl
        self.break_stale_locks = break_stale_locks
        self.durable = durable
        self.max_rows_per_file = max_rows_per_file

    def table(self, source_name: str, table_name: str) -> LakeTable:
        return LakeTable(self, source_name, table_name)

    def table_exists(self, source_name: str, table_name: str) -> bool:
        if not self.root.is_dir():
            raise FileNotFoundError(f"lake root not found: {self.root}")
        return self.table(source_name, table_name).exists()

    def tables(self) -> list[tuple[str, str]]:
        out = []
        if not self.root.is_dir():
            return out
        for src in sorted(p for p in self.root.iterdir() if p.is_dir()):
            for tbl in sorted(p for p in src.iterdir() if p.is_dir()):
                if (tbl / LOG_DIR).is_dir():
                    out.append((src.name, tbl.name))
        return out


def table_exists(lake_root: str | Path, source_name: str, table_name: str) -> bool:
    return Lake(lake_root).table_exists(source_name, table_name)
