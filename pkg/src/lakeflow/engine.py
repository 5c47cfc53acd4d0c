"""Metadata-driven ingestion: resolve a method per mapping entry and run it.

Full refresh overwrites the lake table with the source snapshot.  Date
incremental appends source rows strictly newer than the lake's maximum
watermark.  Hash incremental appends source rows whose (key, row hash) pair
is absent from the lake's latest state.  Both incremental methods fall back
to a full load when the lake table does not exist yet (or, for dates, holds
no watermark).  Updated keys therefore accumulate physical duplicates, and
``effective_snapshot`` resolves them latest-version-wins.
"""

from __future__ import annotations

import contextlib
import enum
import gc
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

from .cdc import classify_hashed, default_hash_columns, key_texts
from .errors import PipelineError, SchemaDrift, UnsatisfiableIngestion, ValidationError
from .lake import Lake, LakeTable
from .metadata import CredentialStore, IngestionType, MappingEntry, MappingTable
from .sources import Source, SourceCapabilities, open_source
from .table import TableData

log = logging.getLogger(__name__)


class IngestionMethod(str, enum.Enum):
    FULL_REFRESH = "full_refresh"
    INCREMENTAL_BY_DATE = "incremental_by_date"
    INCREMENTAL_BY_HASH = "incremental_by_hash"


@dataclass
class IngestionReport:
    source_name: str
    table_name: str
    method: IngestionMethod | None = None
    rows_read_from_source: int = 0
    rows_written_to_lake: int = 0
    resulting_version: int | None = None
    wall_time: float = 0.0          # milliseconds
    fallback_applied: bool = False
    error: str | None = None
    keys_in_lake_not_in_source: int | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_json(self, verbose: bool = False) -> dict:
        d = asdict(self)
        d["method"] = self.method.value if self.method else None
        d["wall_time"] = round(self.wall_time, 3)
        if not verbose:
            d.pop("keys_in_lake_not_in_source")
        return d


def resolve_method(entry: MappingEntry, caps: SourceCapabilities) -> IngestionMethod:
    if entry.ingestion_type is IngestionType.FULL:
        return IngestionMethod.FULL_REFRESH
    if entry.watermark_column and caps.supports_watermark_filter:
        return IngestionMethod.INCREMENTAL_BY_DATE
    if entry.primary_key:
        return IngestionMethod.INCREMENTAL_BY_HASH
    if caps.snapshot_only:
        raise UnsatisfiableIngestion(entry, "snapshot-only source and no primary key to hash on")
    raise UnsatisfiableIngestion(entry, "source cannot filter by watermark and no primary key is set")


def _report(entry: MappingEntry, method: IngestionMethod, t0: float, **kw) -> IngestionReport:
    return IngestionReport(entry.source_name, entry.table_name, method,
                           wall_time=(time.perf_counter() - t0) * 1000, **kw)


def full_ingest(entry: MappingEntry, source: Source, table: LakeTable,
                *, fallback: bool = False, method: IngestionMethod | None = None) -> IngestionReport:
    """Overwrite (or create) the lake table with the source snapshot."""
    t0 = time.perf_counter()
    schema = source.schema()
    rec = table.commit("overwrite", source.iter_snapshot(), schema=schema)
    return _report(entry, method or IngestionMethod.FULL_REFRESH, t0,
                   rows_read_from_source=rec.row_count, rows_written_to_lake=rec.row_count,
                   resulting_version=rec.version, fallback_applied=fallback)


def _check_schema(table: LakeTable, source: Source) -> None:
    lake_schema = table.schema()
    src_schema = source.schema()
    if lake_schema is not None and lake_schema.fingerprint() != src_schema.fingerprint():
        raise SchemaDrift(f"{table}: source schema {src_schema.names} differs from lake schema "
                          f"{lake_schema.names}")


def incremental_ingest_by_date(entry: MappingEntry, source: Source,
                               table: LakeTable) -> IngestionReport:
    """Append source rows whose watermark is strictly above the lake maximum."""
    method = IngestionMethod.INCREMENTAL_BY_DATE
    t0 = time.perf_counter()
    column = entry.watermark_column
    with table.locked():
        watermark = table.max_watermark(column) if table.exists() else None
        if watermark is None:
            return full_ingest(entry, source, table, fallback=True, method=method)
        _check_schema(table, source)
        data, scanned = source.scan_since(column, watermark)
        rec = table.commit_append(data)
    return _report(entry, method, t0, rows_read_from_source=scanned,
                   rows_written_to_lake=len(data), resulting_version=rec.version)


def incremental_ingest_by_hash(entry: MappingEntry, source: Source, table: LakeTable,
                               *, count_missing_keys: bool = False) -> IngestionReport:
    """Append inserted and modified source rows (anti-join on key and row hash)."""
    method = IngestionMethod.INCREMENTAL_BY_HASH
    t0 = time.perf_counter()
    pk = list(entry.primary_key or ())
    if not pk:
        raise UnsatisfiableIngestion(entry, "hash ingestion needs a primary key")
    with table.locked():
        if not table.exists():
            return full_ingest(entry, source, table, fallback=True, method=method)
        _check_schema(table, source)
        schema = source.schema()
        hash_columns = list(entry.hash_columns or default_hash_columns(schema, pk))
        previous = table.hashed_state(pk, hash_columns)
        snap = source.hashed_snapshot(pk, hash_columns)
        changes = classify_hashed(snap.hashed, previous)
        rec = table.commit("append", snap.iter_materialize(changes.emitted), schema=schema)
    missing = None
    if count_missing_keys:
        missing = len(previous.keys() - set(snap.hashed.keys))
    log.info("%s: %d inserted, %d modified, %d unchanged", table, len(changes.inserted),
             len(changes.modified), changes.unchanged_count)
    return _report(entry, method, t0, rows_read_from_source=len(snap),
                   rows_written_to_lake=rec.row_count, resulting_version=rec.version,
                   keys_in_lake_not_in_source=missing)


def ingest(entry: MappingEntry, source: Source, table: LakeTable,
           *, count_missing_keys: bool = False) -> IngestionReport:
    method = resolve_method(entry, source.capabilities())
    if method is IngestionMethod.FULL_REFRESH:
        return full_ingest(entry, source, table)
    if method is IngestionMethod.INCREMENTAL_BY_DATE:
        return incremental_ingest_by_date(entry, source, table)
    return incremental_ingest_by_hash(entry, source, table, count_missing_keys=count_missing_keys)


def effective_snapshot(table: LakeTable, primary_key: Sequence[str] | None = None) -> TableData:
    """Latest snapshot with one row per key: the last physical occurrence wins.

    Rows keep the position at which their key first appeared.
    """
    data = table.read_latest()
    if not primary_key:
        return data
    latest: dict[tuple, int] = {}
    for i, k in enumerate(key_texts(data, primary_key)):
        latest[k] = i
    return data.take(latest.values())


@contextlib.contextmanager
def _gc_paused():
    # Row batches are millions of short-lived tuples; cyclic GC passes over
    # them cost about a third of ingest time and reclaim nothing.
    was = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was:
            gc.enable()


SourceFactory = Callable[[MappingEntry], Source]


def run_pipeline(mapping: MappingTable, lake: Lake | str | Path, source_root: str | Path | None = None,
                 *, credentials: CredentialStore | None = None, parallelism: int | None = None,
                 source_factory: SourceFactory | None = None,
                 count_missing_keys: bool = False) -> list[IngestionReport]:
    """Ingest every mapping entry; failures are reported per entry, never raised.

    Entries for distinct tables may run concurrently; entries naming the same
    table run one after another in mapping order.  Reports come back in
    mapping order.
    """
    try:
        mapping.validate()
    except ValidationError as e:
        raise PipelineError(f"mapping table unusable: {e}") from e
    if not isinstance(lake, Lake):
        lake = Lake(lake)
    try:
        lake.root.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise PipelineError(f"lake root unusable: {e}") from e
    if source_factory is None and source_root is None:
        raise PipelineError("either source_root or source_factory is required")
    entries = list(mapping.entries)
    reports: list[IngestionReport | None] = [None] * len(entries)

    def run_one(i: int) -> None:
        entry = entries[i]
        t0 = time.perf_counter()
        table = lake.table(entry.source_name, entry.table_name)
        try:
            if source_factory is not None:
                source = source_factory(entry)
            else:
                source = open_source(entry, root=source_root, credentials=credentials,
                                     schema_hint=table.schema())
            reports[i] = ingest(entry, source, table, count_missing_keys=count_missing_keys)
        except Exception as e:  # isolate: one bad entry must not stop the others
            log.error("%s/%s failed: %s", entry.source_name, entry.table_name, e)
            reports[i] = IngestionReport(entry.source_name, entry.table_name,
                                         wall_time=(time.perf_counter() - t0) * 1000,
                                         error=f"{type(e).__name__}: {e}")

    groups: dict[tuple[str, str], list[int]] = {}
    for i, e in enumerate(entries):
        groups.setdefault(e.key, []).append(i)

    def run_group(indices: list[int]) -> None:
        for i in indices:
            run_one(i)

    workers = parallelism or min(len(groups), os.cpu_count() or 1)
    workers = max(1, min(workers, len(groups) or 1))
    with _gc_paused():
        if workers == 1:
            for g in groups.values():
                run_group(g)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(run_group, groups.values()))
    return reports  # type: ignore[return-value]
