"""Metadata-driven batch ingestion into a versioned CSV lake."""

from .cdc import ChangeSet, classify_changes, fnv1a_64, row_hash
from .engine import (IngestionMethod, IngestionReport, effective_snapshot, full_ingest,
                     incremental_ingest_by_date, incremental_ingest_by_hash, resolve_method,
                     run_pipeline)
from .lake import CommitRecord, Lake, LakeTable, table_exists
from .metadata import (CredentialStore, IngestionType, MappingEntry, MappingTable,
                       load_mapping_table, resolve_credentials, save_mapping_table)
from .sources import CsvSource, InMemorySource, SnapshotOnlySource, open_source
from .table import Column, ColumnType, Schema, TableData

__all__ = [
    "ChangeSet", "classify_changes", "fnv1a_64", "row_hash",
    "IngestionMethod", "IngestionReport", "effective_snapshot", "full_ingest",
    "incremental_ingest_by_date", "incremental_ingest_by_hash", "resolve_method", "run_pipeline",
    "CommitRecord", "Lake", "LakeTable", "table_exists",
    "CredentialStore", "IngestionType", "MappingEntry", "MappingTable", "load_mapping_table",
    "resolve_credentials", "save_mapping_table",
    "CsvSource", "InMemorySource", "SnapshotOnlySource", "open_source",
    "Column", "ColumnType", "Schema", "TableData",
]
