import hashlib
import json
import random

import pytest

from helpers import TS0, random_schema, random_table, write_source
from lakeflow.errors import (AuthFailure, ReadError, SchemaMismatch, SourceUnavailable,
                             UnknownColumn, UnknownCredentialsRef, UnsupportedCapability)
from lakeflow.metadata import CredentialStore, MappingEntry
from lakeflow.sources import (CsvSource, InMemorySource, SnapshotOnlySource, open_source,
                              read_since, read_snapshot, save_schema)
from lakeflow.table import Schema, TableData


@pytest.fixture
def data():
    rng = random.Random(5)
    return random_table(rng, random_schema(rng, 4), 300)


def entry(**kw):
    base = dict(source_name="src", table_name="t", credentials_ref="ref", primary_key=("id",),
                ingestion_type="incremental")
    base.update(kw)
    return MappingEntry(**base)


def test_csv_snapshot_round_trip(tmp_path, data):
    path = write_source(tmp_path, "src", "t", data)
    src = CsvSource(path, schema_hint=data.schema)
    assert read_snapshot(src) == data
    assert list(src.iter_snapshot())[0].schema == data.schema


def test_read_since_is_strict(tmp_path, data):
    path = write_source(tmp_path, "src", "t", data)
    src = CsvSource(path, schema_hint=data.schema)
    wm = sorted(data.column("updated_at"))[150]
    got = read_since(src, "updated_at", wm)
    assert got.rows == [r for r in data.rows if r[-1] > wm]
    assert all(r[-1] != wm for r in got.rows)
    mem = InMemorySource(data)
    assert mem.read_since("updated_at", wm) == got


def test_watermark_errors(tmp_path, data):
    src = CsvSource(write_source(tmp_path, "src", "t", data), schema_hint=data.schema)
    with pytest.raises(UnknownColumn):
        src.read_since("nope", 0)
    with pytest.raises(SchemaMismatch):
        src.read_since("id", 0)
    with pytest.raises(UnsupportedCapability):
        SnapshotOnlySource(src).read_since("updated_at", 0)


def test_snapshot_only_capabilities(data):
    caps = SnapshotOnlySource(InMemorySource(data)).capabilities()
    assert caps.snapshot_only and not caps.supports_watermark_filter
    assert SnapshotOnlySource(InMemorySource(data)).read_snapshot() == data


def test_source_reflects_file_changes(tmp_path, data):
    path = write_source(tmp_path, "src", "t", data)
    src = CsvSource(path, schema_hint=data.schema)
    assert len(src.read_snapshot()) == len(data)
    write_source(tmp_path, "src", "t", data.take(range(10)))
    assert len(src.read_snapshot()) == 10


def test_open_source_missing(tmp_path):
    with pytest.raises(SourceUnavailable):
        open_source(entry(), root=tmp_path)
    (tmp_path / "src").mkdir()
    with pytest.raises(SourceUnavailable):
        open_source(entry(), root=tmp_path)


def test_open_source_auth(tmp_path, data):
    write_source(tmp_path, "src", "t", data)
    digest = hashlib.sha256(b"letmein").hexdigest()
    (tmp_path / "src" / "_source.json").write_text(json.dumps({"secret_sha256": digest}))
    with pytest.raises(AuthFailure):
        open_source(entry(), root=tmp_path)
    with pytest.raises(UnknownCredentialsRef):
        open_source(entry(), root=tmp_path, credentials=CredentialStore({}))
    with pytest.raises(AuthFailure) as e:
        open_source(entry(), root=tmp_path, credentials=CredentialStore({"ref": "wrong"}))
    assert "wrong" not in str(e.value)
    src = open_source(entry(), root=tmp_path, credentials=CredentialStore({"ref": "letmein"}))
    assert len(src.read_snapshot()) == len(data)


def test_open_source_snapshot_only_flag(tmp_path, data):
    write_source(tmp_path, "src", "t", data)
    (tmp_path / "src" / "_source.json").write_text(json.dumps({"snapshot_only": True}))
    assert open_source(entry(), root=tmp_path).capabilities().snapshot_only


def test_declared_schema(tmp_path, data):
    write_source(tmp_path, "src", "t", data)
    save_schema(tmp_path, "s", data.schema)
    src = open_source(entry(schema_ref="s"), root=tmp_path)
    assert src.schema() == data.schema
    other = Schema.of(("id", "integer"), ("zz", "text"))
    save_schema(tmp_path, "other", other)
    with pytest.raises(SchemaMismatch):
        open_source(entry(schema_ref="other"), root=tmp_path).read_snapshot()
    with pytest.raises(SourceUnavailable):
        open_source(entry(schema_ref="absent"), root=tmp_path)


def test_bad_cells_are_read_errors(tmp_path):
    s = Schema.of(("id", "integer"), ("ts", "timestamp"))
    p = tmp_path / "src" / "t.csv"
    p.parent.mkdir()
    p.write_text("id,ts\n1,2024-01-01T00:00:00.000Z\nx,2024-01-01T00:00:00.000Z\n")
    with pytest.raises(ReadError):
        CsvSource(p, declared_schema=s).read_snapshot()
    p.write_text("id,ts\n1,2024-01-01T00:00:00.000Z,extra\n")
    with pytest.raises(ReadError):
        CsvSource(p, declared_schema=s).read_snapshot()
    p.write_text('id,ts\n"1,2024\n')
    with pytest.raises(ReadError):
        CsvSource(p, declared_schema=s).read_snapshot()


def test_inferred_schema(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("id,amt,ts\n1,2.5,2024-01-01T00:00:00.000Z\n2,,\n")
    src = CsvSource(p)
    assert [c.type.value for c in src.schema().columns] == ["integer", "decimal", "timestamp"]
    assert src.read_since("ts", TS0 - 1).rows == [(1, src.read_snapshot().rows[0][1], TS0)]


def test_hashed_snapshot_materializes_subset(tmp_path, data):
    src = CsvSource(write_source(tmp_path, "src", "t", data), schema_hint=data.schema)
    snap = src.hashed_snapshot(["id"])
    assert len(snap) == len(data)
    assert snap.materialize([3, 7]) == data.take([3, 7])
    assert TableData.concat(data.schema, snap.iter_materialize([3, 7])) == data.take([3, 7])
