import json
import multiprocessing as mp
import os
import random
import subprocess
import sys
import time

import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_schema, random_table
from lakeflow.errors import ConcurrentWriter, CorruptLog, SchemaDrift, TableMissing
from lakeflow.lake import Lake, LakeTable, table_exists
from lakeflow.table import Schema, TableData


@pytest.fixture
def lake(tmp_path):
    return Lake(tmp_path / "lake", durable=False)


def tables(seed, k, n=40):
    rng = random.Random(seed)
    schema = random_schema(rng, 3)
    return schema, [random_table(rng, schema, rng.randint(0, n), first_key=1 + 1000 * i)
                    for i in range(k)]


def fold(ops, schema):
    rows = []
    for op, data in ops:
        rows = list(data.rows) if op == "overwrite" else rows + list(data.rows)
    return TableData(schema, rows)


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.lists(st.sampled_from(["overwrite", "append"]), min_size=1, max_size=6))
def test_replay_equals_fold_and_time_travel(tmp_path_factory, seed, ops):
    lake = Lake(tmp_path_factory.mktemp("lake"), durable=False)
    t = lake.table("s", "t")
    schema, datas = tables(seed, len(ops))
    applied = []
    for v, (op, data) in enumerate(zip(ops, datas)):
        rec = t.commit(op, data)
        assert rec.version == v
        applied.append((op, data))
        assert t.read_latest() == fold(applied, schema)
    for v in range(len(ops)):
        assert t.read_version(v) == fold(applied[:v + 1], schema)
    assert [r.version for r in t.log()] == list(range(len(ops)))
    assert t.state().row_count == len(t.read_latest())


def test_basic_lifecycle(lake):
    t = lake.table("s", "t")
    with pytest.raises(FileNotFoundError):
        table_exists(lake.root, "s", "t")
    lake.root.mkdir()
    assert not t.exists() and not table_exists(lake.root, "s", "t")
    with pytest.raises(TableMissing):
        t.read_latest()
    schema, (a, b) = tables(1, 2)
    t.commit_overwrite(a)
    t.commit_append(b)
    assert lake.tables() == [("s", "t")]
    assert table_exists(lake.root, "s", "t")
    log = json.loads((t.log_dir / "000000000001.json").read_text())
    assert set(log) >= {"version", "operation", "data_files", "row_count", "wall_timestamp",
                        "schema_fingerprint"}
    assert log["operation"] == "append" and log["row_count"] == len(b)
    with pytest.raises(TableMissing):
        t.read_version(5)


def test_append_schema_drift(lake):
    t = lake.table("s", "t")
    schema, (a,) = tables(2, 1)
    t.commit_overwrite(a)
    other = Schema.of(("id", "integer"), ("z", "text"))
    with pytest.raises(SchemaDrift):
        t.commit_append(TableData(other, [(1, "x")]))
    t.commit_overwrite(TableData(other, [(1, "x")]))      # overwrite may change schema
    assert t.schema() == other and t.read_latest().rows == [(1, "x")]


def test_empty_append_creates_version(lake):
    t = lake.table("s", "t")
    schema, (a,) = tables(3, 1)
    t.commit_overwrite(a)
    rec = t.commit_append(TableData(schema, []))
    assert rec.version == 1 and rec.row_count == 0
    assert t.read_latest() == a


def test_file_rollover(tmp_path):
    lake = Lake(tmp_path, durable=False, max_rows_per_file=7)
    t = lake.table("s", "t")
    schema, (a,) = tables(4, 1, n=40)
    a = TableData(schema, a.rows + random_table(random.Random(0), schema, 30, 5000).rows)
    rec = t.commit_overwrite(a)
    assert len(rec.data_files) == -(-len(a) // 7)
    assert t.read_latest() == a


def test_max_watermark(lake):
    t = lake.table("s", "t")
    schema, (a, b) = tables(5, 2)
    t.commit_overwrite(a)
    t.commit_append(b)
    vals = [v for v in a.column("updated_at") + b.column("updated_at") if v is not None]
    assert t.max_watermark("updated_at") == max(vals)
    # without the cached maxima the value is recomputed from the data files
    for p in sorted(t.log_dir.glob("*.json")):
        doc = json.loads(p.read_text())
        doc.pop("max_values", None)
        p.write_text(json.dumps(doc))
    assert t.max_watermark("updated_at") == max(vals)


# --- crash atomicity and log corruption --------------------------------------

def test_crash_before_log_rename_keeps_previous_version(lake, monkeypatch):
    t = lake.table("s", "t")
    schema, (a, b) = tables(6, 2)
    t.commit_overwrite(a)

    def boom(self, record):
        raise OSError("injected crash")

    monkeypatch.setattr(LakeTable, "_publish", boom)
    for op in ("append", "overwrite"):
        with pytest.raises(OSError):
            t.commit(op, b)
        assert t.read_latest() == a
        assert [r.version for r in t.log()] == [0]
        assert not t.lock_path.exists()
    monkeypatch.undo()
    assert t.commit_append(b).version == 1
    assert t.read_latest() == TableData(schema, a.rows + b.rows)


def test_crash_mid_stream_keeps_previous_version(lake):
    t = lake.table("s", "t")
    schema, (a, b) = tables(7, 2)
    t.commit_overwrite(a)

    def chunks():
        yield b
        raise RuntimeError("source died")

    with pytest.raises(RuntimeError):
        t.commit("overwrite", chunks(), schema=schema)
    assert t.read_latest() == a and len(t.log()) == 1


def test_corrupt_logs(lake):
    t = lake.table("s", "t")
    schema, (a, b, c) = tables(8, 3)
    for d in (a, b, c):
        t.commit_append(d)
    (t.log_dir / "000000000001.json").rename(t.log_dir / "hidden")
    with pytest.raises(CorruptLog):
        t.log()
    (t.log_dir / "hidden").rename(t.log_dir / "000000000001.json")
    assert len(t.log()) == 3
    rec = t.log()[2]
    for name in rec.data_files:
        (t.path / name).unlink()
    with pytest.raises(CorruptLog):
        t.read_latest()
    (t.log_dir / "000000000002.json").write_text("{not json")
    with pytest.raises(CorruptLog):
        t.log()


# --- locking -----------------------------------------------------------------

def test_lock_held_blocks_second_writer(lake):
    schema, (a,) = tables(9, 1)
    t1 = lake.table("s", "t")
    t2 = lake.table("s", "t")
    with t1.locked():
        with pytest.raises(ConcurrentWriter):
            t2.commit_overwrite(a)
        t1.commit_overwrite(a)           # re-entrant for the holder
    t2.commit_append(a)
    assert len(t2.log()) == 2


def _hold_lock(root, ready, release):
    t = Lake(root, durable=False).table("s", "t")
    with t.locked():
        ready.set()
        release.wait(30)


def test_lock_across_processes(tmp_path):
    ctx = mp.get_context("spawn")
    ready, release = ctx.Event(), ctx.Event()
    p = ctx.Process(target=_hold_lock, args=(str(tmp_path), ready, release))
    p.start()
    try:
        assert ready.wait(60)
        schema, (a,) = tables(10, 1)
        with pytest.raises(ConcurrentWriter):
            Lake(tmp_path, durable=False).table("s", "t").commit_overwrite(a)
    finally:
        release.set()
        p.join(60)
    Lake(tmp_path, durable=False).table("s", "t").commit_overwrite(a)


def test_stale_lock_from_crashed_process(tmp_path):
    code = ("import os, sys\n"
            "from lakeflow.lake import Lake\n"
            "t = Lake(sys.argv[1]).table('s', 't')\n"
            "t._acquire()\n"
            "os._exit(9)\n")
    r = subprocess.run([sys.executable, "-c", code, str(tmp_path)])
    assert r.returncode == 9
    lock = tmp_path / "s" / "t" / "_log" / "LOCK"
    assert lock.exists()
    schema, (a,) = tables(11, 1)
    with pytest.raises(ConcurrentWriter):
        Lake(tmp_path, lock_ttl=300, break_stale_locks=True).table("s", "t").commit_overwrite(a)
    old = time.time() - 1000
    os.utime(lock, (old, old))
    with pytest.raises(ConcurrentWriter, match="stale"):
        Lake(tmp_path, lock_ttl=300).table("s", "t").commit_overwrite(a)
    Lake(tmp_path, lock_ttl=300, break_stale_locks=True).table("s", "t").commit_overwrite(a)
    assert not lock.exists()
