from decimal import Decimal

import pytest

from helpers import brute_diff
from lakeflow.bench import (BANK_SCHEMA, DatasetSpec, MutationSpec, Scenario, generate_dataset,
                            mutate_csv, mutate_dataset, parse_size, run_benchmark, scenario_mapping,
                            summary_rows, tree_digest, write_dataset_csv, write_summary_csv)
from lakeflow.cdc import default_hash_columns
from lakeflow.csvio import CsvFile, write_csv
from lakeflow.metadata import IngestionType


def test_generator_shape_and_determinism():
    a = generate_dataset(DatasetSpec(500, seed=3))
    assert len(a) == 500 and len(a.schema) == 25
    assert a == generate_dataset(DatasetSpec(500, seed=3))
    assert a != generate_dataset(DatasetSpec(500, seed=4))
    assert a.column("transaction_id") == list(range(1, 501))
    ts = a.column("event_timestamp")
    assert ts == sorted(ts)
    # a prefix of a bigger dataset is the smaller dataset
    assert generate_dataset(DatasetSpec(70_000, seed=3)).take(range(500)) == a


def test_streamed_csv_matches_typed_writer(tmp_path):
    spec = DatasetSpec(1200, seed=9)
    write_dataset_csv(spec, tmp_path / "a.csv")
    write_csv(tmp_path / "b.csv", generate_dataset(spec))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@pytest.mark.parametrize("cf,ins", [(0.4, 0.05), (0.0, 0.0), (0.0, 0.1), (1.0, 0.0)])
def test_mutation_counts(cf, ins):
    base = generate_dataset(DatasetSpec(1000, seed=1))
    mut = mutate_dataset(base, MutationSpec(cf, ins, seed=2))
    pk = ["transaction_id"]
    added, changed, same = brute_diff(mut, base, pk, default_hash_columns(BANK_SCHEMA, pk))
    assert len(changed) == int(cf * 1000) and len(added) == int(ins * 1000)
    assert same == 1000 - int(cf * 1000)
    top = max(base.column("event_timestamp"))
    for i in changed + added:
        assert mut.rows[i][7] > top
        assert isinstance(mut.rows[i][3], Decimal)


def test_streaming_mutation_matches(tmp_path):
    spec = DatasetSpec(3000, seed=5)
    write_dataset_csv(spec, tmp_path / "base.csv")
    mutate_csv(tmp_path / "base.csv", tmp_path / "mut.csv", MutationSpec(seed=5))
    expected = mutate_dataset(generate_dataset(spec), MutationSpec(seed=5))
    assert CsvFile(tmp_path / "mut.csv").scan(BANK_SCHEMA).table() == expected


def test_scenario_mappings():
    assert [e.ingestion_type for e in scenario_mapping(Scenario.HYBRID)] == [
        IngestionType.FULL, IngestionType.FULL, IngestionType.INCREMENTAL, IngestionType.INCREMENTAL]
    assert all(e.watermark_column is None for e in scenario_mapping(Scenario.ALL_INCREMENTAL))
    assert all(e.watermark_column for e in scenario_mapping(Scenario.ALL_INCREMENTAL, "date"))


def test_parse_size():
    assert [parse_size(s) for s in ["1k", "10K", "1m", "250", "1.5k"]] == [
        1000, 10_000, 1_000_000, 250, 1500]


@pytest.mark.parametrize("method", ["hash", "date"])
def test_small_benchmark(tmp_path, method):
    res = run_benchmark([400], tmp_path / "lakes", tmp_path / "data", seed=7,
                        incremental_method=method)
    assert [r.scenario for r in res] == [Scenario.ALL_INCREMENTAL, Scenario.ALL_FULL, Scenario.HYBRID]
    assert len({r.lake_digest for r in res}) == 1
    written = {r.scenario: r.total_rows_written for r in res}
    n = 400 + 20
    diff = 160 + 20
    assert written == {Scenario.ALL_INCREMENTAL: 4 * diff, Scenario.ALL_FULL: 4 * n,
                       Scenario.HYBRID: 2 * n + 2 * diff}
    assert all(r.failures == 0 for r in res)
    write_summary_csv(res, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].split(",")[:4] == ["size", "incremental_wall_ms", "full_wall_ms", "hybrid_wall_ms"]
    assert summary_rows(res)[0]["full_rows_written"] == 4 * n


def test_tree_digest_sensitive(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "a" / "f").write_text("x")
    d = tree_digest(tmp_path)
    (tmp_path / "a" / "f").write_text("y")
    assert tree_digest(tmp_path) != d
