import json

import pytest
from hypothesis import given, strategies as st

from lakeflow.errors import FileMissing, ParseError, UnknownCredentialsRef, ValidationError
from lakeflow.metadata import (CREDENTIALS_ENV, CredentialStore, IngestionType, MappingEntry,
                               MappingTable, Secret, check_mapping, load_mapping_table,
                               parse_mapping, resolve_credentials, save_mapping_table)

# shaped like the three example rows of the reference mapping table
EXAMPLE = [
    {"source_name": "SourceA", "table_name": "transactions", "credentials_ref": "vault/a",
     "primary_key": ["transaction_id"], "watermark_column": "event_timestamp",
     "ingestion_type": "Full", "hash_columns": None, "schema_ref": None},
    {"source_name": "SourceB", "table_name": "customers", "credentials_ref": "vault/b",
     "primary_key": ["customer_id"], "watermark_column": None,
     "ingestion_type": "Incremental", "hash_columns": None, "schema_ref": None},
    {"source_name": "SourceC", "table_name": "ledger", "credentials_ref": "vault/c",
     "primary_key": None, "watermark_column": "posted_at",
     "ingestion_type": "incremental", "hash_columns": None, "schema_ref": None},
]


def test_load_example(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(EXAMPLE), encoding="utf-8")
    m = load_mapping_table(p)
    assert [e.ingestion_type for e in m] == [IngestionType.FULL, IngestionType.INCREMENTAL,
                                            IngestionType.INCREMENTAL]
    assert m.entries[0].primary_key == ("transaction_id",)


def test_missing_and_malformed(tmp_path):
    with pytest.raises(FileMissing):
        load_mapping_table(tmp_path / "nope.json")
    p = tmp_path / "bad.json"
    p.write_text('[\n {"source_name": "a",\n  oops}\n]', encoding="utf-8")
    with pytest.raises(ParseError) as e:
        load_mapping_table(p)
    assert e.value.line == 3


@pytest.mark.parametrize("mutate,fragment", [
    (lambda d: d.update(primary_key=None, watermark_column=None), "watermark_column or a primary_key"),
    (lambda d: d.update(ingestion_type="sometimes"), "unknown ingestion type"),
    (lambda d: d.update(extra=1), "unknown keys"),
    (lambda d: d.pop("credentials_ref"), "missing required key"),
    (lambda d: d.update(hash_columns=["customer_id"]), "overlap"),
    (lambda d: d.update(primary_key=[]), "non-empty list"),
    (lambda d: d.update(table_name=" "), "table_name"),
])
def test_invalid_entries(mutate, fragment):
    doc = json.loads(json.dumps(EXAMPLE))
    mutate(doc[1])
    with pytest.raises(ValidationError) as e:
        parse_mapping(json.dumps(doc))
    assert e.value.index == 1 and fragment in str(e.value)


def test_duplicate_reported_at_second_occurrence():
    doc = EXAMPLE + [dict(EXAMPLE[0])]
    with pytest.raises(ValidationError) as e:
        parse_mapping(json.dumps(doc))
    assert e.value.index == 3 and "first at entry 0" in str(e.value)


def test_check_mapping_reports_every_entry():
    doc = json.loads(json.dumps(EXAMPLE))
    doc[1]["primary_key"] = None
    doc.append(dict(doc[0]))
    verdicts = check_mapping(json.dumps(doc))
    assert [v.ok for v in verdicts] == [True, False, True, False]


entries = st.builds(
    MappingEntry,
    source_name=st.text("abcxyz_", min_size=1, max_size=8),
    table_name=st.text("abcxyz_", min_size=1, max_size=8),
    credentials_ref=st.text(max_size=10),
    primary_key=st.just(("id",)),
    watermark_column=st.one_of(st.none(), st.just("ts")),
    ingestion_type=st.sampled_from(list(IngestionType)),
    hash_columns=st.one_of(st.none(), st.just(("a", "b"))),
    schema_ref=st.one_of(st.none(), st.just("s1")),
)


@given(st.lists(entries, max_size=6, unique_by=lambda e: e.key), st.integers(0, 3))
def test_save_load_round_trip(tmp_path_factory, es, version):
    path = tmp_path_factory.mktemp("m") / "mapping.json"
    table = MappingTable(tuple(es), version)
    save_mapping_table(table, path)
    assert load_mapping_table(path) == table


def test_empty_mapping_is_valid():
    assert len(parse_mapping("[]")) == 0


def test_credentials(tmp_path, monkeypatch):
    f = tmp_path / "creds.json"
    f.write_text(json.dumps({"vault/a": "s3cret", "empty": ""}), encoding="utf-8")
    store = CredentialStore({"inline": "x"}, f)
    assert bytes(store.resolve("vault/a")) == b"s3cret"
    assert bytes(store.resolve("inline")) == b"x"
    for ref in ("missing", "empty"):
        with pytest.raises(UnknownCredentialsRef):
            store.resolve(ref)
    secret = store.resolve("vault/a")
    assert "s3cret" not in repr(secret) and "s3cret" not in str(secret)
    assert "s3cret" not in repr(store)
    monkeypatch.setenv(CREDENTIALS_ENV, str(f))
    assert isinstance(resolve_credentials("vault/a"), Secret)
