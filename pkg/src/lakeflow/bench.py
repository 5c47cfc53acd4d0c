"""Synthetic bank-transaction tables and the full / incremental / hybrid benchmark.

Generation is chunked with a fixed chunk size and a per-chunk RNG seeded by
(seed, chunk index), so output depends only on (n_rows, seed) and large
tables can be streamed to CSV without materializing every row.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import logging
import shutil
import time
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .csvio import CHUNK_ROWS, CsvFile
from .engine import IngestionReport, run_pipeline
from .metadata import IngestionType, MappingEntry, MappingTable
from .sources import save_schema
from .table import Schema, TableData, rows_from_text, rows_to_text

log = logging.getLogger(__name__)

BANK_SCHEMA = Schema.of(
    ("transaction_id", "integer"),
    ("country", "text"),
    ("sector", "text"),
    ("gross_amount", "decimal"),
    ("net_amount", "decimal"),
    ("disbursed_from", "text"),
    ("disbursed_to", "text"),
    ("event_timestamp", "timestamp"),
    ("currency", "text"),
    ("channel", "text"),
    ("customer_id", "integer"),
    ("merchant_id", "integer"),
    ("branch_code", "integer"),
    ("fee_amount", "decimal"),
    ("tax_amount", "decimal"),
    ("exchange_rate", "decimal"),
    ("balance_after", "decimal"),
    ("is_international", "boolean"),
    ("is_flagged", "boolean"),
    ("is_reversed", "boolean"),
    ("status", "text"),
    ("reference_code", "text"),
    ("description", "text"),
    ("settlement_timestamp", "timestamp"),
    ("risk_score", "integer"),
)
BANK_SCHEMA_REF = "bank_transactions"
PRIMARY_KEY = "transaction_id"
WATERMARK = "event_timestamp"

GEN_CHUNK = 65_536
START_MS = 1_704_067_200_000  # 2024-01-01T00:00:00.000Z

COUNTRIES = ["USA", "UK", "Germany", "France", "Japan", "Brazil", "Italy", "Spain", "Canada", "India"]
SECTORS = ["Finance", "Retail", "Economy", "Technology", "Services", "Healthcare", "Energy",
           "Transport"]
CURRENCIES = ["USD", "GBP", "EUR", "JPY", "BRL", "CAD", "INR"]
CHANNELS = ["online", "branch", "atm", "mobile", "wire"]
STATUSES = ["settled", "pending", "failed", "reversed"]
PAYEES = ["Account", "Merchant", "Supplier", "Customer", "Clinic"]
DESCRIPTIONS = ["Card purchase", "Salary deposit", "Invoice payment, net 30", "Wire transfer",
                "Utility bill", "Refund, partial", "Subscription renewal", "Cash withdrawal"]
LETTERS = [chr(c) for c in range(ord("A"), ord("Z") + 1)]


@dataclass(frozen=True)
class DatasetSpec:
    n_rows: int
    seed: int = 0
    n_columns: int = 25
    schema: Schema = BANK_SCHEMA

    def __post_init__(self):
        if self.n_rows < 0:
            raise ValueError("n_rows must be >= 0")
        if self.n_columns != len(self.schema):
            raise ValueError("n_columns must match the bank schema (25)")


@dataclass(frozen=True)
class MutationSpec:
    change_fraction: float = 0.40
    insert_fraction: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.change_fraction <= 1.0:
            raise ValueError("change_fraction must be in [0, 1]")
        if self.insert_fraction < 0:
            raise ValueError("insert_fraction must be >= 0")


def _money(cents: np.ndarray) -> list[str]:
    return [f"{c // 100}.{c % 100:02d}" for c in cents.tolist()]


def _ts_text(ms: np.ndarray) -> list[str]:
    return [s + "Z" for s in np.datetime_as_string(ms.astype("datetime64[ms]"), unit="ms").tolist()]


def _pick(rng: np.random.Generator, choices: Sequence[str], n: int) -> list[str]:
    idx = rng.integers(0, len(choices), n).tolist()
    return [choices[i] for i in idx]


def _chunk_text(seed: int, chunk: int, start: int, count: int) -> list[tuple]:
    """Text rows ``start .. start+count`` (global indices) of chunk ``chunk``."""
    rng = np.random.default_rng([seed, chunk])
    n = GEN_CHUNK
    idx = np.arange(chunk * GEN_CHUNK, (chunk + 1) * GEN_CHUNK, dtype=np.int64)
    gross = rng.integers(100, 2_000_000, n)
    fee = (rng.random(n) * 0.05 * gross).astype(np.int64)
    tax = (gross * 2) // 100
    event = START_MS + idx * 1000 + rng.integers(0, 1000, n)
    settle = event + rng.integers(0, 3 * 86_400_000, n)
    settle_null = rng.random(n) < 0.10
    risk = rng.integers(0, 101, n)
    risk_null = rng.random(n) < 0.05
    rate = rng.integers(5000, 15000, n)
    cols = [
        [str(i + 1) for i in idx.tolist()],
        _pick(rng, COUNTRIES, n),
        _pick(rng, SECTORS, n),
        _money(gross),
        _money(gross - fee),
        [f"Account {a}{b}" for a, b in zip(_pick(rng, LETTERS, n), _pick(rng, LETTERS, n))],
        [f"{p} {a}" for p, a in zip(_pick(rng, PAYEES, n), _pick(rng, LETTERS, n))],
        _ts_text(event),
        _pick(rng, CURRENCIES, n),
        _pick(rng, CHANNELS, n),
        [str(v) for v in rng.integers(1, 1_000_000, n).tolist()],
        [str(v) for v in rng.integers(1, 100_000, n).tolist()],
        [str(v) for v in rng.integers(100, 1000, n).tolist()],
        _money(fee),
        _money(tax),
        [f"{r // 10000}.{r % 10000:04d}" for r in rate.tolist()],
        _money(rng.integers(0, 100_000_000, n)),
        ["true" if v else "false" for v in (rng.random(n) < 0.3).tolist()],
        ["true" if v else "false" for v in (rng.random(n) < 0.02).tolist()],
        ["true" if v else "false" for v in (rng.random(n) < 0.01).tolist()],
        _pick(rng, STATUSES, n),
        [f"TX{v:010X}" for v in rng.integers(0, 1 << 40, n).tolist()],
        _pick(rng, DESCRIPTIONS, n),
        ["" if z else s for s, z in zip(_ts_text(settle), settle_null.tolist())],
        ["" if z else str(v) for v, z in zip(risk.tolist(), risk_null.tolist())],
    ]
    lo = start - chunk * GEN_CHUNK
    return list(zip(*cols))[lo:lo + count]


def iter_dataset_text(spec: DatasetSpec) -> Iterator[list[tuple]]:
    """Canonical CSV text rows of the dataset, one generator chunk at a time."""
    for chunk in range((spec.n_rows + GEN_CHUNK - 1) // GEN_CHUNK):
        start = chunk * GEN_CHUNK
        yield _chunk_text(spec.seed, chunk, start, min(GEN_CHUNK, spec.n_rows - start))


def generate_dataset(spec: DatasetSpec) -> TableData:
    parts = [rows_from_text(spec.schema, rows) for rows in iter_dataset_text(spec)]
    return TableData.concat(spec.schema, parts)


def write_dataset_csv(spec: DatasetSpec, path: Path) -> int:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(spec.schema.names)
        for rows in iter_dataset_text(spec):
            w.writerows(rows)
    return spec.n_rows


# --------------------------------------------------------------------------
# mutation

@dataclass
class _Plan:
    chosen: dict[int, int]       # row index -> rank among modified rows
    deltas: list[int]            # cents added to gross and net per modified row
    base_max_ts: int
    inserts: TableData


def _plan(n: int, base_max_ts: int, max_key: int, spec: MutationSpec, schema: Schema) -> _Plan:
    k = int(spec.change_fraction * n)
    m = int(spec.insert_fraction * n)
    rng = np.random.default_rng([spec.seed, 0x6D757461])
    chosen = np.sort(rng.choice(n, size=k, replace=False)) if k else np.empty(0, np.int64)
    deltas = rng.integers(1, 100_000, k).tolist()
    fresh = generate_dataset(DatasetSpec(m, seed=spec.seed + 0x1A5E7))
    id_i = schema.index(PRIMARY_KEY)
    ts_i = schema.index(WATERMARK)
    rows = []
    for j, r in enumerate(fresh.rows):
        r = list(r)
        r[id_i] = max_key + 1 + j
        r[ts_i] = base_max_ts + k + 1 + j
        rows.append(tuple(r))
    return _Plan({int(i): rank for rank, i in enumerate(chosen.tolist())}, deltas, base_max_ts,
                 TableData(schema, rows, validated=True))


def _apply(plan: _Plan, schema: Schema, index: int, row: tuple) -> tuple:
    rank = plan.chosen.get(index)
    if rank is None:
        return row
    r = list(row)
    delta = Decimal(plan.deltas[rank]).scaleb(-2)
    for col in ("gross_amount", "net_amount"):
        i = schema.index(col)
        r[i] = r[i] + delta
    r[schema.index(WATERMARK)] = plan.base_max_ts + 1 + rank
    return tuple(r)


def mutate_dataset(base: TableData, spec: MutationSpec = MutationSpec()) -> TableData:
    """Modify ``change_fraction`` of the rows and append ``insert_fraction`` new ones.

    Modified rows get a larger gross/net amount and an event_timestamp past the
    base maximum; inserted rows get fresh keys and post-maximum timestamps.
    Everything else is untouched.
    """
    schema = base.schema
    ts = [v for v in base.column(WATERMARK) if v is not None]
    keys = base.column(PRIMARY_KEY)
    plan = _plan(len(base), max(ts) if ts else START_MS, max(keys) if keys else 0, spec, schema)
    rows = [_apply(plan, schema, i, r) for i, r in enumerate(base.rows)]
    return TableData(schema, rows + plan.inserts.rows, validated=True)


def mutate_csv(base_path: Path, out_path: Path, spec: MutationSpec = MutationSpec(),
               schema: Schema = BANK_SCHEMA) -> int:
    """Streaming ``mutate_dataset`` from one CSV file to another; returns rows written."""
    f = CsvFile(base_path)
    scan = f.scan(schema, key_cols=[schema.index(PRIMARY_KEY)], ts_col=schema.index(WATERMARK))
    ts = scan.timestamps()
    ts = ts[ts != np.iinfo(np.int64).min]
    keys = scan.hashed().keys if scan.n else []
    max_key = max(int(k[0]) for k in keys) if keys else 0
    plan = _plan(scan.n, int(ts.max()) if ts.size else START_MS, max_key, spec, schema)
    written = 0
    with open(out_path, "w", encoding="utf-8", newline="") as out:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(schema.names)
        for chunk in scan.iter_tables():
            rows = [_apply(plan, schema, written + i, r) for i, r in enumerate(chunk.rows)]
            w.writerows(rows_to_text(TableData(schema, rows)))
            written += len(rows)
        w.writerows(rows_to_text(plan.inserts))
        written += len(plan.inserts)
    return written


# --------------------------------------------------------------------------
# benchmark

class Scenario(str, enum.Enum):
    ALL_FULL = "all_full"
    ALL_INCREMENTAL = "all_incremental"
    HYBRID = "hybrid"


SCENARIO_ORDER = (Scenario.ALL_INCREMENTAL, Scenario.ALL_FULL, Scenario.HYBRID)
TABLES = ("t1", "t2", "t3", "t4")
SOURCE_NAME = "bank"


@dataclass
class ScenarioResult:
    size: int
    scenario: Scenario
    reports: list[IngestionReport]
    total_wall_time: float          # milliseconds
    total_rows_written: int
    lake_digest: str = ""
    failures: int = 0

    def to_json(self) -> dict:
        return {
            "size": self.size,
            "scenario": self.scenario.value,
            "total_wall_time": round(self.total_wall_time, 3),
            "total_rows_written": self.total_rows_written,
            "lake_digest": self.lake_digest,
            "failures": self.failures,
            "reports": [r.to_json() for r in self.reports],
        }


def _entry(table: str, kind: IngestionType, method: str) -> MappingEntry:
    incremental = kind is IngestionType.INCREMENTAL
    return MappingEntry(
        source_name=SOURCE_NAME,
        table_name=table,
        credentials_ref="bench",
        primary_key=(PRIMARY_KEY,),
        watermark_column=WATERMARK if (not incremental or method == "date") else None,
        ingestion_type=kind,
        schema_ref=BANK_SCHEMA_REF,
    )


def scenario_mapping(scenario: Scenario, incremental_method: str = "hash") -> MappingTable:
    """Four identical tables; hybrid ingests t1, t2 fully and t3, t4 incrementally."""
    full, inc = IngestionType.FULL, IngestionType.INCREMENTAL
    kinds = {
        Scenario.ALL_FULL: [full] * 4,
        Scenario.ALL_INCREMENTAL: [inc] * 4,
        Scenario.HYBRID: [full, full, inc, inc],
    }[scenario]
    return MappingTable(tuple(_entry(t, k, incremental_method) for t, k in zip(TABLES, kinds)))


def tree_digest(root: Path) -> str:
    """SHA-256 over every file's relative path and bytes, in sorted path order."""
    h = hashlib.sha256()
    for p in sorted(q for q in Path(root).rglob("*") if q.is_file()):
        h.update(p.relative_to(root).as_posix().encode("utf-8") + b"\0")
        with open(p, "rb") as f:
            for block in iter(lambda: f.read(1 << 20), b""):
                h.update(block)
        h.update(b"\0")
    return h.hexdigest()


def parse_size(text: str) -> int:
    t = text.strip().lower()
    mult = {"k": 10**3, "m": 10**6, "b": 10**9}.get(t[-1:], 1)
    return int(float(t[:-1] if mult > 1 else t) * mult)


def prepare_size(size: int, workdir: Path, seed: int, mutation: MutationSpec) -> tuple[Path, Path]:
    """Write base and mutated source trees for one size; returns their roots."""
    base_csv = workdir / "base.csv"
    write_dataset_csv(DatasetSpec(size, seed), base_csv)
    mutated_csv = workdir / "mutated.csv"
    mutate_csv(base_csv, mutated_csv, mutation)
    roots = []
    for label, csv_path in (("sources_base", base_csv), ("sources_mutated", mutated_csv)):
        root = workdir / label
        (root / SOURCE_NAME).mkdir(parents=True, exist_ok=True)
        save_schema(root, BANK_SCHEMA_REF, BANK_SCHEMA)
        for t in TABLES:
            shutil.copyfile(csv_path, root / SOURCE_NAME / f"{t}.csv")
        roots.append(root)
    return roots[0], roots[1]


def run_benchmark(sizes: Sequence[int], lake_root: str | Path, scratch_dir: str | Path,
                  seed: int = 0, *, change_fraction: float = 0.40, insert_fraction: float = 0.05,
                  incremental_method: str = "hash", parallelism: int | None = None,
                  scenarios: Sequence[Scenario] = SCENARIO_ORDER) -> list[ScenarioResult]:
    """Initial full load of four identical tables, mutate, then time each scenario.

    Only the post-mutation run is timed.  Every scenario starts from a copy of
    the same initial lake; the copy's digest is recorded and checked.
    """
    if incremental_method not in ("hash", "date"):
        raise ValueError("incremental_method must be 'hash' or 'date'")
    lake_root, scratch_dir = Path(lake_root), Path(scratch_dir)
    mutation = MutationSpec(change_fraction, insert_fraction, seed)
    results: list[ScenarioResult] = []
    for size in sizes:
        workdir = scratch_dir / f"n{size}"
        if workdir.exists():
            shutil.rmtree(workdir)
        workdir.mkdir(parents=True)
        log.info("size %d: generating data", size)
        base_src, mutated_src = prepare_size(size, workdir, seed, mutation)
        lakes = lake_root / f"n{size}"
        if lakes.exists():
            shutil.rmtree(lakes)
        initial = lakes / "initial"
        log.info("size %d: initial full load", size)
        reports = run_pipeline(scenario_mapping(Scenario.ALL_FULL), initial, base_src,
                               parallelism=parallelism)
        bad = [r for r in reports if not r.ok]
        if bad:
            raise RuntimeError(f"initial load failed: {bad[0].error}")
        initial_digest = tree_digest(initial)
        for scenario in scenarios:
            lake = lakes / scenario.value
            shutil.copytree(initial, lake)
            digest = tree_digest(lake)
            if digest != initial_digest:
                raise RuntimeError(f"{scenario.value}: lake copy differs from the initial state")
            mapping = scenario_mapping(scenario, incremental_method)
            t0 = time.perf_counter()
            reports = run_pipeline(mapping, lake, mutated_src, parallelism=parallelism)
            wall = (time.perf_counter() - t0) * 1000
            res = ScenarioResult(size, scenario, reports, wall,
                                 sum(r.rows_written_to_lake for r in reports), digest,
                                 sum(not r.ok for r in reports))
            log.info("size %d %s: %.0f ms, %d rows written", size, scenario.value, wall,
                     res.total_rows_written)
            results.append(res)
    return results


def summary_rows(results: Sequence[ScenarioResult]) -> list[dict]:
    """One row per size with wall time and rows written per scenario, Table-5 style."""
    by_size: dict[int, dict] = {}
    for r in results:
        row = by_size.setdefault(r.size, {"size": r.size})
        key = {Scenario.ALL_INCREMENTAL: "incremental", Scenario.ALL_FULL: "full",
               Scenario.HYBRID: "hybrid"}[r.scenario]
        row[f"{key}_wall_ms"] = round(r.total_wall_time, 1)
        row[f"{key}_rows_written"] = r.total_rows_written
    return [by_size[s] for s in sorted(by_size)]


SUMMARY_COLUMNS = ["size", "incremental_wall_ms", "full_wall_ms", "hybrid_wall_ms",
                   "incremental_rows_written", "full_rows_written", "hybrid_rows_written"]


def write_summary_csv(results: Sequence[ScenarioResult], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in summary_rows(results):
            w.writerow(row)


def write_results_json(results: Sequence[ScenarioResult], path: Path) -> None:
    path.write_text(json.dumps([r.to_json() for r in results], indent=2) + "\n", encoding="utf-8")
