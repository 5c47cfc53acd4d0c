"""Random tables, mutations and brute-force oracles shared by the tests."""

from __future__ import annotations

import random
from decimal import Decimal
from pathlib import Path

from lakeflow.csvio import write_csv
from lakeflow.table import ColumnType, Schema, TableData

T = ColumnType
TS0 = 1_704_067_200_000
WORDS = ["USA", "UK", "Brazil", "Finance", "Retail", "a,b", 'say "hi"', "Économie", "x y", "line"]


def random_value(rng: random.Random, ctype: ColumnType, null_rate: float = 0.1):
    if rng.random() < null_rate:
        return None
    if ctype is T.INTEGER:
        return rng.randint(-10**6, 10**6)
    if ctype is T.DECIMAL:
        return Decimal(rng.randint(-10**7, 10**7)).scaleb(-rng.choice([0, 1, 2, 4]))
    if ctype is T.TEXT:
        return rng.choice(WORDS) + str(rng.randint(0, 9))
    if ctype is T.BOOLEAN:
        return rng.random() < 0.5
    return TS0 + rng.randint(0, 10**9)


def random_schema(rng: random.Random, n_extra: int | None = None, composite: bool = False) -> Schema:
    cols = [("id", "integer")]
    if composite:
        cols.append(("region", "text"))
    for i in range(n_extra if n_extra is not None else rng.randint(1, 6)):
        cols.append((f"c{i}", rng.choice(["integer", "decimal", "text", "boolean", "timestamp"])))
    cols.append(("updated_at", "timestamp"))
    return Schema.of(*cols)


def pk_of(schema: Schema) -> list[str]:
    return ["id", "region"] if "region" in schema.names else ["id"]


def random_row(rng: random.Random, schema: Schema, key: int, ts: int | None = None) -> tuple:
    row = []
    for c in schema.columns:
        if c.name == "id":
            row.append(key)
        elif c.name == "region":
            row.append(rng.choice(["north", "south"]))
        elif c.name == "updated_at":
            row.append(ts if ts is not None else TS0 + rng.randint(0, 10**6))
        else:
            row.append(random_value(rng, c.type))
    return tuple(row)


def random_table(rng: random.Random, schema: Schema, n: int, first_key: int = 1) -> TableData:
    return TableData(schema, [random_row(rng, schema, first_key + i) for i in range(n)]).validate()


def change_row(rng: random.Random, schema: Schema, row: tuple, pk: list[str],
               ts: int | None = None) -> tuple:
    """Copy of ``row`` with at least one non-key cell changed."""
    r = list(row)
    free = [i for i, c in enumerate(schema.columns) if c.name not in pk and c.name != "updated_at"]
    i = rng.choice(free) if free else schema.index("updated_at")
    old = r[i]
    while r[i] == old and type(r[i]) is type(old):
        r[i] = random_value(rng, schema.columns[i].type, null_rate=0.2)
    if ts is not None:
        r[schema.index("updated_at")] = ts
    return tuple(r)


def max_ts(data: TableData, column: str = "updated_at") -> int:
    return max(v for v in data.column(column) if v is not None)


def cell_identity(v):
    # 1.0 and 1.00 are different cells: scale is part of a decimal's identity.
    if isinstance(v, Decimal):
        return ("dec", v.as_tuple())
    return (type(v).__name__, v)


def brute_diff(incoming: TableData, previous: TableData, pk: list[str],
               compare: list[str]) -> tuple[list[int], list[int], int]:
    """Field-by-field oracle: (inserted positions, modified positions, unchanged count)."""
    s = incoming.schema
    kidx = [s.index(c) for c in pk]
    cidx = [s.index(c) for c in compare]
    prev = {}
    for row in previous.rows:
        prev[tuple(cell_identity(row[i]) for i in kidx)] = row
    ins, mod, same = [], [], 0
    for pos, row in enumerate(incoming.rows):
        old = prev.get(tuple(cell_identity(row[i]) for i in kidx))
        if old is None:
            ins.append(pos)
        elif any(cell_identity(row[i]) != cell_identity(old[i]) for i in cidx):
            mod.append(pos)
        else:
            same += 1
    return ins, mod, same


def dedup_latest(rows: list[tuple], key_idx: list[int]) -> dict:
    out = {}
    for r in rows:
        out[tuple(cell_identity(r[i]) for i in key_idx)] = tuple(cell_identity(v) for v in r)
    return out


def keyed(data: TableData, pk: list[str]) -> dict:
    return dedup_latest(data.rows, [data.schema.index(c) for c in pk])


def write_source(root: Path, source: str, table: str, data: TableData) -> Path:
    path = Path(root) / source / f"{table}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(path, data)
    return path
