"""Typed tables: schemas, rows, and the text codecs shared by sources and the lake.

Cell values are plain Python objects:

    integer    int
    decimal    decimal.Decimal
    text       str (never empty; the CSV dialect cannot tell "" from null)
    boolean    bool
    timestamp  int, epoch milliseconds UTC

``None`` is null in every column.  The canonical text rendering of a value is
what gets written to CSV and what row hashes are computed over.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal, InvalidOperation
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .errors import LakeflowError, UnknownColumn


class ColumnType(str, enum.Enum):
    INTEGER = "integer"
    DECIMAL = "decimal"
    TEXT = "text"
    BOOLEAN = "boolean"
    TIMESTAMP = "timestamp"


# Codes shared with the compiled scanner in csvscan.py.
TYPE_CODES = {
    ColumnType.INTEGER: 0,
    ColumnType.DECIMAL: 1,
    ColumnType.TEXT: 2,
    ColumnType.BOOLEAN: 3,
    ColumnType.TIMESTAMP: 4,
}


class CellError(LakeflowError, ValueError):
    """A cell value does not conform to its column type."""


@dataclass(frozen=True)
class Column:
    name: str
    type: ColumnType

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise ValueError("column name must be a non-empty string")
        object.__setattr__(self, "type", ColumnType(self.type))


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        cols = tuple(self.columns)
        object.__setattr__(self, "columns", cols)
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate column names: {dupes}")

    @classmethod
    def of(cls, *pairs: tuple[str, str | ColumnType]) -> "Schema":
        return cls(tuple(Column(n, ColumnType(t)) for n, t in pairs))

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def types(self) -> list[ColumnType]:
        return [c.type for c in self.columns]

    def __len__(self) -> int:
        return len(self.columns)

    def index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise UnknownColumn(name)

    def indices(self, names: Iterable[str]) -> list[int]:
        return [self.index(n) for n in names]

    def type_of(self, name: str) -> ColumnType:
        return self.columns[self.index(name)].type

    def to_json(self) -> list[dict]:
        return [{"name": c.name, "type": c.type.value} for c in self.columns]

    @classmethod
    def from_json(cls, obj: Sequence[dict]) -> "Schema":
        return cls(tuple(Column(d["name"], ColumnType(d["type"])) for d in obj))

    def fingerprint(self) -> str:
        """Lowercase hex SHA-256 over the ordered (name, type) pairs."""
        payload = json.dumps([[c.name, c.type.value] for c in self.columns],
                             separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class TableData:
    schema: Schema
    rows: list[tuple] = field(default_factory=list)
    # Set by the codecs when rows were produced by parsing; skips re-validation.
    validated: bool = field(default=False, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.rows)

    def __eq__(self, other):
        if not isinstance(other, TableData):
            return NotImplemented
        return self.schema == other.schema and [tuple(r) for r in self.rows] == [
            tuple(r) for r in other.rows]

    def column(self, name: str) -> list:
        i = self.schema.index(name)
        return [r[i] for r in self.rows]

    def take(self, indices: Iterable[int]) -> "TableData":
        rows = self.rows
        return TableData(self.schema, [rows[i] for i in indices], self.validated)

    def validate(self) -> "TableData":
        arity = len(self.schema)
        checks = [_CHECKS[t] for t in self.schema.types]
        for i, row in enumerate(self.rows):
            if len(row) != arity:
                raise CellError(f"row {i} has {len(row)} cells, schema has {arity}")
            for j, (check, v) in enumerate(zip(checks, row)):
                if v is not None and not check(v):
                    col = self.schema.columns[j]
                    raise CellError(
                        f"row {i} column {col.name!r}: {v!r} is not a valid {col.type.value}")
        self.validated = True
        return self

    @staticmethod
    def concat(schema: Schema, parts: Iterable["TableData"]) -> "TableData":
        rows: list[tuple] = []
        validated = True
        for p in parts:
            rows.extend(p.rows)
            validated = validated and p.validated
        return TableData(schema, rows, validated=validated)


# --------------------------------------------------------------------------
# timestamps

MIN_TIMESTAMP_MS = -62167219200000      # 0000-01-01T00:00:00.000Z
MAX_TIMESTAMP_MS = 253402300799999      # 9999-12-31T23:59:59.999Z

_TS_CANON = re.compile(r"(\d{4})-(\d\d)-(\d\d)T(\d\d):(\d\d):(\d\d)\.(\d{3})Z")


def _days_from_civil(y: int, m: int, d: int) -> int:
    y -= m <= 2
    era = y // 400
    yoe = y - era * 400
    doy = (153 * (m + (-3 if m > 2 else 9)) + 2) // 5 + d - 1
    doe = yoe * 365 + yoe // 4 - yoe // 100 + doy
    return era * 146097 + doe - 719468


def _civil_from_days(z: int) -> tuple[int, int, int]:
    z += 719468
    era = z // 146097
    doe = z - era * 146097
    yoe = (doe - doe // 1460 + doe // 36524 - doe // 146096) // 365
    y = yoe + era * 400
    doy = doe - (365 * yoe + yoe // 4 - yoe // 100)
    mp = (5 * doy + 2) // 153
    d = doy - (153 * mp + 2) // 5 + 1
    m = mp + (3 if mp < 10 else -9)
    return y + (m <= 2), m, d


def _days_in_month(y: int, m: int) -> int:
    if m == 2:
        return 29 if (y % 4 == 0 and y % 100 != 0) or y % 400 == 0 else 28
    return 30 if m in (4, 6, 9, 11) else 31


def render_timestamp(ms: int) -> str:
    if not MIN_TIMESTAMP_MS <= ms <= MAX_TIMESTAMP_MS:
        raise CellError(f"timestamp {ms} outside years 0000-9999")
    days, rem = divmod(ms, 86_400_000)
    y, mo, d = _civil_from_days(days)
    h, rem = divmod(rem, 3_600_000)
    mi, rem = divmod(rem, 60_000)
    s, milli = divmod(rem, 1000)
    return f"{y:04d}-{mo:02d}-{d:02d}T{h:02d}:{mi:02d}:{s:02d}.{milli:03d}Z"


def parse_timestamp(text: str) -> int:
    """Parse ISO-8601 into epoch milliseconds UTC.

    The canonical ``YYYY-MM-DDThh:mm:ss.sssZ`` form takes a fast path; other
    ISO-8601 spellings are accepted when they carry no sub-millisecond part.
    Naive values are taken to be UTC.
    """
    m = _TS_CANON.fullmatch(text)
    if m:
        y, mo, d, h, mi, s, milli = map(int, m.groups())
        if not (1 <= mo <= 12 and 1 <= d <= _days_in_month(y, mo)
                and h < 24 and mi < 60 and s < 60):
            raise CellError(f"invalid timestamp {text!r}")
        return ((_days_from_civil(y, mo, d) * 24 + h) * 60 + mi) * 60_000 + s * 1000 + milli
    iso = text.strip()
    if iso.endswith(("Z", "z")):
        iso = iso[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(iso)
    except ValueError:
        raise CellError(f"invalid timestamp {text!r}") from None
    if dt.microsecond % 1000:
        raise CellError(f"timestamp {text!r} has sub-millisecond precision")
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    days = _days_from_civil(dt.year, dt.month, dt.day)
    return (((days * 24 + dt.hour) * 60 + dt.minute) * 60 + dt.second) * 1000 + dt.microsecond // 1000


# --------------------------------------------------------------------------
# per-type codecs

def _check_int(v) -> bool:
    return type(v) is int


def _check_decimal(v) -> bool:
    return isinstance(v, Decimal) and v.is_finite()


def _check_text(v) -> bool:
    return isinstance(v, str) and v != ""


def _check_bool(v) -> bool:
    return type(v) is bool


def _check_ts(v) -> bool:
    return type(v) is int and MIN_TIMESTAMP_MS <= v <= MAX_TIMESTAMP_MS


_CHECKS: dict[ColumnType, Callable[[Any], bool]] = {
    ColumnType.INTEGER: _check_int,
    ColumnType.DECIMAL: _check_decimal,
    ColumnType.TEXT: _check_text,
    ColumnType.BOOLEAN: _check_bool,
    ColumnType.TIMESTAMP: _check_ts,
}


def parse_int(text: str) -> int:
    if "_" in text:
        raise CellError(f"invalid integer {text!r}")
    try:
        return int(text)
    except ValueError:
        raise CellError(f"invalid integer {text!r}") from None


def parse_decimal(text: str) -> Decimal:
    try:
        d = Decimal(text)
    except InvalidOperation:
        raise CellError(f"invalid decimal {text!r}") from None
    if not d.is_finite() or "_" in text:
        raise CellError(f"invalid decimal {text!r}")
    return d


_BOOLS = {"true": True, "false": False, "1": True, "0": False}


def parse_bool(text: str) -> bool:
    try:
        return _BOOLS[text.strip().lower()]
    except KeyError:
        raise CellError(f"invalid boolean {text!r}") from None


def render_bool(v: bool) -> str:
    return "true" if v else "false"


PARSERS: dict[ColumnType, Callable[[str], Any]] = {
    ColumnType.INTEGER: parse_int,
    ColumnType.DECIMAL: parse_decimal,
    ColumnType.TEXT: str,
    ColumnType.BOOLEAN: parse_bool,
    ColumnType.TIMESTAMP: parse_timestamp,
}

RENDERERS: dict[ColumnType, Callable[[Any], str]] = {
    ColumnType.INTEGER: str,
    ColumnType.DECIMAL: str,
    ColumnType.TEXT: str,
    ColumnType.BOOLEAN: render_bool,
    ColumnType.TIMESTAMP: render_timestamp,
}


def parse_cell(text: str | None, ctype: ColumnType):
    if text is None or text == "":
        return None
    return PARSERS[ctype](text)


def render_cell(value, ctype: ColumnType) -> str | None:
    """Canonical text of a cell, or None for null."""
    if value is None:
        return None
    if not _CHECKS[ctype](value):
        raise CellError(f"{value!r} is not a valid {ctype.value}")
    return RENDERERS[ctype](value)


# --------------------------------------------------------------------------
# column-at-a-time conversion (the hot path for CSV reads and lake writes)

def _parse_ts_column(texts: Sequence[str]) -> list:
    out: list = [None] * len(texts)
    idx = [i for i, t in enumerate(texts) if t]
    if not idx:
        return out
    vals = [texts[i] for i in idx]
    canon = [t[:-1] for t in vals if len(t) == 24 and t[-1] == "Z" and t[10] == "T"]
    if len(canon) == len(vals):
        try:
            arr = np.array(canon, dtype="datetime64[ms]")
        except ValueError:
            arr = None
        if arr is not None:
            # numpy is lenient about field ranges; round-trip proves the text canonical
            back = np.datetime_as_string(arr, unit="ms").tolist()
            ms = arr.astype(np.int64).tolist()
            for k, (i, b, c) in enumerate(zip(idx, back, canon)):
                out[i] = ms[k] if b == c else parse_timestamp(texts[i])
            return out
    for i in idx:
        out[i] = parse_timestamp(texts[i])
    return out


def _render_ts_column(values: Sequence) -> list:
    idx = [i for i, v in enumerate(values) if v is not None]
    out: list = [None] * len(values)
    if not idx:
        return out
    vals = [values[i] for i in idx]
    for v in vals:
        if not _check_ts(v):
            raise CellError(f"{v!r} is not a valid timestamp")
    strs = np.datetime_as_string(np.array(vals, dtype="datetime64[ms]"), unit="ms").tolist()
    for i, s in zip(idx, strs):
        out[i] = s + "Z"
    return out


def parse_column(texts: Sequence[str | None], ctype: ColumnType) -> list:
    """Convert one column of CSV text (``""`` or None = null) to typed values."""
    if ctype is ColumnType.TIMESTAMP:
        return _parse_ts_column(["" if t is None else t for t in texts])
    parse = PARSERS[ctype]
    if ctype is ColumnType.TEXT:
        return [t if t else None for t in texts]
    if ctype is ColumnType.INTEGER:
        try:
            if all(texts) and not any("_" in t for t in texts):
                return list(map(int, texts))
        except ValueError:
            pass
    if ctype is ColumnType.DECIMAL:
        try:
            out = list(map(Decimal, texts)) if all(texts) else None
            if out is not None and all(d.is_finite() for d in out) and not any("_" in t for t in texts):
                return out
        except InvalidOperation:
            pass
    return [parse(t) if t else None for t in texts]


def render_column(values: Sequence, ctype: ColumnType, checked: bool = False) -> list:
    """Canonical text of one column; nulls render as None.

    ``checked`` skips per-value validation for data already known to be valid.
    """
    if ctype is ColumnType.TIMESTAMP:
        return _render_ts_column(values)
    render = RENDERERS[ctype]
    if checked:
        if ctype is ColumnType.TEXT:
            return list(values)
        if ctype is ColumnType.BOOLEAN:
            return [None if v is None else ("true" if v else "false") for v in values]
        return [None if v is None else str(v) for v in values]
    check = _CHECKS[ctype]
    out = []
    for v in values:
        if v is None:
            out.append(None)
        elif check(v):
            out.append(render(v))
        else:
            raise CellError(f"{v!r} is not a valid {ctype.value}")
    return out


def rows_from_text(schema: Schema, text_rows: Sequence[Sequence[str]], first_row: int = 0) -> TableData:
    """Typed TableData from rows of CSV field text, converting column-wise."""
    arity = len(schema)
    for i, r in enumerate(text_rows):
        if len(r) != arity:
            raise CellError(f"row {first_row + i}: expected {arity} fields, got {len(r)}")
    if not text_rows:
        return TableData(schema, [], validated=True)
    cols = list(zip(*text_rows))
    typed = []
    for c, col in zip(schema.columns, cols):
        try:
            typed.append(parse_column(col, c.type))
        except CellError as e:
            raise CellError(f"column {c.name!r}: {e}") from None
    return TableData(schema, list(zip(*typed)), validated=True)


def rows_to_text(data: TableData) -> list[tuple]:
    """Canonical text rows ('' for null) ready for a CSV writer."""
    if not data.rows:
        return []
    cols = list(zip(*data.rows))
    rendered = []
    for c, col in zip(data.schema.columns, cols):
        try:
            out = render_column(col, c.type, checked=data.validated)
        except CellError as e:
            raise CellError(f"column {c.name!r}: {e}") from None
        rendered.append(["" if v is None else v for v in out])
    return list(zip(*rendered))


def infer_schema(names: Sequence[str], text_rows: Sequence[Sequence[str]]) -> Schema:
    """Narrowest type per column that accepts every non-empty cell; all-null is text."""
    cols = list(zip(*text_rows)) if text_rows else [() for _ in names]
    inferred = []
    for name, col in zip(names, cols):
        vals = [v for v in col if v]
        ctype = ColumnType.TEXT
        if vals:
            for cand in (ColumnType.INTEGER, ColumnType.DECIMAL, ColumnType.BOOLEAN,
                         ColumnType.TIMESTAMP):
                try:
                    parse_column(vals, cand)
                except CellError:
                    continue
                ctype = cand
                break
        inferred.append(Column(name, ctype))
    return Schema(tuple(inferred))
