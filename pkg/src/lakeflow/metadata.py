"""The mapping table: one entry per ingested table, driving method dispatch.

On disk the mapping is a UTF-8 JSON array of entry objects.  A table with a
non-zero version is written as ``{"version": n, "entries": [...]}``; both
forms load.
"""

from __future__ import annotations

import enum
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import FileMissing, ParseError, UnknownCredentialsRef, ValidationError

CREDENTIALS_ENV = "LAKEFLOW_CREDENTIALS"

ENTRY_KEYS = ("source_name", "table_name", "credentials_ref", "primary_key",
              "watermark_column", "ingestion_type", "hash_columns", "schema_ref")


class IngestionType(str, enum.Enum):
    FULL = "full"
    INCREMENTAL = "incremental"

    @classmethod
    def parse(cls, value: str) -> "IngestionType":
        if isinstance(value, IngestionType):
            return value
        if not isinstance(value, str):
            raise ValueError(f"ingestion type must be a string, got {value!r}")
        try:
            return cls(value.strip().lower())
        except ValueError:
            raise ValueError(f"unknown ingestion type {value!r}") from None


@dataclass(frozen=True)
class MappingEntry:
    source_name: str
    table_name: str
    credentials_ref: str
    primary_key: tuple[str, ...] | None = None
    watermark_column: str | None = None
    ingestion_type: IngestionType = IngestionType.FULL
    hash_columns: tuple[str, ...] | None = None
    schema_ref: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "ingestion_type", IngestionType.parse(self.ingestion_type))
        for name in ("primary_key", "hash_columns"):
            v = getattr(self, name)
            if v is not None and not isinstance(v, tuple):
                object.__setattr__(self, name, tuple(v))

    @property
    def key(self) -> tuple[str, str]:
        return (self.source_name, self.table_name)

    def problems(self) -> list[str]:
        """Every invariant this entry violates (empty when valid)."""
        out = []
        for name in ("source_name", "table_name"):
            v = getattr(self, name)
            if not isinstance(v, str) or not v.strip():
                out.append(f"{name} must be a non-empty string")
        if not isinstance(self.credentials_ref, str):
            out.append("credentials_ref must be a string")
        for name in ("primary_key", "hash_columns"):
            cols = getattr(self, name)
            if cols is None:
                continue
            if not cols:
                out.append(f"{name} must be null or a non-empty list")
            elif not all(isinstance(c, str) and c for c in cols):
                out.append(f"{name} must contain non-empty column names")
            elif len(set(cols)) != len(cols):
                out.append(f"{name} has repeated columns")
        for name in ("watermark_column", "schema_ref"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, str) or not v):
                out.append(f"{name} must be null or a non-empty string")
        if (self.ingestion_type is IngestionType.INCREMENTAL
                and not self.watermark_column and not self.primary_key):
            out.append("incremental ingestion needs a watermark_column or a primary_key")
        if self.primary_key and self.hash_columns:
            overlap = set(self.primary_key) & set(self.hash_columns)
            if overlap:
                out.append(f"hash_columns overlap primary_key: {sorted(overlap)}")
        return out

    def to_json(self) -> dict[str, Any]:
        return {
            "source_name": self.source_name,
            "table_name": self.table_name,
            "credentials_ref": self.credentials_ref,
            "primary_key": list(self.primary_key) if self.primary_key is not None else None,
            "watermark_column": self.watermark_column,
            "ingestion_type": self.ingestion_type.value,
            "hash_columns": list(self.hash_columns) if self.hash_columns is not None else None,
            "schema_ref": self.schema_ref,
        }


def entry_from_json(obj: Any, index: int) -> MappingEntry:
    if not isinstance(obj, dict):
        raise ValidationError(index, "entry must be a JSON object")
    unknown = sorted(set(obj) - set(ENTRY_KEYS))
    if unknown:
        raise ValidationError(index, f"unknown keys {unknown}")
    for k in ("source_name", "table_name", "credentials_ref", "ingestion_type"):
        if k not in obj:
            raise ValidationError(index, f"missing required key {k!r}")
    for k in ("primary_key", "hash_columns"):
        if obj.get(k) is not None and not isinstance(obj[k], list):
            raise ValidationError(index, f"{k} must be an array or null")
    try:
        itype = IngestionType.parse(obj["ingestion_type"])
    except ValueError as e:
        raise ValidationError(index, str(e)) from None
    return MappingEntry(
        source_name=obj["source_name"],
        table_name=obj["table_name"],
        credentials_ref=obj["credentials_ref"],
        primary_key=obj.get("primary_key"),
        watermark_column=obj.get("watermark_column"),
        ingestion_type=itype,
        hash_columns=obj.get("hash_columns"),
        schema_ref=obj.get("schema_ref"),
    )


@dataclass(frozen=True)
class MappingTable:
    entries: tuple[MappingEntry, ...] = ()
    version: int = 0

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def validate(self) -> "MappingTable":
        if not isinstance(self.version, int) or self.version < 0:
            raise ValidationError(-1, "version must be a non-negative integer")
        seen: dict[tuple[str, str], int] = {}
        for i, e in enumerate(self.entries):
            probs = e.problems()
            if probs:
                raise ValidationError(i, "; ".join(probs))
            if e.key in seen:
                raise ValidationError(
                    i, f"duplicate (source_name, table_name) {e.key}, first at entry {seen[e.key]}")
            seen[e.key] = i
        return self

    def to_json(self):
        entries = [e.to_json() for e in self.entries]
        if self.version == 0:
            return entries
        return {"version": self.version, "entries": entries}


def _load_doc(text: str) -> tuple[list, Any]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.lineno, e.msg) from None
    version = 0
    if isinstance(doc, dict):
        if set(doc) - {"version", "entries"} or "entries" not in doc:
            raise ParseError(1, "expected an array of entries or {version, entries}")
        version = doc.get("version", 0)
        doc = doc["entries"]
    if not isinstance(doc, list):
        raise ParseError(1, "expected a JSON array of mapping entries")
    return doc, version


def parse_mapping(text: str) -> MappingTable:
    doc, version = _load_doc(text)
    entries = tuple(entry_from_json(obj, i) for i, obj in enumerate(doc))
    return MappingTable(entries, version).validate()


@dataclass(frozen=True)
class Verdict:
    index: int
    label: str
    problems: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.problems


def check_mapping(text: str) -> list[Verdict]:
    """One verdict per entry, collecting every problem rather than stopping at the first.

    JSON syntax errors still raise ParseError.
    """
    doc, _ = _load_doc(text)
    out = []
    seen: dict[tuple, int] = {}
    for i, obj in enumerate(doc):
        label = f"entry {i}"
        if isinstance(obj, dict):
            label += f" ({obj.get('source_name')}/{obj.get('table_name')})"
        try:
            entry = entry_from_json(obj, i)
        except ValidationError as e:
            out.append(Verdict(i, label, (e.rule,)))
            continue
        probs = entry.problems()
        if entry.key in seen:
            probs.append(f"duplicate (source_name, table_name), first at entry {seen[entry.key]}")
        seen.setdefault(entry.key, i)
        out.append(Verdict(i, label, tuple(probs)))
    return out


def load_mapping_table(path: str | os.PathLike) -> MappingTable:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileMissing(f"mapping file not found: {p}") from None
    except UnicodeDecodeError as e:
        raise ParseError(1, f"not UTF-8: {e}") from None
    return parse_mapping(text)


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def save_mapping_table(table: MappingTable, path: str | os.PathLike) -> None:
    table.validate()
    text = json.dumps(table.to_json(), indent=2, ensure_ascii=False) + "\n"
    atomic_write_text(Path(path), text)


# --------------------------------------------------------------------------
# credentials

class Secret(bytes):
    """Secret bytes whose repr and str never reveal the value."""

    def __repr__(self) -> str:
        return "Secret(***)"

    __str__ = __repr__


@dataclass
class CredentialStore:
    """Maps credentials references to secrets.

    Resolution order: the explicit ``mapping``, then the JSON file given as
    ``path`` or named by the LAKEFLOW_CREDENTIALS environment variable.
    """

    mapping: Mapping[str, str] = field(default_factory=dict)
    path: Path | None = None

    def __repr__(self) -> str:
        return f"CredentialStore(refs={sorted(self._all())!r}, path={self.path!r})"

    @classmethod
    def from_env(cls, path: str | os.PathLike | None = None,
                 environ: Mapping[str, str] | None = None) -> "CredentialStore":
        environ = os.environ if environ is None else environ
        if path is None and environ.get(CREDENTIALS_ENV):
            path = environ[CREDENTIALS_ENV]
        return cls(path=Path(path) if path else None)

    def _file(self) -> dict[str, str]:
        if self.path is None:
            return {}
        try:
            doc = json.loads(self.path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise FileMissing(f"credentials file not found: {self.path}") from None
        except json.JSONDecodeError as e:
            raise ParseError(e.lineno, f"credentials file: {e.msg}") from None
        if not isinstance(doc, dict) or not all(isinstance(v, str) for v in doc.values()):
            raise ParseError(1, "credentials file must be a JSON object of ref -> string")
        return doc

    def _all(self) -> dict[str, str]:
        merged = dict(self._file())
        merged.update(self.mapping)
        return merged

    def resolve(self, ref: str) -> Secret:
        value = self.mapping.get(ref)
        if value is None:
            value = self._file().get(ref)
        if not value:
            raise UnknownCredentialsRef(f"unknown credentials reference {ref!r}")
        return Secret(value.encode("utf-8") if isinstance(value, str) else bytes(value))


def resolve_credentials(ref: str, store: CredentialStore | None = None) -> Secret:
    return (store or CredentialStore.from_env()).resolve(ref)
