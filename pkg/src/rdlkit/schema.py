"""Relational schema vocabulary and semantic attribute-type inference."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Iterable, Sequence

from .errors import EmptySample

DECLARED_TYPES = ("integer", "real", "text", "boolean", "datetime", "unknown")


class SemanticType(str, Enum):
    NUMERICAL = "numerical"
    CATEGORICAL = "categorical"
    MULTI_CATEGORICAL = "multi_categorical"
    TEXT = "text"
    TEMPORAL = "temporal"
    PRIMARY_KEY = "primary_key"
    FOREIGN_KEY = "foreign_key"
    IGNORED = "ignored"


KEY_TYPES = (SemanticType.PRIMARY_KEY, SemanticType.FOREIGN_KEY)


@dataclass(frozen=True)
class ColumnDef:
    name: str
    declared_type: str = "unknown"
    semantic_type: SemanticType | None = None
    nullable: bool = True


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[ColumnDef, ...]
    primary_key: tuple[str, ...] = ()
    time_column: str | None = None

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> ColumnDef:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(f"{self.name} has no column {name!r}")

    def index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise KeyError(f"{self.name} has no column {name!r}")

    def has_column(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)


@dataclass(frozen=True)
class ForeignKeyDef:
    child_table: str
    child_columns: tuple[str, ...]
    parent_table: str
    parent_columns: tuple[str, ...]
    name: str | None = None

    @property
    def fk_name(self) -> str:
        return self.name or "_".join(self.child_columns)

    @property
    def edge_type(self) -> tuple[str, str, str]:
        return (self.child_table, self.fk_name, self.parent_table)


@dataclass(frozen=True)
class RelationalSchema:
    tables: tuple[TableDef, ...] = ()
    foreign_keys: tuple[ForeignKeyDef, ...] = ()

    @property
    def table_names(self) -> list[str]:
        return [t.name for t in self.tables]

    def table(self, name: str) -> TableDef:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(f"no table {name!r}")

    def has_table(self, name: str) -> bool:
        return any(t.name == name for t in self.tables)

    def fk_columns(self, table: str) -> set[str]:
        cols: set[str] = set()
        for fk in self.foreign_keys:
            if fk.child_table == table:
                cols.update(fk.child_columns)
        return cols

    def key_columns(self, table: str) -> set[str]:
        return set(self.table(table).primary_key) | self.fk_columns(table)

    def factual_columns(self, table: str) -> list[str]:
        keys = self.key_columns(table)
        return [c for c in self.table(table).column_names if c not in keys]

    def replace_table(self, new: TableDef) -> "RelationalSchema":
        tables = tuple(new if t.name == new.name else t for t in self.tables)
        return replace(self, tables=tables)

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "tables": [
                {
                    "name": t.name,
                    "columns": [
                        {
                            "name": c.name,
                            "type": c.declared_type,
                            "semantic_type": c.semantic_type.value if c.semantic_type else None,
                            "nullable": c.nullable,
                        }
                        for c in t.columns
                    ],
                    "primary_key": list(t.primary_key),
                    "time_column": t.time_column,
                }
                for t in self.tables
            ],
            "foreign_keys": [
                {
                    "name": fk.fk_name,
                    "child_table": fk.child_table,
                    "child_columns": list(fk.child_columns),
                    "parent_table": fk.parent_table,
                    "parent_columns": list(fk.parent_columns),
                }
                for fk in self.foreign_keys
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RelationalSchema":
        tables = []
        for t in d.get("tables", []):
            cols = []
            for c in t["columns"]:
                st = c.get("semantic_type")
                cols.append(
                    ColumnDef(
                        name=c["name"],
                        declared_type=c.get("type", "unknown"),
                        semantic_type=SemanticType(st) if st else None,
                        nullable=c.get("nullable", True),
                    )
                )
            tables.append(
                TableDef(
                    name=t["name"],
                    columns=tuple(cols),
                    primary_key=tuple(t.get("primary_key", ())),
                    time_column=t.get("time_column"),
                )
            )
        fks = [
            ForeignKeyDef(
                child_table=f["child_table"],
                child_columns=tuple(f["child_columns"]),
                parent_table=f["parent_table"],
                parent_columns=tuple(f["parent_columns"]),
                name=f.get("name"),
            )
            for f in d.get("foreign_keys", [])
        ]
        return cls(tables=tuple(tables), foreign_keys=tuple(fks))


@dataclass(frozen=True)
class Violation:
    rule: str
    table: str | None
    column: str | None
    message: str


def validate_schema(schema: RelationalSchema) -> list[Violation]:
    """Check table/column uniqueness and PK/FK well-formedness."""
    out: list[Violation] = []
    seen: set[str] = set()
    for t in schema.tables:
        if t.name in seen:
            out.append(Violation("unique_table_name", t.name, None, f"duplicate table {t.name!r}"))
        seen.add(t.name)
        cols: set[str] = set()
        for c in t.columns:
            if c.name in cols:
                out.append(Violation("unique_column_name", t.name, c.name, f"duplicate column {c.name!r}"))
            cols.add(c.name)
            if c.declared_type not in DECLARED_TYPES:
                out.append(Violation("declared_type", t.name, c.name, f"unknown declared type {c.declared_type!r}"))
        for pk in t.primary_key:
            if pk not in cols:
                out.append(Violation("pk_column_exists", t.name, pk, f"primary key column {pk!r} missing"))
        if t.time_column is not None and t.time_column not in cols:
            out.append(Violation("time_column_exists", t.name, t.time_column, "time column missing"))

    names = {t.name: t for t in schema.tables}
    for fk in schema.foreign_keys:
        label = f"{fk.child_table}.{fk.fk_name}"
        child = names.get(fk.child_table)
        parent = names.get(fk.parent_table)
        if child is None:
            out.append(Violation("fk_child_table", fk.child_table, None, f"{label}: child table missing"))
        if parent is None:
            out.append(Violation("fk_parent_table", fk.parent_table, None, f"{label}: parent table missing"))
        if len(fk.child_columns) != len(fk.parent_columns) or not fk.child_columns:
            out.append(Violation("fk_arity", fk.child_table, None, f"{label}: column lists differ in arity"))
        if child is not None:
            for c in fk.child_columns:
                if not child.has_column(c):
                    out.append(Violation("fk_column_exists", fk.child_table, c, f"{label}: column {c!r} missing"))
        if parent is not None:
            for c in fk.parent_columns:
                if not parent.has_column(c):
                    out.append(Violation("fk_column_exists", fk.parent_table, c, f"{label}: column {c!r} missing"))
            if tuple(fk.parent_columns) != tuple(parent.primary_key):
                out.append(
                    Violation(
                        "fk_references_pk",
                        fk.parent_table,
                        ",".join(fk.parent_columns),
                        f"{label}: parent columns {list(fk.parent_columns)} are not the primary key "
                        f"{list(parent.primary_key)}",
                    )
                )
    return out


# --------------------------------------------------------------------------
# timestamps


_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_ISO_RE = re.compile(
    r"^\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}(:\d{2}(\.\d{1,6})?)?(Z|[+-]\d{2}:?\d{2})?$"
)


def parse_timestamp(value: Any) -> float | int | None:
    """Parse an ISO-8601 or ``YYYY-MM-DD`` string into UTC epoch seconds.

    Naive datetimes are taken as UTC. Returns None when the string does not
    match. Whole-second results come back as int.
    """
    if not isinstance(value, str):
        return None
    s = value.strip()
    if _DATE_RE.match(s):
        try:
            dt = datetime.strptime(s, "%Y-%m-%d").replace(tzinfo=timezone.utc)
        except ValueError:
            return None
    elif _ISO_RE.match(s):
        try:
            dt = datetime.fromisoformat(s.replace("Z", "+00:00"))
        except ValueError:
            return None
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
    else:
        return None
    ts = dt.timestamp()
    return int(ts) if ts == math.floor(ts) else ts


def format_timestamp(ts: float | int) -> str:
    dt = datetime.fromtimestamp(ts, tz=timezone.utc)
    if dt.microsecond:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def looks_like_timestamp(value: Any) -> bool:
    return parse_timestamp(value) is not None


# --------------------------------------------------------------------------
# semantic type inference


@dataclass(frozen=True)
class InferenceConfig:
    sample_size: int = 10_000
    temporal_name_patterns: tuple[str, ...] = ("date", "time", "timestamp", "_at")
    temporal_parse_ratio: float = 0.9
    max_unique_ratio: float = 0.1
    max_categories: int = 1000
    # integer-valued numeric columns become categorical only below this many codes
    max_integer_categories: int = 10
    separator: str = ","
    multi_token_row_ratio: float = 0.2
    max_null_ratio: float = 0.5

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["temporal_name_patterns"] = list(self.temporal_name_patterns)
        return d

    @classmethod
    def from_dict(cls, d: dict | None) -> "InferenceConfig":
        d = dict(d or {})
        if "temporal_name_patterns" in d:
            d["temporal_name_patterns"] = tuple(d["temporal_name_patterns"])
        return cls(**d)


def _as_number(v: Any) -> float | None:
    if isinstance(v, bool):
        return None
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            x = float(v.strip())
        except ValueError:
            return None
        return x if math.isfinite(x) else None
    return None


def _name_is_temporal(name: str, patterns: Iterable[str]) -> bool:
    low = name.lower()
    return any(p in low for p in patterns)


def _infer_column(col: ColumnDef, values: list[Any], n_rows: int, cfg: InferenceConfig) -> SemanticType:
    non_null = [v for v in values if v is not None and v != ""]
    if not non_null:
        return SemanticType.IGNORED
    null_ratio = 1.0 - len(non_null) / n_rows

    if col.declared_type == "datetime":
        return SemanticType.TEMPORAL

    if col.declared_type == "boolean" or all(isinstance(v, bool) for v in non_null):
        return SemanticType.CATEGORICAL

    strings = [v for v in non_null if isinstance(v, str)]
    if strings and len(strings) == len(non_null):
        parse_rate = sum(looks_like_timestamp(v) for v in strings) / len(strings)
        if _name_is_temporal(col.name, cfg.temporal_name_patterns) and parse_rate >= cfg.temporal_parse_ratio:
            return SemanticType.TEMPORAL
        if parse_rate == 1.0:
            return SemanticType.TEMPORAL

    numbers = [_as_number(v) for v in non_null]
    distinct = len({_canonical(v) for v in non_null})
    unique_ratio = distinct / len(non_null)
    if all(x is not None for x in numbers):
        integral = all(float(x).is_integer() for x in numbers)
        if (
            integral
            and distinct <= cfg.max_integer_categories
            and unique_ratio <= cfg.max_unique_ratio
        ):
            return SemanticType.CATEGORICAL
        return SemanticType.NUMERICAL

    # string-valued from here on
    texts = [str(v) for v in non_null]
    sep = cfg.separator
    multi_rows = 0
    tokens: list[str] = []
    for s in texts:
        parts = [p.strip() for p in s.split(sep) if p.strip()]
        if len(parts) > 1:
            multi_rows += 1
        tokens.extend(parts)
    if tokens and multi_rows / len(texts) >= cfg.multi_token_row_ratio:
        n_tok = len(set(tokens))
        if n_tok / len(tokens) <= cfg.max_unique_ratio and n_tok <= cfg.max_categories:
            return SemanticType.MULTI_CATEGORICAL
    if unique_ratio <= cfg.max_unique_ratio and distinct <= cfg.max_categories:
        return SemanticType.CATEGORICAL
    if null_ratio > cfg.max_null_ratio:
        return SemanticType.IGNORED
    return SemanticType.TEXT


def _canonical(v: Any) -> tuple:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return ("num", float(v))
    return (type(v).__name__, v)


def infer_semantic_types(
    table: TableDef,
    sample_rows: Sequence[Sequence[Any]],
    config: InferenceConfig | None = None,
    foreign_key_columns: Iterable[str] = (),
    overrides: dict[str, SemanticType] | None = None,
) -> TableDef:
    """Assign a semantic type to every column of ``table``.

    Key membership wins over content. Columns that already carry a semantic
    type are left alone only when listed in ``overrides``; everything else is
    re-derived from the sample so the result depends on (sample, config) alone.
    """
    if not sample_rows:
        raise EmptySample(f"no sample rows for table {table.name!r}")
    cfg = config or InferenceConfig()
    rows = sample_rows[: cfg.sample_size]
    fks = set(foreign_key_columns)
    pk = set(table.primary_key)
    overrides = overrides or {}
    new_cols = []
    for i, col in enumerate(table.columns):
        if col.name in pk:
            st = SemanticType.PRIMARY_KEY
        elif col.name in fks:
            st = SemanticType.FOREIGN_KEY
        elif col.name in overrides:
            st = SemanticType(overrides[col.name])
        else:
            st = _infer_column(col, [r[i] for r in rows], len(rows), cfg)
        new_cols.append(replace(col, semantic_type=st))
    return replace(table, columns=tuple(new_cols))
