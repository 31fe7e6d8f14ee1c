"""Loading relational instances from CSV directories or SQLite files."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import sqlite3
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

from .errors import ArityMismatch, DescriptorParseError, FileNotDatabase, MissingTableFile
from .schema import (
    ColumnDef,
    ForeignKeyDef,
    RelationalSchema,
    TableDef,
    format_timestamp,
    infer_semantic_types,
    parse_timestamp,
)

log = logging.getLogger(__name__)

Cell = Any  # None | int | float | str | bool ; timestamps are epoch seconds (int/float)

_TRUE = {"true", "t", "1", "yes", "y"}
_FALSE = {"false", "f", "0", "no", "n"}


@dataclass
class Table:
    name: str
    columns: list[str]
    rows: list[tuple]

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[Cell]:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


@dataclass
class RelationalInstance:
    schema: RelationalSchema
    tables: dict[str, Table]
    warnings: list[str] = field(default_factory=list)

    def table(self, name: str) -> Table:
        return self.tables[name]

    def row_counts(self) -> dict[str, int]:
        return {t: len(self.tables[t]) for t in self.schema.table_names}

    def with_schema(self, schema: RelationalSchema) -> "RelationalInstance":
        return replace(self, schema=schema)


def coerce_cell(raw: Any, declared_type: str) -> tuple[Cell, bool]:
    """Convert a raw value to a typed cell. Returns (cell, ok)."""
    if raw is None:
        return None, True
    if isinstance(raw, str) and raw == "":
        return None, True
    if declared_type == "integer":
        if isinstance(raw, bool):
            return int(raw), True
        if isinstance(raw, int):
            return raw, True
        if isinstance(raw, float):
            return (int(raw), True) if raw.is_integer() else (None, False)
        try:
            return int(str(raw).strip()), True
        except ValueError:
            return None, False
    if declared_type == "real":
        if isinstance(raw, (int, float)) and not isinstance(raw, bool):
            return float(raw), True
        try:
            return float(str(raw).strip()), True
        except ValueError:
            return None, False
    if declared_type == "boolean":
        if isinstance(raw, bool):
            return raw, True
        if isinstance(raw, (int, float)) and raw in (0, 1):
            return bool(raw), True
        s = str(raw).strip().lower()
        if s in _TRUE:
            return True, True
        if s in _FALSE:
            return False, True
        return None, False
    if declared_type == "datetime":
        if isinstance(raw, (int, float)) and not isinstance(raw, bool):
            return raw, True
        ts = parse_timestamp(str(raw))
        return (ts, True) if ts is not None else (None, False)
    if declared_type == "text":
        return str(raw), True
    return raw, True  # unknown: kept as-is


def format_cell(cell: Cell, declared_type: str) -> str:
    if cell is None:
        return ""
    if declared_type == "datetime":
        return format_timestamp(cell)
    if isinstance(cell, bool):
        return "true" if cell else "false"
    if isinstance(cell, float):
        return repr(cell)
    return str(cell)


# --------------------------------------------------------------------------
# CSV


def load_schema_descriptor(path: str | os.PathLike) -> RelationalSchema:
    try:
        with open(path, encoding="utf-8") as fh:
            return RelationalSchema.from_dict(json.load(fh))
    except FileNotFoundError as exc:
        raise DescriptorParseError(f"descriptor not found: {path}") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DescriptorParseError(f"cannot parse descriptor {path}: {exc}") from exc


def load_csv_dataset(
    dir_path: str | os.PathLike, schema_descriptor_path: str | os.PathLike | None = None
) -> RelationalInstance:
    """Read ``<dir>/schema.json`` plus one ``<table>.csv`` per table.

    Unparseable cells become null and add one entry to ``warnings``.
    """
    d = Path(dir_path)
    schema = load_schema_descriptor(schema_descriptor_path or d / "schema.json")
    tables: dict[str, Table] = {}
    warnings: list[str] = []
    for tdef in schema.tables:
        path = d / f"{tdef.name}.csv"
        if not path.is_file():
            raise MissingTableFile(f"missing {path.name} for table {tdef.name!r}")
        tables[tdef.name] = _read_csv_table(path, tdef, warnings)
    return RelationalInstance(schema=schema, tables=tables, warnings=warnings)


def _read_csv_table(path: Path, tdef: TableDef, warnings: list[str]) -> Table:
    names = tdef.column_names
    types = [c.declared_type for c in tdef.columns]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=",", quotechar='"')
        try:
            header = next(reader)
        except StopIteration:
            raise ArityMismatch(f"{path.name}: empty file, expected header")
        if len(header) != len(names):
            raise ArityMismatch(f"{path.name}: header has {len(header)} fields, schema has {len(names)}")
        if sorted(header) != sorted(names):
            raise DescriptorParseError(f"{path.name}: header {header} does not match schema columns {names}")
        order = [header.index(n) for n in names]
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if len(raw) != len(names):
                raise ArityMismatch(f"{path.name}:{lineno}: {len(raw)} fields, expected {len(names)}")
            cells = []
            for j, src in enumerate(order):
                cell, ok = coerce_cell(raw[src], types[j])
                if not ok:
                    warnings.append(f"{tdef.name}.{names[j]} line {lineno}: cannot parse {raw[src]!r} as {types[j]}")
                cells.append(cell)
            rows.append(tuple(cells))
    return Table(tdef.name, list(names), rows)


class CsvWriter:
    """Comma-separated, ``"``-quoted, ``\\n``-terminated records.

    Each record is rendered with a CRLF terminator so that any embedded CR or
    LF gets quoted, then the terminator is swapped for a bare LF.
    """

    def __init__(self, fh):
        self._fh = fh
        self._buf = io.StringIO()
        self._w = csv.writer(self._buf, delimiter=",", quotechar='"', lineterminator="\r\n")

    def writerow(self, fields) -> None:
        self._buf.seek(0)
        self._buf.truncate()
        self._w.writerow(fields)
        self._fh.write(self._buf.getvalue()[:-2] + "\n")


def write_csv_dataset(instance: RelationalInstance, dir_path: str | os.PathLike) -> None:
    """Write ``schema.json`` and one CSV per table; inverse of load_csv_dataset."""
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "schema.json", "w", encoding="utf-8") as fh:
        json.dump(instance.schema.to_dict(), fh, indent=2, sort_keys=False)
        fh.write("\n")
    for tdef in instance.schema.tables:
        table = instance.tables[tdef.name]
        types = [c.declared_type for c in tdef.columns]
        with open(d / f"{tdef.name}.csv", "w", newline="", encoding="utf-8") as fh:
            w = CsvWriter(fh)
            w.writerow(tdef.column_names)
            for row in table.rows:
                w.writerow([format_cell(c, t) for c, t in zip(row, types)])


# --------------------------------------------------------------------------
# SQLite


def map_sqlite_type(decl: str) -> str | None:
    """Map a SQLite declared type to a storage tag; None when unsupported."""
    t = (decl or "").upper()
    if "BOOL" in t:
        return "boolean"
    if "DATE" in t or "TIME" in t:
        return "datetime"
    if "INT" in t:
        return "integer"
    if "CHAR" in t or "CLOB" in t or "TEXT" in t:
        return "text"
    if "REAL" in t or "FLOA" in t or "DOUB" in t or "NUMERIC" in t or "DECIMAL" in t:
        return "real"
    return None


def load_sqlite(db_path: str | os.PathLike, override_schema: RelationalSchema | None = None) -> RelationalInstance:
    path = Path(db_path)
    if not path.is_file():
        raise FileNotDatabase(f"{path} does not exist")
    with open(path, "rb") as fh:
        head = fh.read(16)
    if head and head != b"SQLite format 3\x00":
        raise FileNotDatabase(f"{path} is not a SQLite database")
    warnings: list[str] = []
    con = sqlite3.connect(f"file:{path}?mode=ro", uri=True)
    try:
        schema = override_schema or _read_catalog(con, warnings)
        tables: dict[str, Table] = {}
        for tdef in schema.tables:
            names = tdef.column_names
            types = [c.declared_type for c in tdef.columns]
            cols_sql = ", ".join(f'"{n}"' for n in names)
            try:
                cur = con.execute(f'SELECT {cols_sql} FROM "{tdef.name}" ORDER BY rowid')
            except sqlite3.OperationalError:  # WITHOUT ROWID tables
                cur = con.execute(f'SELECT {cols_sql} FROM "{tdef.name}"')
            rows = []
            for lineno, raw in enumerate(cur, start=1):
                cells = []
                for j, v in enumerate(raw):
                    cell, ok = coerce_cell(v, types[j])
                    if not ok:
                        warnings.append(f"{tdef.name}.{names[j]} row {lineno}: cannot parse {v!r} as {types[j]}")
                    cells.append(cell)
                rows.append(tuple(cells))
            tables[tdef.name] = Table(tdef.name, list(names), rows)
    except sqlite3.DatabaseError as exc:
        raise FileNotDatabase(f"{path}: {exc}") from exc
    finally:
        con.close()
    return RelationalInstance(schema=schema, tables=tables, warnings=warnings)


def _read_catalog(con: sqlite3.Connection, warnings: list[str]) -> RelationalSchema:
    names = [
        r[0]
        for r in con.execute(
            "SELECT name FROM sqlite_master WHERE type='table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid"
        )
    ]
    tables = []
    fks = []
    for name in names:
        info = con.execute(f'PRAGMA table_info("{name}")').fetchall()
        cols = []
        pk = []
        for cid, cname, ctype, notnull, _default, pkpos in info:
            declared = map_sqlite_type(ctype)
            if declared is None:
                warnings.append(f"{name}.{cname}: unsupported declared type {ctype!r}, mapped to unknown")
                declared = "unknown"
            cols.append(ColumnDef(cname, declared, None, not notnull))
            if pkpos:
                pk.append((pkpos, cname))
        tables.append(TableDef(name, tuple(cols), tuple(c for _, c in sorted(pk))))
    by_name = {t.name: t for t in tables}
    for name in names:
        rows = con.execute(f'PRAGMA foreign_key_list("{name}")').fetchall()
        groups: dict[int, list] = {}
        for fid, seq, parent, frm, to, *_ in rows:
            groups.setdefault(fid, []).append((seq, parent, frm, to))
        for fid in sorted(groups, reverse=True):  # sqlite lists the last declared FK first
            g = sorted(groups[fid])
            parent = g[0][1]
            child_cols = tuple(x[2] for x in g)
            if any(x[3] is None for x in g) and parent in by_name:
                parent_cols = by_name[parent].primary_key
            else:
                parent_cols = tuple(x[3] for x in g)
            fks.append(ForeignKeyDef(name, child_cols, parent, tuple(parent_cols)))
    return RelationalSchema(tuple(tables), tuple(fks))


# --------------------------------------------------------------------------
# integrity


@dataclass
class FKIntegrity:
    fk: str
    child_table: str
    parent_table: str
    null: int = 0
    matched: int = 0
    dangling: int = 0


@dataclass
class IntegrityReport:
    foreign_keys: list[FKIntegrity]
    duplicate_pk_rows: dict[str, int]

    @property
    def dangling(self) -> int:
        return sum(f.dangling for f in self.foreign_keys)

    @property
    def ok(self) -> bool:
        return self.dangling == 0 and not any(self.duplicate_pk_rows.values())

    def to_dict(self) -> dict:
        return {
            "foreign_keys": [f.__dict__ for f in self.foreign_keys],
            "duplicate_pk_rows": dict(self.duplicate_pk_rows),
            "dangling": self.dangling,
            "ok": self.ok,
        }


def key_tuple(row: Sequence[Cell], idx: Sequence[int]) -> tuple | None:
    """Key value of ``row`` at positions ``idx``; None if any part is null."""
    key = tuple(row[i] for i in idx)
    return None if any(k is None for k in key) else key


def pk_index(instance: RelationalInstance, table: str) -> dict[tuple, int]:
    """Map PK value tuple -> first row ordinal."""
    tdef = instance.schema.table(table)
    idx = [tdef.index(c) for c in tdef.primary_key]
    out: dict[tuple, int] = {}
    for i, row in enumerate(instance.tables[table].rows):
        key = key_tuple(row, idx)
        if key is not None and key not in out:
            out[key] = i
    return out


def check_referential_integrity(instance: RelationalInstance) -> IntegrityReport:
    schema = instance.schema
    dup: dict[str, int] = {}
    for tdef in schema.tables:
        if not tdef.primary_key:
            dup[tdef.name] = 0
            continue
        idx = [tdef.index(c) for c in tdef.primary_key]
        seen: set[tuple] = set()
        n = 0
        for row in instance.tables[tdef.name].rows:
            key = tuple(row[i] for i in idx)
            if key in seen:
                n += 1
            seen.add(key)
        dup[tdef.name] = n

    indexes: dict[str, dict] = {}
    out = []
    for fk in schema.foreign_keys:
        if fk.parent_table not in indexes:
            indexes[fk.parent_table] = pk_index(instance, fk.parent_table)
        parent = indexes[fk.parent_table]
        cdef = schema.table(fk.child_table)
        idx = [cdef.index(c) for c in fk.child_columns]
        rep = FKIntegrity(fk.fk_name, fk.child_table, fk.parent_table)
        for row in instance.tables[fk.child_table].rows:
            key = key_tuple(row, idx)
            if key is None:
                rep.null += 1
            elif key in parent:
                rep.matched += 1
            else:
                rep.dangling += 1
        out.append(rep)
    return IntegrityReport(out, dup)


def annotate_semantic_types(instance: RelationalInstance, config=None) -> RelationalInstance:
    """Infer semantic types for columns that lack one; declared types are kept."""
    schema = instance.schema
    tables = []
    for tdef in schema.tables:
        rows = instance.tables[tdef.name].rows
        if all(c.semantic_type is not None for c in tdef.columns) or not rows:
            tables.append(tdef)
            continue
        overrides = {c.name: c.semantic_type for c in tdef.columns if c.semantic_type is not None}
        tables.append(infer_semantic_types(tdef, rows, config, schema.fk_columns(tdef.name), overrides))
    return instance.with_schema(replace(schema, tables=tuple(tables)))
