"""Widen a target table by left-joining its many-to-one and one-to-one neighbors.

Row cardinality never changes: every joined side contributes at most one row
per target row. One-to-many relations from the target are skipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import TargetMissing
from .features import ONE_TO_ONE, fk_label, fk_multiplicities
from .ingest import CsvWriter, RelationalInstance, Table, format_cell, key_tuple, pk_index
from .schema import ColumnDef, RelationalSchema, TableDef


@dataclass
class FlattenedTable:
    target_table: str
    column_defs: list[ColumnDef]
    rows: list[tuple]
    # alias -> source row ordinal per target row (None when unmatched)
    sources: dict[str, list[int | None]] = field(default_factory=dict)
    source_tables: dict[str, str] = field(default_factory=dict)

    @property
    def columns(self) -> list[str]:
        return [c.name for c in self.column_defs]

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self, path) -> None:
        types = [c.declared_type for c in self.column_defs]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = CsvWriter(fh)
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([format_cell(v, t) for v, t in zip(r, types)])


def _child_index(instance: RelationalInstance, fk) -> dict[tuple, int]:
    """Parent key -> first child row referencing it."""
    cdef = instance.schema.table(fk.child_table)
    idx = [cdef.index(c) for c in fk.child_columns]
    out: dict[tuple, int] = {}
    for i, row in enumerate(instance.tables[fk.child_table].rows):
        k = key_tuple(row, idx)
        if k is not None and k not in out:
            out[k] = i
    return out


def flatten_target(instance: RelationalInstance, target_table: str, depth: int = 1) -> FlattenedTable:
    schema = instance.schema
    if not schema.has_table(target_table):
        raise TargetMissing(f"no table {target_table!r}")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    mult = fk_multiplicities(instance)
    tdef = schema.table(target_table)
    n = len(instance.tables[target_table])

    factual = schema.factual_columns(target_table)
    col_defs = [tdef.column(c) for c in factual]
    cols_data = [[r[tdef.index(c)] for r in instance.tables[target_table].rows] for c in factual]
    sources: dict[str, list[int | None]] = {}
    source_tables: dict[str, str] = {}
    used: set[str] = {target_table}

    # frontier entries: (table, alias prefix, row ordinal per target row)
    frontier = [(target_table, "", list(range(n)))]
    for _ in range(depth):
        nxt = []
        for table, prefix, rows_of in frontier:
            cur = schema.table(table)
            for fk in schema.foreign_keys:
                if fk.child_table == table:
                    other, direction = fk.parent_table, "up"
                elif fk.parent_table == table and mult[fk_label(fk)] == ONE_TO_ONE:
                    other, direction = fk.child_table, "down"
                else:
                    continue
                alias = other if other not in used else f"{other}#{fk.fk_name}"
                k = 2
                while alias in used:
                    alias = f"{other}#{fk.fk_name}#{k}"
                    k += 1
                used.add(alias)
                full = f"{prefix}{alias}"
                table_rows = instance.tables[table].rows
                if direction == "up":
                    index = pk_index(instance, other)
                    idx = [cur.index(c) for c in fk.child_columns]
                    match = []
                    for r in rows_of:
                        key = None if r is None else key_tuple(table_rows[r], idx)
                        match.append(None if key is None else index.get(key))
                else:
                    index = _child_index(instance, fk)
                    idx = [cur.index(c) for c in fk.parent_columns]
                    match = []
                    for r in rows_of:
                        key = None if r is None else key_tuple(table_rows[r], idx)
                        match.append(None if key is None else index.get(key))
                sources[full] = match
                source_tables[full] = other
                odef = schema.table(other)
                other_rows = instance.tables[other].rows
                for c in schema.factual_columns(other):
                    j = odef.index(c)
                    col_defs.append(replace(odef.column(c), name=f"{full}.{c}"))
                    cols_data.append([None if m is None else other_rows[m][j] for m in match])
                nxt.append((other, f"{full}.", match))
        frontier = nxt

    rows = [tuple(col[i] for col in cols_data) for i in range(n)]
    return FlattenedTable(target_table, col_defs, rows, sources, source_tables)


def flattened_instance(instance: RelationalInstance, ft: FlattenedTable) -> RelationalInstance:
    """Single-table instance: the target's primary key plus the flattened columns.

    Row i still corresponds to target row i, so training tables built on the
    original target apply unchanged.
    """
    tdef = instance.schema.table(ft.target_table)
    pk_defs = [tdef.column(c) for c in tdef.primary_key]
    pk_idx = [tdef.index(c) for c in tdef.primary_key]
    src = instance.tables[ft.target_table].rows
    cols = tuple(pk_defs + list(ft.column_defs))
    new_def = TableDef(ft.target_table, cols, tdef.primary_key, tdef.time_column if tdef.time_column in ft.columns else None)
    rows = [tuple(src[i][j] for j in pk_idx) + ft.rows[i] for i in range(len(ft))]
    schema = RelationalSchema((new_def,), ())
    return RelationalInstance(schema, {ft.target_table: Table(ft.target_table, [c.name for c in cols], rows)})
