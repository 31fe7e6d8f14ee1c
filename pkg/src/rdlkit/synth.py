"""Deterministic synthetic relational databases with a bookkeeping ledger.

Tables are named t0..t{n-1}, each with an integer primary key ``id``. A foreign
key from child to parent lives in the child column ``fk_<parent>`` (suffixed
``_2``, ``_3`` for repeated parents). Attribute columns are generated per
semantic type and carry explicit semantic types, so no inference is needed
when the instance is reloaded.

The ledger records what was built: row counts, FK cell counts, injected
dangling and null references, and for a planted label the clean signal and the
Bayes-optimal AUC under the injected noise.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import BadSpec
from .ingest import RelationalInstance, Table, write_csv_dataset
from .schema import ColumnDef, ForeignKeyDef, RelationalSchema, SemanticType, TableDef

TOPOLOGIES = ("chain", "star", "junction", "random_dag")
SIGNALS = ("none", "target_local", "target_one_hop", "target_dimension")
LABEL_COLUMN = "label"

_WORDS = (
    "alpha bravo delta echo gamma kappa lambda omega sigma theta zeta river stone cloud "
    "green amber north south quick slow bright quiet"
).split()
_EPOCH_LO = 946684800  # 2000-01-01
_EPOCH_HI = 1577836800  # 2020-01-01


@dataclass
class SynthSpec:
    n_tables: int = 3
    rows: int = 100
    table_rows: dict[str, int] = field(default_factory=dict)
    topology: str = "chain"
    cycle_edge: bool = False
    foreign_keys: list[tuple[str, str]] | None = None  # explicit (child, parent) list
    columns: dict[str, int] = field(default_factory=lambda: {"numerical": 1, "categorical": 1})
    n_categories: int = 6
    temporal: bool = False
    signal: str = "none"
    noise_rate: float = 0.05
    dimension_rows: int = 8
    correlated: bool = False  # cat_1 = f(cat_0), num_1 = 2 num_0 + noise
    null_rate: float = 0.0  # attribute cells
    null_fk_rate: float = 0.0
    dangling: int = 0
    target_table: str | None = None
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.foreign_keys is not None:
            d["foreign_keys"] = [list(p) for p in self.foreign_keys]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise BadSpec(f"unknown synth spec fields: {sorted(unknown)}")
        if d.get("foreign_keys") is not None:
            d["foreign_keys"] = [tuple(p) for p in d["foreign_keys"]]
        return cls(**d)


def _table_names(spec: SynthSpec) -> list[str]:
    return [f"t{i}" for i in range(spec.n_tables)]


def _topology(spec: SynthSpec, rng: np.random.Generator) -> list[tuple[str, str]]:
    names = _table_names(spec)
    n = spec.n_tables
    if spec.foreign_keys is not None:
        pairs = [tuple(p) for p in spec.foreign_keys]
        for c, p in pairs:
            if c not in names or p not in names:
                raise BadSpec(f"foreign key ({c}, {p}) names an unknown table")
        return pairs
    if spec.topology == "chain":
        pairs = [(names[i + 1], names[i]) for i in range(n - 1)]
    elif spec.topology == "star":
        pairs = [(names[-1], names[i]) for i in range(n - 1)]
    elif spec.topology == "junction":
        if n < 3:
            raise BadSpec("junction topology needs at least 3 tables")
        # t0..t{n-2} form a chain; t{n-1} links t0 and t{n-2} with no attributes
        pairs = [(names[i + 1], names[i]) for i in range(n - 2)]
        pairs += [(names[-1], names[0]), (names[-1], names[-2])]
    elif spec.topology == "random_dag":
        pairs = []
        for i in range(1, n):
            j = int(rng.integers(0, i))
            pairs.append((names[i], names[j]))
            if i >= 2 and rng.random() < 0.3:
                k = int(rng.integers(0, i))
                pairs.append((names[i], names[k]))
    else:
        raise BadSpec(f"unknown topology {spec.topology!r}")
    if spec.cycle_edge and n >= 2:
        pairs.append((names[0], names[-1]))
    return pairs


def _default_target(spec: SynthSpec) -> str:
    names = _table_names(spec)
    if spec.topology == "junction" and spec.foreign_keys is None:
        return names[-2]
    return names[-1]


def _validate(spec: SynthSpec) -> None:
    if spec.n_tables < 1:
        raise BadSpec("n_tables must be >= 1")
    if spec.rows < 1 or any(v < 0 for v in spec.table_rows.values()):
        raise BadSpec("row counts must be positive")
    if spec.topology not in TOPOLOGIES:
        raise BadSpec(f"unknown topology {spec.topology!r}")
    if spec.signal not in SIGNALS:
        raise BadSpec(f"unknown signal {spec.signal!r}")
    if not 0.0 <= spec.noise_rate <= 1.0:
        raise BadSpec("noise_rate must be in [0, 1]")
    if not 0.0 <= spec.null_rate < 1.0 or not 0.0 <= spec.null_fk_rate <= 1.0:
        raise BadSpec("null rates must be in [0, 1)")
    if spec.n_categories < 2:
        raise BadSpec("n_categories must be >= 2")
    bad = set(spec.columns) - {"numerical", "categorical", "multi_categorical", "text", "temporal"}
    if bad:
        raise BadSpec(f"unknown column kinds {sorted(bad)}")
    if spec.signal != "none" and spec.columns.get("categorical", 0) < 1:
        raise BadSpec("a planted signal reads cat_0, so categorical must be >= 1")
    if spec.dangling < 0:
        raise BadSpec("dangling must be >= 0")


def _fk_column_names(pairs: list[tuple[str, str]]) -> list[str]:
    seen: dict[tuple[str, str], int] = {}
    out = []
    for c, p in pairs:
        k = seen.get((c, p), 0) + 1
        seen[(c, p)] = k
        out.append(f"fk_{p}" if k == 1 else f"fk_{p}_{k}")
    return out


def _attribute_columns(spec: SynthSpec, junction: bool) -> list[ColumnDef]:
    if junction:
        return []
    cols = []
    mix = spec.columns
    for k in range(mix.get("numerical", 0)):
        cols.append(ColumnDef(f"num_{k}", "real", SemanticType.NUMERICAL))
    for k in range(mix.get("categorical", 0)):
        cols.append(ColumnDef(f"cat_{k}", "text", SemanticType.CATEGORICAL))
    for k in range(mix.get("multi_categorical", 0)):
        cols.append(ColumnDef(f"mcat_{k}", "text", SemanticType.MULTI_CATEGORICAL))
    for k in range(mix.get("text", 0)):
        cols.append(ColumnDef(f"text_{k}", "text", SemanticType.TEXT))
    for k in range(mix.get("temporal", 0)):
        cols.append(ColumnDef(f"time_{k}", "datetime", SemanticType.TEMPORAL))
    return cols


def _draw_column(col: ColumnDef, n: int, spec: SynthSpec, rng: np.random.Generator, codes: dict) -> list:
    kind = col.semantic_type
    if kind == SemanticType.NUMERICAL:
        vals = rng.normal(size=n)
        if spec.correlated and col.name == "num_1" and "num_0" in codes:
            vals = 2.0 * codes["num_0"] + 0.1 * rng.normal(size=n)
        codes[col.name] = vals
        return [float(v) for v in vals]
    if kind == SemanticType.CATEGORICAL:
        c = rng.integers(0, spec.n_categories, size=n)
        if spec.correlated and col.name == "cat_1" and "cat_0" in codes:
            c = (codes["cat_0"] * 5 + 1) % spec.n_categories
        codes[col.name] = c
        return [f"c{int(v)}" for v in c]
    if kind == SemanticType.MULTI_CATEGORICAL:
        out = []
        for _ in range(n):
            k = int(rng.integers(1, 4))
            toks = rng.choice(8, size=k, replace=False)
            out.append(",".join(f"g{int(t)}" for t in sorted(toks)))
        return out
    if kind == SemanticType.TEXT:
        out = []
        for _ in range(n):
            k = int(rng.integers(3, 7))
            out.append(" ".join(_WORDS[int(i)] for i in rng.integers(0, len(_WORDS), size=k)))
        return out
    if kind == SemanticType.TEMPORAL:
        return [int(v) for v in rng.integers(_EPOCH_LO, _EPOCH_HI, size=n)]
    raise BadSpec(f"cannot generate column kind {kind}")


def generate(spec: SynthSpec) -> tuple[RelationalInstance, dict[str, Any]]:
    """Build the instance and its ledger. Same spec, same output."""
    _validate(spec)
    rng = np.random.default_rng(spec.seed)
    names = _table_names(spec)
    pairs = _topology(spec, rng)
    fk_cols = _fk_column_names(pairs)
    target = spec.target_table or _default_target(spec)
    if target not in names:
        raise BadSpec(f"target table {target!r} does not exist")
    junction_table = names[-1] if spec.topology == "junction" and spec.foreign_keys is None else None

    # the signal path: target -> source table through the target's first FK
    source_table, signal_fk = None, None
    if spec.signal == "target_local":
        source_table = target
    elif spec.signal in ("target_one_hop", "target_dimension"):
        for k, (c, p) in enumerate(pairs):
            if c == target and p != target:
                source_table, signal_fk = p, k
                break
        if source_table is None:
            raise BadSpec(f"signal {spec.signal} needs a foreign key from {target} to a parent table")
    if source_table == junction_table and source_table is not None:
        raise BadSpec("the signal source cannot be the attribute-free junction table")

    rows = {t: int(spec.table_rows.get(t, spec.rows)) for t in names}
    if spec.signal == "target_dimension" and source_table not in spec.table_rows:
        rows[source_table] = spec.dimension_rows

    # columns
    columns: dict[str, list[ColumnDef]] = {}
    for t in names:
        cols = [ColumnDef("id", "integer", SemanticType.PRIMARY_KEY, nullable=False)]
        for (c, p), name in zip(pairs, fk_cols):
            if c == t:
                cols.append(ColumnDef(name, "integer", SemanticType.FOREIGN_KEY))
        cols += _attribute_columns(spec, t == junction_table)
        if spec.temporal:
            cols.append(ColumnDef("ts", "datetime", SemanticType.TEMPORAL))
        if spec.signal != "none" and t == target:
            cols.append(ColumnDef(LABEL_COLUMN, "integer", SemanticType.CATEGORICAL))
        columns[t] = cols

    # attribute values, table by table
    data: dict[str, dict[str, list]] = {}
    codes_by_table: dict[str, dict] = {}
    for t in names:
        n = rows[t]
        vals: dict[str, list] = {"id": list(range(n))}
        codes: dict = {}
        for col in columns[t]:
            if col.semantic_type in (SemanticType.PRIMARY_KEY, SemanticType.FOREIGN_KEY) or col.name in (
                "ts",
                LABEL_COLUMN,
            ):
                continue
            vals[col.name] = _draw_column(col, n, spec, rng, codes)
        if spec.temporal:
            vals["ts"] = [int(v) for v in rng.integers(_EPOCH_LO, _EPOCH_HI, size=n)]
        data[t] = vals
        codes_by_table[t] = codes

    # foreign key values
    fk_values: list[list] = []
    for (c, p), name in zip(pairs, fk_cols):
        v = [int(x) for x in rng.integers(0, rows[p], size=rows[c])] if rows[p] else [None] * rows[c]
        fk_values.append(v)

    # injected nulls then dangling references, never on the signal FK
    eligible = [k for k in range(len(pairs)) if k != signal_fk]
    null_fk = {k: 0 for k in range(len(pairs))}
    dangling = {k: 0 for k in range(len(pairs))}
    if spec.null_fk_rate > 0:
        for k in eligible:
            draws = rng.random(len(fk_values[k]))
            for i in np.flatnonzero(draws < spec.null_fk_rate):
                if fk_values[k][i] is not None:
                    fk_values[k][i] = None
                    null_fk[k] += 1
    if spec.dangling:
        cells = [(k, i) for k in eligible for i, v in enumerate(fk_values[k]) if v is not None]
        if spec.dangling > len(cells):
            raise BadSpec(f"cannot inject {spec.dangling} dangling references into {len(cells)} eligible cells")
        for j in rng.choice(len(cells), size=spec.dangling, replace=False):
            k, i = cells[int(j)]
            parent_rows = rows[pairs[k][1]]
            fk_values[k][i] = parent_rows + int(rng.integers(0, 1000))
            dangling[k] += 1
    for k, ((c, _), name) in enumerate(zip(pairs, fk_cols)):
        data[c][name] = fk_values[k]

    # planted label
    signal_info: dict[str, Any] = {"kind": spec.signal}
    if spec.signal != "none":
        n = rows[target]
        src_codes = codes_by_table[source_table]["cat_0"]
        if spec.signal == "target_local":
            clean = (src_codes % 2).astype(np.int64)
        else:
            parent_idx = np.array(fk_values[signal_fk], dtype=np.int64)
            clean = (src_codes[parent_idx] % 2).astype(np.int64)
        replace_mask = rng.random(n) < spec.noise_rate
        coin = rng.integers(0, 2, size=n)
        label = np.where(replace_mask, coin, clean)
        data[target][LABEL_COLUMN] = [int(v) for v in label]
        signal_info.update(
            source_table=source_table,
            source_column="cat_0",
            label_column=LABEL_COLUMN,
            via_fk=None if signal_fk is None else fk_cols[signal_fk],
            n_replaced=int(replace_mask.sum()),
            n_flipped=int((label != clean).sum()),
            clean_labels=[int(v) for v in clean],
            bayes_auc=_bayes_auc(clean, label),
        )

    # null attribute cells
    n_null_attr = 0
    if spec.null_rate > 0:
        for t in names:
            for col in columns[t]:
                if col.semantic_type in (SemanticType.PRIMARY_KEY, SemanticType.FOREIGN_KEY) or col.name in (
                    "ts",
                    LABEL_COLUMN,
                ):
                    continue
                draws = rng.random(rows[t])
                for i in np.flatnonzero(draws < spec.null_rate):
                    data[t][col.name][i] = None
                    n_null_attr += 1

    tdefs = []
    tables = {}
    for t in names:
        cols = tuple(columns[t])
        tdefs.append(TableDef(t, cols, ("id",), "ts" if spec.temporal else None))
        order = [c.name for c in cols]
        tables[t] = Table(t, order, [tuple(data[t][c][i] for c in order) for i in range(rows[t])])
    fks = tuple(ForeignKeyDef(c, (name,), p, ("id",)) for (c, p), name in zip(pairs, fk_cols))
    instance = RelationalInstance(RelationalSchema(tuple(tdefs), fks), tables)

    ledger = {
        "seed": spec.seed,
        "target_table": target,
        "rows": rows,
        "foreign_keys": [
            {
                "child": c,
                "fk": name,
                "parent": p,
                "non_null": rows[c] - null_fk[k],
                "null": null_fk[k],
                "dangling": dangling[k],
                "edges": rows[c] - null_fk[k] - dangling[k] if rows[p] else 0,
            }
            for k, ((c, p), name) in enumerate(zip(pairs, fk_cols))
        ],
        "dangling": sum(dangling.values()),
        "null_fk": sum(null_fk.values()),
        "null_attributes": n_null_attr,
        "n_factual_columns": sum(
            1 for t in names for col in columns[t] if col.semantic_type not in (SemanticType.PRIMARY_KEY, SemanticType.FOREIGN_KEY)
        ),
        "signal": signal_info,
    }
    return instance, ledger


def _bayes_auc(clean: np.ndarray, label: np.ndarray) -> float:
    """AUC of the clean signal as a score against the emitted labels."""
    pos, neg = label == 1, label == 0
    p1, p0 = int((clean[pos] == 1).sum()), int((clean[pos] == 0).sum())
    n1, n0 = int((clean[neg] == 1).sum()), int((clean[neg] == 0).sum())
    if (p1 + p0) == 0 or (n1 + n0) == 0:
        return float("nan")
    return (p1 * n0 + 0.5 * (p1 * n1 + p0 * n0)) / ((p1 + p0) * (n1 + n0))


def write_dataset(instance: RelationalInstance, ledger: dict, dir_path: str | os.PathLike) -> None:
    """schema.json + one CSV per table + ledger.json."""
    write_csv_dataset(instance, dir_path)
    with open(Path(dir_path) / "ledger.json", "w", encoding="utf-8") as fh:
        json.dump(ledger, fh, indent=2, sort_keys=True)
        fh.write("\n")
