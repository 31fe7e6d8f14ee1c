"""Training tables and modified database instances for predictive tasks."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from .errors import (
    AllTargetsNull,
    BadRatios,
    MissingTimestamps,
    NothingMaskable,
    TargetIsKey,
    TaskError,
)
from .ingest import CsvWriter, RelationalInstance, Table
from .schema import SemanticType

log = logging.getLogger(__name__)

TASK_KINDS = ("binary_classification", "multiclass_classification", "regression", "mask_pretrain")
SPLITS = ("train", "val", "test")
TRAIN, VAL, TEST = 0, 1, 2


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.7, 0.15, 0.15)
    seed: int = 0


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    target_table: str
    target_column: str | None = None
    temporal: bool = False
    split: SplitSpec = SplitSpec()
    mask_rate: float = 0.2
    seed: int = 0
    time_column: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "target_table": self.target_table,
            "target_column": self.target_column,
            "temporal": self.temporal,
            "split": {"ratios": list(self.split.ratios), "seed": self.split.seed},
            "mask_rate": self.mask_rate,
            "seed": self.seed,
            "time_column": self.time_column,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        d = dict(d)
        sp = d.pop("split", None) or {}
        split = SplitSpec(tuple(sp.get("ratios", (0.7, 0.15, 0.15))), int(sp.get("seed", 0)))
        if d.get("kind") not in TASK_KINDS:
            raise TaskError(f"unknown task kind {d.get('kind')!r}")
        return cls(split=split, **d)


@dataclass
class TrainingTable:
    """Rows are (entity, label) pairs; ``entity_index`` holds target-table row ordinals."""

    kind: str
    target_table: str
    entity_keys: list[tuple]
    entity_index: np.ndarray
    labels: list[Any]
    timestamps: np.ndarray | None = None
    split: np.ndarray | None = None
    classes: list[Any] | None = None
    target_columns: list[str] | None = None  # mask_pretrain: column of each masked cell
    warnings: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return len(self.classes) if self.classes is not None else 0

    def rows_in(self, split: int) -> np.ndarray:
        if self.split is None:
            raise TaskError("training table has no split assignment")
        return np.flatnonzero(self.split == split)

    def to_csv(self, path) -> None:
        """Columns: entity_key, [column,] label, [timestamp,] split."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = CsvWriter(fh)
            header = ["entity_key"]
            if self.target_columns is not None:
                header.append("column")
            header.append("label")
            if self.timestamps is not None:
                header.append("timestamp")
            header.append("split")
            w.writerow(header)
            for i in range(len(self)):
                row = ["|".join(str(k) for k in self.entity_keys[i])]
                if self.target_columns is not None:
                    row.append(self.target_columns[i])
                lab = self.labels[i]
                row.append("" if lab is None else repr(lab) if isinstance(lab, float) else str(lab))
                if self.timestamps is not None:
                    row.append(repr(float(self.timestamps[i])))
                row.append(SPLITS[self.split[i]] if self.split is not None else "")
                w.writerow(row)


def _canonicalize(values: Sequence[Any]) -> tuple[list[int], list[Any]]:
    """Dense label indices by first occurrence; natural order for 0/1 and booleans."""
    distinct = list(dict.fromkeys(values))
    if all(isinstance(v, (bool, int)) and v in (0, 1) for v in distinct):
        distinct = sorted(distinct, key=lambda v: int(v))
    pos = {v: i for i, v in enumerate(distinct)}
    return [pos[v] for v in values], distinct


def _timestamps_for(instance: RelationalInstance, table: str, time_column: str | None, rows: Sequence[int]):
    tdef = instance.schema.table(table)
    col = time_column or tdef.time_column
    if col is None:
        raise MissingTimestamps(f"temporal task on {table!r} needs a time column")
    j = tdef.index(col)
    data = instance.tables[table].rows
    ts = np.array(
        [float(data[i][j]) if isinstance(data[i][j], (int, float)) else math.nan for i in rows], dtype=np.float64
    )
    return ts


def extract_target_task(instance: RelationalInstance, spec: TaskSpec) -> tuple[RelationalInstance, TrainingTable]:
    """Split the target table into (attributes without the target, training table)."""
    if spec.kind == "mask_pretrain":
        raise TaskError("use make_mask_pretrain_task for mask_pretrain")
    schema = instance.schema
    if not schema.has_table(spec.target_table):
        raise TaskError(f"no table {spec.target_table!r}")
    tdef = schema.table(spec.target_table)
    col = spec.target_column
    if col is None or not tdef.has_column(col):
        raise TaskError(f"{spec.target_table} has no column {col!r}")
    if col in schema.key_columns(tdef.name):
        raise TargetIsKey(f"{tdef.name}.{col} is a key column")
    if tdef.column(col).semantic_type == SemanticType.IGNORED:
        raise TaskError(f"{tdef.name}.{col} is typed ignored")
    if spec.temporal and col == (spec.time_column or tdef.time_column):
        raise TaskError("target column cannot be the time column")

    j = tdef.index(col)
    table = instance.tables[tdef.name]
    pk_idx = [tdef.index(c) for c in tdef.primary_key]
    rows = [i for i, r in enumerate(table.rows) if r[j] is not None]
    if not rows:
        raise AllTargetsNull(f"{tdef.name}.{col} has no non-null values")
    raw = [table.rows[i][j] for i in rows]

    classes = None
    if spec.kind in ("binary_classification", "multiclass_classification"):
        labels, classes = _canonicalize(raw)
        if spec.kind == "binary_classification" and len(classes) != 2:
            raise TaskError(f"binary task needs 2 classes, found {len(classes)}")
    elif spec.kind == "regression":
        labels = [float(v) for v in raw]
    else:
        raise TaskError(f"unknown task kind {spec.kind!r}")

    keys = [tuple(table.rows[i][k] for k in pk_idx) if pk_idx else (i,) for i in rows]
    ts = _timestamps_for(instance, tdef.name, spec.time_column, rows) if spec.temporal else None

    new_tdef = replace(tdef, columns=tuple(c for c in tdef.columns if c.name != col))
    new_rows = [r[:j] + r[j + 1 :] for r in table.rows]
    new_tables = dict(instance.tables)
    new_tables[tdef.name] = Table(tdef.name, new_tdef.column_names, new_rows)
    modified = RelationalInstance(schema.replace_table(new_tdef), new_tables, list(instance.warnings))

    tt = TrainingTable(
        kind=spec.kind,
        target_table=tdef.name,
        entity_keys=keys,
        entity_index=np.array(rows, dtype=np.int64),
        labels=labels,
        timestamps=ts,
        classes=classes,
    )
    target_vec = [table.rows[i][j] for i in range(len(table.rows))]
    for k, name in enumerate(new_tdef.column_names):
        if [r[k] for r in new_rows] == target_vec:
            msg = f"column {tdef.name}.{name} duplicates the target column"
            log.warning(msg)
            tt.warnings.append(msg)
    return modified, tt


def maskable_columns(instance: RelationalInstance, table: str) -> list[str]:
    """Non-key columns other than the table's time column."""
    schema = instance.schema
    tdef = schema.table(table)
    keys = schema.key_columns(table)
    return [
        c.name
        for c in tdef.columns
        if c.name not in keys and c.name != tdef.time_column and c.semantic_type != SemanticType.IGNORED
    ]


def make_mask_pretrain_task(
    instance: RelationalInstance, spec: TaskSpec
) -> tuple[RelationalInstance, TrainingTable]:
    """Mask each non-null maskable cell independently with probability ``mask_rate``.

    Draws happen in row-major order over all maskable cells (null or not), so
    the mask depends only on (table shape, mask_rate, seed).
    """
    if spec.kind != "mask_pretrain":
        raise TaskError("spec.kind must be mask_pretrain")
    if not (0.0 < spec.mask_rate <= 1.0):
        raise TaskError(f"mask_rate must be in (0, 1], got {spec.mask_rate}")
    schema = instance.schema
    tdef = schema.table(spec.target_table)
    cols = maskable_columns(instance, tdef.name)
    table = instance.tables[tdef.name]
    col_idx = [tdef.index(c) for c in cols]
    if not cols or not any(r[j] is not None for r in table.rows for j in col_idx):
        raise NothingMaskable(f"table {tdef.name!r} has no maskable cells")

    rng = np.random.default_rng(spec.seed)
    draws = rng.random((len(table.rows), len(cols)))
    pk_idx = [tdef.index(c) for c in tdef.primary_key]
    new_rows = []
    keys, ents, labels, tcols = [], [], [], []
    for i, row in enumerate(table.rows):
        cells = list(row)
        for k, j in enumerate(col_idx):
            if row[j] is not None and draws[i, k] < spec.mask_rate:
                keys.append(tuple(row[p] for p in pk_idx) if pk_idx else (i,))
                ents.append(i)
                labels.append(row[j])
                tcols.append(cols[k])
                cells[j] = None
        new_rows.append(tuple(cells))
    new_tables = dict(instance.tables)
    new_tables[tdef.name] = Table(tdef.name, list(table.columns), new_rows)
    masked = RelationalInstance(schema, new_tables, list(instance.warnings))
    ts = _timestamps_for(instance, tdef.name, spec.time_column, ents) if spec.temporal else None
    tt = TrainingTable(
        kind="mask_pretrain",
        target_table=tdef.name,
        entity_keys=keys,
        entity_index=np.array(ents, dtype=np.int64),
        labels=labels,
        timestamps=ts,
        target_columns=tcols,
    )
    return masked, tt


def restore_masked(masked: RelationalInstance, tt: TrainingTable) -> RelationalInstance:
    """Write reconstruction targets back into the masked table."""
    tdef = masked.schema.table(tt.target_table)
    rows = [list(r) for r in masked.tables[tdef.name].rows]
    for i, col, val in zip(tt.entity_index, tt.target_columns or [], tt.labels):
        rows[int(i)][tdef.index(col)] = val
    tables = dict(masked.tables)
    tables[tdef.name] = Table(tdef.name, list(masked.tables[tdef.name].columns), [tuple(r) for r in rows])
    return RelationalInstance(masked.schema, tables, list(masked.warnings))


# --------------------------------------------------------------------------
# splits


def _check_ratios(ratios: Sequence[float]) -> tuple[float, float, float]:
    r = tuple(float(x) for x in ratios)
    if len(r) != 3 or any(x < 0 or not math.isfinite(x) for x in r) or abs(sum(r) - 1.0) > 1e-9:
        raise BadRatios(f"split ratios must be 3 non-negative numbers summing to 1, got {list(ratios)}")
    return r  # type: ignore[return-value]


def largest_remainder(n: int, ratios: Sequence[float]) -> list[int]:
    quotas = [n * r for r in ratios]
    counts = [int(math.floor(q + 1e-9)) for q in quotas]
    rest = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:rest]:
        counts[i] += 1
    return counts


def assign_random_split(tt: TrainingTable, ratios: Sequence[float], seed: int) -> TrainingTable:
    r = _check_ratios(ratios)
    n = len(tt)
    counts = largest_remainder(n, r)
    perm = np.random.default_rng(seed).permutation(n)
    split = np.empty(n, dtype=np.int8)
    split[perm[: counts[0]]] = TRAIN
    split[perm[counts[0] : counts[0] + counts[1]]] = VAL
    split[perm[counts[0] + counts[1] :]] = TEST
    return replace(tt, split=split)


def assign_temporal_split(tt: TrainingTable, ratios: Sequence[float]) -> TrainingTable:
    """Order rows by timestamp and cut at the cumulative-ratio quantiles.

    A boundary that falls inside a run of equal timestamps moves back so the
    whole run lands in the later split. If every timestamp is equal the split
    is degenerate and all rows go to train.
    """
    r = _check_ratios(ratios)
    if tt.timestamps is None or len(tt.timestamps) != len(tt):
        raise MissingTimestamps("temporal split needs timestamps")
    ts = np.asarray(tt.timestamps, dtype=np.float64)
    if not np.all(np.isfinite(ts)):
        raise MissingTimestamps("temporal split needs finite timestamps")
    n = len(ts)
    warnings = list(tt.warnings)
    split = np.zeros(n, dtype=np.int8)
    if n and np.all(ts == ts[0]):
        msg = "TieDegenerate: all timestamps equal, every row placed in train"
        log.warning(msg)
        warnings.append(msg)
        return replace(tt, split=split, warnings=warnings)
    s = np.sort(ts, kind="stable")
    b1 = int(math.floor(n * r[0] + 1e-9))
    b2 = int(math.floor(n * (r[0] + r[1]) + 1e-9))
    b1, b2 = min(b1, n), min(max(b2, b1), n)
    while 0 < b1 < n and s[b1 - 1] == s[b1]:
        b1 -= 1
    while b1 < b2 < n and s[b2 - 1] == s[b2]:
        b2 -= 1
    # assign by timestamp value so row order is irrelevant
    t1 = s[b1] if b1 < n else math.inf
    t2 = s[b2] if b2 < n else math.inf
    split[ts >= t1] = VAL
    split[ts >= t2] = TEST
    return replace(tt, split=split, warnings=warnings)


def prepare_task(instance: RelationalInstance, spec: TaskSpec) -> tuple[RelationalInstance, TrainingTable]:
    """Build the task's instance and training table and assign splits."""
    if spec.kind == "mask_pretrain":
        inst, tt = make_mask_pretrain_task(instance, spec)
    else:
        inst, tt = extract_target_task(instance, spec)
    if spec.temporal:
        tt = assign_temporal_split(tt, spec.split.ratios)
    else:
        tt = assign_random_split(tt, spec.split.ratios, spec.split.seed)
    return inst, tt
