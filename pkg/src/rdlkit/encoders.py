"""Stage-1 attribute encoders: one d0-wide embedding per (row, column).

Fitting produces an ``EncoderSpec`` (statistics and vocabularies only, JSON
serializable). Parameters live in a flat ``{name: Tensor}`` dict owned by the
model. Raw cells are turned into index/feature arrays once per table
(``precompute_codes``) so batches only gather and project.

Column kinds:
  numerical          learned affine of the standardized scalar
  categorical        embedding table, rows = vocab + OOV + null
  multi_categorical  mean of token embeddings (same row layout)
  text               mean of hashed character 3-gram embeddings
  temporal           8 cyclic sin/cos features projected to d0
Every kind has a learned null vector.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Sequence

import numpy as np

from . import autodiff as ad
from .errors import ArityMismatch, EmptyTrainSplit
from .ingest import RelationalInstance
from .schema import SemanticType
from .tasks import TRAIN

TEXT_BUCKETS = 2048
NGRAM = 3
N_CYCLIC = 8
ENCODABLE = ("numerical", "categorical", "multi_categorical", "text", "temporal")


@dataclass
class ColumnSpec:
    name: str
    kind: str
    mean: float = 0.0
    std: float = 1.0
    vocab: list[str] = field(default_factory=list)
    separator: str = ","

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.kind == "numerical":
            d.update(mean=self.mean, std=self.std)
        elif self.kind in ("categorical", "multi_categorical"):
            d["vocab"] = list(self.vocab)
            if self.kind == "multi_categorical":
                d["separator"] = self.separator
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnSpec":
        return cls(
            name=d["name"],
            kind=d["kind"],
            mean=float(d.get("mean", 0.0)),
            std=float(d.get("std", 1.0)),
            vocab=list(d.get("vocab", [])),
            separator=d.get("separator", ","),
        )


@dataclass
class EncoderSpec:
    d0: int
    tables: dict[str, list[ColumnSpec]]
    text_buckets: int = TEXT_BUCKETS
    ngram: int = NGRAM

    def columns(self, table: str) -> list[ColumnSpec]:
        return self.tables.get(table, [])

    def to_dict(self) -> dict:
        return {
            "d0": self.d0,
            "text_buckets": self.text_buckets,
            "ngram": self.ngram,
            "tables": {t: [c.to_dict() for c in cols] for t, cols in self.tables.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderSpec":
        return cls(
            d0=int(d["d0"]),
            text_buckets=int(d.get("text_buckets", TEXT_BUCKETS)),
            ngram=int(d.get("ngram", NGRAM)),
            tables={t: [ColumnSpec.from_dict(c) for c in cols] for t, cols in d["tables"].items()},
        )


# --------------------------------------------------------------------------
# cell helpers


def _number(v) -> float | None:
    if v is None:
        return None
    if isinstance(v, bool):
        return float(v)
    if isinstance(v, (int, float)):
        return float(v) if math.isfinite(v) else None
    return None


def token(v) -> str:
    return str(v)


def split_tokens(v, sep: str) -> list[str]:
    if v is None:
        return []
    return [t.strip() for t in str(v).split(sep) if t.strip()]


def text_ngrams(s: str, n: int = NGRAM) -> list[str]:
    s = f"^{s.lower()}$"  # boundary markers so short strings still produce grams
    if len(s) < n:
        return [s]
    return [s[i : i + n] for i in range(len(s) - n + 1)]


def text_buckets(v, n_buckets: int = TEXT_BUCKETS, n: int = NGRAM) -> list[int]:
    if v is None or str(v) == "":
        return []
    return [zlib.crc32(g.encode("utf-8")) % n_buckets for g in text_ngrams(str(v), n)]


def cyclic_features(ts) -> np.ndarray | None:
    """sin/cos of year fraction, month, day of week and hour of day (UTC)."""
    x = _number(ts)
    if x is None:
        return None
    try:
        dt = datetime.fromtimestamp(x, tz=timezone.utc)
    except (OverflowError, OSError, ValueError):
        return None
    start = datetime(dt.year, 1, 1, tzinfo=timezone.utc).timestamp()
    end = datetime(dt.year + 1, 1, 1, tzinfo=timezone.utc).timestamp()
    fracs = (
        (x - start) / (end - start),
        (dt.month - 1) / 12.0,
        dt.weekday() / 7.0,
        (dt.hour + dt.minute / 60.0 + dt.second / 3600.0) / 24.0,
    )
    out = np.empty(N_CYCLIC)
    for k, f in enumerate(fracs):
        out[2 * k] = math.sin(2 * math.pi * f)
        out[2 * k + 1] = math.cos(2 * math.pi * f)
    return out


# --------------------------------------------------------------------------
# fitting


def _kind_of(col) -> str | None:
    st = col.semantic_type
    if st is None:
        return None
    st = SemanticType(st)
    return st.value if st.value in ENCODABLE else None


def train_rows(instance: RelationalInstance, training_table, table: str) -> list[int]:
    """Row ordinals of ``table`` the encoders may read.

    The target table loses every row referenced by a val/test entry. For
    temporal tasks, timed rows of other tables count only up to the latest
    training timestamp.
    """
    n = len(instance.tables[table])
    if training_table is None:
        return list(range(n))
    split = training_table.split
    if split is None:
        raise EmptyTrainSplit("training table has no split assignment")
    if table == training_table.target_table:
        held = set(int(i) for i in training_table.entity_index[split != TRAIN])
        return [i for i in range(n) if i not in held]
    if training_table.timestamps is not None:
        tdef = instance.schema.table(table)
        if tdef.time_column:
            cutoff = float(np.max(training_table.timestamps[split == TRAIN]))
            j = tdef.index(tdef.time_column)
            rows = instance.tables[table].rows
            return [i for i in range(n) if _number(rows[i][j]) is None or _number(rows[i][j]) <= cutoff]
    return list(range(n))


def fit_encoders(instance: RelationalInstance, training_table=None, d0: int = 64) -> EncoderSpec:
    """Statistics and vocabularies from train rows only; vocabularies keep first-occurrence order."""
    if training_table is not None:
        if training_table.split is None or not np.any(training_table.split == TRAIN):
            raise EmptyTrainSplit("no training rows")
    schema = instance.schema
    tables: dict[str, list[ColumnSpec]] = {}
    for tdef in schema.tables:
        keys = schema.key_columns(tdef.name)
        rows_idx = train_rows(instance, training_table, tdef.name)
        data = instance.tables[tdef.name].rows
        specs = []
        for j, col in enumerate(tdef.columns):
            if col.name in keys:
                continue
            kind = _kind_of(col)
            if kind is None:
                continue
            vals = [data[i][j] for i in rows_idx]
            cs = ColumnSpec(col.name, kind)
            if kind == "numerical":
                xs = np.array([x for x in (_number(v) for v in vals) if x is not None], dtype=np.float64)
                if len(xs):
                    cs.mean = float(xs.mean())
                    std = float(xs.std())
                    cs.std = std if std > 0 else 1.0
            elif kind == "categorical":
                cs.vocab = list(dict.fromkeys(token(v) for v in vals if v is not None))
            elif kind == "multi_categorical":
                cs.vocab = list(dict.fromkeys(t for v in vals for t in split_tokens(v, cs.separator)))
            specs.append(cs)
        tables[tdef.name] = specs
    return EncoderSpec(d0=d0, tables=tables)


# --------------------------------------------------------------------------
# parameters


def param_name(table: str, column: str, part: str) -> str:
    return f"enc/{table}/{column}/{part}"


def init_encoder_params(spec: EncoderSpec, rng: np.random.Generator) -> dict[str, ad.Tensor]:
    d = spec.d0
    out: dict[str, ad.Tensor] = {}
    for table, cols in spec.tables.items():
        for cs in cols:
            if cs.kind == "numerical":
                shapes = {"w": (1, d), "b": (1, d), "null": (1, d)}
            elif cs.kind in ("categorical", "multi_categorical"):
                shapes = {"emb": (len(cs.vocab) + 2, d)}  # vocab, OOV, null
            elif cs.kind == "text":
                shapes = {"emb": (spec.text_buckets + 1, d)}  # buckets, null
            else:
                shapes = {"w": (N_CYCLIC, d), "b": (1, d), "null": (1, d)}
            for part, shape in shapes.items():
                if part == "b":
                    data = np.zeros(shape)
                else:
                    data = ad.glorot(rng, shape[0] if part == "w" else 1, d, shape)
                name = param_name(table, cs.name, part)
                out[name] = ad.parameter(data, name)
    return out


# --------------------------------------------------------------------------
# precomputed codes


@dataclass
class ColumnCodes:
    kind: str
    values: np.ndarray  # numerical: (n,) standardized; temporal: (n, 8); index kinds: (n,) or flat tokens
    null: np.ndarray  # (n,) bool
    indptr: np.ndarray | None = None  # token kinds: CSR row pointer into ``values``


def column_codes(spec: EncoderSpec, cs: ColumnSpec, cells: Sequence[Any]) -> ColumnCodes:
    n = len(cells)
    if cs.kind == "numerical":
        xs = [_number(v) for v in cells]
        null = np.array([x is None for x in xs], dtype=bool)
        vals = np.array([0.0 if x is None else (x - cs.mean) / cs.std for x in xs], dtype=np.float64)
        return ColumnCodes("numerical", vals, null)
    if cs.kind == "temporal":
        feats = [cyclic_features(v) for v in cells]
        null = np.array([f is None for f in feats], dtype=bool)
        vals = np.zeros((n, N_CYCLIC))
        for i, f in enumerate(feats):
            if f is not None:
                vals[i] = f
        return ColumnCodes("temporal", vals, null)
    if cs.kind == "categorical":
        pos = {t: i for i, t in enumerate(cs.vocab)}
        oov, nul = len(cs.vocab), len(cs.vocab) + 1
        idx = np.array([nul if v is None else pos.get(token(v), oov) for v in cells], dtype=np.int64)
        return ColumnCodes("categorical", idx, idx == nul)
    if cs.kind == "multi_categorical":
        pos = {t: i for i, t in enumerate(cs.vocab)}
        oov = len(cs.vocab)
        lists = [[pos.get(t, oov) for t in split_tokens(v, cs.separator)] for v in cells]
    else:
        lists = [text_buckets(v, spec.text_buckets, spec.ngram) for v in cells]
    lens = np.array([len(x) for x in lists], dtype=np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(lens, out=indptr[1:])
    flat = np.array([t for x in lists for t in x], dtype=np.int64)
    return ColumnCodes(cs.kind, flat, lens == 0, indptr)


def precompute_codes(spec: EncoderSpec, instance: RelationalInstance) -> dict[str, list[ColumnCodes]]:
    out = {}
    for tdef in instance.schema.tables:
        rows = instance.tables[tdef.name].rows
        cols = []
        for cs in spec.columns(tdef.name):
            j = tdef.index(cs.name)
            cols.append(column_codes(spec, cs, [r[j] for r in rows]))
        out[tdef.name] = cols
    return out


def _null_rows(mask: np.ndarray) -> np.ndarray:
    return mask.astype(np.float64).reshape(-1, 1)


def encode_column(
    spec: EncoderSpec, cs: ColumnSpec, codes: ColumnCodes, params: dict[str, ad.Tensor], table: str, ids: np.ndarray
) -> ad.Tensor:
    """(len(ids), d0) embeddings of one column for the given rows."""
    ids = np.asarray(ids, dtype=np.int64)
    p = lambda part: params[param_name(table, cs.name, part)]  # noqa: E731
    if cs.kind in ("numerical", "temporal"):
        null = codes.null[ids]
        x = codes.values[ids]
        x = x.reshape(-1, 1) if cs.kind == "numerical" else x
        keep = _null_rows(~null)
        h = ad.add(ad.matmul(ad.Tensor(x * keep), p("w")), ad.matmul(ad.Tensor(keep), p("b")))
        if null.any():
            h = ad.add(h, ad.matmul(ad.Tensor(_null_rows(null)), p("null")))
        return h
    emb = p("emb")
    if cs.kind == "categorical":
        return ad.gather(emb, codes.values[ids])
    # token kinds: mean over each row's tokens, null row when empty
    starts, ends = codes.indptr[ids], codes.indptr[ids + 1]
    lens = ends - starts
    total = int(lens.sum())
    null_idx = emb.shape[0] - 1
    m = len(ids)
    if total:
        owner = np.repeat(np.arange(m), lens)
        offs = np.arange(total) - np.repeat(np.cumsum(lens) - lens, lens)
        toks = codes.values[np.repeat(starts, lens) + offs]
        summed = ad.scatter_add(ad.gather(emb, toks), owner, m)
        inv = np.where(lens > 0, 1.0 / np.maximum(lens, 1), 0.0).reshape(-1, 1)
        h = ad.mul(summed, ad.Tensor(inv))
    else:
        h = ad.Tensor(np.zeros((m, spec.d0)))
    null = lens == 0
    if null.any():
        h = ad.add(h, ad.matmul(ad.Tensor(_null_rows(null)), ad.gather(emb, [null_idx])))
    return h


def encode_rows(
    spec: EncoderSpec,
    codes: dict[str, list[ColumnCodes]],
    params: dict[str, ad.Tensor],
    table: str,
    ids: np.ndarray,
) -> list[ad.Tensor]:
    return [encode_column(spec, cs, cc, params, table, ids) for cs, cc in zip(spec.columns(table), codes[table])]


def encode_node(spec: EncoderSpec, params: dict[str, ad.Tensor], table: str, cells: Sequence[Any]) -> np.ndarray:
    """n x d0 matrix for one row given as its encoded-column values in spec order."""
    cols = spec.columns(table)
    if len(cells) != len(cols):
        raise ArityMismatch(f"{table}: expected {len(cols)} encoded values, got {len(cells)}")
    if not cols:
        return np.zeros((0, spec.d0))
    out = []
    for cs, v in zip(cols, cells):
        cc = column_codes(spec, cs, [v])
        out.append(encode_column(spec, cs, cc, params, table, np.array([0])).data[0])
    return np.stack(out)
