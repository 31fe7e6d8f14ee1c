"""Compile a relational instance into a heterogeneous (temporal) graph.

One node type per table, one node per row (node index == row ordinal), one
edge type per foreign-key constraint and one edge per non-null, resolvable FK
cell. Edges are stored once as (child, parent) pairs and exposed in both
directions through CSR views.
"""

from __future__ import annotations

import io
import logging
import math
import struct
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import DanglingReference, MissingTimeColumn, SnapshotFormatError
from .ingest import RelationalInstance, key_tuple, pk_index
from .schema import ColumnDef

log = logging.getLogger(__name__)

EdgeType = tuple[str, str, str]  # (child_table, fk_name, parent_table)
Direction = Literal["to_parent", "to_child"]
DIRECTIONS: tuple[Direction, Direction] = ("to_parent", "to_child")

SNAPSHOT_MAGIC = b"RDLGRAPH"
SNAPSHOT_VERSION = 1


@dataclass
class HeteroGraph:
    node_types: list[str]
    edge_types: list[EdgeType]
    num_nodes: dict[str, int]
    edges: dict[EdgeType, np.ndarray]  # (E, 2) int64: child idx, parent idx
    time: dict[str, np.ndarray] = field(default_factory=dict)  # float64, NaN = undefined
    attribute_columns: dict[str, tuple[ColumnDef, ...]] = field(default_factory=dict)
    attributes: dict[str, list[tuple]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    _csr: dict = field(default_factory=dict, repr=False)

    def num_edges(self, etype: EdgeType | None = None) -> int:
        if etype is not None:
            return len(self.edges[etype])
        return sum(len(e) for e in self.edges.values())

    @property
    def total_nodes(self) -> int:
        return sum(self.num_nodes.values())

    def timestamps(self, ntype: str) -> np.ndarray | None:
        return self.time.get(ntype)

    def relations(self) -> list[tuple[EdgeType, Direction, str, str]]:
        """All (edge type, direction, source type, destination type) in fixed order."""
        out = []
        for et in self.edge_types:
            child, _, parent = et
            out.append((et, "to_parent", child, parent))
            out.append((et, "to_child", parent, child))
        return out

    def csr(self, etype: EdgeType, direction: Direction) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) giving neighbors of each source node.

        ``to_parent`` sources are child nodes, ``to_child`` sources are parents.
        Within a source, neighbors keep edge-list order.
        """
        key = (etype, direction)
        if key not in self._csr:
            e = self.edges[etype]
            child, _, parent = etype
            if direction == "to_parent":
                src, dst, n = e[:, 0], e[:, 1], self.num_nodes[child]
            else:
                src, dst, n = e[:, 1], e[:, 0], self.num_nodes[parent]
            order = np.argsort(src, kind="stable")
            indptr = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
            self._csr[key] = (indptr, dst[order].astype(np.int64))
        return self._csr[key]


def build_graph(
    instance: RelationalInstance,
    dangling: Literal["skip", "error"] = "skip",
    time_columns: dict[str, str] | None = None,
) -> HeteroGraph:
    schema = instance.schema
    times = {t.name: t.time_column for t in schema.tables if t.time_column}
    times.update(time_columns or {})
    g = HeteroGraph(
        node_types=list(schema.table_names),
        edge_types=[fk.edge_type for fk in schema.foreign_keys],
        num_nodes={t: len(instance.tables[t]) for t in schema.table_names},
        edges={},
    )
    for tdef in schema.tables:
        keys = schema.key_columns(tdef.name)
        cols = tuple(c for c in tdef.columns if c.name not in keys)
        idx = [tdef.index(c.name) for c in cols]
        g.attribute_columns[tdef.name] = cols
        g.attributes[tdef.name] = [tuple(r[i] for i in idx) for r in instance.tables[tdef.name].rows]

    for table, col in times.items():
        tdef = schema.table(table)
        if not tdef.has_column(col):
            raise MissingTimeColumn(f"time column {table}.{col} does not exist")
        j = tdef.index(col)
        vals = [r[j] for r in instance.tables[table].rows]
        g.time[table] = np.array(
            [float(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else math.nan for v in vals],
            dtype=np.float64,
        )

    indexes: dict[str, dict] = {}
    for fk in schema.foreign_keys:
        if fk.parent_table not in indexes:
            indexes[fk.parent_table] = pk_index(instance, fk.parent_table)
        parent = indexes[fk.parent_table]
        cdef = schema.table(fk.child_table)
        idx = [cdef.index(c) for c in fk.child_columns]
        pairs = []
        n_dangling = 0
        for i, row in enumerate(instance.tables[fk.child_table].rows):
            key = key_tuple(row, idx)
            if key is None:
                continue
            j = parent.get(key)
            if j is None:
                if dangling == "error":
                    raise DanglingReference(f"{fk.child_table}.{fk.fk_name} row {i}: {key} not in {fk.parent_table}")
                n_dangling += 1
                continue
            pairs.append((i, j))
        if n_dangling:
            msg = f"{fk.child_table}.{fk.fk_name}: skipped {n_dangling} dangling references"
            log.warning(msg)
            g.warnings.append(msg)
        g.edges[fk.edge_type] = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return g


def degree_profile(graph: HeteroGraph) -> dict[str, dict]:
    """Per edge type: min/mean/max out-degree (children) and in-degree (parents)."""
    out = {}
    for et in graph.edge_types:
        child, fk, parent = et
        e = graph.edges[et]
        res = {}
        for side, col, n in (("out", 0, graph.num_nodes[child]), ("in", 1, graph.num_nodes[parent])):
            if n == 0:
                res[side] = {"min": 0, "mean": 0.0, "max": 0}
                continue
            deg = np.bincount(e[:, col], minlength=n) if len(e) else np.zeros(n, dtype=np.int64)
            res[side] = {"min": int(deg.min()), "mean": float(deg.mean()), "max": int(deg.max())}
        out[f"{child}.{fk}->{parent}"] = res
    return out


# --------------------------------------------------------------------------
# binary snapshot
#
# All integers little-endian.
#   magic "RDLGRAPH" | u32 version
#   u32 n_node_types ; per type: u32 len, utf-8 name, u64 n_nodes
#   u32 n_edge_types ; per type: u32 child idx, u32 parent idx, u32 len, utf-8 fk name,
#                      u64 n_edges, u64[n_child+1] indptr, u64[n_edges] parent indices
#   per node type: u8 has_time, then f64[n_nodes] timestamps (NaN = undefined) if set
# The CSR is keyed by child node; parents keep edge-list order.


def _put_str(buf: io.BytesIO, s: str) -> None:
    b = s.encode("utf-8")
    buf.write(struct.pack("<I", len(b)))
    buf.write(b)


def snapshot_bytes(graph: HeteroGraph) -> bytes:
    buf = io.BytesIO()
    buf.write(SNAPSHOT_MAGIC)
    buf.write(struct.pack("<I", SNAPSHOT_VERSION))
    buf.write(struct.pack("<I", len(graph.node_types)))
    pos = {t: i for i, t in enumerate(graph.node_types)}
    for t in graph.node_types:
        _put_str(buf, t)
        buf.write(struct.pack("<Q", graph.num_nodes[t]))
    buf.write(struct.pack("<I", len(graph.edge_types)))
    for et in graph.edge_types:
        child, fk, parent = et
        buf.write(struct.pack("<II", pos[child], pos[parent]))
        _put_str(buf, fk)
        indptr, indices = graph.csr(et, "to_parent")
        buf.write(struct.pack("<Q", len(indices)))
        buf.write(indptr.astype("<u8").tobytes())
        buf.write(indices.astype("<u8").tobytes())
    for t in graph.node_types:
        ts = graph.time.get(t)
        if ts is None:
            buf.write(b"\x00")
        else:
            buf.write(b"\x01")
            buf.write(ts.astype("<f8").tobytes())
    return buf.getvalue()


def save_snapshot(graph: HeteroGraph, path) -> None:
    with open(path, "wb") as fh:
        fh.write(snapshot_bytes(graph))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise SnapshotFormatError("truncated snapshot")
        b = self.data[self.pos : self.pos + n]
        self.pos += n
        return b

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")

    def array(self, dtype: str, n: int) -> np.ndarray:
        return np.frombuffer(self.take(n * 8), dtype=dtype).copy()


def load_snapshot(source) -> HeteroGraph:
    """Read a snapshot (path or bytes). Node attributes are not part of the format."""
    data = source if isinstance(source, (bytes, bytearray)) else open(source, "rb").read()
    r = _Reader(bytes(data))
    if r.take(8) != SNAPSHOT_MAGIC:
        raise SnapshotFormatError("bad magic")
    (version,) = r.unpack("<I")
    if version != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    (nt,) = r.unpack("<I")
    types, counts = [], {}
    for _ in range(nt):
        name = r.string()
        (n,) = r.unpack("<Q")
        types.append(name)
        counts[name] = n
    (ne,) = r.unpack("<I")
    etypes, edges = [], {}
    for _ in range(ne):
        ci, pi = r.unpack("<II")
        fk = r.string()
        (m,) = r.unpack("<Q")
        child, parent = types[ci], types[pi]
        indptr = r.array("<u8", counts[child] + 1).astype(np.int64)
        indices = r.array("<u8", m).astype(np.int64)
        src = np.repeat(np.arange(counts[child], dtype=np.int64), np.diff(indptr))
        et = (child, fk, parent)
        etypes.append(et)
        edges[et] = np.stack([src, indices], axis=1) if m else np.zeros((0, 2), dtype=np.int64)
    time = {}
    for t in types:
        (flag,) = r.unpack("<B")
        if flag:
            time[t] = r.array("<f8", counts[t]).astype(np.float64)
    if r.pos != len(r.data):
        raise SnapshotFormatError("trailing bytes in snapshot")
    return HeteroGraph(node_types=types, edge_types=etypes, num_nodes=counts, edges=edges, time=time)
