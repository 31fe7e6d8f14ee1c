"""Database characteristics and the tabular-like / graph-like classification.

Four blocks are computed: database counts, schema structure (FK
multiplicities, table-graph diameter, cycles), task statistics and
entity-graph statistics (eccentricity, density). The classification reads only
the schema block, so it can be re-run on stored reports.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import shortest_path

from .graph import HeteroGraph
from .ingest import RelationalInstance, key_tuple, pk_index

ONE_TO_ONE = "one_to_one"
ONE_TO_MANY = "one_to_many"
MANY_TO_MANY = "many_to_many"


@dataclass(frozen=True)
class FeatureConfig:
    exact_threshold: int = 50_000
    n_probe: int = 256
    probe_seed: int = 0
    junction_max_factual: int = 1
    # classification
    tabular_max_non_one_to_one: int = 1
    graph_max_mean_factual: float = 1.5

    @classmethod
    def from_dict(cls, d: dict | None) -> "FeatureConfig":
        return cls(**(d or {}))


def fk_label(fk) -> str:
    return f"{fk.child_table}.{fk.fk_name}->{fk.parent_table}"


# --------------------------------------------------------------------------
# database block


def database_features(instance: RelationalInstance) -> dict[str, Any]:
    schema = instance.schema
    by_type: Counter = Counter()
    n_factual = 0
    for t in schema.tables:
        keys = schema.key_columns(t.name)
        for c in t.columns:
            if c.name in keys:
                continue
            n_factual += 1
            by_type[c.semantic_type.value if c.semantic_type else "unknown"] += 1
    links = 0
    indexes: dict[str, dict] = {}
    for fk in schema.foreign_keys:
        if fk.parent_table not in indexes:
            indexes[fk.parent_table] = pk_index(instance, fk.parent_table)
        parent = indexes[fk.parent_table]
        cdef = schema.table(fk.child_table)
        idx = [cdef.index(c) for c in fk.child_columns]
        for row in instance.tables[fk.child_table].rows:
            key = key_tuple(row, idx)
            if key is not None and key in parent:
                links += 1
    return {
        "n_tables": len(schema.tables),
        "n_fks": len(schema.foreign_keys),
        "n_factual_columns": n_factual,
        "n_by_semantic_type": dict(sorted(by_type.items())),
        "total_rows": sum(len(instance.tables[t]) for t in schema.table_names),
        "total_pk_fk_links": links,
    }


# --------------------------------------------------------------------------
# schema block


def fk_multiplicities(instance: RelationalInstance, junction_max_factual: int = 1) -> dict[str, str]:
    """Per FK: one_to_one if the FK values are unique among non-nulls, else one_to_many.

    A table carrying >= 2 FKs and at most ``junction_max_factual`` factual
    columns is read as a junction; its FKs are many_to_many.
    """
    schema = instance.schema
    out = {}
    fk_count = Counter(fk.child_table for fk in schema.foreign_keys)
    for fk in schema.foreign_keys:
        if fk_count[fk.child_table] >= 2 and len(schema.factual_columns(fk.child_table)) <= junction_max_factual:
            out[fk_label(fk)] = MANY_TO_MANY
            continue
        cdef = schema.table(fk.child_table)
        idx = [cdef.index(c) for c in fk.child_columns]
        seen: set = set()
        unique = True
        for row in instance.tables[fk.child_table].rows:
            key = key_tuple(row, idx)
            if key is None:
                continue
            if key in seen:
                unique = False
                break
            seen.add(key)
        out[fk_label(fk)] = ONE_TO_ONE if unique else ONE_TO_MANY
    return out


def table_graph_diameter(tables: list[str], links: list[tuple[str, str]]) -> tuple[int, bool]:
    """Longest shortest path on the undirected table graph.

    Returns (diameter, disconnected). A disconnected graph reports the diameter
    of its largest component (ties: the first in table order).
    """
    adj: dict[str, set[str]] = {t: set() for t in tables}
    for a, b in links:
        if a != b:
            adj[a].add(b)
            adj[b].add(a)
    comp: dict[str, int] = {}
    comps: list[list[str]] = []
    for t in tables:
        if t in comp:
            continue
        members = [t]
        comp[t] = len(comps)
        q = deque([t])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if v not in comp:
                    comp[v] = len(comps)
                    members.append(v)
                    q.append(v)
        comps.append(members)
    if not comps:
        return 0, False
    largest = max(comps, key=len)
    diam = 0
    for s in largest:
        dist = {s: 0}
        q = deque([s])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    q.append(v)
        diam = max(diam, max(dist.values()))
    return diam, len(comps) > 1


def has_cycle(tables: list[str], links: list[tuple[str, str]]) -> bool:
    """Union-find over the undirected FK multigraph; parallel edges and self-loops are cycles."""
    parent = {t: t for t in tables}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in links:
        ra, rb = find(a), find(b)
        if ra == rb:
            return True
        parent[ra] = rb
    return False


def schema_features(instance: RelationalInstance, config: FeatureConfig | None = None) -> dict[str, Any]:
    cfg = config or FeatureConfig()
    schema = instance.schema
    mult = fk_multiplicities(instance, cfg.junction_max_factual)
    links = [(fk.child_table, fk.parent_table) for fk in schema.foreign_keys]
    diam, disconnected = table_graph_diameter(schema.table_names, links)
    counts = Counter(mult.values())
    n_tables = len(schema.tables)
    n_factual = sum(len(schema.factual_columns(t)) for t in schema.table_names)
    return {
        "n_tables": n_tables,
        "n_fks": len(schema.foreign_keys),
        "n_factual_columns": n_factual,
        "mean_factual_per_table": n_factual / n_tables if n_tables else 0.0,
        "multiplicities": mult,
        "n_one_to_one": counts[ONE_TO_ONE],
        "n_one_to_many": counts[ONE_TO_MANY],
        "n_many_to_many": counts[MANY_TO_MANY],
        "schema_diameter": diam,
        "disconnected": disconnected,
        "has_cycle": has_cycle(schema.table_names, links),
    }


# --------------------------------------------------------------------------
# graph block


def homogeneous_adjacency(graph: HeteroGraph) -> csr_matrix:
    """Undirected simple graph over all nodes; node types are laid out in order."""
    offset, off = {}, 0
    for t in graph.node_types:
        offset[t] = off
        off += graph.num_nodes[t]
    rows, cols = [], []
    for et in graph.edge_types:
        child, _, parent = et
        e = graph.edges[et]
        if len(e):
            rows.append(e[:, 0] + offset[child])
            cols.append(e[:, 1] + offset[parent])
    empty = np.zeros(0, np.int64)
    return simple_undirected(off, np.concatenate(rows) if rows else empty, np.concatenate(cols) if cols else empty)


def simple_undirected(n: int, src: np.ndarray, dst: np.ndarray) -> csr_matrix:
    keep = src != dst
    src, dst = src[keep], dst[keep]
    r = np.concatenate([src, dst])
    c = np.concatenate([dst, src])
    a = coo_matrix((np.ones(len(r), dtype=np.int8), (r, c)), shape=(n, n)).tocsr()
    a.data[:] = 1  # duplicates summed above; collapse to simple
    a.eliminate_zeros()
    return a


def eccentricities(adj: csr_matrix, nodes: np.ndarray | None = None, chunk: int = 256) -> np.ndarray:
    """Max finite BFS distance from each node in ``nodes`` (0 for an isolated node)."""
    n = adj.shape[0]
    nodes = np.arange(n) if nodes is None else np.asarray(nodes)
    out = np.zeros(len(nodes), dtype=np.int64)
    for s in range(0, len(nodes), chunk):
        idx = nodes[s : s + chunk]
        d = shortest_path(adj, method="D", directed=False, unweighted=True, indices=idx)
        d[np.isinf(d)] = 0
        out[s : s + chunk] = d.max(axis=1).astype(np.int64)
    return out


def graph_features(graph: HeteroGraph, config: FeatureConfig | None = None) -> dict[str, Any]:
    cfg = config or FeatureConfig()
    adj = homogeneous_adjacency(graph)
    return adjacency_features(adj, cfg)


def adjacency_features(adj: csr_matrix, config: FeatureConfig | None = None) -> dict[str, Any]:
    cfg = config or FeatureConfig()
    n = adj.shape[0]
    m = adj.nnz // 2
    approximate = n > cfg.exact_threshold
    if n == 0:
        ecc = np.zeros(0, dtype=np.int64)
    elif approximate:
        rng = np.random.default_rng(cfg.probe_seed)
        probes = np.sort(rng.choice(n, size=min(cfg.n_probe, n), replace=False))
        ecc = eccentricities(adj, probes)
    else:
        ecc = eccentricities(adj)
    return {
        "n_nodes": int(n),
        "n_edges": int(m),
        "avg_eccentricity": float(ecc.mean()) if len(ecc) else 0.0,
        "diameter": int(ecc.max()) if len(ecc) else 0,
        "density": 2.0 * m / (n * (n - 1)) if n > 1 else 0.0,
        "approximate": bool(approximate),
    }


# --------------------------------------------------------------------------
# task block


def task_features(instance: RelationalInstance, training_table, config: FeatureConfig | None = None) -> dict[str, Any]:
    cfg = config or FeatureConfig()
    schema = instance.schema
    target = training_table.target_table
    mult = fk_multiplicities(instance, cfg.junction_max_factual)
    touching = Counter(
        mult[fk_label(fk)] for fk in schema.foreign_keys if target in (fk.child_table, fk.parent_table)
    )
    tdef = schema.table(target)
    keys = schema.key_columns(target)
    types = Counter(
        (c.semantic_type.value if c.semantic_type else "unknown") for c in tdef.columns if c.name not in keys
    )
    split = training_table.split
    return {
        "temporal": training_table.timestamps is not None,
        "kind": training_table.kind,
        "n_samples": len(training_table),
        "n_train_samples": int((split == 0).sum()) if split is not None else len(training_table),
        "target_multiplicities": dict(sorted(touching.items())),
        "target_columns": {
            "n_rows": len(instance.tables[target]),
            "n_factual_columns": sum(types.values()),
            "n_by_semantic_type": dict(sorted(types.items())),
        },
    }


# --------------------------------------------------------------------------
# classification


def classify_from_features(schema_block: dict, config: FeatureConfig | None = None) -> dict[str, bool]:
    """Pure function of a schema block.

    tabular_like: no FKs, or at most ``tabular_max_non_one_to_one`` non-1:1
    relations and more 1:1 relations than non-1:1 ones (reducible by joining).
    graph_like: at least one FK and few factual columns per table.
    """
    cfg = config or FeatureConfig()
    n_fk = schema_block["n_fks"]
    one = schema_block["n_one_to_one"]
    other = n_fk - one
    tabular = n_fk == 0 or (other <= cfg.tabular_max_non_one_to_one and one > other)
    graph = n_fk >= 1 and schema_block["mean_factual_per_table"] <= cfg.graph_max_mean_factual
    return {"tabular_like": bool(tabular), "graph_like": bool(graph)}


def classify_database(instance: RelationalInstance, config: FeatureConfig | None = None) -> dict[str, bool]:
    return classify_from_features(schema_features(instance, config), config)


@dataclass
class FeatureReport:
    database: dict
    schema: dict
    graph: dict | None = None
    task: dict | None = None
    classification: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "database": self.database,
            "schema": self.schema,
            "task": self.task,
            "graph": self.graph,
            "classification": self.classification,
        }


def feature_report(
    instance: RelationalInstance,
    graph: HeteroGraph | None = None,
    training_table=None,
    config: FeatureConfig | None = None,
) -> FeatureReport:
    cfg = config or FeatureConfig()
    sb = schema_features(instance, cfg)
    return FeatureReport(
        database=database_features(instance),
        schema=sb,
        graph=graph_features(graph, cfg) if graph is not None else None,
        task=task_features(instance, training_table, cfg) if training_table is not None else None,
        classification=classify_from_features(sb, cfg),
    )

