"""Shared fixture builders and brute-force oracles for the test suite."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from rdlkit.ingest import RelationalInstance, Table
from rdlkit.schema import ColumnDef, ForeignKeyDef, RelationalSchema, SemanticType, TableDef

ROWS = 10


@dataclass
class ShapeRow:
    """One row of a published schema-statistics table."""

    name: str
    n_tables: int
    n_fks: int
    n_factual: int
    n_one_to_one: int
    n_many_to_one: int


# Tabular-like collection: (tables, FKs, factual columns, 1:1, N:1)
TABULAR_ROWS = [
    ShapeRow("atherosclerosis", 4, 3, 191, 2, 1),
    ShapeRow("bupa", 9, 8, 16, 7, 1),
    ShapeRow("cde", 3, 2, 87, 2, 0),
    ShapeRow("pima", 9, 8, 9, 8, 0),
    ShapeRow("satellite", 34, 34, 67, 34, 0),
    ShapeRow("voc", 8, 7, 89, 6, 1),
]

# Graph-like collection
GRAPH_ROWS = [
    ShapeRow("carcinogenesis", 6, 13, 4, 2, 11),
    ShapeRow("cora", 3, 3, 2, 0, 3),
    ShapeRow("mesh", 29, 33, 37, 24, 9),
    ShapeRow("pima", 9, 8, 9, 8, 0),
    ShapeRow("toxicology", 4, 5, 3, 0, 5),
]


def build_instance(
    n_tables: int,
    links: list[tuple[int, int, bool]],
    factual: list[int],
    rows: int = ROWS,
) -> RelationalInstance:
    """Tables t0..t{n-1}; ``links`` are (child, parent, one_to_one).

    One-to-one FKs point row i at parent row i; the others point at i % 3 so
    their values repeat. Factual columns are numerical ``f<k>``.
    """
    tdefs, tables, fks = [], {}, []
    fk_cols: dict[int, list[tuple[str, bool]]] = {i: [] for i in range(n_tables)}
    for k, (c, p, one) in enumerate(links):
        name = f"fk{k}"
        fk_cols[c].append((name, one))
        fks.append(ForeignKeyDef(f"t{c}", (name,), f"t{p}", ("id",)))
    for i in range(n_tables):
        cols = [ColumnDef("id", "integer", SemanticType.PRIMARY_KEY)]
        cols += [ColumnDef(n, "integer", SemanticType.FOREIGN_KEY) for n, _ in fk_cols[i]]
        cols += [ColumnDef(f"f{k}", "real", SemanticType.NUMERICAL) for k in range(factual[i])]
        data = []
        for r in range(rows):
            row = [r]
            row += [r if one else r % 3 for _, one in fk_cols[i]]
            row += [float(r * (k + 1)) for k in range(factual[i])]
            data.append(tuple(row))
        tdefs.append(TableDef(f"t{i}", tuple(cols), ("id",)))
        tables[f"t{i}"] = Table(f"t{i}", [c.name for c in cols], data)
    return RelationalInstance(RelationalSchema(tuple(tdefs), tuple(fks)), tables)


def shaped_instance(row: ShapeRow) -> RelationalInstance:
    """An instance matching a statistics row.

    FK k runs from table 1 + k mod (n-1) to table 0, so every non-root table
    has at least one FK. Multi-FK tables hosting a one-to-one FK get two
    factual columns first so they are not read as junctions; then every table
    gets one, then the other multi-FK tables a second, as the budget allows.
    """
    n = row.n_tables
    children = [1 + k % (n - 1) for k in range(row.n_fks)]
    links = [(c, 0, k < row.n_one_to_one) for k, c in enumerate(children)]
    per_child = np.bincount(children, minlength=n)
    hosts = {c for c, _, one in links if one}
    factual = [0] * n
    budget = row.n_factual

    def give(i, upto):
        nonlocal budget
        while budget and factual[i] < upto:
            factual[i] += 1
            budget -= 1

    for i in range(n):
        if per_child[i] >= 2 and i in hosts:
            give(i, 2)
    for i in range(n):
        give(i, 1)
    for i in range(n):
        if per_child[i] >= 2:
            give(i, 2)
    factual[0] += budget
    return build_instance(n, links, factual)


def accidents_instance() -> RelationalInstance:
    """Three tables in a triangle, 38 factual columns."""
    links = [(1, 0, False), (2, 0, False), (2, 1, False)]
    return build_instance(3, links, [20, 10, 8])


def mondial_instance() -> RelationalInstance:
    """33 tables, 62 FKs, 125 factual columns.

    A six-table spine t0..t5; every other table links to t2 and t3; three
    extra parallel t2-t3 links.
    """
    links = [(i + 1, i, False) for i in range(5)]
    for i in range(6, 33):
        links += [(i, 2, False), (i, 3, False)]
    links += [(3, 2, False)] * 3
    factual = [3] * 33
    factual[0] += 125 - sum(factual)
    return build_instance(33, links, factual)


# --------------------------------------------------------------------------
# graph oracles


def floyd_warshall(n: int, edges) -> np.ndarray:
    inf = float("inf")
    d = np.full((n, n), inf)
    np.fill_diagonal(d, 0)
    for a, b in edges:
        if a != b:
            d[a, b] = d[b, a] = 1
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


def eccentricity_oracle(n: int, edges) -> np.ndarray:
    """Per node: max finite distance (unreachable nodes ignored)."""
    d = floyd_warshall(n, edges)
    d[np.isinf(d)] = 0
    return d.max(axis=1)


def density_oracle(n: int, edges) -> float:
    simple = {(min(a, b), max(a, b)) for a, b in edges if a != b}
    return 2 * len(simple) / (n * (n - 1)) if n > 1 else 0.0


def bfs_ball(adj: dict, start, hops: int, allowed=lambda node: True) -> set:
    """All nodes within ``hops`` steps of ``start`` using only allowed nodes."""
    seen = {start}
    q = deque([(start, 0)])
    while q:
        u, h = q.popleft()
        if h == hops:
            continue
        for v in adj.get(u, ()):
            if v not in seen and allowed(v):
                seen.add(v)
                q.append((v, h + 1))
    return seen


def typed_adjacency(graph) -> dict:
    """(type, id) -> neighbors over all edge types, both directions."""
    adj: dict = {}
    for et in graph.edge_types:
        child, _, parent = et
        for c, p in graph.edges[et]:
            adj.setdefault((child, int(c)), []).append((parent, int(p)))
            adj.setdefault((parent, int(p)), []).append((child, int(c)))
    return adj
