"""Static and temporal L-hop neighborhood sampling.

Each seed grows its own component: a node reached from two different seeds is
materialized twice, once per anchor. This keeps the temporal constraint exact
(a node visible to one seed can never leak into another seed's computation)
and makes every per-seed ball independent of the batch it was sampled in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import UnknownSeed
from .graph import Direction, EdgeType, HeteroGraph


@dataclass
class SampledSubgraph:
    seed_type: str
    seeds: np.ndarray  # global ids of the seeds, in batch order
    seed_time: np.ndarray | None  # per seed; None for static sampling
    nodes: dict[str, np.ndarray]  # local -> global id per node type
    anchor: dict[str, np.ndarray]  # local -> seed position
    hop: dict[str, np.ndarray]
    edges: dict[EdgeType, np.ndarray]  # (E, 2) local child, local parent
    _lookup: dict = field(default_factory=dict, repr=False)

    @property
    def seed_local(self) -> np.ndarray:
        """Local indices of the seeds inside ``nodes[seed_type]`` (seed i -> i)."""
        return np.arange(len(self.seeds), dtype=np.int64)

    def within_hops(self, ntype: str, k: int) -> int:
        """Number of ``ntype`` nodes at hop <= k. Nodes are stored in hop order,
        so these are exactly the first rows of the type's node list."""
        return int(np.searchsorted(self.hop.get(ntype, np.zeros(0, np.int64)), k, side="right"))

    def num_nodes(self, ntype: str | None = None) -> int:
        if ntype is not None:
            return len(self.nodes.get(ntype, ()))
        return sum(len(v) for v in self.nodes.values())

    def local_index(self, ntype: str, gid: int, anchor: int = 0) -> int | None:
        if ntype not in self._lookup:
            self._lookup[ntype] = {
                (int(a), int(g)): i for i, (a, g) in enumerate(zip(self.anchor[ntype], self.nodes[ntype]))
            }
        return self._lookup[ntype].get((anchor, gid))

    def component(self, anchor: int) -> dict[str, set[int]]:
        """Global node ids per type sampled for one seed."""
        return {t: set(int(g) for g in self.nodes[t][self.anchor[t] == anchor]) for t in self.nodes}

    def to_dict(self) -> dict:
        return {
            "seed_type": self.seed_type,
            "seeds": self.seeds.tolist(),
            "seed_time": None if self.seed_time is None else self.seed_time.tolist(),
            "nodes": {
                t: {"global": self.nodes[t].tolist(), "anchor": self.anchor[t].tolist(), "hop": self.hop[t].tolist()}
                for t in self.nodes
            },
            "edges": {"|".join(et): e.tolist() for et, e in self.edges.items()},
        }


def _normalize_fanout(fanout_per_hop: Sequence[int | float | None]) -> list[float]:
    caps = []
    for c in fanout_per_hop:
        if c is None or (isinstance(c, float) and math.isinf(c)):
            caps.append(math.inf)
        else:
            if int(c) < 1:
                raise ValueError(f"fanout caps must be >= 1, got {c}")
            caps.append(int(c))
    return caps


def _sample(
    graph: HeteroGraph,
    seed_type: str,
    seeds: Sequence[int],
    fanout_per_hop: Sequence[int | float | None],
    rng_seed,
    seed_time: np.ndarray | None,
    strict: bool,
) -> SampledSubgraph:
    seeds = np.asarray(seeds, dtype=np.int64).reshape(-1)
    if seed_type not in graph.num_nodes:
        raise UnknownSeed(f"unknown node type {seed_type!r}")
    n_seed = graph.num_nodes[seed_type]
    if len(seeds) and (seeds.min() < 0 or seeds.max() >= n_seed):
        bad = seeds[(seeds < 0) | (seeds >= n_seed)][0]
        raise UnknownSeed(f"seed {int(bad)} out of range for {seed_type!r} ({n_seed} nodes)")
    caps = _normalize_fanout(fanout_per_hop)
    rng = np.random.default_rng(rng_seed)

    types = graph.node_types
    nodes = {t: [np.zeros(0, np.int64)] for t in types}
    anchors = {t: [np.zeros(0, np.int64)] for t in types}
    hops = {t: [np.zeros(0, np.int64)] for t in types}
    count = {t: 0 for t in types}
    # per type: sorted composite keys (anchor * n + gid) and matching local ids
    key_sorted = {t: np.zeros(0, np.int64) for t in types}
    key_local = {t: np.zeros(0, np.int64) for t in types}
    edge_parts: dict[EdgeType, list[np.ndarray]] = {et: [] for et in graph.edge_types}

    nodes[seed_type].append(seeds.copy())
    anchors[seed_type].append(np.arange(len(seeds), dtype=np.int64))
    hops[seed_type].append(np.zeros(len(seeds), dtype=np.int64))
    count[seed_type] = len(seeds)
    stride = {t: max(graph.num_nodes[t], 1) for t in types}
    k0 = np.arange(len(seeds), dtype=np.int64) * stride[seed_type] + seeds
    o = np.argsort(k0, kind="stable")
    key_sorted[seed_type], key_local[seed_type] = k0[o], np.arange(len(seeds), dtype=np.int64)[o]

    frontier = {t: np.zeros(0, np.int64) for t in types}
    frontier[seed_type] = np.arange(len(seeds), dtype=np.int64)
    all_nodes = {t: np.concatenate(nodes[t]) for t in types}
    all_anchor = {t: np.concatenate(anchors[t]) for t in types}

    for hop, cap in enumerate(caps, start=1):
        nxt = {t: [] for t in types}
        for et, direction, src_t, dst_t in graph.relations():
            fr = frontier[src_t]
            if len(fr) == 0:
                continue
            indptr, indices = graph.csr(et, direction)
            gids = all_nodes[src_t][fr]
            anc = all_anchor[src_t][fr]
            starts, ends = indptr[gids], indptr[gids + 1]
            deg = ends - starts
            total = int(deg.sum())
            if total == 0:
                continue
            owner = np.repeat(np.arange(len(fr)), deg)
            offs = np.arange(total) - np.repeat(np.cumsum(deg) - deg, deg)
            cand = indices[np.repeat(starts, deg) + offs]
            if seed_time is not None and dst_t in graph.time:
                tu = graph.time[dst_t][cand]
                limit = seed_time[anc[owner]]
                ok = np.isnan(tu) | ((tu < limit) if strict else (tu <= limit))
                owner, cand = owner[ok], cand[ok]
            if len(cand) == 0:
                continue
            if not math.isinf(cap):
                per = np.bincount(owner, minlength=len(fr))
                over = np.flatnonzero(per > cap)
                if len(over):
                    keep = np.ones(len(cand), dtype=bool)
                    bounds = np.concatenate([[0], np.cumsum(per)])
                    for s in over:
                        lo, hi = bounds[s], bounds[s + 1]
                        chosen = rng.permutation(hi - lo)[:cap]
                        mask = np.zeros(hi - lo, dtype=bool)
                        mask[chosen] = True
                        keep[lo:hi] = mask
                    owner, cand = owner[keep], cand[keep]

            src_local = fr[owner]
            cand_anchor = anc[owner]
            keys = cand_anchor * stride[dst_t] + cand
            ks, kl = key_sorted[dst_t], key_local[dst_t]
            dst_local = np.empty(len(keys), dtype=np.int64)
            if len(ks):
                pos = np.minimum(np.searchsorted(ks, keys), len(ks) - 1)
                found = ks[pos] == keys
                dst_local[found] = kl[pos[found]]
            else:
                found = np.zeros(len(keys), dtype=bool)
            if (~found).any():
                new_keys = keys[~found]
                uniq, first = np.unique(new_keys, return_index=True)
                order = np.argsort(first, kind="stable")
                uniq = uniq[order]
                new_ids = count[dst_t] + np.arange(len(uniq), dtype=np.int64)
                count[dst_t] += len(uniq)
                lookup_sorted = np.argsort(uniq, kind="stable")
                dst_local[~found] = new_ids[lookup_sorted][np.searchsorted(uniq[lookup_sorted], new_keys)]
                nodes[dst_t].append(uniq % stride[dst_t])
                anchors[dst_t].append(uniq // stride[dst_t])
                hops[dst_t].append(np.full(len(uniq), hop, dtype=np.int64))
                nxt[dst_t].append(new_ids)
                merged_k = np.concatenate([ks, uniq])
                merged_l = np.concatenate([kl, new_ids])
                o = np.argsort(merged_k, kind="stable")
                key_sorted[dst_t], key_local[dst_t] = merged_k[o], merged_l[o]
                all_nodes[dst_t] = np.concatenate(nodes[dst_t])
                all_anchor[dst_t] = np.concatenate(anchors[dst_t])
            if direction == "to_parent":
                edge_parts[et].append(np.stack([src_local, dst_local], axis=1))
            else:
                edge_parts[et].append(np.stack([dst_local, src_local], axis=1))
        frontier = {t: (np.concatenate(nxt[t]) if nxt[t] else np.zeros(0, np.int64)) for t in types}

    edges = {}
    for et in graph.edge_types:
        if edge_parts[et]:
            e = np.concatenate(edge_parts[et])
            _, first = np.unique(e, axis=0, return_index=True)
            edges[et] = e[np.sort(first)]
        else:
            edges[et] = np.zeros((0, 2), dtype=np.int64)
    return SampledSubgraph(
        seed_type=seed_type,
        seeds=seeds,
        seed_time=None if seed_time is None else np.asarray(seed_time, dtype=np.float64),
        nodes={t: np.concatenate(nodes[t]) for t in types},
        anchor={t: np.concatenate(anchors[t]) for t in types},
        hop={t: np.concatenate(hops[t]) for t in types},
        edges=edges,
    )


def sample_static(
    graph: HeteroGraph,
    seed_type: str,
    seeds: Sequence[int],
    fanout_per_hop: Sequence[int | float | None],
    rng_seed=0,
) -> SampledSubgraph:
    """BFS expansion for len(fanout_per_hop) hops.

    Per node, per hop and per relation direction at most ``cap`` neighbors are
    kept, chosen uniformly without replacement from a seeded shuffle. A cap of
    None or inf keeps all neighbors.
    """
    return _sample(graph, seed_type, seeds, fanout_per_hop, rng_seed, None, False)


def sample_temporal(
    graph: HeteroGraph,
    seed_type: str,
    seeds: Sequence[int],
    seed_times: Sequence[float],
    fanout_per_hop: Sequence[int | float | None],
    rng_seed=0,
    strict: bool = False,
) -> SampledSubgraph:
    """Like sample_static but a neighbor u is eligible only if tau(u) is undefined
    or tau(u) <= the anchor seed's time (< when ``strict``).
    """
    t = np.asarray(seed_times, dtype=np.float64).reshape(-1)
    if len(t) != len(np.asarray(seeds).reshape(-1)):
        raise ValueError("need one timestamp per seed")
    return _sample(graph, seed_type, seeds, fanout_per_hop, rng_seed, t, strict)
