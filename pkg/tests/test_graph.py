import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdlkit.errors import DanglingReference, SnapshotFormatError
from rdlkit.graph import build_graph, degree_profile, load_snapshot, snapshot_bytes
from rdlkit.ingest import RelationalInstance, Table
from rdlkit.schema import ColumnDef, ForeignKeyDef, RelationalSchema, TableDef
from rdlkit.synth import SynthSpec, generate


def single_table():
    t = TableDef("a", (ColumnDef("id", "integer"), ColumnDef("x", "real")), ("id",))
    return RelationalInstance(RelationalSchema((t,)), {"a": Table("a", ["id", "x"], [(i, 1.0) for i in range(5)])})


def a_b(fk_names=("fk",), b_rows=None):
    a = TableDef("A", (ColumnDef("id", "integer"),), ("id",))
    b = TableDef("B", (ColumnDef("id", "integer"),) + tuple(ColumnDef(n, "integer") for n in fk_names), ("id",))
    fks = tuple(ForeignKeyDef("B", (n,), "A", ("id",)) for n in fk_names)
    if b_rows is None:
        b_rows = [(i,) + tuple(i % 3 for _ in fk_names) for i in range(4)]
    return RelationalInstance(
        RelationalSchema((a, b), fks),
        {"A": Table("A", ["id"], [(i,) for i in range(3)]), "B": Table("B", ["id", *fk_names], b_rows)},
    )


def test_single_table_no_fks():
    g = build_graph(single_table())
    assert g.node_types == ["a"]
    assert g.num_nodes == {"a": 5}
    assert g.edge_types == []
    assert g.num_edges() == 0


def test_two_tables_edge_count_equals_non_null_fk_cells():
    inst = a_b()
    g = build_graph(inst)
    oracle = sum(1 for r in inst.tables["B"].rows if r[1] is not None)
    assert g.total_nodes == 7
    assert g.num_edges(("B", "fk", "A")) == oracle == 4


def test_two_fks_to_same_parent_are_two_edge_types():
    g = build_graph(a_b(("f1", "f2")))
    assert g.edge_types == [("B", "f1", "A"), ("B", "f2", "A")]


def test_node_index_is_row_ordinal():
    inst = a_b(b_rows=[(7, 2), (5, 0), (9, 1)])
    g = build_graph(inst)
    assert g.edges[("B", "fk", "A")].tolist() == [[0, 2], [1, 0], [2, 1]]


def test_self_reference():
    t = TableDef("emp", (ColumnDef("id", "integer"), ColumnDef("boss", "integer")), ("id",))
    inst = RelationalInstance(
        RelationalSchema((t,), (ForeignKeyDef("emp", ("boss",), "emp", ("id",)),)),
        {"emp": Table("emp", ["id", "boss"], [(0, None), (1, 0), (2, 0), (3, 1)])},
    )
    g = build_graph(inst)
    assert g.edge_types == [("emp", "boss", "emp")]
    assert g.num_edges() == 3


def test_dangling_skip_and_error():
    inst = a_b(b_rows=[(0, 0), (1, 99), (2, None)])
    g = build_graph(inst)
    assert g.num_edges() == 1
    assert len(g.warnings) == 1
    with pytest.raises(DanglingReference):
        build_graph(inst, dangling="error")


def test_composite_fk_gives_single_edge_type():
    p = TableDef("p", (ColumnDef("a", "integer"), ColumnDef("b", "text")), ("a", "b"))
    c = TableDef("c", (ColumnDef("id", "integer"), ColumnDef("pa", "integer"), ColumnDef("pb", "text")), ("id",))
    inst = RelationalInstance(
        RelationalSchema((p, c), (ForeignKeyDef("c", ("pa", "pb"), "p", ("a", "b")),)),
        {
            "p": Table("p", ["a", "b"], [(1, "x"), (1, "y")]),
            "c": Table("c", ["id", "pa", "pb"], [(0, 1, "y"), (1, 1, "x"), (2, 1, None)]),
        },
    )
    g = build_graph(inst)
    assert g.edge_types == [("c", "pa_pb", "p")]
    assert g.edges[("c", "pa_pb", "p")].tolist() == [[0, 1], [1, 0]]


def test_time_mapping_nan_for_untimed_and_nulls():
    inst, _ = generate(SynthSpec(n_tables=2, rows=20, temporal=True, seed=1))
    g = build_graph(inst)
    assert set(g.time) == {"t0", "t1"}
    assert not np.isnan(g.time["t0"]).any()
    inst2, _ = generate(SynthSpec(n_tables=2, rows=20, seed=1))
    assert build_graph(inst2).time == {}


# --------------------------------------------------------------------------
# degree profile


def test_degree_profile_empty():
    inst = a_b(b_rows=[])
    prof = degree_profile(build_graph(inst))
    assert prof["B.fk->A"] == {"out": {"min": 0, "mean": 0.0, "max": 0}, "in": {"min": 0, "mean": 0.0, "max": 0}}


def test_degree_profile_star():
    k = 6
    a = TableDef("A", (ColumnDef("id", "integer"),), ("id",))
    b = TableDef("B", (ColumnDef("id", "integer"), ColumnDef("fk", "integer")), ("id",))
    inst = RelationalInstance(
        RelationalSchema((a, b), (ForeignKeyDef("B", ("fk",), "A", ("id",)),)),
        {"A": Table("A", ["id"], [(0,)]), "B": Table("B", ["id", "fk"], [(i, 0) for i in range(k)])},
    )
    prof = degree_profile(build_graph(inst))["B.fk->A"]
    assert prof["in"] == {"min": k, "mean": float(k), "max": k}


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_degree_profile_matches_recount(seed):
    inst, _ = generate(SynthSpec(n_tables=4, rows=30, topology="random_dag", null_fk_rate=0.1, dangling=3, seed=seed))
    g = build_graph(inst)
    prof = degree_profile(g)
    for et in g.edge_types:
        child, fk, parent = et
        ins = [0] * g.num_nodes[parent]
        for _, p in g.edges[et].tolist():
            ins[p] += 1
        assert prof[f"{child}.{fk}->{parent}"]["in"]["max"] == max(ins)
        assert prof[f"{child}.{fk}->{parent}"]["in"]["mean"] == pytest.approx(sum(ins) / len(ins), abs=1e-12)


# --------------------------------------------------------------------------
# conservation


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_node_and_edge_conservation(seed):
    spec = SynthSpec(n_tables=5, rows=25, topology="random_dag", null_fk_rate=0.15, dangling=4,
                     cycle_edge=seed % 2 == 0, seed=seed)
    inst, ledger = generate(spec)
    g = build_graph(inst)
    assert g.total_nodes == sum(inst.row_counts().values())
    for fk, rec in zip(inst.schema.foreign_keys, ledger["foreign_keys"]):
        assert g.num_edges(fk.edge_type) == rec["non_null"] - rec["dangling"]


# --------------------------------------------------------------------------
# snapshot


def test_snapshot_round_trip_and_layout():
    inst, _ = generate(SynthSpec(n_tables=3, rows=15, temporal=True, null_fk_rate=0.2, seed=4))
    g = build_graph(inst)
    raw = snapshot_bytes(g)
    assert raw[:8] == b"RDLGRAPH"
    assert int.from_bytes(raw[8:12], "little") == 1
    back = load_snapshot(raw)
    assert back.node_types == g.node_types
    assert back.edge_types == g.edge_types
    assert back.num_nodes == g.num_nodes
    for et in g.edge_types:
        assert sorted(map(tuple, back.edges[et].tolist())) == sorted(map(tuple, g.edges[et].tolist()))
    for t in g.time:
        np.testing.assert_array_equal(back.time[t], g.time[t])
    assert snapshot_bytes(back) == raw


def test_snapshot_rejects_garbage():
    with pytest.raises(SnapshotFormatError):
        load_snapshot(b"NOTAGRAPH")
    raw = snapshot_bytes(build_graph(a_b()))
    with pytest.raises(SnapshotFormatError):
        load_snapshot(raw[:-3])
