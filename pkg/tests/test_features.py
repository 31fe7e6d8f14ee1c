import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import (
    GRAPH_ROWS,
    TABULAR_ROWS,
    accidents_instance,
    build_instance,
    density_oracle,
    eccentricity_oracle,
    mondial_instance,
    shaped_instance,
)
from rdlkit.features import (
    MANY_TO_MANY,
    ONE_TO_MANY,
    ONE_TO_ONE,
    FeatureConfig,
    adjacency_features,
    classify_database,
    classify_from_features,
    database_features,
    feature_report,
    fk_multiplicities,
    graph_features,
    schema_features,
    simple_undirected,
    task_features,
)
from rdlkit.graph import build_graph
from rdlkit.synth import SynthSpec, generate
from rdlkit.tasks import TaskSpec, prepare_task


def adj_of(n, edges):
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return simple_undirected(n, e[:, 0], e[:, 1])


def test_path_of_three():
    f = adjacency_features(adj_of(3, [(0, 1), (1, 2)]))
    assert f["diameter"] == 2
    assert f["avg_eccentricity"] == pytest.approx(5 / 3)
    assert f["density"] == pytest.approx(2 / 3)


def test_complete_graph_k4():
    edges = [(a, b) for a in range(4) for b in range(a + 1, 4)]
    f = adjacency_features(adj_of(4, edges))
    assert f["diameter"] == 1
    assert f["avg_eccentricity"] == 1.0
    assert f["density"] == 1.0


def test_isolated_nodes_and_empty():
    f = adjacency_features(adj_of(3, []))
    assert (f["diameter"], f["avg_eccentricity"], f["density"]) == (0, 0.0, 0.0)
    assert adjacency_features(adj_of(0, []))["n_nodes"] == 0


def test_parallel_edges_and_self_loops_collapse():
    f = adjacency_features(adj_of(2, [(0, 1), (1, 0), (0, 1), (1, 1)]))
    assert f["n_edges"] == 1
    assert f["density"] == 1.0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 60), st.floats(0.0, 0.3), st.integers(0, 10_000))
def test_graph_statistics_match_floyd_warshall(n, p, seed):
    rng = np.random.default_rng(seed)
    edges = [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < p]
    f = adjacency_features(adj_of(n, edges))
    ecc = eccentricity_oracle(n, edges)
    assert f["diameter"] == int(ecc.max())
    assert f["avg_eccentricity"] == pytest.approx(float(ecc.mean()), abs=1e-12)
    assert f["density"] == pytest.approx(density_oracle(n, edges), abs=1e-15)


def test_probe_mode_above_threshold():
    n = 40
    edges = [(i, i + 1) for i in range(n - 1)]
    f = adjacency_features(adj_of(n, edges), FeatureConfig(exact_threshold=10, n_probe=40))
    assert f["approximate"]
    # probing every node recovers the exact value
    assert f["diameter"] == n - 1


def test_graph_features_on_hetero_graph():
    inst = build_instance(2, [(1, 0, False)], [1, 1], rows=6)
    g = build_graph(inst)
    # t1 row r -> t0 row r % 3; t0 rows 3..5 isolated
    edges = [(6 + r, r % 3) for r in range(6)]
    f = graph_features(g)
    ecc = eccentricity_oracle(12, edges)
    assert f["diameter"] == int(ecc.max()) == 2
    assert f["avg_eccentricity"] == pytest.approx(ecc.mean())


# --------------------------------------------------------------------------
# schema block


def test_single_table_schema():
    inst = build_instance(1, [], [3])
    sf = schema_features(inst)
    assert sf["schema_diameter"] == 0
    assert not sf["has_cycle"]
    assert classify_database(inst)["tabular_like"]
    assert not classify_database(inst)["graph_like"]


def test_accidents_shape():
    sf = schema_features(accidents_instance())
    assert (sf["n_tables"], sf["n_fks"], sf["n_factual_columns"]) == (3, 3, 38)
    assert sf["schema_diameter"] == 1
    assert sf["has_cycle"]


def test_mondial_shape():
    sf = schema_features(mondial_instance())
    assert (sf["n_tables"], sf["n_fks"], sf["n_factual_columns"]) == (33, 62, 125)
    assert sf["schema_diameter"] == 5
    assert sf["has_cycle"]


def test_chain_has_no_cycle_and_parallel_fk_is_one():
    chain = build_instance(4, [(1, 0, False), (2, 1, False), (3, 2, False)], [2, 2, 2, 2])
    sf = schema_features(chain)
    assert sf["schema_diameter"] == 3 and not sf["has_cycle"]
    parallel = build_instance(2, [(1, 0, False), (1, 0, False)], [2, 3])
    assert schema_features(parallel)["has_cycle"]


@pytest.mark.parametrize("row", TABULAR_ROWS, ids=lambda r: r.name)
def test_tabular_collection_fixture(row):
    inst = shaped_instance(row)
    sf = schema_features(inst)
    assert (sf["n_tables"], sf["n_fks"], sf["n_factual_columns"]) == (row.n_tables, row.n_fks, row.n_factual)
    assert sf["n_one_to_one"] == row.n_one_to_one
    assert sf["n_one_to_many"] + sf["n_many_to_many"] == row.n_many_to_one
    cls = classify_database(inst)
    assert cls["tabular_like"]
    assert cls["graph_like"] == (row.name == "pima")


@pytest.mark.parametrize("row", GRAPH_ROWS, ids=lambda r: r.name)
def test_graph_collection_fixture(row):
    inst = shaped_instance(row)
    sf = schema_features(inst)
    assert (sf["n_tables"], sf["n_fks"], sf["n_factual_columns"]) == (row.n_tables, row.n_fks, row.n_factual)
    assert sf["n_one_to_one"] == row.n_one_to_one
    cls = classify_database(inst)
    assert cls["graph_like"]
    assert cls["tabular_like"] == (row.name == "pima")


def test_duplicating_an_fk_value_flips_one_to_one():
    inst = build_instance(2, [(1, 0, True)], [2, 2])
    assert fk_multiplicities(inst) == {"t1.fk0->t0": ONE_TO_ONE}
    rows = inst.tables["t1"].rows
    rows[1] = (rows[1][0], rows[0][1]) + rows[1][2:]
    assert fk_multiplicities(inst) == {"t1.fk0->t0": ONE_TO_MANY}


def test_nulls_do_not_break_one_to_one():
    inst = build_instance(2, [(1, 0, True)], [1, 1])
    rows = inst.tables["t1"].rows
    rows[0] = (rows[0][0], None, rows[0][2])
    rows[1] = (rows[1][0], None, rows[1][2])
    assert fk_multiplicities(inst)["t1.fk0->t0"] == ONE_TO_ONE


def test_junction_fks_are_many_to_many():
    inst = build_instance(3, [(2, 0, False), (2, 1, False)], [2, 2, 0])
    assert set(fk_multiplicities(inst).values()) == {MANY_TO_MANY}
    # enough attributes and it is an ordinary table
    inst = build_instance(3, [(2, 0, False), (2, 1, False)], [2, 2, 2])
    assert set(fk_multiplicities(inst).values()) == {ONE_TO_MANY}


block = st.fixed_dictionaries(
    {
        "n_fks": st.integers(0, 40),
        "n_one_to_one": st.integers(0, 40),
        "mean_factual_per_table": st.floats(0, 50),
    }
).filter(lambda b: b["n_one_to_one"] <= b["n_fks"])


@given(block)
def test_classification_is_a_pure_function(b):
    before = dict(b)
    first = classify_from_features(b)
    assert b == before
    assert classify_from_features(dict(b)) == first
    if b["n_fks"] == 0:
        assert first == {"tabular_like": True, "graph_like": False}


# --------------------------------------------------------------------------
# database and task blocks


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_database_features_match_ledger(seed):
    spec = SynthSpec(n_tables=4, rows=20, topology="random_dag", null_fk_rate=0.1, dangling=2, seed=seed,
                     columns={"numerical": 2, "categorical": 1, "text": 1})
    inst, ledger = generate(spec)
    db = database_features(inst)
    assert db["n_tables"] == 4
    assert db["n_fks"] == len(ledger["foreign_keys"])
    assert db["n_factual_columns"] == ledger["n_factual_columns"]
    assert db["total_rows"] == sum(ledger["rows"].values())
    assert db["total_pk_fk_links"] == sum(f["edges"] for f in ledger["foreign_keys"])
    assert db["n_by_semantic_type"] == {"categorical": 4, "numerical": 8, "text": 4}


def test_task_block_and_report():
    inst, _ = generate(SynthSpec(n_tables=2, rows=40, signal="target_one_hop", seed=1))
    mod, tt = prepare_task(inst, TaskSpec("binary_classification", "t1", "label"))
    tf = task_features(mod, tt)
    assert tf["n_samples"] == 40
    assert tf["n_train_samples"] == 28
    assert tf["target_multiplicities"] == {ONE_TO_MANY: 1}
    assert not tf["temporal"]
    rep = feature_report(mod, build_graph(mod), tt).to_dict()
    assert set(rep) == {"database", "schema", "task", "graph", "classification"}
    assert rep["graph"]["n_nodes"] == 80
