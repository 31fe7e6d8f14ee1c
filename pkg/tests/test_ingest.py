import csv
import sqlite3

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdlkit.errors import DescriptorParseError, FileNotDatabase, MissingTableFile
from rdlkit.ingest import (
    RelationalInstance,
    Table,
    annotate_semantic_types,
    check_referential_integrity,
    coerce_cell,
    load_csv_dataset,
    load_sqlite,
    write_csv_dataset,
)
from rdlkit.schema import ColumnDef, ForeignKeyDef, RelationalSchema, SemanticType, TableDef
from rdlkit.synth import SynthSpec, generate


def parent_child(parent_rows, child_rows):
    parent = TableDef("parent", (ColumnDef("id", "integer"), ColumnDef("name", "text")), ("id",))
    child = TableDef(
        "child",
        (ColumnDef("id", "integer"), ColumnDef("pid", "integer"), ColumnDef("score", "real")),
        ("id",),
    )
    schema = RelationalSchema((parent, child), (ForeignKeyDef("child", ("pid",), "parent", ("id",)),))
    return RelationalInstance(
        schema,
        {
            "parent": Table("parent", ["id", "name"], parent_rows),
            "child": Table("child", ["id", "pid", "score"], child_rows),
        },
    )


def small():
    return parent_child(
        [(1, "a"), (2, "b"), (3, None)],
        [(10, 1, 0.5), (11, 1, None), (12, 2, 1.25), (13, None, -3.0)],
    )


def test_csv_row_counts(tmp_path):
    write_csv_dataset(small(), tmp_path)
    inst = load_csv_dataset(tmp_path)
    assert inst.row_counts() == {"parent": 3, "child": 4}


def test_missing_table_file(tmp_path):
    write_csv_dataset(small(), tmp_path)
    (tmp_path / "child.csv").unlink()
    with pytest.raises(MissingTableFile):
        load_csv_dataset(tmp_path)


def test_missing_descriptor(tmp_path):
    with pytest.raises(DescriptorParseError):
        load_csv_dataset(tmp_path)


def test_unparseable_cells_become_null_with_warnings(tmp_path):
    write_csv_dataset(small(), tmp_path)
    with open(tmp_path / "child.csv", "w", newline="") as fh:
        fh.write("id,pid,score\n10,1,0.5\nabc,1,x\n12,2,1.0\n13,zz,2\n")
    inst = load_csv_dataset(tmp_path)
    # oracle: scan the raw file and count cells that fail int/float parsing
    kinds = {"id": int, "pid": int, "score": float}
    bad = 0
    with open(tmp_path / "child.csv", newline="") as fh:
        for rec in csv.DictReader(fh):
            for k, f in kinds.items():
                if rec[k] == "":
                    continue
                try:
                    f(rec[k])
                except ValueError:
                    bad += 1
    assert bad == 3
    assert len(inst.warnings) == bad
    assert inst.tables["child"].rows[1] == (None, 1, None)


def test_csv_quoting_and_empty_is_null(tmp_path):
    inst = parent_child([(1, 'has "quotes", commas'), (2, "")], [])
    write_csv_dataset(inst, tmp_path)
    back = load_csv_dataset(tmp_path)
    assert back.tables["parent"].rows == [(1, 'has "quotes", commas'), (2, None)]


@pytest.mark.parametrize(
    "raw,declared,cell",
    [
        ("7", "integer", 7),
        ("1.5", "real", 1.5),
        ("yes", "boolean", True),
        ("0", "boolean", False),
        ("1970-01-02", "datetime", 86400),
        ("", "text", None),
    ],
)
def test_coerce_cell(raw, declared, cell):
    assert coerce_cell(raw, declared) == (cell, True)


# NUL cannot be stored in a CSV field
text_cell = st.one_of(
    st.none(),
    st.text(alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\x00"), min_size=1, max_size=8),
)
real_cell = st.one_of(st.none(), st.floats(allow_nan=False, allow_infinity=False))


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(text_cell, real_cell, st.one_of(st.none(), st.booleans()), st.one_of(st.none(), st.integers(0, 2**33))),
             max_size=15)
)
def test_csv_round_trip_is_cell_identical(tmp_path_factory, rows):
    d = tmp_path_factory.mktemp("rt")
    cols = (
        ColumnDef("id", "integer"),
        ColumnDef("s", "text"),
        ColumnDef("x", "real"),
        ColumnDef("b", "boolean"),
        ColumnDef("t", "datetime"),
    )
    # text cells that read back as empty would turn into null; keep them non-empty
    data = [(i,) + r for i, r in enumerate(rows)]
    inst = RelationalInstance(RelationalSchema((TableDef("t", cols, ("id",)),)), {"t": Table("t", [c.name for c in cols], data)})
    write_csv_dataset(inst, d)
    back = load_csv_dataset(d)
    assert back.tables["t"].rows == data
    assert back.schema == inst.schema


def test_synth_csv_round_trip(tmp_path):
    spec = SynthSpec(n_tables=4, rows=40, topology="random_dag", temporal=True, null_rate=0.1,
                     columns={"numerical": 2, "categorical": 1, "multi_categorical": 1, "text": 1, "temporal": 1})
    inst, _ = generate(spec)
    write_csv_dataset(inst, tmp_path)
    back = load_csv_dataset(tmp_path)
    for t in inst.schema.table_names:
        assert back.tables[t].rows == inst.tables[t].rows


# --------------------------------------------------------------------------
# integrity


def test_clean_fks_have_no_dangling():
    rep = check_referential_integrity(small())
    assert rep.dangling == 0
    assert rep.foreign_keys[0].null == 1
    assert rep.ok


def test_one_dangling_reference():
    inst = parent_child([(1, "a")], [(10, 1, 0.0), (11, 5, 0.0)])
    assert check_referential_integrity(inst).dangling == 1


def test_planted_dangling_matches_nested_loop_oracle():
    spec = SynthSpec(n_tables=3, rows=1000, table_rows={"t0": 50}, dangling=37, seed=3)
    inst, ledger = generate(spec)
    oracle = 0
    for fk in inst.schema.foreign_keys:
        child = inst.tables[fk.child_table]
        parent = inst.tables[fk.parent_table]
        j = child.columns.index(fk.child_columns[0])
        k = parent.columns.index(fk.parent_columns[0])
        for row in child.rows:
            if row[j] is None:
                continue
            if not any(prow[k] == row[j] for prow in parent.rows):
                oracle += 1
    assert oracle == 37
    assert check_referential_integrity(inst).dangling == 37
    assert ledger["dangling"] == 37


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=2, max_size=30, unique=True), st.data())
def test_duplicate_pk_always_detected(keys, data):
    dup_of = data.draw(st.sampled_from(keys))
    rows = [(k, "x") for k in keys] + [(dup_of, "y")]
    inst = parent_child(rows, [])
    rep = check_referential_integrity(inst)
    assert rep.duplicate_pk_rows["parent"] == 1
    assert not rep.ok


# --------------------------------------------------------------------------
# sqlite


def make_db(path, script):
    con = sqlite3.connect(path)
    con.executescript(script)
    con.commit()
    con.close()


def test_sqlite_two_tables_one_fk(tmp_path):
    db = tmp_path / "x.db"
    make_db(
        db,
        """
        CREATE TABLE parent (id INTEGER PRIMARY KEY, name TEXT);
        CREATE TABLE child (id INTEGER PRIMARY KEY, pid INTEGER REFERENCES parent(id), w REAL,
                            at DATETIME);
        INSERT INTO parent VALUES (1, 'a'), (2, 'b');
        INSERT INTO child VALUES (1, 1, 0.5, '2020-01-01'), (2, 2, NULL, NULL), (3, 1, 2.0, '2020-01-02');
        """,
    )
    inst = load_sqlite(db)
    assert inst.schema.foreign_keys == (ForeignKeyDef("child", ("pid",), "parent", ("id",)),)
    assert inst.row_counts() == {"parent": 2, "child": 3}
    assert inst.tables["child"].rows[0] == (1, 1, 0.5, 1577836800)


def test_sqlite_empty_file(tmp_path):
    db = tmp_path / "empty.db"
    make_db(db, "")
    inst = load_sqlite(db)
    assert inst.schema.tables == ()


def test_sqlite_composite_pk(tmp_path):
    db = tmp_path / "c.db"
    make_db(db, "CREATE TABLE m (a INTEGER, b TEXT, v REAL, PRIMARY KEY (a, b));")
    assert load_sqlite(db).schema.table("m").primary_key == ("a", "b")


def test_sqlite_rejects_non_database(tmp_path):
    p = tmp_path / "not.db"
    p.write_text("hello, this is not sqlite at all")
    with pytest.raises(FileNotDatabase):
        load_sqlite(p)


def test_annotate_keeps_declared_types_and_fills_rest():
    inst = small()
    out = annotate_semantic_types(inst)
    child = out.schema.table("child")
    assert child.column("id").semantic_type == SemanticType.PRIMARY_KEY
    assert child.column("pid").semantic_type == SemanticType.FOREIGN_KEY
    assert child.column("score").semantic_type == SemanticType.NUMERICAL
