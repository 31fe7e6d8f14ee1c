import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdlkit.errors import EmptySample
from rdlkit.schema import (
    ColumnDef,
    ForeignKeyDef,
    InferenceConfig,
    RelationalSchema,
    SemanticType,
    TableDef,
    format_timestamp,
    infer_semantic_types,
    parse_timestamp,
    validate_schema,
)


def two_tables(parent_cols=("id",)):
    parent = TableDef("parent", (ColumnDef("id", "integer"), ColumnDef("name", "text")), ("id",))
    child = TableDef("child", (ColumnDef("id", "integer"), ColumnDef("pid", "integer")), ("id",))
    fk = ForeignKeyDef("child", ("pid",), "parent", parent_cols)
    return RelationalSchema((parent, child), (fk,))


def test_well_formed_schema_has_no_violations():
    assert validate_schema(two_tables()) == []


def test_fk_to_non_pk_column_is_one_violation():
    out = validate_schema(two_tables(("name",)))
    assert len(out) == 1
    assert out[0].rule == "fk_references_pk"
    assert "child.pid" in out[0].message


def test_duplicate_table_name_is_one_violation():
    s = two_tables()
    dup = RelationalSchema(s.tables + (s.tables[0],), s.foreign_keys)
    out = validate_schema(dup)
    assert [v.rule for v in out] == ["unique_table_name"]


def test_fk_arity_mismatch_reported():
    s = two_tables()
    bad = ForeignKeyDef("child", ("pid", "id"), "parent", ("id",))
    assert "fk_arity" in {v.rule for v in validate_schema(RelationalSchema(s.tables, (bad,)))}


def test_schema_dict_round_trip():
    s = two_tables()
    assert RelationalSchema.from_dict(s.to_dict()).to_dict() == s.to_dict()


# --------------------------------------------------------------------------
# inference


def table_of(*cols, pk=()):
    return TableDef("t", tuple(ColumnDef(n, d) for n, d in cols), pk)


def test_low_cardinality_text_is_categorical():
    t = table_of(("color", "text"))
    rows = [(("red", "green", "blue")[i % 3],) for i in range(1000)]
    assert infer_semantic_types(t, rows).columns[0].semantic_type == SemanticType.CATEGORICAL


def test_primary_key_wins_over_content():
    t = table_of(("code", "text"), pk=("code",))
    rows = [("a",)] * 50  # would be categorical by content
    assert infer_semantic_types(t, rows).columns[0].semantic_type == SemanticType.PRIMARY_KEY


def test_fk_column_typed_foreign_key_even_if_content_bearing():
    t = table_of(("id", "integer"), ("country", "text"), pk=("id",))
    rows = [(i, ("fr", "de")[i % 2]) for i in range(100)]
    out = infer_semantic_types(t, rows, foreign_key_columns=["country"])
    assert out.column("country").semantic_type == SemanticType.FOREIGN_KEY


def test_iso_dates_are_temporal():
    iso = re.compile(r"^\d{4}-\d{2}-\d{2}(T\d{2}:\d{2}:\d{2}Z)?$")
    values = [f"2020-{1 + i % 12:02d}-{1 + i % 28:02d}" for i in range(200)]
    values += [f"2021-03-04T10:{i % 60:02d}:00Z" for i in range(50)]
    # independent scan: every value matches the pattern
    assert sum(bool(iso.match(v)) for v in values) / len(values) == 1.0
    t = table_of(("created", "text"))
    out = infer_semantic_types(t, [(v,) for v in values])
    assert out.columns[0].semantic_type == SemanticType.TEMPORAL


def test_numeric_strings_are_numerical():
    t = table_of(("x", "text"))
    rows = [(f"{i * 0.37:.3f}",) for i in range(300)]
    assert infer_semantic_types(t, rows).columns[0].semantic_type == SemanticType.NUMERICAL


def test_delimited_tokens_are_multi_categorical():
    t = table_of(("tags", "text"))
    toks = ["a", "b", "c", "d"]
    rows = [(",".join(toks[: 1 + i % 3]),) for i in range(300)]
    assert infer_semantic_types(t, rows).columns[0].semantic_type == SemanticType.MULTI_CATEGORICAL


def test_free_text_is_text():
    t = table_of(("note", "text"))
    rows = [(f"note number {i} about item {i * 7}",) for i in range(300)]
    assert infer_semantic_types(t, rows).columns[0].semantic_type == SemanticType.TEXT


def test_mostly_null_free_text_is_ignored():
    t = table_of(("note", "text"))
    rows = [(f"unique remark {i}" if i % 4 == 0 else None,) for i in range(400)]
    assert infer_semantic_types(t, rows).columns[0].semantic_type == SemanticType.IGNORED


def test_empty_sample_raises():
    with pytest.raises(EmptySample):
        infer_semantic_types(table_of(("x", "text")), [])


def test_overrides_are_kept():
    t = table_of(("x", "text"))
    out = infer_semantic_types(t, [("a",)] * 20, overrides={"x": SemanticType.TEXT})
    assert out.columns[0].semantic_type == SemanticType.TEXT


def test_sample_size_bounds_rows_read():
    # the first 10 rows are categorical-looking; the rest are free text
    t = table_of(("x", "text"))
    rows = [("same",)] * 10 + [(f"value {i}",) for i in range(1000)]
    cfg = InferenceConfig(sample_size=10)
    assert infer_semantic_types(t, rows, cfg).columns[0].semantic_type == SemanticType.CATEGORICAL


cell = st.one_of(
    st.none(),
    st.integers(-5, 5),
    st.floats(-1e6, 1e6, allow_nan=False),
    st.sampled_from(["a", "b", "x,y", "2020-01-01", "hello world", ""]),
    st.booleans(),
)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(cell, cell, cell), min_size=1, max_size=40))
def test_inference_is_exhaustive_and_deterministic(rows):
    t = table_of(("a", "unknown"), ("b", "text"), ("c", "real"), pk=("a",))
    first = infer_semantic_types(t, rows)
    second = infer_semantic_types(t, list(rows))
    assert first == second
    assert all(isinstance(c.semantic_type, SemanticType) for c in first.columns)
    assert first.columns[0].semantic_type == SemanticType.PRIMARY_KEY


# --------------------------------------------------------------------------
# timestamps


def test_parse_date_and_iso():
    assert parse_timestamp("1970-01-02") == 86400
    assert parse_timestamp("1970-01-01T00:00:10Z") == 10
    assert parse_timestamp("1970-01-01T01:00:00+01:00") == 0
    assert parse_timestamp("not a date") is None


@given(st.integers(0, 4_000_000_000))
def test_timestamp_format_round_trip(ts):
    assert parse_timestamp(format_timestamp(ts)) == ts
