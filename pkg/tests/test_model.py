from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from schemamap.model import (
    AttributeDef,
    BroadType,
    Instance,
    LabeledNull,
    SchemaError,
    classify_broad_type,
    load_schema,
    sample_values,
    schema_from_dict,
    schema_to_dict,
)

from fixtures import drug_source_schema


FIG1_DOC = {
    "name": "drug_source",
    "relations": [
        {
            "name": "meds",
            "primary_key": ["m_id"],
            "foreign_keys": [],
            "attributes": [
                {"name": "m_id", "type": "int", "nullable": False},
                {"name": "generic_name", "type": "varchar(80)", "values": ["aspirin"]},
            ],
        },
        {
            "name": "trial",
            "primary_key": [],
            "foreign_keys": [
                {"columns": ["m_id"], "ref_relation": "meds", "ref_columns": ["m_id"]}
            ],
            "attributes": [
                {"name": "m_id", "type": "int", "nullable": False},
                {"name": "funder", "type": "varchar(120)"},
                {"name": "month", "type": "int"},
                {"name": "day", "type": "int"},
                {"name": "year", "type": "int"},
            ],
        },
    ],
}


def test_load_schema_fig1_document():
    schema = load_schema(FIG1_DOC)
    assert [r.name for r in schema.relations] == ["meds", "trial"]
    fk = schema.relation("trial").foreign_keys[0]
    assert fk.ref_relation == "meds"
    assert fk.columns == ("m_id",)


def test_load_schema_empty_relations_is_valid():
    schema = load_schema({"name": "empty", "relations": []})
    assert schema.relations == ()


def test_load_schema_fk_to_missing_relation_is_integrity_error():
    doc = {
        "name": "broken",
        "relations": [
            {
                "name": "trial",
                "foreign_keys": [
                    {"columns": ["m_id"], "ref_relation": "drgs", "ref_columns": ["m_id"]}
                ],
                "attributes": [{"name": "m_id", "type": "int"}],
            }
        ],
    }
    with pytest.raises(SchemaError, match="drgs"):
        load_schema(doc)


def test_load_schema_duplicate_attribute_names_rejected():
    doc = {
        "name": "dup",
        "relations": [
            {"name": "r", "attributes": [{"name": "a", "type": "int"}, {"name": "a", "type": "int"}]}
        ],
    }
    with pytest.raises(SchemaError, match="duplicate"):
        load_schema(doc)


def test_schema_roundtrip_is_stable():
    schema = load_schema(FIG1_DOC)
    again = schema_from_dict(schema_to_dict(schema))
    assert again == schema
    assert schema_to_dict(again) == schema_to_dict(schema)


def test_malformed_json_file_reports_parse_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(SchemaError, match="not valid JSON"):
        load_schema(path)


@pytest.mark.parametrize(
    "declared,expected",
    [
        ("int", BroadType.NUMERIC),
        ("Integer", BroadType.NUMERIC),
        ("decimal(10,2)", BroadType.NUMERIC),
        ("double precision", BroadType.NUMERIC),
        ("VARCHAR(255)", BroadType.TEXT),
        ("text", BroadType.TEXT),
        ("timestamp with time zone", BroadType.DATETIME),
        ("date", BroadType.DATETIME),
        ("BOOLEAN", BroadType.BOOLEAN),
        ("bit", BroadType.BOOLEAN),
        ("geometry", BroadType.OTHER),
        ("", BroadType.OTHER),
    ],
)
def test_classify_broad_type_table(declared, expected):
    assert classify_broad_type(declared) == expected


@given(st.text(max_size=30))
def test_classify_broad_type_total_and_idempotent(declared):
    broad = classify_broad_type(declared)
    assert classify_broad_type(broad.value) == broad


def test_sample_values_pool_smaller_than_k():
    attr = AttributeDef(name="a", declared_type="text", sample_values=("x", "y", "z"))
    assert sorted(sample_values(attr, 10, seed=1)) == ["x", "y", "z"]


def test_sample_values_deterministic_per_seed():
    attr = AttributeDef(name="a", declared_type="text",
                        sample_values=tuple(f"v{i}" for i in range(100)))
    first = sample_values(attr, 10, seed=42)
    second = sample_values(attr, 10, seed=42)
    assert first == second
    assert len(set(first)) == 10
    assert sample_values(attr, 10, seed=43) != first


def test_sample_values_truncates_to_100_chars():
    attr = AttributeDef(name="a", declared_type="text", sample_values=("Q" * 180,))
    [value] = sample_values(attr, 1, seed=0)
    assert value == "Q" * 100


def test_attribute_ingestion_truncates_and_dedups():
    attr = AttributeDef(name="a", declared_type="text",
                        sample_values=("A" * 150, "A" * 120, "b", "b"))
    assert attr.sample_values == ("A" * 100, "b")


def test_instance_rows_must_match_relation_attributes():
    schema = drug_source_schema()
    with pytest.raises(Exception, match="declares"):
        Instance.from_dicts(schema, {"meds": [{"m_id": 1}]})


def test_instance_json_roundtrip_with_labeled_nulls():
    schema = drug_source_schema()
    instance = Instance.from_dicts(
        schema,
        {"meds": [{"m_id": 1, "generic_name": None},
                  {"m_id": 2, "generic_name": LabeledNull("abc")}]},
    )
    doc = instance.to_json_dict()
    assert {"$null_id": "abc"} in [row["generic_name"] for row in doc["meds"]]
    again = Instance.from_json_dict(schema, doc)
    assert again.rows == instance.rows


def test_labeled_null_identity():
    assert LabeledNull("a") == LabeledNull("a")
    assert LabeledNull("a") != LabeledNull("b")
    assert LabeledNull("a") != "a"
