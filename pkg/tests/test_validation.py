from __future__ import annotations

from schemamap.model import Instance, LabeledNull
from schemamap.validation import validate_instance

from fixtures import drug_target_schema


def _kinds(violations):
    return [v.kind for v in violations]


def test_clean_instance_has_no_violations():
    schema = drug_target_schema()
    key = LabeledNull("k1")
    instance = Instance.from_dicts(
        schema,
        {
            "Drugs": [{"drug_id": key, "brand_name": "Aspirin", "drug_class": "NSAID",
                       "uses": "pain", "side_effects": "nausea"}],
            "Clinical_Trials": [{"drug_id": key, "funder": "NIH", "trial_date": "1995-05-01"}],
        },
    )
    assert validate_instance(instance, schema) == []


def test_not_null_violation():
    schema = drug_target_schema()
    instance = Instance.from_dicts(
        schema,
        {"Drugs": [{"drug_id": None, "brand_name": "Aspirin", "drug_class": None,
                    "uses": None, "side_effects": None}]},
    )
    assert "not_null" in _kinds(validate_instance(instance, schema))


def test_information_free_row_detected():
    schema = drug_target_schema()
    instance = Instance.from_dicts(
        schema,
        {"Drugs": [{"drug_id": LabeledNull("k"), "brand_name": None, "drug_class": None,
                    "uses": None, "side_effects": None}]},
    )
    violations = validate_instance(instance, schema)
    assert "information_free" in _kinds(violations)


def test_dangling_foreign_key_detected():
    schema = drug_target_schema()
    instance = Instance.from_dicts(
        schema,
        {
            "Drugs": [{"drug_id": LabeledNull("a"), "brand_name": "X", "drug_class": "c",
                       "uses": "u", "side_effects": "s"}],
            "Clinical_Trials": [{"drug_id": LabeledNull("b"), "funder": "NIH",
                                 "trial_date": "2001-01-01"}],
        },
    )
    violations = validate_instance(instance, schema)
    assert _kinds(violations) == ["foreign_key"]


def test_primary_key_duplicates_detected():
    schema = drug_target_schema()
    instance = Instance.from_dicts(
        schema,
        {
            "Drugs": [
                {"drug_id": 1, "brand_name": "A", "drug_class": "c", "uses": "u", "side_effects": "s"},
                {"drug_id": 1, "brand_name": "B", "drug_class": "c", "uses": "u", "side_effects": "s"},
            ]
        },
    )
    assert "primary_key" in _kinds(validate_instance(instance, schema))


def test_broad_type_mismatch_detected():
    schema = drug_target_schema()
    instance = Instance.from_dicts(
        schema,
        {"Drugs": [{"drug_id": "not-a-number", "brand_name": "A", "drug_class": "c",
                    "uses": "u", "side_effects": "s"}]},
    )
    violations = validate_instance(instance, schema)
    assert "broad_type" in _kinds(violations)


def test_null_fk_is_absence_not_danglement():
    schema = drug_target_schema()
    instance = Instance.from_dicts(
        schema,
        {"Clinical_Trials": [{"drug_id": None, "funder": "NIH", "trial_date": "2001-01-01"}]},
    )
    kinds = _kinds(validate_instance(instance, schema))
    assert "foreign_key" not in kinds
    assert "not_null" in kinds  # drug_id is declared NOT NULL in the fixture
