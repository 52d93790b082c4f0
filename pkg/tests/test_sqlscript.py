from __future__ import annotations

import re

from schemamap.rules import RuleMapping, rules_equivalent
from schemamap.sqlscript import (
    extract_sql_script,
    parse_rule_script,
    render_mapping_sql,
    render_sql,
)

from fixtures import biblio_mapping, drug_trials_rule
from test_rules import lrd_example


def test_render_lrd_rule_is_single_insert(source_schema, target_schema):
    sql = render_sql(lrd_example(), source_schema, target_schema)
    assert sql.count("INSERT INTO") == 1
    assert "FROM meds" in sql


def test_render_drug_rule_emits_two_inserts_sharing_key_expression(source_schema, target_schema):
    sql = render_sql(drug_trials_rule(), source_schema, target_schema)
    assert sql.count("INSERT INTO") == 2
    keys = re.findall(r"SURROGATE_KEY\('drug_trials', 'x1'[^)]*\)", sql)
    assert len(keys) == 2
    assert keys[0] == keys[1]


def test_render_filter_becomes_where_clause(source_schema, target_schema):
    sql = render_sql(drug_trials_rule(), source_schema, target_schema)
    assert "WHERE" in sql
    assert "year > 1990" in sql


def test_roundtrip_drug_rule(source_schema, target_schema):
    rule = drug_trials_rule(tau1="lookup")
    sql = render_sql(rule, source_schema, target_schema)
    report = parse_rule_script(sql, source_schema, target_schema)
    assert report.diagnostics == []
    assert len(report.rules) == 1
    assert rules_equivalent(rule, report.rules[0])


def test_roundtrip_every_gold_biblio_rule():
    mapping = biblio_mapping()
    sql = render_mapping_sql(mapping)
    report = parse_rule_script(sql, mapping.source_schema, mapping.target_schema)
    assert report.diagnostics == []
    assert len(report.rules) == len(mapping.rules)
    for gold, parsed in zip(mapping.rules, report.rules):
        assert rules_equivalent(gold, parsed), f"{gold.id} failed to roundtrip"


def test_parsed_mapping_validates():
    mapping = biblio_mapping()
    sql = render_mapping_sql(mapping)
    report = parse_rule_script(sql, mapping.source_schema, mapping.target_schema)
    RuleMapping(
        rules=report.rules,
        source_schema=mapping.source_schema,
        target_schema=mapping.target_schema,
    )


def test_empty_script_is_empty_mapping_without_diagnostics(source_schema, target_schema):
    report = parse_rule_script("", source_schema, target_schema)
    assert report.rules == ()
    assert report.diagnostics == []


def test_partial_parse_keeps_good_statement(source_schema, target_schema):
    good = render_sql(lrd_example(), source_schema, target_schema)
    script = good + "\n\nINSERT INTO Drugs (drug_id) SELECT FROM nowhere;"
    report = parse_rule_script(script, source_schema, target_schema)
    assert len(report.rules) == 1
    assert len(report.diagnostics) == 1


def test_unknown_relation_becomes_diagnostic(source_schema, target_schema):
    script = "INSERT INTO Ghost (a) SELECT meds.m_id FROM meds;"
    report = parse_rule_script(script, source_schema, target_schema)
    assert report.rules == ()
    assert any("Ghost" in d for d in report.diagnostics)


def test_unknown_function_becomes_diagnostic(source_schema, target_schema):
    script = (
        "INSERT INTO Drugs (drug_id, brand_name, drug_class, uses, side_effects)\n"
        "SELECT SURROGATE_KEY('r', 'x', meds.m_id), REVERSE(meds.generic_name), NULL, NULL, NULL\n"
        "FROM meds;"
    )
    report = parse_rule_script(script, source_schema, target_schema)
    assert report.rules == ()
    assert any("REVERSE" in d for d in report.diagnostics)


def test_partial_column_list_fills_unknowns_with_existentials(source_schema, target_schema):
    script = (
        "INSERT INTO Drugs (drug_id, brand_name)\n"
        "SELECT SURROGATE_KEY('r', 'x', meds.m_id), meds.generic_name\n"
        "FROM meds;"
    )
    report = parse_rule_script(script, source_schema, target_schema)
    assert report.diagnostics == []
    [rule] = report.rules
    drugs_atom = rule.target_atoms[0]
    assert len(drugs_atom.terms) == 5  # full arity despite the two-column INSERT
    assert len(rule.existentials) == 4  # the key plus three unknown positions


def test_bare_null_in_select_becomes_fresh_existential(source_schema, target_schema):
    script = (
        "INSERT INTO Clinical_Trials (drug_id, funder, trial_date)\n"
        "SELECT NULL, trial.funder, NULL\n"
        "FROM trial;"
    )
    report = parse_rule_script(script, source_schema, target_schema)
    [rule] = report.rules
    assert len(rule.existentials) == 2


def test_extract_sql_prefers_last_fenced_block():
    text = (
        "Let me think about it.\n```sql\nINSERT INTO a (x) SELECT 1 FROM b;\n```\n"
        "On reflection, better:\n```sql\nINSERT INTO c (y) SELECT 2 FROM d;\n```\nDone."
    )
    assert "INSERT INTO c" in extract_sql_script(text)
    assert "INSERT INTO a" not in extract_sql_script(text)


def test_extract_sql_falls_back_to_first_insert():
    text = "thinking text here\nINSERT INTO a (x) SELECT 1 FROM b;"
    assert extract_sql_script(text).startswith("INSERT INTO")


def test_parse_handles_reasoning_prefix(source_schema, target_schema):
    good = render_sql(lrd_example(), source_schema, target_schema)
    response = f"We map meds onto Drugs as follows.\n```sql\n{good}\n```\n"
    report = parse_rule_script(response, source_schema, target_schema)
    assert len(report.rules) == 1
    assert report.diagnostics == []


def test_constants_in_filters_roundtrip_values():
    mapping = biblio_mapping()
    r7 = mapping.rule("r7")
    sql = render_sql(r7, mapping.source_schema, mapping.target_schema)
    assert "publisher = 'ACM'" in sql
    report = parse_rule_script(sql, mapping.source_schema, mapping.target_schema)
    [rule] = report.rules
    assert rules_equivalent(r7, rule)
