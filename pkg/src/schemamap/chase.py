"""Materialize target instances by firing mapping rules over a source instance.

Each rule's source side is evaluated as a conjunctive query (hash join on
shared variables); every answer binding emits one row per target atom.
Existential variables receive labeled nulls derived from a content digest of
(rule id, variable, ordered universal binding), so the same binding yields the
same surrogate in every target atom while distinct bindings get distinct
surrogates — and the whole procedure is order-independent and reproducible.

Filter comparisons are numeric when both sides parse as numbers, otherwise
lexicographic; a NULL or labeled null on either side rejects the binding.
Join equality, by contrast, is plain value equality (labeled nulls match by
id). Transform failures on a concrete row skip that row and are logged.
"""

from __future__ import annotations

import hashlib
import json
import logging
from typing import Optional

from .model import Instance, LabeledNull, Value
from .rules import Atom, Constant, Rule, RuleMapping, Transform, Variable
from .transforms import TransformError, TransformRegistry

logger = logging.getLogger(__name__)


class ChaseError(ValueError):
    pass


def _value_token(v: Value) -> list:
    if v is None:
        return ["null"]
    if isinstance(v, bool):
        return ["b", v]
    if isinstance(v, (int, float)):
        return ["n", repr(v)]
    if isinstance(v, LabeledNull):
        return ["ln", v.nid]
    return ["s", str(v)]


def surrogate_for(rule_id: str, var: str, universal_values: tuple) -> LabeledNull:
    payload = json.dumps(
        [rule_id, var, [_value_token(v) for v in universal_values]],
        separators=(",", ":"),
        ensure_ascii=True,
    )
    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
    return LabeledNull(digest)


def _as_number(v: Value) -> Optional[float]:
    if isinstance(v, bool):
        return float(v)
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return float(v.strip())
        except ValueError:
            return None
    return None


def compare_values(left: Value, op: str, right: Value) -> bool:
    """Filter comparison semantics; NULL or surrogate on either side rejects."""
    if left is None or right is None or isinstance(left, LabeledNull) or isinstance(right, LabeledNull):
        return False
    ln, rn = _as_number(left), _as_number(right)
    if ln is not None and rn is not None:
        a, b = ln, rn
    else:
        a, b = str(left), str(right)
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise ChaseError(f"unknown comparison operator {op!r}")


def _atom_bindings(atom: Atom, rows: frozenset, bindings: list[dict], bound: set[str]) -> list[dict]:
    """Join the current binding list with one source atom's rows."""
    shared: list[tuple[int, str]] = []  # positions joining on already-bound vars
    fresh: list[tuple[int, str]] = []  # first occurrence of a new var
    consts: list[tuple[int, object]] = []
    seen_here: dict[str, int] = {}
    intra: list[tuple[int, int]] = []  # repeated new var inside this atom

    for pos, term in enumerate(atom.terms):
        if isinstance(term, Constant):
            consts.append((pos, term.value))
        elif isinstance(term, Variable):
            if term.name in bound:
                shared.append((pos, term.name))
            elif term.name in seen_here:
                intra.append((seen_here[term.name], pos))
            else:
                seen_here[term.name] = pos
                fresh.append((pos, term.name))
        else:
            raise ChaseError("transform terms are not allowed in source atoms")

    index: dict[tuple, list] = {}
    for row in rows:
        if any(row[p] != v for p, v in consts):
            continue
        if any(row[p1] != row[p2] for p1, p2 in intra):
            continue
        key = tuple(row[p] for p, _ in shared)
        index.setdefault(key, []).append(row)

    out: list[dict] = []
    for binding in bindings:
        key = tuple(binding[var] for _, var in shared)
        for row in index.get(key, ()):  # hash join on the shared-variable key
            extended = dict(binding)
            for pos, var in fresh:
                extended[var] = row[pos]
            out.append(extended)
    return out


def rule_answers(
    rule: Rule, source: Instance, registry: Optional[TransformRegistry] = None
) -> list[dict[str, Value]]:
    """All bindings of the rule's universal variables satisfying body and filters."""
    bindings: list[dict] = [{}]
    bound: set[str] = set()
    for atom in rule.source_atoms:
        rows = source.rows.get(atom.relation, frozenset())
        bindings = _atom_bindings(atom, rows, bindings, bound)
        bound |= atom.variables()
        if not bindings:
            return []

    answers: dict[tuple, dict] = {}
    for binding in bindings:
        if all(
            compare_values(
                _eval_term(f.left, binding, {}, registry), f.op, _eval_term(f.right, binding, {}, registry)
            )
            for f in rule.filters
        ):
            key = tuple(binding[u] for u in rule.universals)
            answers.setdefault(key, binding)
    return [answers[k] for k in answers]


def _eval_term(term, binding: dict, surrogates: dict, registry: Optional[TransformRegistry]):
    if isinstance(term, Variable):
        if term.name in binding:
            return binding[term.name]
        if term.name in surrogates:
            return surrogates[term.name]
        raise ChaseError(f"unbound variable {term.name!r}")
    if isinstance(term, Constant):
        return term.value
    if registry is None:
        raise ChaseError("transform term evaluated without a registry")
    args = [_eval_term(a, binding, surrogates, registry) for a in term.args]
    return registry.apply(term.name, args)


def chase(mapping: RuleMapping, source: Instance, registry: Optional[TransformRegistry] = None) -> Instance:
    """Fire every rule over the source instance; returns the materialized target.

    Output rows are deduplicated per relation (set semantics).
    """
    registry = registry or TransformRegistry()
    for rule in mapping.rules:
        _check_transforms(rule, registry)

    target_rows: dict[str, set] = {r.name: set() for r in mapping.target_schema.relations}
    for rule in mapping.rules:
        for binding in rule_answers(rule, source, registry):
            universal_key = tuple(binding[u] for u in rule.universals)
            surrogates = {y: surrogate_for(rule.id, y, universal_key) for y in rule.existentials}
            for atom in rule.target_atoms:
                try:
                    row = tuple(_eval_term(t, binding, surrogates, registry) for t in atom.terms)
                except TransformError as exc:
                    logger.warning("rule %s: skipping %s row: %s", rule.id, atom.relation, exc)
                    continue
                target_rows[atom.relation].add(row)

    return Instance(
        columns={r.name: r.attribute_names for r in mapping.target_schema.relations},
        rows={name: frozenset(rows) for name, rows in target_rows.items()},
    )


def _check_transforms(rule: Rule, registry: TransformRegistry) -> None:
    def walk(term) -> None:
        if isinstance(term, Transform):
            if not registry.knows(term.name):
                raise ChaseError(f"rule {rule.id}: unknown transform {term.name!r}")
            arity = registry.arity(term.name)
            if arity is not None and len(term.args) != arity:
                raise ChaseError(
                    f"rule {rule.id}: transform {term.name} expects {arity} args, got {len(term.args)}"
                )
            for a in term.args:
                walk(a)

    for atom in rule.target_atoms:
        for t in atom.terms:
            walk(t)
