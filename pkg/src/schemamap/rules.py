"""Mapping rules: universally quantified source patterns generating target tuples.

A rule has the shape

    forall xs ( source_atoms & filters -> exists ys target_atoms )

Atoms are positional over a relation's attributes. Terms are variables,
constants, or named value transforms applied to other terms. Rules whose
sides each contain a single atom are classified LRD (limited referential
dependencies); anything wider is FRD (full referential dependencies), since
shared variables across multiple atoms on one side encode row-linking
requirements that single-atom rules cannot express.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Union

from .model import SchemaDef

COMPARISON_OPS = ("=", "!=", "<", "<=", ">", ">=")


class RuleError(ValueError):
    """Structurally invalid rule or mapping."""


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Constant:
    value: Union[str, int, float, bool, None]


@dataclass(frozen=True)
class Transform:
    name: str
    args: tuple["Term", ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))


Term = Union[Variable, Constant, Transform]


@dataclass(frozen=True)
class Atom:
    relation: str
    terms: tuple[Term, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def variables(self) -> set[str]:
        out: set[str] = set()
        for t in self.terms:
            out |= term_variables(t)
        return out


def term_variables(term: Term) -> set[str]:
    if isinstance(term, Variable):
        return {term.name}
    if isinstance(term, Transform):
        out: set[str] = set()
        for a in term.args:
            out |= term_variables(a)
        return out
    return set()


@dataclass(frozen=True)
class FilterPred:
    left: Term
    op: str
    right: Term

    def __post_init__(self):
        if self.op not in COMPARISON_OPS:
            raise RuleError(f"unknown comparison operator {self.op!r}")

    def variables(self) -> set[str]:
        return term_variables(self.left) | term_variables(self.right)


class RuleClass(str, Enum):
    LRD = "LRD"
    FRD = "FRD"


@dataclass(frozen=True)
class Rule:
    id: str
    universals: tuple[str, ...]
    source_atoms: tuple[Atom, ...]
    target_atoms: tuple[Atom, ...]
    filters: tuple[FilterPred, ...] = ()
    existentials: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "universals", tuple(self.universals))
        object.__setattr__(self, "existentials", tuple(self.existentials))
        object.__setattr__(self, "source_atoms", tuple(self.source_atoms))
        object.__setattr__(self, "target_atoms", tuple(self.target_atoms))
        object.__setattr__(self, "filters", tuple(self.filters))


def validate_rule(rule: Rule) -> None:
    """Raise RuleError unless the rule's quantifier structure is coherent."""
    if not rule.source_atoms:
        raise RuleError(f"rule {rule.id}: no source atoms")
    if not rule.target_atoms:
        raise RuleError(f"rule {rule.id}: no target atoms")
    universals = set(rule.universals)
    existentials = set(rule.existentials)
    overlap = universals & existentials
    if overlap:
        raise RuleError(f"rule {rule.id}: variables {sorted(overlap)} are both universal and existential")

    source_vars: set[str] = set()
    for atom in rule.source_atoms:
        for term in atom.terms:
            if isinstance(term, Transform):
                raise RuleError(f"rule {rule.id}: transform terms are only allowed in target atoms")
        source_vars |= atom.variables()

    unbound = universals - source_vars
    if unbound:
        raise RuleError(f"rule {rule.id}: universal variables {sorted(unbound)} never bound by a source atom")
    undeclared = source_vars - universals
    if undeclared:
        raise RuleError(f"rule {rule.id}: source variables {sorted(undeclared)} not declared universal")

    for pred in rule.filters:
        loose = pred.variables() - universals
        if loose:
            raise RuleError(f"rule {rule.id}: filter references unbound variables {sorted(loose)}")

    for atom in rule.target_atoms:
        loose = atom.variables() - universals - existentials
        if loose:
            raise RuleError(f"rule {rule.id}: target atom over {atom.relation} references unbound variables {sorted(loose)}")

    target_vars: set[str] = set()
    for atom in rule.target_atoms:
        target_vars |= atom.variables()
    never_used = existentials - target_vars
    if never_used:
        raise RuleError(f"rule {rule.id}: existential variables {sorted(never_used)} never appear in a target atom")


def classify_rule(rule: Rule) -> RuleClass:
    """LRD iff each side holds exactly one relational predicate (atom)."""
    if len(rule.source_atoms) <= 1 and len(rule.target_atoms) <= 1:
        return RuleClass.LRD
    return RuleClass.FRD


def relations_of_rule(rule: Rule) -> tuple[frozenset[str], frozenset[str]]:
    """Deduplicated (source relation set, target relation set) of a rule."""
    return (
        frozenset(a.relation for a in rule.source_atoms),
        frozenset(a.relation for a in rule.target_atoms),
    )


@dataclass(frozen=True)
class RuleMapping:
    """A set of rules bound to concrete source and target schemata."""

    rules: tuple[Rule, ...]
    source_schema: SchemaDef
    target_schema: SchemaDef

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        ids = [r.id for r in self.rules]
        if len(set(ids)) != len(ids):
            raise RuleError("duplicate rule ids in mapping")
        for rule in self.rules:
            validate_rule(rule)
            for atom in rule.source_atoms:
                rel = self.source_schema.relation(atom.relation)
                if len(atom.terms) != rel.arity:
                    raise RuleError(
                        f"rule {rule.id}: atom over {atom.relation} has arity {len(atom.terms)}, "
                        f"relation declares {rel.arity}"
                    )
            for atom in rule.target_atoms:
                rel = self.target_schema.relation(atom.relation)
                if len(atom.terms) != rel.arity:
                    raise RuleError(
                        f"rule {rule.id}: atom over {atom.relation} has arity {len(atom.terms)}, "
                        f"relation declares {rel.arity}"
                    )

    def rule(self, rule_id: str) -> Rule:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise RuleError(f"mapping has no rule {rule_id!r}")


def lrd_translation(rule: Rule) -> list[Rule]:
    """Split a rule into single-atom-per-side rules, one per target atom.

    Each target atom is paired with the first source atom binding all of its
    universal variables; filters over other atoms' variables are dropped and
    shared existentials lose their cross-atom scope. This is the information
    loss that distinguishes the FRD class: the translated mapping no longer
    links rows across target relations nor filters on the dropped atoms.
    """
    out: list[Rule] = []
    universals = set(rule.universals)
    for i, t_atom in enumerate(rule.target_atoms):
        needed = t_atom.variables() & universals
        chosen = None
        for s_atom in rule.source_atoms:
            if needed <= s_atom.variables():
                chosen = s_atom
                break
        if chosen is None:
            raise RuleError(
                f"rule {rule.id}: target atom over {t_atom.relation} draws on multiple "
                "source atoms and has no single-atom translation"
            )
        atom_vars = chosen.variables()
        kept_filters = tuple(f for f in rule.filters if f.variables() <= atom_vars)
        out.append(
            Rule(
                id=f"{rule.id}_lrd{i + 1}",
                universals=tuple(u for u in rule.universals if u in atom_vars),
                source_atoms=(chosen,),
                filters=kept_filters,
                existentials=tuple(sorted(t_atom.variables() - universals)),
                target_atoms=(t_atom,),
            )
        )
    return out


# --- JSON serialization ------------------------------------------------------

def term_to_json(term: Term) -> Any:
    if isinstance(term, Variable):
        return {"var": term.name}
    if isinstance(term, Constant):
        return {"const": term.value}
    return {"transform": term.name, "args": [term_to_json(a) for a in term.args]}


def term_from_json(doc: Any) -> Term:
    if not isinstance(doc, Mapping):
        raise RuleError(f"bad term document {doc!r}")
    if "var" in doc:
        return Variable(doc["var"])
    if "const" in doc:
        return Constant(doc["const"])
    if "transform" in doc:
        return Transform(doc["transform"], tuple(term_from_json(a) for a in doc.get("args", ())))
    raise RuleError(f"term document must be tagged var/const/transform: {doc!r}")


def rule_to_json(rule: Rule) -> dict[str, Any]:
    return {
        "id": rule.id,
        "universals": list(rule.universals),
        "source_atoms": [
            {"relation": a.relation, "terms": [term_to_json(t) for t in a.terms]} for a in rule.source_atoms
        ],
        "filters": [
            {"left": term_to_json(f.left), "op": f.op, "right": term_to_json(f.right)} for f in rule.filters
        ],
        "existentials": list(rule.existentials),
        "target_atoms": [
            {"relation": a.relation, "terms": [term_to_json(t) for t in a.terms]} for a in rule.target_atoms
        ],
    }


def rule_from_json(doc: Mapping[str, Any]) -> Rule:
    def atom(a: Mapping[str, Any]) -> Atom:
        return Atom(a["relation"], tuple(term_from_json(t) for t in a["terms"]))

    return Rule(
        id=doc["id"],
        universals=tuple(doc.get("universals", ())),
        source_atoms=tuple(atom(a) for a in doc["source_atoms"]),
        filters=tuple(
            FilterPred(term_from_json(f["left"]), f["op"], term_from_json(f["right"]))
            for f in doc.get("filters", ())
        ),
        existentials=tuple(doc.get("existentials", ())),
        target_atoms=tuple(atom(a) for a in doc["target_atoms"]),
    )


def load_rules(source: Union[str, Path, list]) -> list[Rule]:
    if isinstance(source, list):
        docs = source
    else:
        docs = json.loads(Path(source).read_text(encoding="utf-8"))
    return [rule_from_json(d) for d in docs]


def save_rules(rules: Iterable[Rule], path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps([rule_to_json(r) for r in rules], indent=2) + "\n", encoding="utf-8")


# --- structural rule comparison ----------------------------------------------

def _canonical_form(rule: Rule, source_order: tuple[int, ...], target_order: tuple[int, ...]) -> tuple:
    """Canonical tuple under one specific atom ordering, variables renamed by first use."""
    renaming: dict[str, str] = {}

    def rename(term: Term) -> Any:
        if isinstance(term, Variable):
            if term.name not in renaming:
                renaming[term.name] = f"_{len(renaming)}"
            return ("v", renaming[term.name])
        if isinstance(term, Constant):
            return ("c", term.value)
        return ("t", term.name, tuple(rename(a) for a in term.args))

    source = tuple(
        (rule.source_atoms[i].relation, tuple(rename(t) for t in rule.source_atoms[i].terms))
        for i in source_order
    )
    filters = tuple(sorted(
        (f.op, repr(rename(f.left)), repr(rename(f.right))) for f in rule.filters
    ))
    target = tuple(
        (rule.target_atoms[i].relation, tuple(rename(t) for t in rule.target_atoms[i].terms))
        for i in target_order
    )
    return (source, filters, target)


def rules_equivalent(a: Rule, b: Rule) -> bool:
    """True when the rules are identical up to variable renaming and atom order.

    Brute-forces atom orderings, which is fine for the handful of atoms real
    rules carry.
    """
    if len(a.source_atoms) != len(b.source_atoms) or len(a.target_atoms) != len(b.target_atoms):
        return False
    if len(a.filters) != len(b.filters):
        return False
    a_forms = {
        _canonical_form(a, so, to)
        for so in itertools.permutations(range(len(a.source_atoms)))
        for to in itertools.permutations(range(len(a.target_atoms)))
    }
    ident_b = (tuple(range(len(b.source_atoms))), tuple(range(len(b.target_atoms))))
    return _canonical_form(b, *ident_b) in a_forms
