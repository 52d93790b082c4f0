"""Render rules as INSERT...SELECT scripts and parse such scripts back.

The script dialect is a deliberately narrow SQL subset: one INSERT INTO ...
SELECT ... FROM ... [JOIN ... ON ...] [WHERE ...] statement per target atom.
A rule with several target atoms renders as consecutive statements sharing an
identical FROM/WHERE body; shared existentials appear as identical
SURROGATE_KEY('<rule>', '<var>', <cols...>) expressions, a deterministic key
computed from the full universal binding. Value transforms render as function
calls (DATE_CONCAT(...), LOOKUP(...), ...).

Parsing is lenient the way a scoring harness needs it to be: statements that
fail to parse, reference unknown relations/columns, or call unregistered
functions become diagnostics while the remaining statements still produce
rules. Consecutive statements with byte-identical normalized bodies are merged
back into one multi-target-atom rule, re-unifying their surrogate keys.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence, Union

from .model import SchemaDef
from .rules import (
    Atom,
    Constant,
    FilterPred,
    Rule,
    RuleMapping,
    Term,
    Transform,
    Variable,
)
from .transforms import TransformRegistry

SURROGATE_FN = "SURROGATE_KEY"


class SqlRenderError(ValueError):
    pass


# --- rendering ----------------------------------------------------------------


def _sql_literal(value: Any) -> str:
    if value is None:
        return "NULL"
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    if isinstance(value, (int, float)):
        return repr(value)
    return "'" + str(value).replace("'", "''") + "'"


class _RuleContext:
    """Alias assignment and variable -> column resolution for one rule."""

    def __init__(self, rule: Rule, source_schema: SchemaDef):
        self.rule = rule
        counts: dict[str, int] = {}
        for atom in rule.source_atoms:
            counts[atom.relation] = counts.get(atom.relation, 0) + 1
        seen: dict[str, int] = {}
        self.aliases: list[str] = []
        for atom in rule.source_atoms:
            seen[atom.relation] = seen.get(atom.relation, 0) + 1
            if counts[atom.relation] > 1:
                self.aliases.append(f"{atom.relation}_{seen[atom.relation]}")
            else:
                self.aliases.append(atom.relation)
        self.var_ref: dict[str, str] = {}
        self.const_conds: list[str] = []
        for i, atom in enumerate(rule.source_atoms):
            cols = source_schema.relation(atom.relation).attribute_names
            for pos, term in enumerate(atom.terms):
                ref = f"{self.aliases[i]}.{cols[pos]}"
                if isinstance(term, Variable) and term.name not in self.var_ref:
                    self.var_ref[term.name] = ref
                elif isinstance(term, Variable):
                    # Repeated variable: equality constraint against first ref,
                    # emitted in ON/WHERE by the caller.
                    pass
                elif isinstance(term, Constant):
                    self.const_conds.append(f"{ref} = {_sql_literal(term.value)}")

    def column_ref(self, var: str) -> str:
        try:
            return self.var_ref[var]
        except KeyError:
            raise SqlRenderError(f"rule {self.rule.id}: variable {var!r} has no source column") from None


def _render_term(term: Term, ctx: _RuleContext) -> str:
    rule = ctx.rule
    if isinstance(term, Variable):
        if term.name in ctx.var_ref:
            return ctx.column_ref(term.name)
        # Existential: deterministic key over the full universal binding.
        args = [f"'{rule.id}'", f"'{term.name}'"] + [ctx.column_ref(u) for u in rule.universals]
        return f"{SURROGATE_FN}({', '.join(args)})"
    if isinstance(term, Constant):
        return _sql_literal(term.value)
    rendered = ", ".join(_render_term(a, ctx) for a in term.args)
    return f"{term.name.upper()}({rendered})"


def _render_body(rule: Rule, ctx: _RuleContext, source_schema: SchemaDef) -> str:
    lines = []
    bound: dict[str, str] = {}
    where_extras: list[str] = []
    for i, atom in enumerate(rule.source_atoms):
        alias = ctx.aliases[i]
        table = atom.relation if alias == atom.relation else f"{atom.relation} AS {alias}"
        cols = source_schema.relation(atom.relation).attribute_names
        conds = []
        for pos, term in enumerate(atom.terms):
            if isinstance(term, Variable):
                ref = f"{alias}.{cols[pos]}"
                if term.name in bound and bound[term.name] != ref:
                    conds.append(f"{ref} = {bound[term.name]}")
                else:
                    bound[term.name] = ref
        if i == 0:
            lines.append(f"FROM {table}")
            where_extras.extend(conds)  # repeated variable within the first atom
        elif conds:
            lines.append(f"JOIN {table} ON {' AND '.join(conds)}")
        else:
            lines.append(f"CROSS JOIN {table}")

    where = where_extras + list(ctx.const_conds)
    for f in rule.filters:
        op = "<>" if f.op == "!=" else f.op
        where.append(f"{_render_term(f.left, ctx)} {op} {_render_term(f.right, ctx)}")
    if where:
        lines.append(f"WHERE {' AND '.join(where)}")
    return "\n".join(lines)


def render_sql(rule: Rule, source_schema: SchemaDef, target_schema: SchemaDef) -> str:
    """One INSERT...SELECT statement per target atom, sharing a common body."""
    ctx = _RuleContext(rule, source_schema)
    body = _render_body(rule, ctx, source_schema)
    statements = []
    for atom in rule.target_atoms:
        rel = target_schema.relation(atom.relation)
        cols = ", ".join(rel.attribute_names)
        exprs = ",\n       ".join(_render_term(t, ctx) for t in atom.terms)
        statements.append(f"INSERT INTO {atom.relation} ({cols})\nSELECT {exprs}\n{body};")
    return "\n\n".join(statements)


def render_mapping_sql(mapping: RuleMapping) -> str:
    parts = []
    for rule in mapping.rules:
        parts.append(f"-- rule {rule.id}")
        parts.append(render_sql(rule, mapping.source_schema, mapping.target_schema))
    return "\n".join(parts) + "\n"


# --- lexing -------------------------------------------------------------------

_KEYWORDS = {
    "INSERT", "INTO", "SELECT", "FROM", "JOIN", "ON", "WHERE",
    "AND", "AS", "CROSS", "INNER", "LEFT", "OUTER", "NULL", "TRUE", "FALSE",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>--[^\n]*)
  | (?P<num>-?\d+(?:\.\d+)?)
  | (?P<str>'(?:[^']|'')*')
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|<>|!=|=|<|>)
  | (?P<punct>[(),.;*])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # kw | ident | str | num | op | punct
    value: Any


def _lex(text: str) -> list[_Tok]:
    out: list[_Tok] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise SqlParseError(f"unexpected character {text[pos]!r} at offset {pos}")
        pos = m.end()
        if m.lastgroup in ("ws", "comment"):
            continue
        if m.lastgroup == "num":
            raw = m.group("num")
            out.append(_Tok("num", float(raw) if "." in raw else int(raw)))
        elif m.lastgroup == "str":
            out.append(_Tok("str", m.group("str")[1:-1].replace("''", "'")))
        elif m.lastgroup == "word":
            word = m.group("word")
            if word.upper() in _KEYWORDS:
                out.append(_Tok("kw", word.upper()))
            else:
                out.append(_Tok("ident", word))
        elif m.lastgroup == "op":
            op = m.group("op")
            out.append(_Tok("op", "!=" if op == "<>" else op))
        else:
            out.append(_Tok("punct", m.group("punct")))
    return out


class SqlParseError(ValueError):
    pass


# --- parsing ------------------------------------------------------------------


@dataclass
class _ColRef:
    table: Optional[str]
    column: str


@dataclass
class _Func:
    name: str
    args: list


_Expr = Union[_ColRef, _Func, "_Literal"]


@dataclass
class _Literal:
    value: Any


@dataclass
class _Cond:
    left: Any
    op: str
    right: Any


@dataclass
class _Statement:
    target: str
    target_columns: Optional[list[str]]
    select: list
    tables: list[tuple[str, str]]  # (relation, alias)
    conditions: list[_Cond]  # ON and WHERE conjuncts together
    body_key: tuple  # normalized FROM/WHERE signature used for rule merging


class _Cursor:
    def __init__(self, toks: Sequence[_Tok], start: int, end: int):
        self.toks = toks
        self.i = start
        self.end = end

    def peek(self) -> Optional[_Tok]:
        return self.toks[self.i] if self.i < self.end else None

    def next(self) -> _Tok:
        tok = self.peek()
        if tok is None:
            raise SqlParseError("unexpected end of statement")
        self.i += 1
        return tok

    def expect_kw(self, word: str) -> None:
        tok = self.next()
        if tok.kind != "kw" or tok.value != word:
            raise SqlParseError(f"expected {word}, found {tok.value!r}")

    def expect_punct(self, sym: str) -> None:
        tok = self.next()
        if tok.kind != "punct" or tok.value != sym:
            raise SqlParseError(f"expected {sym!r}, found {tok.value!r}")

    def at_kw(self, *words: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == "kw" and tok.value in words

    def expect_ident(self) -> str:
        tok = self.next()
        if tok.kind != "ident":
            raise SqlParseError(f"expected identifier, found {tok.value!r}")
        return tok.value


def _parse_expr(cur: _Cursor) -> _Expr:
    tok = cur.next()
    if tok.kind == "num":
        return _Literal(tok.value)
    if tok.kind == "str":
        return _Literal(tok.value)
    if tok.kind == "kw" and tok.value == "NULL":
        return _Literal(None)
    if tok.kind == "kw" and tok.value in ("TRUE", "FALSE"):
        return _Literal(tok.value == "TRUE")
    if tok.kind != "ident":
        raise SqlParseError(f"expected expression, found {tok.value!r}")
    name = tok.value
    nxt = cur.peek()
    if nxt and nxt.kind == "punct" and nxt.value == "(":
        cur.next()
        args: list = []
        if not (cur.peek() and cur.peek().kind == "punct" and cur.peek().value == ")"):
            while True:
                args.append(_parse_expr(cur))
                tok = cur.next()
                if tok.kind == "punct" and tok.value == ")":
                    break
                if not (tok.kind == "punct" and tok.value == ","):
                    raise SqlParseError(f"expected , or ) in argument list, found {tok.value!r}")
        else:
            cur.next()
        return _Func(name, args)
    if nxt and nxt.kind == "punct" and nxt.value == ".":
        cur.next()
        column = cur.expect_ident()
        return _ColRef(name, column)
    return _ColRef(None, name)


def _parse_cond(cur: _Cursor) -> _Cond:
    left = _parse_expr(cur)
    tok = cur.next()
    if tok.kind != "op":
        raise SqlParseError(f"expected comparison operator, found {tok.value!r}")
    right = _parse_expr(cur)
    return _Cond(left, tok.value, right)


def _expr_key(e: _Expr) -> tuple:
    if isinstance(e, _Literal):
        return ("lit", repr(e.value))
    if isinstance(e, _ColRef):
        return ("col", e.table or "", e.column)
    return ("fn", e.name.lower(), tuple(_expr_key(a) for a in e.args))


def _parse_statement(cur: _Cursor) -> _Statement:
    cur.expect_kw("INSERT")
    cur.expect_kw("INTO")
    target = cur.expect_ident()
    target_columns: Optional[list[str]] = None
    if cur.peek() and cur.peek().kind == "punct" and cur.peek().value == "(":
        cur.next()
        target_columns = [cur.expect_ident()]
        while True:
            tok = cur.next()
            if tok.kind == "punct" and tok.value == ")":
                break
            if not (tok.kind == "punct" and tok.value == ","):
                raise SqlParseError(f"expected , or ) in column list, found {tok.value!r}")
            target_columns.append(cur.expect_ident())
    cur.expect_kw("SELECT")
    select: list = [_parse_expr(cur)]
    while cur.peek() and cur.peek().kind == "punct" and cur.peek().value == ",":
        cur.next()
        select.append(_parse_expr(cur))

    cur.expect_kw("FROM")
    tables: list[tuple[str, str]] = []
    conditions: list[_Cond] = []

    def table_ref() -> None:
        rel = cur.expect_ident()
        alias = rel
        if cur.at_kw("AS"):
            cur.next()
            alias = cur.expect_ident()
        elif cur.peek() and cur.peek().kind == "ident":
            alias = cur.expect_ident()
        tables.append((rel, alias))

    table_ref()
    while cur.at_kw("JOIN", "CROSS", "INNER", "LEFT"):
        while cur.at_kw("CROSS", "INNER", "LEFT", "OUTER"):
            cur.next()
        cur.expect_kw("JOIN")
        table_ref()
        if cur.at_kw("ON"):
            cur.next()
            conditions.append(_parse_cond(cur))
            while cur.at_kw("AND"):
                cur.next()
                conditions.append(_parse_cond(cur))

    if cur.at_kw("WHERE"):
        cur.next()
        conditions.append(_parse_cond(cur))
        while cur.at_kw("AND"):
            cur.next()
            conditions.append(_parse_cond(cur))

    tok = cur.peek()
    if tok is not None and not (tok.kind == "punct" and tok.value == ";"):
        raise SqlParseError(f"trailing content in statement near {tok.value!r}")
    while cur.peek() is not None and cur.peek().kind == "punct" and cur.peek().value == ";":
        cur.next()

    body_key = (
        tuple(tables),
        tuple(sorted((_expr_key(c.left), c.op, _expr_key(c.right)) for c in conditions)),
    )
    return _Statement(target, target_columns, select, tables, conditions, body_key)


@dataclass
class ParseReport:
    """Rules recovered from a script, plus what could not be recovered."""

    mapping: RuleMapping
    diagnostics: list[str] = field(default_factory=list)

    @property
    def rules(self) -> tuple[Rule, ...]:
        return self.mapping.rules


class _UnionFind:
    def __init__(self):
        self.parent: dict[Any, Any] = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


def _build_rule(
    rule_id: str,
    group: list[_Statement],
    source_schema: SchemaDef,
    target_schema: SchemaDef,
    registry: TransformRegistry,
) -> Rule:
    """Turn statements sharing one body into a rule; raises SqlParseError."""
    body = group[0]
    occ_cols: list[tuple[str, ...]] = []
    for rel, _alias in body.tables:
        if not source_schema.has_relation(rel):
            raise SqlParseError(f"unknown source relation {rel!r}")
        occ_cols.append(source_schema.relation(rel).attribute_names)

    uf = _UnionFind()

    def resolve(ref: _ColRef) -> tuple[int, int]:
        if ref.table is not None:
            for i, (_rel, alias) in enumerate(body.tables):
                if alias == ref.table:
                    if ref.column not in occ_cols[i]:
                        raise SqlParseError(f"{ref.table}.{ref.column}: no such column")
                    return (i, occ_cols[i].index(ref.column))
            raise SqlParseError(f"unknown table alias {ref.table!r}")
        hits = [
            (i, occ_cols[i].index(ref.column))
            for i in range(len(body.tables))
            if ref.column in occ_cols[i]
        ]
        if len(hits) != 1:
            raise SqlParseError(f"column {ref.column!r} is {'ambiguous' if hits else 'unknown'}")
        return hits[0]

    filters: list[tuple] = []  # deferred: (left, op, right) with slots or literals
    for cond in body.conditions:
        if cond.op == "=" and isinstance(cond.left, _ColRef) and isinstance(cond.right, _ColRef):
            uf.union(resolve(cond.left), resolve(cond.right))
        else:
            filters.append((cond.left, cond.op, cond.right))

    # Name universal variables by first occurrence over (occurrence, position).
    var_names: dict[tuple[int, int], str] = {}
    order: list[str] = []
    for i in range(len(body.tables)):
        for pos in range(len(occ_cols[i])):
            root = uf.find((i, pos))
            if root not in var_names:
                var_names[root] = f"v{len(var_names) + 1}"
                order.append(var_names[root])

    def slot_var(slot: tuple[int, int]) -> Variable:
        return Variable(var_names[uf.find(slot)])

    source_atoms = tuple(
        Atom(rel, tuple(slot_var((i, pos)) for pos in range(len(occ_cols[i]))))
        for i, (rel, _alias) in enumerate(body.tables)
    )

    existentials: dict[tuple, str] = {}  # canonical surrogate args -> var name

    def surrogate_var(fn: _Func) -> Variable:
        key = tuple(_canon_arg(a) for a in fn.args)
        if key not in existentials:
            name = None
            if len(fn.args) >= 2 and isinstance(fn.args[1], _Literal) and isinstance(fn.args[1].value, str):
                candidate = fn.args[1].value
                if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", candidate) and candidate not in set(
                    existentials.values()
                ) | set(order):
                    name = candidate
            existentials[key] = name or f"y{len(existentials) + 1}"
        return Variable(existentials[key])

    def _canon_arg(e) -> tuple:
        if isinstance(e, _Literal):
            return ("lit", repr(e.value))
        if isinstance(e, _ColRef):
            return ("var", slot_var(resolve(e)).name)
        return ("fn", e.name.lower(), tuple(_canon_arg(a) for a in e.args))

    fresh_count = [0]

    def fresh_existential() -> Variable:
        fresh_count[0] += 1
        name = f"u{fresh_count[0]}"
        existentials[("fresh", rule_id, fresh_count[0])] = name
        return Variable(name)

    def to_term(e) -> Term:
        if isinstance(e, _Literal):
            if e.value is None:
                return fresh_existential()  # bare NULL models "unknown"
            return Constant(e.value)
        if isinstance(e, _ColRef):
            return slot_var(resolve(e))
        if e.name.upper() == SURROGATE_FN:
            return surrogate_var(e)
        name = e.name.lower()
        if not registry.knows(name):
            raise SqlParseError(f"unknown function {e.name!r}")
        arity = registry.arity(name)
        if arity is not None and len(e.args) != arity:
            raise SqlParseError(f"function {e.name} expects {arity} arguments, got {len(e.args)}")
        return Transform(name, tuple(to_term(a) for a in e.args))

    target_atoms = []
    for stmt in group:
        if not target_schema.has_relation(stmt.target):
            raise SqlParseError(f"unknown target relation {stmt.target!r}")
        rel = target_schema.relation(stmt.target)
        cols = stmt.target_columns or list(rel.attribute_names)
        unknown = [c for c in cols if c not in rel.attribute_names]
        if unknown:
            raise SqlParseError(f"{stmt.target}: unknown columns {unknown}")
        if len(cols) != len(set(cols)):
            raise SqlParseError(f"{stmt.target}: duplicate columns in INSERT list")
        if len(stmt.select) != len(cols):
            raise SqlParseError(
                f"{stmt.target}: {len(stmt.select)} select expressions for {len(cols)} columns"
            )
        by_col = dict(zip(cols, stmt.select))
        terms = []
        for col in rel.attribute_names:
            if col in by_col:
                terms.append(to_term(by_col[col]))
            else:
                terms.append(fresh_existential())  # unlisted column: unknown
        target_atoms.append(Atom(stmt.target, tuple(terms)))

    filter_preds = tuple(
        FilterPred(_filter_term(left, resolve, slot_var, registry), op, _filter_term(right, resolve, slot_var, registry))
        for left, op, right in filters
    )
    return Rule(
        id=rule_id,
        universals=tuple(order),
        source_atoms=source_atoms,
        filters=filter_preds,
        existentials=tuple(existentials.values()),
        target_atoms=tuple(target_atoms),
    )


def _filter_term(e, resolve, slot_var, registry: TransformRegistry) -> Term:
    if isinstance(e, _Literal):
        return Constant(e.value)
    if isinstance(e, _ColRef):
        return slot_var(resolve(e))
    name = e.name.lower()
    if not registry.knows(name):
        raise SqlParseError(f"unknown function {e.name!r} in filter")
    return Transform(name, tuple(_filter_term(a, resolve, slot_var, registry) for a in e.args))


_FENCE_RE = re.compile(r"```[a-zA-Z]*\n(.*?)```", re.DOTALL)
_INSERT_RE = re.compile(r"insert\s+into", re.IGNORECASE)


def extract_sql_script(text: str) -> str:
    """Pull the script out of a model response.

    The last fenced code block containing an INSERT wins (reasoning precedes
    the answer); without fences, everything from the first INSERT onward.
    """
    for block in reversed([m.group(1) for m in _FENCE_RE.finditer(text)]):
        if _INSERT_RE.search(block):
            return block
    m = _INSERT_RE.search(text)
    return text[m.start():] if m else text


def parse_rule_script(
    text: str,
    source_schema: SchemaDef,
    target_schema: SchemaDef,
    registry: Optional[TransformRegistry] = None,
    extract: bool = True,
) -> ParseReport:
    """Parse the INSERT...SELECT subset; unparseable statements become diagnostics."""
    registry = registry or TransformRegistry()
    if extract:
        text = extract_sql_script(text)
    if not text.strip():
        return ParseReport(
            mapping=RuleMapping(rules=(), source_schema=source_schema, target_schema=target_schema),
            diagnostics=[],
        )
    try:
        toks = _lex(text)
    except SqlParseError as exc:
        return ParseReport(
            mapping=RuleMapping(rules=(), source_schema=source_schema, target_schema=target_schema),
            diagnostics=[f"script unreadable: {exc}"],
        )

    # Statement boundaries: INSERT keyword starts one, next INSERT ends it.
    starts = [i for i, t in enumerate(toks) if t.kind == "kw" and t.value == "INSERT"]
    diagnostics: list[str] = []
    statements: list[_Statement] = []
    if toks and not starts:
        diagnostics.append("no INSERT statements found")
    for n, start in enumerate(starts):
        end = starts[n + 1] if n + 1 < len(starts) else len(toks)
        cur = _Cursor(toks, start, end)
        try:
            stmt = _parse_statement(cur)
            if cur.peek() is not None:
                raise SqlParseError(f"trailing content near {cur.peek().value!r}")
            statements.append(stmt)
        except SqlParseError as exc:
            diagnostics.append(f"statement {n + 1}: {exc}")

    # Merge consecutive statements with identical bodies into one rule.
    groups: list[list[_Statement]] = []
    for stmt in statements:
        if groups and groups[-1][0].body_key == stmt.body_key:
            groups[-1].append(stmt)
        else:
            groups.append([stmt])

    rules: list[Rule] = []
    for group in groups:
        rule_id = f"rule{len(rules) + 1}"
        try:
            rules.append(_build_rule(rule_id, group, source_schema, target_schema, registry))
        except SqlParseError as exc:
            targets = ", ".join(s.target for s in group)
            diagnostics.append(f"statements for {targets}: {exc}")

    mapping = RuleMapping(rules=tuple(rules), source_schema=source_schema, target_schema=target_schema)
    return ParseReport(mapping=mapping, diagnostics=diagnostics)
