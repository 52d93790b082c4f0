"""Check a materialized instance against a schema's explicit constraints."""

from __future__ import annotations

import re
from dataclasses import dataclass
from .model import BroadType, Instance, LabeledNull, SchemaDef, Value

_DATE_RE = re.compile(r"\d{4}-\d{2}-\d{2}([ T]\d{2}:\d{2}(:\d{2})?)?$|\d{2}:\d{2}(:\d{2})?$")
_BOOL_WORDS = {"true", "false", "0", "1", "t", "f", "yes", "no"}


@dataclass(frozen=True)
class Violation:
    kind: str  # not_null | broad_type | primary_key | foreign_key | information_free
    relation: str
    detail: str

    def __str__(self) -> str:
        return f"[{self.kind}] {self.relation}: {self.detail}"


def _type_ok(value: Value, broad: BroadType) -> bool:
    if value is None or isinstance(value, LabeledNull):
        return True  # nullability and linkage are separate checks
    if broad in (BroadType.TEXT, BroadType.OTHER):
        return True
    if broad == BroadType.NUMERIC:
        if isinstance(value, bool):
            return False
        if isinstance(value, (int, float)):
            return True
        try:
            float(str(value).strip())
            return True
        except ValueError:
            return False
    if broad == BroadType.BOOLEAN:
        return isinstance(value, bool) or str(value).strip().lower() in _BOOL_WORDS
    if broad == BroadType.DATETIME:
        return bool(_DATE_RE.match(str(value).strip()))
    return True


def _fmt_row(row: tuple, limit: int = 6) -> str:
    shown = ", ".join(repr(v) for v in row[:limit])
    return f"({shown}{', ...' if len(row) > limit else ''})"


def validate_instance(instance: Instance, schema: SchemaDef) -> list[Violation]:
    """Report NOT-NULL, type, key, reference, and information-content violations.

    A row is information-free when every attribute outside the primary key and
    foreign key columns is NULL: the row exists but says nothing.
    """
    violations: list[Violation] = []
    for rel in schema.relations:
        rows = instance.rows.get(rel.name, frozenset())
        if not rows:
            continue
        cols = rel.attribute_names
        idx = {c: i for i, c in enumerate(cols)}
        key_cols = rel.key_columns()
        non_key = [c for c in cols if c not in key_cols]

        pk_seen: dict[tuple, int] = {}
        for row in sorted(rows, key=lambda r: tuple(map(repr, r))):
            for attr in rel.attributes:
                v = row[idx[attr.name]]
                if v is None and not attr.nullable:
                    violations.append(
                        Violation("not_null", rel.name, f"{attr.name} is NULL in {_fmt_row(row)}")
                    )
                elif not _type_ok(v, attr.broad_type):
                    violations.append(
                        Violation(
                            "broad_type",
                            rel.name,
                            f"{attr.name} expects {attr.broad_type.value}, got {v!r}",
                        )
                    )
            if rel.primary_key:
                pk = tuple(row[idx[c]] for c in rel.primary_key)
                pk_seen[pk] = pk_seen.get(pk, 0) + 1
            if non_key and all(row[idx[c]] is None for c in non_key):
                violations.append(
                    Violation("information_free", rel.name, f"only keys populated in {_fmt_row(row)}")
                )

        for pk, count in sorted(pk_seen.items(), key=lambda kv: repr(kv[0])):
            if count > 1:
                violations.append(
                    Violation("primary_key", rel.name, f"key {pk!r} appears in {count} rows")
                )

        for fk in rel.foreign_keys:
            ref_rel = schema.relation(fk.ref_relation)
            ref_idx = {c: i for i, c in enumerate(ref_rel.attribute_names)}
            ref_rows = instance.rows.get(fk.ref_relation, frozenset())
            referenced = {tuple(r[ref_idx[c]] for c in fk.ref_columns) for r in ref_rows}
            for row in sorted(rows, key=lambda r: tuple(map(repr, r))):
                val = tuple(row[idx[c]] for c in fk.columns)
                if any(v is None for v in val):
                    continue  # NULL reference is absence, not danglement
                if val not in referenced:
                    violations.append(
                        Violation(
                            "foreign_key",
                            rel.name,
                            f"{'/'.join(fk.columns)} = {val!r} matches no {fk.ref_relation} row",
                        )
                    )
    return violations
