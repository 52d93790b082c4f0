"""Relational schema metadata, attribute hints, and instance data.

Schemata are loaded from JSON documents (see ``load_schema``) into immutable
dataclasses. Instance data distinguishes three value kinds: ordinary constants
(strings/numbers/bools), NULL (``None``, meaning "no information"), and
``LabeledNull`` surrogates that link rows produced together and compare only
by their id.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Union

SAMPLE_VALUE_MAX_LEN = 100


class SchemaError(ValueError):
    """Malformed schema document or broken structural invariant."""


class InstanceError(ValueError):
    """Instance rows do not conform to their schema."""


class BroadType(str, Enum):
    NUMERIC = "Numeric"
    TEXT = "Text"
    DATETIME = "DateTime"
    BOOLEAN = "Boolean"
    OTHER = "Other"


_NUMERIC_TYPES = {
    "int", "integer", "bigint", "smallint", "tinyint", "mediumint",
    "serial", "bigserial", "smallserial", "decimal", "dec", "numeric",
    "float", "float4", "float8", "real", "double", "number", "long", "money",
}
_TEXT_TYPES = {
    "char", "varchar", "varchar2", "nchar", "nvarchar", "character",
    "text", "string", "str", "tinytext", "mediumtext", "longtext",
    "clob", "citext",
}
_DATETIME_TYPES = {
    "date", "time", "datetime", "datetime2", "smalldatetime",
    "timestamp", "timestamptz", "timetz",
}
_BOOLEAN_TYPES = {"bool", "boolean", "bit"}


def classify_broad_type(declared_type: str) -> BroadType:
    """Map a free-form SQL type string onto one of five broad categories.

    Classification is case-insensitive and keys on the leading word of the
    declaration with any parenthesized arguments stripped ("VARCHAR(255)" ->
    "varchar"). Unknown types map to OTHER, which downstream consumers treat
    as "do not prefilter".
    """
    base = declared_type.split("(", 1)[0].strip().lower()
    base = base.split()[0] if base else ""
    if base in _NUMERIC_TYPES:
        return BroadType.NUMERIC
    if base in _TEXT_TYPES:
        return BroadType.TEXT
    if base in _DATETIME_TYPES:
        return BroadType.DATETIME
    if base in _BOOLEAN_TYPES:
        return BroadType.BOOLEAN
    return BroadType.OTHER


def _truncate(value: str) -> str:
    return value[:SAMPLE_VALUE_MAX_LEN]


@dataclass(frozen=True)
class AttributeDef:
    """One column: declared type, nullability, and optional hints."""

    name: str
    declared_type: str = ""
    broad_type: BroadType = None  # type: ignore[assignment]  # derived when omitted
    nullable: bool = True
    description: Optional[str] = None
    sample_values: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise SchemaError("attribute name must be non-empty")
        if self.broad_type is None:
            object.__setattr__(self, "broad_type", classify_broad_type(self.declared_type))
        # Truncate at ingestion so every consumer sees identical values;
        # dedup afterwards since truncation can introduce collisions.
        seen: dict[str, None] = {}
        for v in self.sample_values:
            seen.setdefault(_truncate(str(v)))
        object.__setattr__(self, "sample_values", tuple(seen))


@dataclass(frozen=True)
class ForeignKey:
    columns: tuple[str, ...]
    ref_relation: str
    ref_columns: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "ref_columns", tuple(self.ref_columns))
        if len(self.columns) != len(self.ref_columns):
            raise SchemaError(
                f"foreign key to {self.ref_relation}: local columns {self.columns} "
                f"and referenced columns {self.ref_columns} differ in length"
            )


@dataclass(frozen=True)
class RelationDef:
    name: str
    attributes: tuple[AttributeDef, ...] = ()
    primary_key: tuple[str, ...] = ()
    foreign_keys: tuple[ForeignKey, ...] = ()
    description: Optional[str] = None

    def __post_init__(self):
        if not self.name:
            raise SchemaError("relation name must be non-empty")
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "primary_key", tuple(self.primary_key))
        object.__setattr__(self, "foreign_keys", tuple(self.foreign_keys))
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError(f"relation {self.name}: duplicate attribute names")
        missing = [c for c in self.primary_key if c not in names]
        if missing:
            raise SchemaError(f"relation {self.name}: primary key columns {missing} not declared")
        for fk in self.foreign_keys:
            bad = [c for c in fk.columns if c not in names]
            if bad:
                raise SchemaError(f"relation {self.name}: foreign key columns {bad} not declared")

    @property
    def attribute_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def attribute(self, name: str) -> AttributeDef:
        for a in self.attributes:
            if a.name == name:
                return a
        raise SchemaError(f"relation {self.name} has no attribute {name!r}")

    @property
    def arity(self) -> int:
        return len(self.attributes)

    def key_columns(self) -> frozenset[str]:
        """Primary key plus foreign key reference columns."""
        cols = set(self.primary_key)
        for fk in self.foreign_keys:
            cols.update(fk.columns)
        return frozenset(cols)


@dataclass(frozen=True)
class SchemaDef:
    name: str
    relations: tuple[RelationDef, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "relations", tuple(self.relations))
        names = [r.name for r in self.relations]
        if len(set(names)) != len(names):
            raise SchemaError(f"schema {self.name}: duplicate relation names")
        by_name = {r.name: r for r in self.relations}
        for rel in self.relations:
            for fk in rel.foreign_keys:
                target = by_name.get(fk.ref_relation)
                if target is None:
                    raise SchemaError(
                        f"relation {rel.name}: foreign key references missing relation {fk.ref_relation!r}"
                    )
                bad = [c for c in fk.ref_columns if c not in target.attribute_names]
                if bad:
                    raise SchemaError(
                        f"relation {rel.name}: foreign key references missing columns {bad} of {fk.ref_relation}"
                    )

    def relation(self, name: str) -> RelationDef:
        for r in self.relations:
            if r.name == name:
                return r
        raise SchemaError(f"schema {self.name} has no relation {name!r}")

    def has_relation(self, name: str) -> bool:
        return any(r.name == name for r in self.relations)


@dataclass(frozen=True)
class Correspondence:
    """An asserted semantic match between one source and one target attribute."""

    source: tuple[str, str]  # (relation, attribute)
    target: tuple[str, str]

    def __post_init__(self):
        object.__setattr__(self, "source", tuple(self.source))
        object.__setattr__(self, "target", tuple(self.target))

    def resolve(self, source_schema: SchemaDef, target_schema: SchemaDef) -> None:
        source_schema.relation(self.source[0]).attribute(self.source[1])
        target_schema.relation(self.target[0]).attribute(self.target[1])

    def as_strings(self) -> tuple[str, str]:
        return (f"{self.source[0]}.{self.source[1]}", f"{self.target[0]}.{self.target[1]}")


@dataclass(frozen=True)
class LabeledNull:
    """Generated surrogate; equal only to a LabeledNull with the same id."""

    nid: str

    def __repr__(self) -> str:
        return f"LabeledNull({self.nid})"


Value = Union[str, int, float, bool, None, LabeledNull]
Row = tuple  # values ordered by the relation's attributes


def value_sort_key(v: Value) -> tuple:
    """Total order over mixed-kind values, for canonical serialization."""
    if v is None:
        return (0, "")
    if isinstance(v, bool):
        return (1, str(v))
    if isinstance(v, (int, float)):
        return (2, "", float(v))
    if isinstance(v, LabeledNull):
        return (4, v.nid)
    return (3, str(v))


def row_sort_key(row: Row) -> tuple:
    return tuple(value_sort_key(v) for v in row)


def _encode_value(v: Value) -> Any:
    if isinstance(v, LabeledNull):
        return {"$null_id": v.nid}
    return v


def _decode_value(v: Any) -> Value:
    if isinstance(v, dict):
        if set(v.keys()) == {"$null_id"}:
            return LabeledNull(str(v["$null_id"]))
        raise InstanceError(f"unrecognized value object {v!r}")
    return v


@dataclass(frozen=True)
class Instance:
    """Per-relation row sets over constants, NULLs, and labeled nulls."""

    columns: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    rows: Mapping[str, frozenset[Row]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "columns", dict(self.columns))
        object.__setattr__(self, "rows", {r: frozenset(rs) for r, rs in self.rows.items()})

    @classmethod
    def empty(cls, schema: SchemaDef) -> "Instance":
        return cls(
            columns={r.name: r.attribute_names for r in schema.relations},
            rows={r.name: frozenset() for r in schema.relations},
        )

    @classmethod
    def from_dicts(
        cls, schema: SchemaDef, data: Mapping[str, Iterable[Mapping[str, Value]]]
    ) -> "Instance":
        columns = {r.name: r.attribute_names for r in schema.relations}
        rows: dict[str, set[Row]] = {r.name: set() for r in schema.relations}
        for rel_name, rel_rows in data.items():
            if rel_name not in columns:
                raise InstanceError(f"instance mentions unknown relation {rel_name!r}")
            expected = columns[rel_name]
            for row in rel_rows:
                if set(row.keys()) != set(expected):
                    raise InstanceError(
                        f"row for {rel_name} supplies {sorted(row)} "
                        f"but the relation declares {sorted(expected)}"
                    )
                rows[rel_name].add(tuple(row[c] for c in expected))
        return cls(columns=columns, rows={k: frozenset(v) for k, v in rows.items()})

    def dict_rows(self, relation: str) -> list[dict[str, Value]]:
        cols = self.columns[relation]
        ordered = sorted(self.rows.get(relation, frozenset()), key=row_sort_key)
        return [dict(zip(cols, row)) for row in ordered]

    def row_count(self) -> int:
        return sum(len(rs) for rs in self.rows.values())

    def nonempty_relations(self) -> list[str]:
        return sorted(r for r, rs in self.rows.items() if rs)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            rel: [{c: _encode_value(v) for c, v in row.items()} for row in self.dict_rows(rel)]
            for rel in sorted(self.columns)
        }

    @classmethod
    def from_json_dict(cls, schema: SchemaDef, doc: Mapping[str, Any]) -> "Instance":
        data = {
            rel: [{c: _decode_value(v) for c, v in row.items()} for row in rel_rows]
            for rel, rel_rows in doc.items()
        }
        return cls.from_dicts(schema, data)


def sample_values(attribute: AttributeDef, k: int, seed: int) -> list[str]:
    """Sample up to k distinct values uniformly without replacement.

    Deterministic for a given (attribute, k, seed); every returned value is
    truncated to SAMPLE_VALUE_MAX_LEN characters.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    pool = list(attribute.sample_values)
    if k == 0 or not pool:
        return []
    rng = random.Random(seed)
    picked = rng.sample(pool, min(k, len(pool)))
    return [_truncate(v) for v in picked]


def _attribute_from_dict(doc: Mapping[str, Any]) -> AttributeDef:
    try:
        name = doc["name"]
    except KeyError:
        raise SchemaError("attribute entry missing 'name'") from None
    return AttributeDef(
        name=name,
        declared_type=doc.get("type", ""),
        nullable=bool(doc.get("nullable", True)),
        description=doc.get("description"),
        sample_values=tuple(str(v) for v in doc.get("values", ())),
    )


def schema_from_dict(doc: Mapping[str, Any]) -> SchemaDef:
    if not isinstance(doc, Mapping) or "name" not in doc:
        raise SchemaError("schema document must be an object with a 'name'")
    relations = []
    for rel_doc in doc.get("relations", ()):
        fks = tuple(
            ForeignKey(
                columns=tuple(fk["columns"]),
                ref_relation=fk["ref_relation"],
                ref_columns=tuple(fk["ref_columns"]),
            )
            for fk in rel_doc.get("foreign_keys", ())
        )
        relations.append(
            RelationDef(
                name=rel_doc["name"],
                attributes=tuple(_attribute_from_dict(a) for a in rel_doc.get("attributes", ())),
                primary_key=tuple(rel_doc.get("primary_key", ())),
                foreign_keys=fks,
                description=rel_doc.get("description"),
            )
        )
    return SchemaDef(name=doc["name"], relations=tuple(relations))


def schema_to_dict(schema: SchemaDef) -> dict[str, Any]:
    def attr(a: AttributeDef) -> dict[str, Any]:
        out: dict[str, Any] = {"name": a.name, "type": a.declared_type, "nullable": a.nullable}
        if a.description is not None:
            out["description"] = a.description
        out["values"] = list(a.sample_values)
        return out

    def rel(r: RelationDef) -> dict[str, Any]:
        out: dict[str, Any] = {"name": r.name}
        if r.description is not None:
            out["description"] = r.description
        out["primary_key"] = list(r.primary_key)
        out["foreign_keys"] = [
            {"columns": list(fk.columns), "ref_relation": fk.ref_relation, "ref_columns": list(fk.ref_columns)}
            for fk in r.foreign_keys
        ]
        out["attributes"] = [attr(a) for a in r.attributes]
        return out

    return {"name": schema.name, "relations": [rel(r) for r in schema.relations]}


def load_schema(source: Union[str, Path, Mapping[str, Any]]) -> SchemaDef:
    """Load a schema from a JSON file path or an already-parsed document."""
    if isinstance(source, Mapping):
        return schema_from_dict(source)
    path = Path(source)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    return schema_from_dict(doc)


def save_schema(schema: SchemaDef, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(schema_to_dict(schema), indent=2) + "\n", encoding="utf-8")


def load_instance(schema: SchemaDef, source: Union[str, Path, Mapping[str, Any]]) -> Instance:
    if isinstance(source, Mapping):
        return Instance.from_json_dict(schema, source)
    path = Path(source)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: not valid JSON: {exc}") from exc
    return Instance.from_json_dict(schema, doc)


def save_instance(instance: Instance, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(instance.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
