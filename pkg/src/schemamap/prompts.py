"""Deterministic construction of every prompt the pipelines send.

Prompt bodies are pure functions of (inputs, seed, options): same arguments,
byte-identical text. Variation enters only through seeded transformations —
column order permutation, value resampling, and source/target role swapping —
each of which preserves the underlying task. Instruction wording lives in
template files under templates/, recorded by name and digest in provenance so
a run can always be traced to the exact wording it used.
"""

from __future__ import annotations

import hashlib
import json
import random
import string
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Any, Mapping, Optional, Sequence

from .model import AttributeDef, RelationDef, sample_values

OPTION_LABELS = string.ascii_uppercase


class PromptKind(str, Enum):
    MATCH = "match"
    RANK = "rank"
    MAPGEN = "mapgen"


class Direction(str, Enum):
    FORWARD = "forward"
    SWAPPED = "swapped"


@dataclass(frozen=True)
class TransformOptions:
    """Which symmetric input rewrites to apply when building a prompt."""

    permute_columns: bool = False
    resample_values: bool = False
    swap_tables: bool = False
    values_per_attribute: int = 10

    def __post_init__(self):
        if self.values_per_attribute < 0:
            raise ValueError("values_per_attribute must be >= 0")


@dataclass(frozen=True)
class PromptSpec:
    kind: PromptKind
    body: str
    expected_output: Mapping[str, Any]
    seed: int
    direction: Direction
    provenance: Mapping[str, Any] = field(default_factory=dict)


def derive_seed(*parts: Any) -> int:
    """Stable sub-seed from arbitrary JSON-serializable parts."""
    blob = json.dumps(list(parts), separators=(",", ":"), sort_keys=True, default=str)
    return int.from_bytes(hashlib.sha256(blob.encode("utf-8")).digest()[:8], "big")


def _template(name: str) -> tuple[str, str]:
    text = resources.files("schemamap").joinpath("templates", name).read_text(encoding="utf-8")
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
    return text, digest


def _fill(template: str, **values: str) -> str:
    return string.Template(template).substitute(**values)


def _attribute_doc(attr: AttributeDef, values: Sequence[str]) -> dict[str, Any]:
    return {
        "name": attr.name,
        "type": attr.declared_type or attr.broad_type.value,
        "nullable": attr.nullable,
        "description": attr.description,
        "values": list(values),
    }


def serialize_relation(
    relation: RelationDef,
    seed: int,
    opts: TransformOptions,
    attributes: Optional[Sequence[AttributeDef]] = None,
    include_keys: bool = False,
) -> str:
    """JSON text for one relation, honoring the seeded transformations.

    ``attributes`` restricts the serialized attribute set (used when a
    prefilter has narrowed the candidates); ``include_keys`` adds primary and
    foreign key metadata for mapping-generation prompts.
    """
    attrs = list(attributes if attributes is not None else relation.attributes)
    if opts.permute_columns and len(attrs) > 1:
        rng = random.Random(derive_seed(seed, "permute", relation.name))
        attrs = rng.sample(attrs, len(attrs))

    entries = []
    for attr in attrs:
        if opts.resample_values:
            values = sample_values(
                attr, opts.values_per_attribute, derive_seed(seed, "values", relation.name, attr.name)
            )
        else:
            values = list(attr.sample_values[: opts.values_per_attribute])
        entries.append(_attribute_doc(attr, values))

    doc: dict[str, Any] = {"table": relation.name, "description": relation.description}
    if include_keys:
        doc["primary_key"] = list(relation.primary_key)
        doc["foreign_keys"] = [
            {"columns": list(fk.columns), "references": fk.ref_relation, "ref_columns": list(fk.ref_columns)}
            for fk in relation.foreign_keys
        ]
    doc["attributes"] = entries
    return json.dumps(doc, indent=2)


def _focus_doc(relation: RelationDef, attr: AttributeDef, seed: int, opts: TransformOptions) -> str:
    if opts.resample_values:
        values = sample_values(
            attr, opts.values_per_attribute, derive_seed(seed, "values", relation.name, attr.name)
        )
    else:
        values = list(attr.sample_values[: opts.values_per_attribute])
    return json.dumps({"table": relation.name, "attribute": _attribute_doc(attr, values)}, indent=2)


def build_match_prompt(
    source: RelationDef,
    target_attr: tuple[RelationDef, AttributeDef],
    seed: int,
    opts: TransformOptions,
    candidate_attrs: Optional[Sequence[AttributeDef]] = None,
) -> PromptSpec:
    """N-1 prompt: which of the candidate table's attributes match the focus one.

    With swap_tables set, the pair is presented in exchanged roles (the
    candidate table labeled as the integration target and the focus attribute
    as a source attribute) and the prompt is tagged Swapped.
    """
    focus_rel, focus = target_attr
    attrs = list(candidate_attrs if candidate_attrs is not None else source.attributes)
    if not attrs:
        raise ValueError("match prompt needs at least one candidate attribute")
    template, digest = _template("match.txt")
    candidate_role, focus_role = ("target", "source") if opts.swap_tables else ("source", "target")
    candidate_table = serialize_relation(source, seed, opts, attributes=attrs)
    body = _fill(
        template,
        candidate_role=candidate_role,
        focus_role=focus_role,
        candidate_table=candidate_table,
        focus_attribute=_focus_doc(focus_rel, focus, seed, opts),
    )
    presented = json.loads(candidate_table)["attributes"]
    return PromptSpec(
        kind=PromptKind.MATCH,
        body=body,
        expected_output={
            "type": "match",
            "fields": {"matches": "list[str]"},
            "allowed": [a.name for a in attrs],
        },
        seed=seed,
        direction=Direction.SWAPPED if opts.swap_tables else Direction.FORWARD,
        provenance={
            "template": ("match.txt", digest),
            "candidate_relation": source.name,
            "focus": (focus_rel.name, focus.name),
            "attribute_order": [e["name"] for e in presented],
            "options": {
                "permute_columns": opts.permute_columns,
                "resample_values": opts.resample_values,
                "swap_tables": opts.swap_tables,
                "values_per_attribute": opts.values_per_attribute,
            },
        },
    )


def build_rank_prompt(
    target_attr: tuple[RelationDef, AttributeDef],
    candidates: Sequence[tuple[RelationDef, AttributeDef]],
    seed: int,
) -> PromptSpec:
    """Best-match prompt over labeled candidates; the answer is one letter.

    Labels are single uppercase letters (single-token in common tokenizers);
    their assignment to candidates is permuted per seed and recorded in the
    expected-output contract. A single candidate still yields a prompt so
    confidence stays uniformly defined.
    """
    if not candidates:
        raise ValueError("rank prompt needs at least one candidate")
    if len(candidates) > len(OPTION_LABELS):
        raise ValueError(
            f"{len(candidates)} candidates exceed the {len(OPTION_LABELS)}-label alphabet; shard the call"
        )
    focus_rel, focus = target_attr
    template, digest = _template("rank.txt")
    order = list(range(len(candidates)))
    if len(order) > 1:
        rng = random.Random(derive_seed(seed, "labels", focus_rel.name, focus.name))
        order = rng.sample(order, len(order))

    label_map: dict[str, tuple[str, str]] = {}
    lines = []
    for label_i, cand_i in enumerate(order):
        rel, attr = candidates[cand_i]
        label = OPTION_LABELS[label_i]
        label_map[label] = (rel.name, attr.name)
        doc = {"table": rel.name, "attribute": _attribute_doc(attr, list(attr.sample_values[:10]))}
        lines.append(f"{label}. {json.dumps(doc)}")

    body = _fill(
        template,
        focus_attribute=_focus_doc(focus_rel, focus, seed, TransformOptions()),
        options_block="\n".join(lines),
    )
    return PromptSpec(
        kind=PromptKind.RANK,
        body=body,
        expected_output={"type": "rank", "labels": label_map},
        seed=seed,
        direction=Direction.FORWARD,
        provenance={
            "template": ("rank.txt", digest),
            "focus": (focus_rel.name, focus.name),
            "label_order": [OPTION_LABELS[i] for i in range(len(order))],
            "label_map": {k: list(v) for k, v in label_map.items()},
        },
    )


def build_mapgen_prompt(
    chunks: Sequence[tuple[Sequence[RelationDef], Sequence[RelationDef]]],
    seed: int,
    opts: TransformOptions,
) -> PromptSpec:
    """Mapping-generation prompt covering the chunks' deduplicated relations."""
    if not chunks:
        raise ValueError("mapgen prompt needs at least one chunk")
    source_rels: dict[str, RelationDef] = {}
    target_rels: dict[str, RelationDef] = {}
    for src_list, tgt_list in chunks:
        for r in src_list:
            source_rels.setdefault(r.name, r)
        for r in tgt_list:
            target_rels.setdefault(r.name, r)

    def ordered(rels: dict[str, RelationDef], tag: str) -> list[RelationDef]:
        names = sorted(rels)
        if len(names) > 1:
            rng = random.Random(derive_seed(seed, "relation-order", tag, names))
            names = rng.sample(names, len(names))
        return [rels[n] for n in names]

    src_order = ordered(source_rels, "source")
    tgt_order = ordered(target_rels, "target")
    template, digest = _template("mapgen.txt")
    body = _fill(
        template,
        source_tables="\n".join(serialize_relation(r, seed, opts, include_keys=True) for r in src_order),
        target_tables="\n".join(serialize_relation(r, seed, opts, include_keys=True) for r in tgt_order),
    )
    return PromptSpec(
        kind=PromptKind.MAPGEN,
        body=body,
        expected_output={"type": "script"},
        seed=seed,
        direction=Direction.FORWARD,
        provenance={
            "template": ("mapgen.txt", digest),
            "source_relations": [r.name for r in src_order],
            "target_relations": [r.name for r in tgt_order],
            "chunks": [
                {"sources": sorted(r.name for r in s), "targets": sorted(r.name for r in t)}
                for s, t in chunks
            ],
        },
    )
