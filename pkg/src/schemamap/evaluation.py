"""Quantitative procedures: ranked-match metrics, synthetic eval instances,
table/join overlap scoring, prompt chunk planning, and the rules-per-prompt
cost/quality sweep.

Overlap scoring compares a predicted target instance against a gold one by
running the same projection or join query over both row sets and doing exact
set arithmetic: FP = predicted minus gold, FN = gold minus predicted, TP = the
intersection. Key and reference columns are projected away first — generated
keys have no semantic content, only the links they establish matter — which is
exactly why a perfect per-table score can coexist with a broken join score.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

from scipy import stats

from .chase import chase
from .gateway import CompletionRequest, Gateway
from .model import BroadType, Correspondence, Instance, RelationDef, SchemaDef
from .pipeline import MatchResult
from .prompts import TransformOptions, build_mapgen_prompt, derive_seed
from .rules import Rule, RuleMapping, relations_of_rule
from .sqlscript import parse_rule_script
from .transforms import TransformRegistry

logger = logging.getLogger(__name__)


# --- ranked-alignment metrics ---------------------------------------------------


@dataclass(frozen=True)
class RankedMetrics:
    precision: float
    recall: float
    f1: float


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if (p + r) > 0 else 0.0


def metrics_at_k(
    result: MatchResult,
    gold: Iterable[Correspondence],
    k: Union[int, str],
) -> RankedMetrics:
    """Precision/recall/F1 over the top-k predictions per target attribute.

    k="max" scores the full ranked lists. Raises on empty gold (recall is
    undefined without ground truth).
    """
    gold_set = set(gold)
    if not gold_set:
        raise ValueError("gold alignment is empty; recall undefined")
    if isinstance(k, str):
        if k != "max":
            raise ValueError(f"k must be a positive integer or 'max', got {k!r}")
        cutoff: Optional[int] = None
    else:
        if k < 1:
            raise ValueError("k must be >= 1")
        cutoff = k
    preds = result.top_k(cutoff)
    tp = len(preds & gold_set)
    precision = tp / len(preds) if preds else 0.0
    recall = tp / len(gold_set)
    return RankedMetrics(precision, recall, _f1(precision, recall))


def macro_metrics_at_k(
    pairs: Sequence[tuple[MatchResult, Iterable[Correspondence]]],
    k: Union[int, str],
) -> RankedMetrics:
    """Macro-average of metrics_at_k across schema pairs."""
    if not pairs:
        raise ValueError("no schema pairs to average")
    scores = [metrics_at_k(result, gold, k) for result, gold in pairs]
    n = len(scores)
    return RankedMetrics(
        sum(s.precision for s in scores) / n,
        sum(s.recall for s in scores) / n,
        sum(s.f1 for s in scores) / n,
    )


def accuracy_at_1(result: MatchResult, gold: Iterable[Correspondence]) -> float:
    """P@1 restricted to target attributes that have at least one gold match."""
    gold_set = set(gold)
    matched_attrs = {p.target[1] for p in gold_set}
    correct = total = 0
    for attr, ranked in result.ranked.items():
        if attr not in matched_attrs or not ranked:
            continue
        total += 1
        if ranked[0].pair in gold_set:
            correct += 1
    return correct / total if total else 0.0


def load_alignment(source: Union[str, Path, list]) -> set[Correspondence]:
    docs = source if isinstance(source, list) else json.loads(Path(source).read_text(encoding="utf-8"))
    return {Correspondence(tuple(d["source"]), tuple(d["target"])) for d in docs}


def save_alignment(pairs: Iterable[Correspondence], path: Union[str, Path]) -> None:
    docs = [
        {"source": list(p.source), "target": list(p.target)}
        for p in sorted(pairs, key=lambda c: (c.source, c.target))
    ]
    Path(path).write_text(json.dumps(docs, indent=2) + "\n", encoding="utf-8")


# --- synthetic evaluation instances ----------------------------------------------

_WORDS = (
    "amber", "basil", "cedar", "delta", "ember", "fjord", "garnet", "hazel",
    "iris", "jasper", "kite", "lumen", "maple", "nectar", "onyx", "pearl",
    "quartz", "raven", "sage", "topaz", "umber", "violet", "willow", "zephyr",
)


def _toposort(schema: SchemaDef) -> list[RelationDef]:
    remaining = {r.name: {fk.ref_relation for fk in r.foreign_keys if fk.ref_relation != r.name}
                 for r in schema.relations}
    order: list[str] = []
    while remaining:
        ready = sorted(name for name, deps in remaining.items() if deps <= set(order))
        if not ready:  # FK cycle: emit the rest in name order
            ready = sorted(remaining)
        for name in ready:
            order.append(name)
            del remaining[name]
    return [schema.relation(n) for n in order]


def generate_eval_instance(
    schema: SchemaDef,
    rows_per_table: int = 100,
    null_prob: float = 0.1,
    orphan_prob: float = 0.1,
    seed: int = 0,
) -> Instance:
    """Seeded synthetic rows respecting keys and declared broad types.

    Nullable non-key attributes become NULL with probability null_prob. With
    probability orphan_prob a parent row is withheld from the foreign-key pool
    (it ends up with no children); nullable foreign keys are additionally
    dropped to NULL with the same probability, leaving child rows without
    parents.
    """
    if not (0.0 <= null_prob <= 1.0 and 0.0 <= orphan_prob <= 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    rng = random.Random(seed)
    rows: dict[str, set[tuple]] = {r.name: set() for r in schema.relations}
    fk_pools: dict[str, list[tuple]] = {}  # relation -> parent rows offered to children

    def fresh_value(attr, rel_name: str, i: int, unique: bool):
        if unique:
            if attr.broad_type == BroadType.NUMERIC:
                return i + 1
            return f"{rel_name}_{attr.name}_{i + 1}"
        if attr.broad_type == BroadType.NUMERIC:
            return rng.randrange(0, 10000)
        if attr.broad_type == BroadType.BOOLEAN:
            return rng.random() < 0.5
        if attr.broad_type == BroadType.DATETIME:
            return f"{1980 + rng.randrange(45)}-{rng.randrange(1, 13):02d}-{rng.randrange(1, 29):02d}"
        return f"{rng.choice(_WORDS)}_{rng.randrange(1000)}"

    for rel in _toposort(schema):
        cols = rel.attribute_names
        idx = {c: i for i, c in enumerate(cols)}
        pk = set(rel.primary_key)
        fk_cols = {c for fk in rel.foreign_keys for c in fk.columns}
        seen_pk: set[tuple] = set()
        pool: list[tuple] = []
        for i in range(rows_per_table):
            for _attempt in range(50):
                row: list = [None] * len(cols)
                for fk in rel.foreign_keys:
                    parents = fk_pools.get(fk.ref_relation, [])
                    nullable_fk = all(rel.attribute(c).nullable for c in fk.columns)
                    if (nullable_fk and rng.random() < orphan_prob) or not parents:
                        for c in fk.columns:
                            row[idx[c]] = None
                        continue
                    parent = parents[rng.randrange(len(parents))]
                    ref_rel = schema.relation(fk.ref_relation)
                    ref_idx = {c: j for j, c in enumerate(ref_rel.attribute_names)}
                    for local, ref in zip(fk.columns, fk.ref_columns):
                        row[idx[local]] = parent[ref_idx[ref]]
                for attr in rel.attributes:
                    j = idx[attr.name]
                    if attr.name in fk_cols:
                        continue
                    if attr.name in pk:
                        row[j] = fresh_value(attr, rel.name, i, unique=True)
                    else:
                        if attr.nullable and rng.random() < null_prob:
                            row[j] = None
                        else:
                            row[j] = fresh_value(attr, rel.name, i, unique=False)
                pk_tuple = tuple(row[idx[c]] for c in rel.primary_key)
                candidate = tuple(row)
                if candidate in rows[rel.name] or (rel.primary_key and pk_tuple in seen_pk):
                    continue
                rows[rel.name].add(candidate)
                if rel.primary_key:
                    seen_pk.add(pk_tuple)
                if not (rng.random() < orphan_prob):
                    pool.append(candidate)
                break
            else:
                logger.warning("%s: gave up generating distinct row %d", rel.name, i)
        fk_pools[rel.name] = pool

    return Instance(
        columns={r.name: r.attribute_names for r in schema.relations},
        rows={name: frozenset(rs) for name, rs in rows.items()},
    )


# --- row-set arithmetic -----------------------------------------------------------


@dataclass(frozen=True)
class QueryScore:
    query_id: str
    fp: int
    fn: int
    tp: int
    precision: float
    recall: float
    f1: float


def row_set_metrics(predicted_rows: Iterable[tuple], gold_rows: Iterable[tuple]) -> QueryScore:
    """Exact FP/FN/TP set arithmetic over projected row tuples.

    Row identity is positional; NULL equals NULL and a labeled null equals
    only a labeled null with the same id.
    """
    predicted = set(predicted_rows)
    gold = set(gold_rows)
    fp = len(predicted - gold)
    fn = len(gold - predicted)
    tp = len(gold & predicted)
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    return QueryScore("", fp, fn, tp, precision, recall, _f1(precision, recall))


@dataclass(frozen=True)
class OverlapScore:
    per_query: tuple[QueryScore, ...]

    @property
    def mean_precision(self) -> float:
        return sum(q.precision for q in self.per_query) / len(self.per_query) if self.per_query else 0.0

    @property
    def mean_recall(self) -> float:
        return sum(q.recall for q in self.per_query) / len(self.per_query) if self.per_query else 0.0

    @property
    def mean_f1(self) -> float:
        return sum(q.f1 for q in self.per_query) / len(self.per_query) if self.per_query else 0.0


def _project(instance: Instance, relation: str, columns: Sequence[str]) -> set[tuple]:
    cols = instance.columns[relation]
    idx = [cols.index(c) for c in columns]
    return {tuple(row[i] for i in idx) for row in instance.rows.get(relation, frozenset())}


def table_overlap(predicted: Instance, gold: Instance, schema: SchemaDef) -> OverlapScore:
    """Per-relation overlap after projecting away key and reference columns.

    Relations empty in both instances are excluded so untouched target tables
    cannot inflate the average.
    """
    scores = []
    for rel in schema.relations:
        non_key = [c for c in rel.attribute_names if c not in rel.key_columns()]
        pred = _project(predicted, rel.name, non_key)
        gld = _project(gold, rel.name, non_key)
        if not pred and not gld:
            continue
        scores.append(replace(row_set_metrics(pred, gld), query_id=rel.name))
    return OverlapScore(tuple(scores))


def _join_instance(instance: Instance, relations: Sequence[str], schema: SchemaDef) -> set[tuple]:
    """Natural join of the given relations along declared FK links, then
    projection onto all their non-key columns. NULL never joins NULL."""
    order = sorted(relations)

    def namespaced(rel: str) -> list[dict[str, Any]]:
        cols = instance.columns[rel]
        return [
            {f"{rel}.{c}": v for c, v in zip(cols, row)}
            for row in instance.rows.get(rel, frozenset())
        ]

    def links_between(a: str, b: str) -> list[tuple[str, str]]:
        pairs = []
        for fk in schema.relation(a).foreign_keys:
            if fk.ref_relation == b:
                pairs.extend((f"{a}.{l}", f"{b}.{r}") for l, r in zip(fk.columns, fk.ref_columns))
        for fk in schema.relation(b).foreign_keys:
            if fk.ref_relation == a:
                pairs.extend((f"{b}.{l}", f"{a}.{r}") for l, r in zip(fk.columns, fk.ref_columns))
        return pairs

    placed = [order[0]]
    current = namespaced(order[0])
    pending = list(order[1:])
    while pending:
        chosen = None
        links: list[tuple[str, str]] = []
        for rel in pending:
            links = [pair for done in placed for pair in links_between(rel, done)]
            if links:
                chosen = rel
                break
        if chosen is None:
            chosen = pending[0]
            links = []
            logger.warning("join over %s: %s has no FK link; using cross product", order, chosen)
        pending.remove(chosen)
        placed.append(chosen)
        right_rows = namespaced(chosen)
        if links:
            # Each link pairs one column of `chosen` with one already-placed column.
            def split(pair: tuple[str, str]) -> tuple[str, str]:
                l, r = pair
                return (l, r) if l.startswith(f"{chosen}.") else (r, l)

            sided = [split(p) for p in links]
            index: dict[tuple, list[dict]] = {}
            for row in right_rows:
                key = tuple(row[mine] for mine, _ in sided)
                if any(v is None for v in key):
                    continue
                index.setdefault(key, []).append(row)
            joined = []
            for row in current:
                key = tuple(row[theirs] for _, theirs in sided)
                if any(v is None for v in key):
                    continue
                for other in index.get(key, ()):
                    merged = dict(row)
                    merged.update(other)
                    joined.append(merged)
            current = joined
        else:
            current = [dict(row, **other) for row in current for other in right_rows]

    out_cols: list[str] = []
    for rel in order:
        rel_def = schema.relation(rel)
        out_cols.extend(
            f"{rel}.{c}" for c in rel_def.attribute_names if c not in rel_def.key_columns()
        )
    return {tuple(row[c] for c in out_cols) for row in current}


def join_overlap(gold_mapping: RuleMapping, predicted: Instance, gold: Instance) -> OverlapScore:
    """Per-gold-rule join queries over the rule's target relations.

    Single-relation rules are dropped (their content is already covered by the
    per-table scores), duplicate queries over the same relation set are scored
    once, and queries empty in both instances are excluded like untouched
    tables are.
    """
    schema = gold_mapping.target_schema
    seen: set[frozenset[str]] = set()
    scores = []
    for rule in gold_mapping.rules:
        _, targets = relations_of_rule(rule)
        if len(targets) < 2 or targets in seen:
            continue
        seen.add(targets)
        pred = _join_instance(predicted, sorted(targets), schema)
        gld = _join_instance(gold, sorted(targets), schema)
        if not pred and not gld:
            continue
        scores.append(replace(row_set_metrics(pred, gld), query_id=" JOIN ".join(sorted(targets))))
    return OverlapScore(tuple(scores))


# --- prompt chunk planning --------------------------------------------------------


@dataclass(frozen=True)
class ChunkPlan:
    mrpp: int
    groups: tuple[tuple[str, ...], ...]  # rule ids per prompt
    group_relations: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]  # deduped (sources, targets)
    savings: Optional[Mapping[str, Any]] = None

    def group_count(self) -> int:
        return len(self.groups)


def _group_relations(rules_by_id: Mapping[str, Rule], group: Sequence[str]) -> tuple[tuple[str, ...], tuple[str, ...]]:
    sources: set[str] = set()
    targets: set[str] = set()
    for rid in group:
        s, t = relations_of_rule(rules_by_id[rid])
        sources |= s
        targets |= t
    return (tuple(sorted(sources)), tuple(sorted(targets)))


def plan_chunks(rules: Sequence[Rule], mrpp: int, seed: int = 0) -> ChunkPlan:
    """Uniformly shuffle rules (seeded) and slice into groups of at most mrpp."""
    if mrpp < 1:
        raise ValueError("mrpp must be >= 1")
    rules_by_id = {r.id: r for r in rules}
    ids = [r.id for r in rules]
    rng = random.Random(seed)
    rng.shuffle(ids)
    groups = tuple(tuple(ids[i : i + mrpp]) for i in range(0, len(ids), mrpp))
    return ChunkPlan(
        mrpp=mrpp,
        groups=groups,
        group_relations=tuple(_group_relations(rules_by_id, g) for g in groups),
    )


def _relation_load(plan_groups: Sequence[Sequence[str]], rules_by_id: Mapping[str, Rule]) -> int:
    """Total relations serialized across prompts (each counted once per prompt)."""
    total = 0
    for group in plan_groups:
        sources, targets = _group_relations(rules_by_id, group)
        total += len(sources) + len(targets)
    return total


def plan_chunks_overlap_aware(rules: Sequence[Rule], mrpp: int) -> ChunkPlan:
    """Greedy packing that groups rules sharing relations.

    Each group starts from the unassigned rule with the largest relation set
    and grows with the rule sharing the most relations with the group so far
    (ties by rule id), until mrpp. The savings note compares the number of
    serialized relations against seeded random grouping.
    """
    if mrpp < 1:
        raise ValueError("mrpp must be >= 1")
    rules_by_id = {r.id: r for r in rules}
    rel_sets = {
        r.id: set().union(*relations_of_rule(r)) for r in rules
    }
    unassigned = sorted(rules_by_id)
    groups: list[tuple[str, ...]] = []
    while unassigned:
        start = min(unassigned, key=lambda rid: (-len(rel_sets[rid]), rid))
        group = [start]
        unassigned.remove(start)
        covered = set(rel_sets[start])
        while len(group) < mrpp and unassigned:
            best = min(unassigned, key=lambda rid: (-len(rel_sets[rid] & covered), rid))
            group.append(best)
            unassigned.remove(best)
            covered |= rel_sets[best]
        groups.append(tuple(group))

    baseline = plan_chunks(list(rules), mrpp, seed=0)
    greedy_load = _relation_load(groups, rules_by_id)
    baseline_load = _relation_load(baseline.groups, rules_by_id)
    savings = {
        "relation_serializations": greedy_load,
        "baseline_relation_serializations": baseline_load,
        "saved": baseline_load - greedy_load,
        "per_group": [
            {
                "rules": list(g),
                "relations": len(_group_relations(rules_by_id, g)[0]) + len(_group_relations(rules_by_id, g)[1]),
            }
            for g in groups
        ],
    }
    return ChunkPlan(
        mrpp=mrpp,
        groups=tuple(groups),
        group_relations=tuple(_group_relations(rules_by_id, g) for g in groups),
        savings=savings,
    )


# --- the rules-per-prompt sweep -----------------------------------------------------


@dataclass(frozen=True)
class MrppCell:
    mrpp: int
    seed: int
    prompts: int
    parsed_rules: int
    diagnostics: int
    table: OverlapScore
    join: OverlapScore
    input_tokens: int
    output_tokens: int

    @property
    def total_tokens(self) -> int:
        return self.input_tokens + self.output_tokens


@dataclass(frozen=True)
class MrppSummaryRow:
    mrpp: int
    runs: int
    precision_mean: float
    precision_ci: float
    recall_mean: float
    recall_ci: float
    f1_mean: float
    f1_ci: float
    join_f1_mean: float
    input_tokens_mean: float
    output_tokens_mean: float
    total_tokens_mean: float
    reduction: Optional[float]  # total tokens at mrpp=1 over our total


@dataclass
class MrppReport:
    cells: list[MrppCell]
    summary: list[MrppSummaryRow]
    degenerate_ci: bool = False  # single repeat: intervals collapse to points

    def total_tokens(self) -> int:
        return sum(c.total_tokens for c in self.cells)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["mrpp", "seed", "precision", "recall", "f1",
             "input_tokens", "output_tokens", "join_precision", "join_recall", "join_f1"]
        )
        for c in self.cells:
            writer.writerow(
                [c.mrpp, c.seed,
                 f"{c.table.mean_precision:.6f}", f"{c.table.mean_recall:.6f}", f"{c.table.mean_f1:.6f}",
                 c.input_tokens, c.output_tokens,
                 f"{c.join.mean_precision:.6f}", f"{c.join.mean_recall:.6f}", f"{c.join.mean_f1:.6f}"]
            )
        return buf.getvalue()

    def to_text(self) -> str:
        lines = ["MRPP  runs  P(mean±ci)       R(mean±ci)       F1(mean±ci)      joinF1   input    output   total    reduction"]
        for row in self.summary:
            reduction = f"{row.reduction:.2f}" if row.reduction is not None else "--"
            lines.append(
                f"{row.mrpp:<5d} {row.runs:<5d} "
                f"{row.precision_mean:.3f}±{row.precision_ci:.3f}      "
                f"{row.recall_mean:.3f}±{row.recall_ci:.3f}      "
                f"{row.f1_mean:.3f}±{row.f1_ci:.3f}      "
                f"{row.join_f1_mean:.3f}    "
                f"{row.input_tokens_mean:<8.1f} {row.output_tokens_mean:<8.1f} "
                f"{row.total_tokens_mean:<8.1f} {reduction}"
            )
        if self.degenerate_ci:
            lines.append("note: single repeat per cell; confidence intervals are point estimates")
        return "\n".join(lines) + "\n"


def _mean_ci(values: Sequence[float], confidence: float = 0.95) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return (mean, 0.0)
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    half = stats.t.ppf(0.5 + confidence / 2, n - 1) * math.sqrt(var / n)
    return (mean, half)


def run_mrpp_experiment(
    gold_mapping: RuleMapping,
    source_instance: Instance,
    mrpp_range: Sequence[int],
    repeats: int = 1,
    seeds: Optional[Sequence[int]] = None,
    gateway: Optional[Gateway] = None,
    registry: Optional[TransformRegistry] = None,
    values_per_attribute: int = 10,
    max_output_tokens: int = 4096,
) -> MrppReport:
    """Sweep max-rules-per-prompt over seeded repeats and score each cell.

    Per cell: plan chunks, prompt for each chunk, parse the scripts (parse
    failures count as zero-rule prompts), chase the parsed mapping, and score
    table and join overlap against the gold chase output. The summary carries
    means with 95% t-interval half-widths plus token totals and the reduction
    ratio relative to one rule per prompt.
    """
    if gateway is None:
        raise ValueError("gateway required (mock or live)")
    registry = registry or TransformRegistry()
    seed_list = list(seeds) if seeds is not None else list(range(repeats))
    if not seed_list:
        raise ValueError("need at least one seed")

    gold_instance = chase(gold_mapping, source_instance, registry)
    rules_by_id = {r.id: r for r in gold_mapping.rules}
    source_schema = gold_mapping.source_schema
    target_schema = gold_mapping.target_schema

    cells: list[MrppCell] = []
    for mrpp in mrpp_range:
        for seed in seed_list:
            plan = plan_chunks(list(gold_mapping.rules), mrpp, seed)
            in_before = gateway.totals.input_tokens
            out_before = gateway.totals.output_tokens
            parsed: list[Rule] = []
            diagnostics = 0
            for gi, group in enumerate(plan.groups):
                chunks = []
                for rid in group:
                    s_names, t_names = relations_of_rule(rules_by_id[rid])
                    chunks.append(
                        (
                            [source_schema.relation(n) for n in sorted(s_names)],
                            [target_schema.relation(n) for n in sorted(t_names)],
                        )
                    )
                prompt = build_mapgen_prompt(
                    chunks,
                    derive_seed(seed, "mapgen", mrpp, gi),
                    TransformOptions(
                        permute_columns=True, resample_values=True,
                        values_per_attribute=values_per_attribute,
                    ),
                )
                response = gateway.complete(
                    CompletionRequest(
                        prompt=prompt.body,
                        seed=derive_seed(seed, "mapgen-req", mrpp, gi) % (2**31),
                        max_output_tokens=max_output_tokens,
                    )
                )
                report = parse_rule_script(response.text, source_schema, target_schema, registry)
                diagnostics += len(report.diagnostics)
                for rule in report.rules:
                    parsed.append(replace(rule, id=f"p{gi}_{rule.id}"))

            predicted_mapping = RuleMapping(
                rules=tuple(parsed), source_schema=source_schema, target_schema=target_schema
            )
            predicted = chase(predicted_mapping, source_instance, registry)
            cells.append(
                MrppCell(
                    mrpp=mrpp,
                    seed=seed,
                    prompts=plan.group_count(),
                    parsed_rules=len(parsed),
                    diagnostics=diagnostics,
                    table=table_overlap(predicted, gold_instance, target_schema),
                    join=join_overlap(gold_mapping, predicted, gold_instance),
                    input_tokens=gateway.totals.input_tokens - in_before,
                    output_tokens=gateway.totals.output_tokens - out_before,
                )
            )

    summary: list[MrppSummaryRow] = []
    totals_by_mrpp: dict[int, float] = {}
    for mrpp in mrpp_range:
        group = [c for c in cells if c.mrpp == mrpp]
        totals_by_mrpp[mrpp] = sum(c.total_tokens for c in group) / len(group)
    base_total = totals_by_mrpp.get(1)
    for mrpp in mrpp_range:
        group = [c for c in cells if c.mrpp == mrpp]
        p_mean, p_ci = _mean_ci([c.table.mean_precision for c in group])
        r_mean, r_ci = _mean_ci([c.table.mean_recall for c in group])
        f_mean, f_ci = _mean_ci([c.table.mean_f1 for c in group])
        jf_mean, _ = _mean_ci([c.join.mean_f1 for c in group])
        total_mean = totals_by_mrpp[mrpp]
        summary.append(
            MrppSummaryRow(
                mrpp=mrpp,
                runs=len(group),
                precision_mean=p_mean, precision_ci=p_ci,
                recall_mean=r_mean, recall_ci=r_ci,
                f1_mean=f_mean, f1_ci=f_ci,
                join_f1_mean=jf_mean,
                input_tokens_mean=sum(c.input_tokens for c in group) / len(group),
                output_tokens_mean=sum(c.output_tokens for c in group) / len(group),
                total_tokens_mean=total_mean,
                reduction=(base_total / total_mean) if (base_total and mrpp != 1 and total_mean) else None,
            )
        )
    return MrppReport(cells=cells, summary=summary, degenerate_ci=len(seed_list) < 2)
