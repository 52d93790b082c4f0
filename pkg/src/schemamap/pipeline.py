"""Bidirectional attribute matching: sample, aggregate, score, fuse, rank.

The pipeline prompts the model n times per direction under seeded symmetric
transformations, aggregates the per-sample candidate sets (union / strict
majority / intersection), scores the surviving candidates with a best-match
rank prompt whose option logprobs are softmax-normalized into confidences,
and finally fuses the two directions:

* average keeps every pair, halving the confidence of one-sided ones;
* multiply keeps only pairs confirmed in both directions;
* stable runs iterated deferred acceptance over the two directions'
  preference lists and keeps the top-K stable matches per attribute.

Every stage is deterministic given (inputs, seeds, fixtures); run provenance
records seeds, methods, skip events, fallbacks, and token usage.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

from .gateway import (
    CapabilityError,
    CompletionRequest,
    FormatError,
    Gateway,
    option_logprobs,
    parse_structured,
)
from .model import AttributeDef, BroadType, Correspondence, RelationDef
from .prompts import (
    OPTION_LABELS,
    Direction,
    TransformOptions,
    build_match_prompt,
    build_rank_prompt,
    derive_seed,
)

logger = logging.getLogger(__name__)


class AggregationMethod(str, Enum):
    UNION = "union"
    MAJORITY = "majority"
    INTERSECTION = "intersection"


class FusionMethod(str, Enum):
    AVERAGE = "average"
    MULTIPLY = "multiply"
    STABLE = "stable"


@dataclass(frozen=True)
class CandidateSet:
    direction: Direction
    sample_index: int
    pairs: frozenset[Correspondence]


@dataclass(frozen=True)
class ScoredCandidate:
    pair: Correspondence
    support: int
    conf_forward: Optional[float]
    conf_swapped: Optional[float]
    conf_final: float
    method: str
    stable_round: Optional[int] = None


@dataclass
class MatchConfig:
    n: int = 3
    base_seed: int = 0
    aggregation: AggregationMethod = AggregationMethod.MAJORITY
    fusion: FusionMethod = FusionMethod.MULTIPLY
    stable_k: int = 2
    prefilter: bool = True
    bidirectional: bool = True
    confidence: bool = True
    confidence_rounds: int = 1
    early_stop_gap: Optional[float] = None
    permute_columns: bool = True
    resample_values: bool = True
    values_per_attribute: int = 10
    temperature: float = 0.0
    max_output_tokens: int = 1024
    top_logprobs: int = 20

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.stable_k < 1:
            raise ValueError("stable_k must be >= 1")
        if self.early_stop_gap is not None and not (0.0 <= self.early_stop_gap <= 1.0):
            raise ValueError("early_stop_gap must be within [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        out = dict(self.__dict__)
        out["aggregation"] = self.aggregation.value
        out["fusion"] = self.fusion.value
        return out

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "MatchConfig":
        kwargs = dict(doc)
        if "aggregation" in kwargs:
            kwargs["aggregation"] = AggregationMethod(kwargs["aggregation"])
        if "fusion" in kwargs:
            kwargs["fusion"] = FusionMethod(kwargs["fusion"])
        return cls(**kwargs)


def pair_sort_key(pair: Correspondence) -> tuple[str, str, str, str]:
    return (pair.source[0], pair.source[1], pair.target[0], pair.target[1])


@dataclass
class MatchResult:
    source_relation: str
    target_relation: str
    ranked: dict[str, list[ScoredCandidate]]  # target attribute -> best first
    provenance: dict[str, Any] = field(default_factory=dict)

    def all_candidates(self) -> list[ScoredCandidate]:
        out = []
        for attr in sorted(self.ranked):
            out.extend(self.ranked[attr])
        return out

    def top_k(self, k: Optional[int]) -> set[Correspondence]:
        """Pairs within rank k of some target attribute; k=None means all."""
        out: set[Correspondence] = set()
        for candidates in self.ranked.values():
            take = candidates if k is None else candidates[:k]
            out.update(c.pair for c in take)
        return out

    def to_json_dict(self) -> dict[str, Any]:
        def cand(c: ScoredCandidate) -> dict[str, Any]:
            return {
                "source": list(c.pair.source),
                "target": list(c.pair.target),
                "support": c.support,
                "conf_forward": c.conf_forward,
                "conf_swapped": c.conf_swapped,
                "conf_final": c.conf_final,
                "method": c.method,
                "stable_round": c.stable_round,
            }

        return {
            "source_relation": self.source_relation,
            "target_relation": self.target_relation,
            "ranked": {attr: [cand(c) for c in lst] for attr, lst in sorted(self.ranked.items())},
            "provenance": self.provenance,
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping[str, Any]) -> "MatchResult":
        ranked = {}
        for attr, lst in doc.get("ranked", {}).items():
            ranked[attr] = [
                ScoredCandidate(
                    pair=Correspondence(tuple(c["source"]), tuple(c["target"])),
                    support=c["support"],
                    conf_forward=c["conf_forward"],
                    conf_swapped=c["conf_swapped"],
                    conf_final=c["conf_final"],
                    method=c["method"],
                    stable_round=c.get("stable_round"),
                )
                for c in lst
            ]
        return cls(
            source_relation=doc["source_relation"],
            target_relation=doc["target_relation"],
            ranked=ranked,
            provenance=dict(doc.get("provenance", {})),
        )


def save_match_result(result: MatchResult, path: Union[str, Path]) -> None:
    Path(path).write_text(
        json.dumps(result.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_match_result(path: Union[str, Path]) -> MatchResult:
    return MatchResult.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# --- stage 1: prefilter ---------------------------------------------------------


def prefilter(target_attr: AttributeDef, source_attrs: Sequence[AttributeDef]) -> list[AttributeDef]:
    """Keep source attributes sharing the target's broad type.

    A target of broad type OTHER disables filtering: mis-binned attributes
    must not silently lose all their candidates.
    """
    if target_attr.broad_type == BroadType.OTHER:
        return list(source_attrs)
    return [a for a in source_attrs if a.broad_type == target_attr.broad_type]


# --- stage 2: sampling ----------------------------------------------------------


def sample_candidates(
    source: RelationDef,
    target: RelationDef,
    n: int,
    base_seed: int,
    opts: TransformOptions,
    gateway: Gateway,
    direction: Direction = Direction.FORWARD,
    allowed: Optional[Mapping[str, Sequence[AttributeDef]]] = None,
    config: Optional[MatchConfig] = None,
    events: Optional[list[dict[str, Any]]] = None,
) -> list[CandidateSet]:
    """Prompt once per (focus attribute, sample) and union answers per sample.

    In the forward direction the focus attributes are the target's and the
    candidate side is the source relation; swapped reverses the roles. Answers
    are normalized into source->target pairs either way. A format failure
    contributes an empty answer for that (attribute, sample).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    config = config or MatchConfig()
    swapped = direction == Direction.SWAPPED
    focus_rel, candidate_rel = (source, target) if swapped else (target, source)

    sets: list[CandidateSet] = []
    for i in range(n):
        sample_seed = derive_seed(base_seed, direction.value, i)
        pairs: set[Correspondence] = set()
        for focus in focus_rel.attributes:
            candidates = list(allowed[focus.name]) if allowed is not None else list(candidate_rel.attributes)
            if not candidates:
                if events is not None and i == 0:
                    events.append(
                        {"event": "empty_candidates", "direction": direction.value, "attribute": focus.name}
                    )
                continue
            prompt = build_match_prompt(
                candidate_rel,
                (focus_rel, focus),
                sample_seed,
                TransformOptions(
                    permute_columns=opts.permute_columns,
                    resample_values=opts.resample_values,
                    swap_tables=swapped,
                    values_per_attribute=opts.values_per_attribute,
                ),
                candidate_attrs=candidates,
            )
            response = gateway.complete(
                CompletionRequest(
                    prompt=prompt.body,
                    temperature=config.temperature,
                    seed=sample_seed % (2**31),
                    max_output_tokens=config.max_output_tokens,
                )
            )
            try:
                answer = parse_structured(response, prompt.expected_output)
            except FormatError:
                logger.info("format failure for %s sample %d; counting empty", focus.name, i)
                if events is not None:
                    events.append(
                        {
                            "event": "format_error",
                            "direction": direction.value,
                            "attribute": focus.name,
                            "sample": i,
                        }
                    )
                continue
            known = {a.name for a in candidates}
            for name in answer["matches"]:
                if name not in known:
                    logger.info("model suggested unknown attribute %r; ignored", name)
                    continue
                if swapped:
                    pairs.add(Correspondence((source.name, focus.name), (target.name, name)))
                else:
                    pairs.add(Correspondence((source.name, name), (target.name, focus.name)))
        sets.append(CandidateSet(direction=direction, sample_index=i, pairs=frozenset(pairs)))
    return sets


# --- stage 3: aggregation -------------------------------------------------------


def aggregate(
    sets: Sequence[CandidateSet], method: AggregationMethod
) -> dict[Correspondence, int]:
    """Combine per-sample candidate sets; returns kept pairs with support counts.

    Union keeps everything, majority keeps pairs in strictly more than half of
    the samples, intersection keeps pairs present in every sample.
    """
    if not sets:
        raise ValueError("aggregate needs at least one candidate set")
    n = len(sets)
    support: dict[Correspondence, int] = {}
    for cs in sets:
        for pair in cs.pairs:
            support[pair] = support.get(pair, 0) + 1
    if method == AggregationMethod.UNION:
        keep = set(support)
    elif method == AggregationMethod.MAJORITY:
        keep = {p for p, s in support.items() if 2 * s > n}
    elif method == AggregationMethod.INTERSECTION:
        keep = {p for p, s in support.items() if s == n}
    else:
        raise ValueError(f"unknown aggregation method {method}")
    return {p: support[p] for p in sorted(keep, key=pair_sort_key)}


# --- stage 4: confidence --------------------------------------------------------


def softmax_confidences(logprobs: Mapping[str, float]) -> dict[str, float]:
    """exp-normalize over exactly the given options; -inf contributes zero."""
    weights = {k: (math.exp(lp) if lp != float("-inf") else 0.0) for k, lp in logprobs.items()}
    total = sum(weights.values())
    if total <= 0.0:
        raise CapabilityError("no option label received probability mass")
    return {k: w / total for k, w in weights.items()}


def early_stop(scored: Mapping[Any, float], gap: float) -> bool:
    """True when the leader's margin over the runner-up reaches the gap.

    With a single candidate the runner-up score is 0, and gap=0 degenerates to
    "always stop after the first round".
    """
    if not (0.0 <= gap <= 1.0):
        raise ValueError("gap must be within [0, 1]")
    if not scored:
        return False
    ordered = sorted(scored.values(), reverse=True)
    top1 = ordered[0]
    top2 = ordered[1] if len(ordered) > 1 else 0.0
    return (top1 - top2) >= gap


def confidence_score(
    focus: tuple[RelationDef, AttributeDef],
    candidates: Sequence[tuple[Correspondence, RelationDef, AttributeDef]],
    direction: Direction,
    seed: int,
    gateway: Gateway,
    config: Optional[MatchConfig] = None,
    supports: Optional[Mapping[Correspondence, int]] = None,
    n: int = 1,
    events: Optional[list[dict[str, Any]]] = None,
) -> dict[Correspondence, float]:
    """Rank-prompt confidence for one focus attribute over its candidates.

    Issues up to config.confidence_rounds rank prompts (seeded differently),
    averaging the per-round softmax confidences; the confidence-gap early stop
    skips remaining rounds when the leader is clear. Falls back to support/n
    when the backend cannot report logprobs, recording the fallback.
    """
    if not candidates:
        raise ValueError("confidence_score needs at least one candidate")
    config = config or MatchConfig()
    focus_rel, focus_attr = focus

    pool = list(candidates)
    if len(pool) > len(OPTION_LABELS):
        # Label alphabet exhausted: rank the best-supported candidates, zero the rest.
        pool.sort(key=lambda c: (-(supports or {}).get(c[0], 0), pair_sort_key(c[0])))
        dropped = pool[len(OPTION_LABELS):]
        pool = pool[: len(OPTION_LABELS)]
        if events is not None:
            events.append(
                {
                    "event": "rank_sharded",
                    "attribute": focus_attr.name,
                    "direction": direction.value,
                    "dropped": [list(pair_sort_key(c[0])) for c in dropped],
                }
            )

    by_endpoint = {(rel.name, attr.name): pair for pair, rel, attr in pool}
    totals: dict[Correspondence, float] = {pair: 0.0 for pair, _, _ in pool}
    rounds_run = 0
    fallback = False

    for round_i in range(config.confidence_rounds):
        round_seed = derive_seed(seed, "confidence", direction.value, round_i)
        prompt = build_rank_prompt((focus_rel, focus_attr), [(r, a) for _, r, a in pool], round_seed)
        response = gateway.complete(
            CompletionRequest(
                prompt=prompt.body,
                temperature=config.temperature,
                seed=round_seed % (2**31),
                max_output_tokens=config.max_output_tokens,
                want_logprobs=True,
                top_logprobs=min(config.top_logprobs, max(1, len(pool))),
            )
        )
        labels: Mapping[str, Sequence[str]] = prompt.expected_output["labels"]
        try:
            lps = option_logprobs(response, list(labels))
            confs = softmax_confidences(lps)
        except CapabilityError as exc:
            logger.info("confidence fallback for %s: %s", focus_attr.name, exc)
            fallback = True
            break
        for label, conf in confs.items():
            endpoint = tuple(labels[label])
            totals[by_endpoint[endpoint]] += conf
        rounds_run += 1
        current = {p: v / rounds_run for p, v in totals.items()}
        if (
            config.early_stop_gap is not None
            and round_i + 1 < config.confidence_rounds
            and early_stop(current, config.early_stop_gap)
        ):
            if events is not None:
                events.append(
                    {
                        "event": "early_stop",
                        "attribute": focus_attr.name,
                        "direction": direction.value,
                        "rounds_run": rounds_run,
                        "rounds_skipped": config.confidence_rounds - rounds_run,
                    }
                )
            break

    if fallback or rounds_run == 0:
        if events is not None:
            events.append(
                {
                    "event": "confidence_fallback",
                    "attribute": focus_attr.name,
                    "direction": direction.value,
                    "basis": "support",
                }
            )
        return {
            pair: (supports or {}).get(pair, 0) / max(1, n) for pair, _, _ in candidates
        }

    result = {p: v / rounds_run for p, v in totals.items()}
    for pair, _, _ in candidates:
        result.setdefault(pair, 0.0)
    return result


# --- stage 5: stable matching ---------------------------------------------------


def _deferred_acceptance(
    prefs_a: Mapping[str, Sequence[str]], prefs_b: Mapping[str, Sequence[str]]
) -> dict[str, str]:
    """One proposer-optimal round of deferred acceptance; returns {a: b}."""
    rank_b = {b: {a: i for i, a in enumerate(lst)} for b, lst in prefs_b.items()}
    next_choice = {a: 0 for a in prefs_a}
    free = sorted(prefs_a)
    held: dict[str, str] = {}  # b -> a
    while free:
        a = free.pop(0)
        lst = prefs_a[a]
        while next_choice[a] < len(lst):
            b = lst[next_choice[a]]
            next_choice[a] += 1
            acceptable = rank_b.get(b, {})
            if a not in acceptable:
                continue
            current = held.get(b)
            if current is None:
                held[b] = a
                break
            if acceptable[a] < acceptable[current]:
                held[b] = a
                free.append(current)
                break
        # exhausted preference list: a stays unmatched
    return {a: b for b, a in held.items()}


def stable_match(
    prefs_a: Mapping[str, Sequence[str]],
    prefs_b: Mapping[str, Sequence[str]],
    k: int = 1,
) -> list[tuple[str, str, int]]:
    """Top-K stable matches via iterated deferred acceptance.

    Round 1 is plain deferred acceptance with the A side proposing. For each
    later round, every previously matched pair is removed from both preference
    lists and the algorithm reruns; attributes left without a partner in a
    round simply contribute no pair for it. Output tuples carry the round.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    cur_a = {a: list(lst) for a, lst in prefs_a.items()}
    cur_b = {b: list(lst) for b, lst in prefs_b.items()}
    out: list[tuple[str, str, int]] = []
    for round_i in range(1, k + 1):
        matched = _deferred_acceptance(cur_a, cur_b)
        if not matched:
            break
        for a in sorted(matched):
            b = matched[a]
            out.append((a, b, round_i))
            cur_a[a] = [x for x in cur_a[a] if x != b]
            cur_b[b] = [x for x in cur_b[b] if x != a]
    return out


# --- stage 6: fusion ------------------------------------------------------------


def fuse(
    forward: Mapping[Correspondence, float],
    swapped: Mapping[Correspondence, float],
    method: FusionMethod,
    supports_forward: Optional[Mapping[Correspondence, int]] = None,
    supports_swapped: Optional[Mapping[Correspondence, int]] = None,
    stable_k: int = 1,
) -> list[ScoredCandidate]:
    """Merge the two directions' confidences into a final ranked candidate list.

    Averaging keeps one-sided pairs at half confidence; multiplying removes
    pairs missing from either direction; stable matching keeps the top-K
    stable pairs, ranked among themselves by the product of their confidences.
    """
    sf = supports_forward or {}
    ss = supports_swapped or {}

    def support_of(pair: Correspondence) -> int:
        return max(sf.get(pair, 0), ss.get(pair, 0))

    out: list[ScoredCandidate] = []
    if method == FusionMethod.AVERAGE:
        for pair in set(forward) | set(swapped):
            cf = forward.get(pair)
            cs = swapped.get(pair)
            final = ((cf or 0.0) + (cs or 0.0)) / 2.0
            out.append(ScoredCandidate(pair, support_of(pair), cf, cs, final, method.value))
    elif method == FusionMethod.MULTIPLY:
        for pair in set(forward) & set(swapped):
            cf, cs = forward[pair], swapped[pair]
            out.append(ScoredCandidate(pair, support_of(pair), cf, cs, cf * cs, method.value))
    elif method == FusionMethod.STABLE:
        prefs_source: dict[str, list[str]] = {}
        prefs_target: dict[str, list[str]] = {}
        swapped_by_source: dict[str, list[tuple[float, str]]] = {}
        for pair, conf in swapped.items():
            swapped_by_source.setdefault(pair.source[1], []).append((conf, pair.target[1]))
        for a, ranked in swapped_by_source.items():
            prefs_source[a] = [b for _, b in sorted(ranked, key=lambda cb: (-cb[0], cb[1]))]
        forward_by_target: dict[str, list[tuple[float, str]]] = {}
        for pair, conf in forward.items():
            forward_by_target.setdefault(pair.target[1], []).append((conf, pair.source[1]))
        for b, ranked in forward_by_target.items():
            prefs_target[b] = [a for _, a in sorted(ranked, key=lambda ca: (-ca[0], ca[1]))]

        endpoints: dict[tuple[str, str], Correspondence] = {}
        for pair in set(forward) | set(swapped):
            endpoints[(pair.source[1], pair.target[1])] = pair
        for a, b, round_i in stable_match(prefs_source, prefs_target, k=stable_k):
            pair = endpoints[(a, b)]
            cf = forward.get(pair, 0.0)
            cs = swapped.get(pair, 0.0)
            out.append(
                ScoredCandidate(pair, support_of(pair), forward.get(pair), swapped.get(pair),
                                cf * cs, method.value, stable_round=round_i)
            )
    else:
        raise ValueError(f"unknown fusion method {method}")

    out.sort(key=lambda c: (-c.conf_final, pair_sort_key(c.pair)))
    return out


# --- full run ---------------------------------------------------------------------


def run_match(
    source: RelationDef,
    target: RelationDef,
    config: MatchConfig,
    gateway: Gateway,
) -> MatchResult:
    """Execute the full pipeline for one relation pair."""
    events: list[dict[str, Any]] = []
    calls_before = gateway.totals.calls
    input_before = gateway.totals.input_tokens
    output_before = gateway.totals.output_tokens

    opts = TransformOptions(
        permute_columns=config.permute_columns,
        resample_values=config.resample_values,
        values_per_attribute=config.values_per_attribute,
    )

    allowed_forward: Optional[dict[str, list[AttributeDef]]] = None
    allowed_swapped: Optional[dict[str, list[AttributeDef]]] = None
    if config.prefilter:
        allowed_forward = {
            g.name: prefilter(g, source.attributes) for g in target.attributes
        }
        allowed_swapped = {
            s.name: prefilter(s, target.attributes) for s in source.attributes
        }

    forward_sets = sample_candidates(
        source, target, config.n, config.base_seed, opts, gateway,
        direction=Direction.FORWARD, allowed=allowed_forward, config=config, events=events,
    )
    forward_support = aggregate(forward_sets, config.aggregation)

    swapped_support: dict[Correspondence, int] = {}
    if config.bidirectional:
        swapped_sets = sample_candidates(
            source, target, config.n, config.base_seed, opts, gateway,
            direction=Direction.SWAPPED, allowed=allowed_swapped, config=config, events=events,
        )
        swapped_support = aggregate(swapped_sets, config.aggregation)

    def rank_direction(
        support: Mapping[Correspondence, int], direction: Direction
    ) -> dict[Correspondence, float]:
        if not config.confidence:
            return {p: s / config.n for p, s in support.items()}
        confs: dict[Correspondence, float] = {}
        if direction == Direction.FORWARD:
            groups: dict[str, list[Correspondence]] = {}
            for pair in support:
                groups.setdefault(pair.target[1], []).append(pair)
            for attr_name in sorted(groups):
                focus = (target, target.attribute(attr_name))
                cands = [(p, source, source.attribute(p.source[1])) for p in groups[attr_name]]
                confs.update(
                    confidence_score(
                        focus, cands, direction, derive_seed(config.base_seed, "rank", attr_name),
                        gateway, config=config, supports=support, n=config.n, events=events,
                    )
                )
        else:
            groups = {}
            for pair in support:
                groups.setdefault(pair.source[1], []).append(pair)
            for attr_name in sorted(groups):
                focus = (source, source.attribute(attr_name))
                cands = [(p, target, target.attribute(p.target[1])) for p in groups[attr_name]]
                confs.update(
                    confidence_score(
                        focus, cands, direction, derive_seed(config.base_seed, "rank", attr_name),
                        gateway, config=config, supports=support, n=config.n, events=events,
                    )
                )
        return confs

    conf_forward = rank_direction(forward_support, Direction.FORWARD)

    if config.bidirectional:
        conf_swapped = rank_direction(swapped_support, Direction.SWAPPED)
        candidates = fuse(
            conf_forward, conf_swapped, config.fusion,
            supports_forward=forward_support, supports_swapped=swapped_support,
            stable_k=config.stable_k,
        )
    else:
        candidates = [
            ScoredCandidate(pair, forward_support.get(pair, 0), conf, None, conf, "forward-only")
            for pair, conf in conf_forward.items()
        ]
        candidates.sort(key=lambda c: (-c.conf_final, pair_sort_key(c.pair)))

    ranked: dict[str, list[ScoredCandidate]] = {}
    for cand in candidates:
        ranked.setdefault(cand.pair.target[1], []).append(cand)

    provenance = {
        "config": config.to_dict(),
        "events": events,
        "directions": ["forward", "swapped"] if config.bidirectional else ["forward"],
        "forward_support": {
            ".".join(pair_sort_key(p)): s for p, s in sorted(forward_support.items(), key=lambda kv: pair_sort_key(kv[0]))
        },
        "swapped_support": {
            ".".join(pair_sort_key(p)): s for p, s in sorted(swapped_support.items(), key=lambda kv: pair_sort_key(kv[0]))
        },
        "usage": {
            "calls": gateway.totals.calls - calls_before,
            "input_tokens": gateway.totals.input_tokens - input_before,
            "output_tokens": gateway.totals.output_tokens - output_before,
            "total_tokens": (gateway.totals.input_tokens + gateway.totals.output_tokens)
            - input_before - output_before,
        },
    }
    return MatchResult(
        source_relation=source.name,
        target_relation=target.name,
        ranked=ranked,
        provenance=provenance,
    )
