"""Job orchestration, append-only persistence, decision recording, and export.

Every job owns a directory holding an append-only log (one JSON record per
line) plus result artifacts. Job state is whatever replaying the log says, so
a crashed process leaves evidence rather than corruption: on store open, jobs
still marked running are failed with their partial transcripts intact.
Decisions are log records too; exports are a pure function of the log and the
candidate set.
"""

from __future__ import annotations

import json
import logging
import time
import uuid
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence, Union

from .evaluation import (
    generate_eval_instance,
    load_alignment,
    metrics_at_k,
    run_mrpp_experiment,
    table_overlap,
    join_overlap,
)
from .gateway import Gateway
from .chase import chase
from .model import Correspondence, SchemaDef, load_instance, load_schema, save_instance
from .pipeline import (
    MatchConfig,
    MatchResult,
    load_match_result,
    run_match,
    save_match_result,
)
from .prompts import TransformOptions, build_mapgen_prompt
from .gateway import CompletionRequest
from .rules import Atom, Rule, RuleMapping, Variable, load_rules, rule_to_json
from .sqlscript import parse_rule_script
from .transforms import TransformRegistry

logger = logging.getLogger(__name__)


class JobKind(str, Enum):
    MATCH = "match"
    MAPGEN = "mapgen"
    EVAL = "eval"
    MRPP_SWEEP = "mrpp-sweep"


class JobState(str, Enum):
    QUEUED = "queued"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


class Verdict(str, Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    EDITED = "edited"


class JobError(ValueError):
    pass


class UnknownJob(KeyError):
    pass


@dataclass
class JobView:
    id: str
    kind: JobKind
    config: dict[str, Any]
    state: JobState
    created_ts: float
    finished_ts: Optional[float] = None
    error: Optional[str] = None
    request_key: Optional[str] = None
    decisions: dict[tuple, dict[str, Any]] = field(default_factory=dict)

    def summary(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "state": self.state.value,
            "created_ts": self.created_ts,
            "finished_ts": self.finished_ts,
            "error": self.error,
        }


class JobStore:
    """One directory per job; state is derived by replaying log.jsonl."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._recover()

    def job_dir(self, job_id: str) -> Path:
        return self.root / job_id

    def _log_path(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "log.jsonl"

    def append(self, job_id: str, record: Mapping[str, Any]) -> None:
        with self._log_path(job_id).open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def create(self, kind: JobKind, config: Mapping[str, Any], request_key: Optional[str] = None) -> str:
        if request_key:
            for existing in self.list_ids():
                view = self.load(existing)
                if view.request_key == request_key:
                    return existing
        job_id = uuid.uuid4().hex[:12]
        self.job_dir(job_id).mkdir(parents=True)
        self.append(
            job_id,
            {
                "event": "created",
                "kind": kind.value,
                "config": dict(config),
                "request_key": request_key,
                "ts": time.time(),
            },
        )
        return job_id

    def list_ids(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if (p / "log.jsonl").exists())

    def load(self, job_id: str) -> JobView:
        path = self._log_path(job_id)
        if not path.exists():
            raise UnknownJob(job_id)
        view: Optional[JobView] = None
        for line in path.read_text(encoding="utf-8").splitlines():
            record = json.loads(line)
            event = record.get("event")
            if event == "created":
                view = JobView(
                    id=job_id,
                    kind=JobKind(record["kind"]),
                    config=record.get("config", {}),
                    state=JobState.QUEUED,
                    created_ts=record.get("ts", 0.0),
                    request_key=record.get("request_key"),
                )
            elif view is None:
                continue
            elif event == "state":
                view.state = JobState(record["state"])
                if view.state in (JobState.DONE, JobState.FAILED):
                    view.finished_ts = record.get("ts")
                view.error = record.get("error", view.error)
            elif event == "decision":
                key = (tuple(record["source"]), tuple(record["target"]))
                view.decisions[key] = record  # later records supersede earlier
        if view is None:
            raise UnknownJob(job_id)
        return view

    def set_state(self, job_id: str, state: JobState, error: Optional[str] = None) -> None:
        record: dict[str, Any] = {"event": "state", "state": state.value, "ts": time.time()}
        if error:
            record["error"] = error
        self.append(job_id, record)

    def _recover(self) -> None:
        for job_id in self.list_ids():
            try:
                view = self.load(job_id)
            except (UnknownJob, json.JSONDecodeError):
                continue
            if view.state == JobState.RUNNING:
                self.set_state(job_id, JobState.FAILED, error="recovered after restart")


def _flatten_candidates(result: MatchResult) -> list[dict[str, Any]]:
    rows = []
    for attr in sorted(result.ranked):
        for rank, cand in enumerate(result.ranked[attr], start=1):
            rows.append(
                {
                    "source": list(cand.pair.source),
                    "target": list(cand.pair.target),
                    "target_attribute": attr,
                    "rank": rank,
                    "support": cand.support,
                    "conf_forward": cand.conf_forward,
                    "conf_swapped": cand.conf_swapped,
                    "conf_final": cand.conf_final,
                    "method": cand.method,
                    "stable_round": cand.stable_round,
                }
            )
    return rows


class AssistantService:
    """Executes jobs against a gateway and mediates the human review loop."""

    def __init__(
        self,
        store: JobStore,
        gateway_factory: Callable[[Path], Gateway],
        registry: Optional[TransformRegistry] = None,
        max_workers: int = 2,
    ):
        self.store = store
        self.gateway_factory = gateway_factory
        self.registry = registry or TransformRegistry()
        self._executor = ThreadPoolExecutor(max_workers=max_workers)
        self._futures: dict[str, Future] = {}

    # -- submission ---------------------------------------------------------

    def submit_job(
        self,
        kind: Union[JobKind, str],
        config: Mapping[str, Any],
        request_key: Optional[str] = None,
        wait: bool = False,
    ) -> str:
        kind = JobKind(kind)
        self._validate_config(kind, config)
        job_id = self.store.create(kind, config, request_key)
        view = self.store.load(job_id)
        if view.state == JobState.QUEUED and job_id not in self._futures:
            self._futures[job_id] = self._executor.submit(self._run, job_id)
        if wait:
            self.wait(job_id)
        return job_id

    def wait(self, job_id: str, timeout: Optional[float] = None) -> JobView:
        future = self._futures.get(job_id)
        if future is not None:
            future.result(timeout=timeout)
        return self.store.load(job_id)

    def _validate_config(self, kind: JobKind, config: Mapping[str, Any]) -> None:
        def need(*keys: str) -> None:
            missing = [k for k in keys if k not in config]
            if missing:
                raise JobError(f"{kind.value} config missing {missing}")

        def need_file(key: str) -> None:
            if not Path(config[key]).exists():
                raise JobError(f"{kind.value} config: no such file {config[key]!r}")

        if kind == JobKind.MATCH:
            need("source_schema", "target_schema", "source_relation", "target_relation")
            need_file("source_schema")
            need_file("target_schema")
            source = load_schema(config["source_schema"])
            target = load_schema(config["target_schema"])
            source.relation(config["source_relation"])
            target.relation(config["target_relation"])
            MatchConfig.from_dict(config.get("match", {}))
        elif kind == JobKind.MAPGEN:
            need("source_schema", "target_schema")
            need_file("source_schema")
            need_file("target_schema")
            load_schema(config["source_schema"])
            load_schema(config["target_schema"])
        elif kind == JobKind.EVAL:
            mode = config.get("mode")
            if mode == "alignment":
                need("match_report", "gold_alignment")
                need_file("match_report")
                need_file("gold_alignment")
            elif mode == "overlap":
                need("predicted_instance", "gold_instance", "target_schema")
                need_file("predicted_instance")
                need_file("gold_instance")
                need_file("target_schema")
            else:
                raise JobError("eval config needs mode 'alignment' or 'overlap'")
        elif kind == JobKind.MRPP_SWEEP:
            need("rules", "source_schema", "target_schema")
            need_file("rules")
            need_file("source_schema")
            need_file("target_schema")
            if "source_instance" in config:
                need_file("source_instance")

    # -- execution ----------------------------------------------------------

    def _run(self, job_id: str) -> None:
        view = self.store.load(job_id)
        self.store.set_state(job_id, JobState.RUNNING)
        try:
            handler = {
                JobKind.MATCH: self._run_match,
                JobKind.MAPGEN: self._run_mapgen,
                JobKind.EVAL: self._run_eval,
                JobKind.MRPP_SWEEP: self._run_mrpp,
            }[view.kind]
            handler(job_id, view.config)
            self.store.set_state(job_id, JobState.DONE)
        except Exception as exc:  # failure is a terminal job state, not a crash
            logger.exception("job %s failed", job_id)
            self.store.set_state(job_id, JobState.FAILED, error=str(exc))

    def _gateway(self, job_id: str) -> Gateway:
        return self.gateway_factory(self.store.job_dir(job_id) / "transcript.jsonl")

    def _run_match(self, job_id: str, config: Mapping[str, Any]) -> None:
        source = load_schema(config["source_schema"]).relation(config["source_relation"])
        target = load_schema(config["target_schema"]).relation(config["target_relation"])
        match_config = MatchConfig.from_dict(config.get("match", {}))
        result = run_match(source, target, match_config, self._gateway(job_id))
        save_match_result(result, self.store.job_dir(job_id) / "result.json")

    def _run_mapgen(self, job_id: str, config: Mapping[str, Any]) -> None:
        source = load_schema(config["source_schema"])
        target = load_schema(config["target_schema"])
        gateway = self._gateway(job_id)
        prompt = build_mapgen_prompt(
            [(list(source.relations), list(target.relations))],
            seed=int(config.get("seed", 0)),
            opts=TransformOptions(
                permute_columns=True,
                resample_values=True,
                values_per_attribute=int(config.get("values_per_attribute", 10)),
            ),
        )
        response = gateway.complete(
            CompletionRequest(
                prompt=prompt.body,
                seed=int(config.get("seed", 0)) % (2**31),
                max_output_tokens=int(config.get("max_output_tokens", 4096)),
            )
        )
        report = parse_rule_script(response.text, source, target, self.registry)
        job_dir = self.store.job_dir(job_id)
        (job_dir / "script.sql").write_text(response.text, encoding="utf-8")
        result = {
            "rules": [rule_to_json(r) for r in report.rules],
            "diagnostics": report.diagnostics,
            "usage": {
                "input_tokens": gateway.totals.input_tokens,
                "output_tokens": gateway.totals.output_tokens,
            },
        }
        (job_dir / "result.json").write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")

    def _run_eval(self, job_id: str, config: Mapping[str, Any]) -> None:
        job_dir = self.store.job_dir(job_id)
        if config.get("mode") == "alignment":
            result = load_match_result(config["match_report"])
            gold = load_alignment(config["gold_alignment"])
            ks: Sequence[Union[int, str]] = config.get("ks", [1, 2, 3, "max"])
            table = {}
            for k in ks:
                m = metrics_at_k(result, gold, k)
                table[str(k)] = {"precision": m.precision, "recall": m.recall, "f1": m.f1}
            doc = {"mode": "alignment", "metrics_at_k": table}
        else:
            schema = load_schema(config["target_schema"])
            predicted = load_instance(schema, config["predicted_instance"])
            gold_inst = load_instance(schema, config["gold_instance"])
            t = table_overlap(predicted, gold_inst, schema)
            doc = {
                "mode": "overlap",
                "table_overlap": {
                    "precision": t.mean_precision, "recall": t.mean_recall, "f1": t.mean_f1,
                    "queries": [q.__dict__ for q in t.per_query],
                },
            }
            if "rules" in config and "source_schema" in config:
                source_schema = load_schema(config["source_schema"])
                mapping = RuleMapping(
                    rules=tuple(load_rules(config["rules"])),
                    source_schema=source_schema,
                    target_schema=schema,
                )
                j = join_overlap(mapping, predicted, gold_inst)
                doc["join_overlap"] = {
                    "precision": j.mean_precision, "recall": j.mean_recall, "f1": j.mean_f1,
                    "queries": [q.__dict__ for q in j.per_query],
                }
        (job_dir / "result.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def _run_mrpp(self, job_id: str, config: Mapping[str, Any]) -> None:
        source_schema = load_schema(config["source_schema"])
        target_schema = load_schema(config["target_schema"])
        mapping = RuleMapping(
            rules=tuple(load_rules(config["rules"])),
            source_schema=source_schema,
            target_schema=target_schema,
        )
        if "source_instance" in config:
            instance = load_instance(source_schema, config["source_instance"])
        else:
            instance = generate_eval_instance(
                source_schema,
                rows_per_table=int(config.get("rows_per_table", 100)),
                null_prob=float(config.get("null_prob", 0.1)),
                orphan_prob=float(config.get("orphan_prob", 0.1)),
                seed=int(config.get("instance_seed", 0)),
            )
            save_instance(instance, self.store.job_dir(job_id) / "source_instance.json")
        mrpp_range = config.get("mrpp_range") or list(range(1, len(mapping.rules) + 1))
        report = run_mrpp_experiment(
            mapping,
            instance,
            mrpp_range=[int(m) for m in mrpp_range],
            repeats=int(config.get("repeats", 1)),
            seeds=config.get("seeds"),
            gateway=self._gateway(job_id),
            registry=self.registry,
        )
        job_dir = self.store.job_dir(job_id)
        (job_dir / "report.csv").write_text(report.to_csv(), encoding="utf-8")
        (job_dir / "report.txt").write_text(report.to_text(), encoding="utf-8")
        doc = {
            "total_tokens": report.total_tokens(),
            "summary": [row.__dict__ for row in report.summary],
        }
        (job_dir / "result.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    # -- review loop ----------------------------------------------------------

    def job(self, job_id: str) -> JobView:
        return self.store.load(job_id)

    def list_jobs(self) -> list[JobView]:
        return [self.store.load(job_id) for job_id in self.store.list_ids()]

    def match_result(self, job_id: str) -> MatchResult:
        view = self.store.load(job_id)
        if view.kind != JobKind.MATCH:
            raise JobError(f"job {job_id} is {view.kind.value}, not match")
        if view.state != JobState.DONE:
            raise JobError(f"job {job_id} is {view.state.value}, not done")
        return load_match_result(self.store.job_dir(job_id) / "result.json")

    def candidates(self, job_id: str) -> list[dict[str, Any]]:
        result = self.match_result(job_id)
        view = self.store.load(job_id)
        rows = _flatten_candidates(result)
        for row in rows:
            decision = view.decisions.get((tuple(row["source"]), tuple(row["target"])))
            row["decision"] = decision.get("verdict") if decision else None
            row["replacement"] = decision.get("replacement") if decision else None
        return rows

    def record_decision(
        self,
        job_id: str,
        pair: Correspondence,
        verdict: Union[Verdict, str],
        replacement: Optional[Correspondence] = None,
        note: str = "",
    ) -> dict[str, Any]:
        verdict = Verdict(verdict)
        result = self.match_result(job_id)
        known = {c.pair for lst in result.ranked.values() for c in lst}
        if pair not in known:
            raise JobError(f"pair {pair.as_strings()} is not in job {job_id}'s candidate set")
        view = self.store.load(job_id)
        if verdict == Verdict.EDITED:
            if replacement is None:
                raise JobError("edited verdict requires a replacement pair")
            source_schema = load_schema(view.config["source_schema"])
            target_schema = load_schema(view.config["target_schema"])
            replacement.resolve(source_schema, target_schema)
        record = {
            "event": "decision",
            "source": list(pair.source),
            "target": list(pair.target),
            "verdict": verdict.value,
            "replacement": (
                {"source": list(replacement.source), "target": list(replacement.target)}
                if replacement
                else None
            ),
            "note": note,
            "ts": time.time(),
        }
        self.store.append(job_id, record)
        return record

    def export_alignment(self, job_id: str) -> dict[str, Any]:
        """Accepted pairs plus skeleton one-atom-per-side draft rules.

        Skeletons wire the matched attribute positions and leave every other
        target position existential; they are entry points for a human to
        complete, never final mappings.
        """
        view = self.store.load(job_id)
        self.match_result(job_id)  # enforces: finished match job
        accepted: list[Correspondence] = []
        for (source, target), record in sorted(view.decisions.items()):
            verdict = record["verdict"]
            if verdict == Verdict.ACCEPTED.value:
                accepted.append(Correspondence(tuple(source), tuple(target)))
            elif verdict == Verdict.EDITED.value and record.get("replacement"):
                rep = record["replacement"]
                accepted.append(Correspondence(tuple(rep["source"]), tuple(rep["target"])))

        source_schema = load_schema(view.config["source_schema"])
        target_schema = load_schema(view.config["target_schema"])
        skeletons = _skeleton_rules(accepted, source_schema, target_schema)
        return {
            "job_id": job_id,
            "alignment": [
                {"source": list(p.source), "target": list(p.target)}
                for p in sorted(accepted, key=lambda c: (c.source, c.target))
            ],
            "skeleton_rules": [dict(rule_to_json(r), draft=True) for r in skeletons],
            "draft": True,
        }

    def transcript(self, job_id: str) -> str:
        path = self.store.job_dir(job_id) / "transcript.jsonl"
        if not self.store._log_path(job_id).exists():
            raise UnknownJob(job_id)
        return path.read_text(encoding="utf-8") if path.exists() else ""


def _skeleton_rules(
    accepted: Sequence[Correspondence],
    source_schema: SchemaDef,
    target_schema: SchemaDef,
) -> list[Rule]:
    by_relations: dict[tuple[str, str], list[Correspondence]] = {}
    for pair in accepted:
        by_relations.setdefault((pair.source[0], pair.target[0]), []).append(pair)

    rules = []
    for i, ((src_name, tgt_name), pairs) in enumerate(sorted(by_relations.items()), start=1):
        src = source_schema.relation(src_name)
        tgt = target_schema.relation(tgt_name)
        universals = tuple(f"u{j + 1}" for j in range(src.arity))
        var_of = {attr: universals[j] for j, attr in enumerate(src.attribute_names)}
        matched = {p.target[1]: p.source[1] for p in pairs}
        target_terms: list = []
        existentials: list[str] = []
        for attr in tgt.attribute_names:
            if attr in matched:
                target_terms.append(Variable(var_of[matched[attr]]))
            else:
                e = f"e{len(existentials) + 1}"
                existentials.append(e)
                target_terms.append(Variable(e))
        rules.append(
            Rule(
                id=f"skeleton{i}",
                universals=universals,
                source_atoms=(Atom(src_name, tuple(Variable(u) for u in universals)),),
                existentials=tuple(existentials),
                target_atoms=(Atom(tgt_name, tuple(target_terms)),),
            )
        )
    return rules
