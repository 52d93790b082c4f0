"""Command-line entry points mirroring the job config files."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Optional

import click

from .chase import chase
from .evaluation import load_alignment, metrics_at_k, table_overlap, join_overlap
from .gateway import Gateway, HttpBackend, MockBackend
from .model import load_instance, load_schema, save_instance
from .pipeline import load_match_result
from .rules import RuleMapping, load_rules
from .service import AssistantService, JobKind, JobState, JobStore
from .transforms import TransformRegistry


def _gateway_factory(backend: str, mock_fixtures: Optional[str], model: str, api_key: Optional[str]):
    def factory(transcript_path: Path) -> Gateway:
        if backend == "mock":
            if not mock_fixtures:
                raise click.UsageError("--mock-fixtures is required with the mock backend")
            return Gateway(MockBackend(mock_fixtures), transcript_path=transcript_path)
        return Gateway(
            HttpBackend(base_url=backend, model=model, api_key=api_key),
            transcript_path=transcript_path,
        )

    return factory


@click.group()
@click.option("--backend", default="mock", show_default=True,
              help="'mock' or an OpenAI-compatible base URL")
@click.option("--mock-fixtures", type=click.Path(), default=None, help="fixture directory for the mock backend")
@click.option("--model", default="default-model", show_default=True)
@click.option("--api-key", envvar="SCHEMAMAP_API_KEY", default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs-root", type=click.Path(), default="./jobs", show_default=True)
@click.pass_context
def main(ctx, backend, mock_fixtures, model, api_key, seed, jobs_root):
    """Schema matching and mapping assistant."""
    ctx.ensure_object(dict)
    ctx.obj["seed"] = seed
    ctx.obj["jobs_root"] = jobs_root
    ctx.obj["factory"] = _gateway_factory(backend, mock_fixtures, model, api_key)


def _service(ctx) -> AssistantService:
    store = JobStore(ctx.obj["jobs_root"])
    return AssistantService(store, ctx.obj["factory"])


def _finish_job(service: AssistantService, job_id: str) -> dict:
    view = service.wait(job_id)
    if view.state != JobState.DONE:
        raise click.ClickException(f"job {job_id} {view.state.value}: {view.error}")
    result_path = service.store.job_dir(job_id) / "result.json"
    click.echo(f"job {job_id} done", err=True)
    return json.loads(result_path.read_text(encoding="utf-8")) if result_path.exists() else {}


@main.command()
@click.argument("source_schema", type=click.Path(exists=True))
@click.argument("target_schema", type=click.Path(exists=True))
@click.option("--source-relation", required=True)
@click.option("--target-relation", required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), help="JSON file with match settings")
@click.option("-n", "samples", type=int, default=None, help="samples per direction")
@click.option("--aggregation", type=click.Choice(["union", "majority", "intersection"]), default=None)
@click.option("--fusion", type=click.Choice(["average", "multiply", "stable"]), default=None)
@click.option("--stable-k", type=int, default=None)
@click.option("--prefilter/--no-prefilter", default=None)
@click.option("--gap", type=float, default=None, help="confidence-gap early stop threshold")
@click.option("--out", type=click.Path(), default=None, help="write the match report here too")
@click.pass_context
def match(ctx, source_schema, target_schema, source_relation, target_relation,
          config_path, samples, aggregation, fusion, stable_k, prefilter, gap, out):
    """Rank candidate attribute alignments for one relation pair."""
    match_config = json.loads(Path(config_path).read_text()) if config_path else {}
    match_config.setdefault("base_seed", ctx.obj["seed"])
    for key, value in [("n", samples), ("aggregation", aggregation), ("fusion", fusion),
                       ("stable_k", stable_k), ("prefilter", prefilter), ("early_stop_gap", gap)]:
        if value is not None:
            match_config[key] = value
    service = _service(ctx)
    job_id = service.submit_job(JobKind.MATCH, {
        "source_schema": source_schema,
        "target_schema": target_schema,
        "source_relation": source_relation,
        "target_relation": target_relation,
        "match": match_config,
    })
    doc = _finish_job(service, job_id)
    if out:
        Path(out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    click.echo(json.dumps({"job_id": job_id, "candidates": sum(len(v) for v in doc.get("ranked", {}).values())}))


@main.command()
@click.argument("source_schema", type=click.Path(exists=True))
@click.argument("target_schema", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None, help="write the generated SQL here")
@click.pass_context
def mapgen(ctx, source_schema, target_schema, out):
    """Generate a full mapping script for two schemas."""
    service = _service(ctx)
    job_id = service.submit_job(JobKind.MAPGEN, {
        "source_schema": source_schema,
        "target_schema": target_schema,
        "seed": ctx.obj["seed"],
    })
    doc = _finish_job(service, job_id)
    if out:
        script = (service.store.job_dir(job_id) / "script.sql").read_text(encoding="utf-8")
        Path(out).write_text(script, encoding="utf-8")
    click.echo(json.dumps({"job_id": job_id, "rules": len(doc.get("rules", [])),
                           "diagnostics": doc.get("diagnostics", [])}))


@main.command("chase")
@click.option("--rules", "rules_path", type=click.Path(exists=True), required=True)
@click.option("--source-schema", type=click.Path(exists=True), required=True)
@click.option("--target-schema", type=click.Path(exists=True), required=True)
@click.option("--source-instance", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--lookup-table", type=click.Path(exists=True), default=None,
              help="JSON object used by the lookup transform")
def chase_cmd(rules_path, source_schema, target_schema, source_instance, out, lookup_table):
    """Materialize the target instance for a rule file."""
    source = load_schema(source_schema)
    target = load_schema(target_schema)
    mapping = RuleMapping(rules=tuple(load_rules(rules_path)), source_schema=source, target_schema=target)
    registry = TransformRegistry(
        lookup_table=json.loads(Path(lookup_table).read_text()) if lookup_table else None
    )
    instance = load_instance(source, source_instance)
    result = chase(mapping, instance, registry)
    save_instance(result, out)
    click.echo(json.dumps({"rows": result.row_count()}))


@main.command("eval")
@click.option("--match-report", type=click.Path(exists=True), default=None)
@click.option("--gold-alignment", type=click.Path(exists=True), default=None)
@click.option("-k", "ks", multiple=True, default=("1", "2", "3", "max"), show_default=True)
@click.option("--predicted-instance", type=click.Path(exists=True), default=None)
@click.option("--gold-instance", type=click.Path(exists=True), default=None)
@click.option("--target-schema", type=click.Path(exists=True), default=None)
@click.option("--source-schema", type=click.Path(exists=True), default=None)
@click.option("--rules", "rules_path", type=click.Path(exists=True), default=None,
              help="gold rules enabling join overlap")
def eval_cmd(match_report, gold_alignment, ks, predicted_instance, gold_instance,
             target_schema, source_schema, rules_path):
    """Score a match report against gold, or two instances against each other."""
    if match_report and gold_alignment:
        result = load_match_result(match_report)
        gold = load_alignment(gold_alignment)
        table = {}
        for k in ks:
            k_val = k if k == "max" else int(k)
            m = metrics_at_k(result, gold, k_val)
            table[str(k)] = {"precision": round(m.precision, 6), "recall": round(m.recall, 6),
                             "f1": round(m.f1, 6)}
        click.echo(json.dumps({"metrics_at_k": table}, indent=2))
        return
    if predicted_instance and gold_instance and target_schema:
        schema = load_schema(target_schema)
        predicted = load_instance(schema, predicted_instance)
        gold_inst = load_instance(schema, gold_instance)
        t = table_overlap(predicted, gold_inst, schema)
        doc = {"table_overlap": {"precision": t.mean_precision, "recall": t.mean_recall, "f1": t.mean_f1}}
        if rules_path and source_schema:
            mapping = RuleMapping(
                rules=tuple(load_rules(rules_path)),
                source_schema=load_schema(source_schema),
                target_schema=schema,
            )
            j = join_overlap(mapping, predicted, gold_inst)
            doc["join_overlap"] = {"precision": j.mean_precision, "recall": j.mean_recall, "f1": j.mean_f1}
        click.echo(json.dumps(doc, indent=2, sort_keys=True))
        return
    raise click.UsageError(
        "provide --match-report with --gold-alignment, or --predicted-instance with "
        "--gold-instance and --target-schema"
    )


@main.command("mrpp-sweep")
@click.option("--rules", "rules_path", type=click.Path(exists=True), required=True)
@click.option("--source-schema", type=click.Path(exists=True), required=True)
@click.option("--target-schema", type=click.Path(exists=True), required=True)
@click.option("--source-instance", type=click.Path(exists=True), default=None)
@click.option("--rows-per-table", type=int, default=100, show_default=True)
@click.option("--mrpp", "mrpp_values", multiple=True, type=int, help="repeatable; default 1..#rules")
@click.option("--repeats", type=int, default=3, show_default=True)
@click.option("--out-csv", type=click.Path(), default=None)
@click.option("--out-text", type=click.Path(), default=None)
@click.pass_context
def mrpp_sweep(ctx, rules_path, source_schema, target_schema, source_instance,
               rows_per_table, mrpp_values, repeats, out_csv, out_text):
    """Sweep max-rules-per-prompt and report quality vs token cost."""
    service = _service(ctx)
    config = {
        "rules": rules_path,
        "source_schema": source_schema,
        "target_schema": target_schema,
        "repeats": repeats,
        "rows_per_table": rows_per_table,
        "instance_seed": ctx.obj["seed"],
    }
    if source_instance:
        config["source_instance"] = source_instance
    if mrpp_values:
        config["mrpp_range"] = list(mrpp_values)
    job_id = service.submit_job(JobKind.MRPP_SWEEP, config)
    _finish_job(service, job_id)
    job_dir = service.store.job_dir(job_id)
    if out_csv:
        Path(out_csv).write_text((job_dir / "report.csv").read_text(encoding="utf-8"), encoding="utf-8")
    if out_text:
        Path(out_text).write_text((job_dir / "report.txt").read_text(encoding="utf-8"), encoding="utf-8")
    click.echo((job_dir / "report.txt").read_text(encoding="utf-8"))


@main.command()
@click.argument("job_id")
@click.option("--out", type=click.Path(), default=None)
@click.pass_context
def export(ctx, job_id, out):
    """Export the accepted alignment and skeleton rules for a finished job."""
    service = _service(ctx)
    doc = service.export_alignment(job_id)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--ui-dir", type=click.Path(), default=None,
              help="static review-UI assets (defaults to ./frontend/dist when present)")
@click.pass_context
def serve(ctx, host, port, ui_dir):
    """Run the HTTP service (and the review UI when assets are available)."""
    import uvicorn

    from .webapp import create_app

    service = _service(ctx)
    if ui_dir is None and Path("frontend/dist").is_dir():
        ui_dir = "frontend/dist"
    app = create_app(service, ui_dir=Path(ui_dir) if ui_dir else None)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
