"""HTTP face of the assistant: job endpoints plus the static review UI."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .model import Correspondence
from .service import AssistantService, JobError, UnknownJob


class JobRequest(BaseModel):
    kind: str
    config: dict[str, Any]
    request_key: Optional[str] = None


class DecisionRequest(BaseModel):
    source: tuple[str, str]
    target: tuple[str, str]
    verdict: str
    replacement_source: Optional[tuple[str, str]] = None
    replacement_target: Optional[tuple[str, str]] = None
    note: str = ""


def create_app(service: AssistantService, ui_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="schemamap assistant")

    @app.post("/jobs")
    def submit_job(request: JobRequest) -> dict[str, Any]:
        try:
            job_id = service.submit_job(request.kind, request.config, request.request_key)
        except (JobError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"job_id": job_id, "state": service.job(job_id).state.value}

    @app.get("/jobs")
    def list_jobs() -> list[dict[str, Any]]:
        return [view.summary() for view in service.list_jobs()]

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str) -> dict[str, Any]:
        try:
            view = service.job(job_id)
        except UnknownJob:
            raise HTTPException(status_code=404, detail=f"no job {job_id}")
        out = view.summary()
        out["config"] = view.config
        out["decisions"] = len(view.decisions)
        return out

    @app.get("/jobs/{job_id}/candidates")
    def get_candidates(job_id: str) -> list[dict[str, Any]]:
        try:
            return service.candidates(job_id)
        except UnknownJob:
            raise HTTPException(status_code=404, detail=f"no job {job_id}")
        except JobError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.post("/jobs/{job_id}/decisions")
    def post_decision(job_id: str, request: DecisionRequest) -> dict[str, Any]:
        replacement = None
        if request.replacement_source and request.replacement_target:
            replacement = Correspondence(request.replacement_source, request.replacement_target)
        try:
            return service.record_decision(
                job_id,
                Correspondence(request.source, request.target),
                request.verdict,
                replacement=replacement,
                note=request.note,
            )
        except UnknownJob:
            raise HTTPException(status_code=404, detail=f"no job {job_id}")
        except (JobError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/jobs/{job_id}/export")
    def get_export(job_id: str) -> dict[str, Any]:
        try:
            return service.export_alignment(job_id)
        except UnknownJob:
            raise HTTPException(status_code=404, detail=f"no job {job_id}")
        except JobError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.get("/jobs/{job_id}/transcript", response_class=PlainTextResponse)
    def get_transcript(job_id: str) -> str:
        try:
            return service.transcript(job_id)
        except UnknownJob:
            raise HTTPException(status_code=404, detail=f"no job {job_id}")

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
