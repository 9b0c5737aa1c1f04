from __future__ import annotations

import logging
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException

from app.bench import run_table
from app.dag import DagError, DagGraph, dag_from_document
from app.dataset import load_test_buckets
from app.db import connect, delete_run, list_runs, record_table, rows_for_run
from app.inference import infer_edges
from app.jobs import JobManager, ProgressCallback
from app.milp import build_milp, write_lp
from app.models import (
    BenchRequest,
    DagDocument,
    InferRequest,
    InferResponse,
    JobStartResponse,
    JobStatusResponse,
    MilpRequest,
    MilpResponse,
    RunDeleteResponse,
    RunListResponse,
    RunRowsResponse,
    ScheduleRequest,
    ScheduleResponse,
    ScheduleRow,
)
from app.policy import CheckpointError, load_checkpoint
from app.session_store import JsonStore, load_settings, save_settings
from app.simulator import InfeasibleInstanceError, PriorityRule, makespan, simulate

logger = logging.getLogger(__name__)

settings_store = JsonStore(Path("data/settings.json"))
settings = load_settings(settings_store)

settings.output_dir.mkdir(parents=True, exist_ok=True)
settings.data_dir.mkdir(parents=True, exist_ok=True)
settings.db_path.parent.mkdir(parents=True, exist_ok=True)
save_settings(settings_store, settings)

jobs = JobManager()

app = FastAPI(title="DagEdge")


def _graph(document: DagDocument) -> DagGraph:
    try:
        return dag_from_document(document.model_dump())
    except DagError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


def _load_params():
    try:
        return load_checkpoint(settings.checkpoint_path)
    except CheckpointError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from exc


@app.post("/api/schedule", response_model=ScheduleResponse)
def schedule(payload: ScheduleRequest):
    g = _graph(payload.dag)
    try:
        result = simulate(g, PriorityRule.named(payload.rule))
    except InfeasibleInstanceError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    rows = [
        ScheduleRow(node=node, start=result.start_time[node], finish=result.finish_time[node])
        for node in sorted(result.start_time)
    ]
    return ScheduleResponse(rule=payload.rule, makespan=result.makespan, rows=rows)


@app.post("/api/infer", response_model=InferResponse)
def infer(payload: InferRequest):
    g = _graph(payload.dag)
    params = _load_params()
    rule = PriorityRule.named(payload.rule)
    try:
        augmented = infer_edges(g, params, payload.edges, payload.beam)
        before, after = makespan(g, rule), makespan(augmented, rule)
    except InfeasibleInstanceError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return InferResponse(
        added_edges=sorted(augmented.edges - g.edges),
        before=before,
        after=after,
    )


@app.post("/api/milp", response_model=MilpResponse)
def milp(payload: MilpRequest):
    model = build_milp(_graph(payload.dag))
    return MilpResponse(
        lp=write_lp(model, relax=payload.relax),
        variables=len(model.variables),
        constraints=len(model.constraints),
    )


@app.post("/api/bench", response_model=JobStartResponse)
def start_bench(payload: BenchRequest):
    manifest = Path(payload.manifest)
    if not manifest.is_absolute():
        manifest = settings.data_dir / manifest
    if not manifest.exists():
        raise HTTPException(status_code=404, detail=f"Manifest not found: {payload.manifest}")
    params = _load_params() if payload.use_checkpoint else None
    db_path = settings.db_path

    def runner(progress: ProgressCallback) -> str:
        progress("loading", 0, "Loading test buckets")
        buckets = load_test_buckets(manifest)
        rows = run_table(
            buckets,
            rules=payload.rules,
            params=params,
            max_edges=payload.edges,
            beam=payload.beam,
            lp_column=payload.lp_column,
            progress=progress,
        )
        run_id = uuid.uuid4().hex
        with connect(db_path) as conn:
            record_table(
                conn,
                run_id=run_id,
                manifest=str(manifest),
                rules=payload.rules,
                max_edges=payload.edges,
                beam=payload.beam,
                checkpoint=str(settings.checkpoint_path) if params is not None else None,
                rows=[row.as_dict() for row in rows],
            )
        return run_id

    job = jobs.start("bench", runner)
    return JobStartResponse(job_id=job.job_id, status_url=f"/api/jobs/{job.job_id}")


@app.get("/api/jobs/{job_id}", response_model=JobStatusResponse)
def get_job(job_id: str):
    job = jobs.get(job_id)
    if not job:
        raise HTTPException(status_code=404, detail="Unknown job id")
    return JobStatusResponse(
        job_id=job.job_id,
        kind=job.kind,
        status=job.status,  # type: ignore[arg-type]
        phase=job.phase,
        progress_pct=job.progress_pct,
        started_at=job.started_at,
        finished_at=job.finished_at,
        message=job.message,
        error=job.error,
        run_id=job.run_id,
    )


@app.get("/api/jobs/{job_id}/rows", response_model=RunRowsResponse)
def get_job_rows(job_id: str):
    job = jobs.get(job_id)
    if not job:
        raise HTTPException(status_code=404, detail="Unknown job id")
    if job.status != "done" or not job.run_id:
        raise HTTPException(status_code=409, detail="Rows unavailable until the job completes")
    return get_run(job.run_id)


@app.get("/api/runs", response_model=RunListResponse)
def get_runs():
    with connect(settings.db_path) as conn:
        rows = list_runs(conn)
    return RunListResponse(rows=rows)


@app.get("/api/runs/{run_id}", response_model=RunRowsResponse)
def get_run(run_id: str):
    with connect(settings.db_path) as conn:
        rows = rows_for_run(conn, run_id=run_id)
    if not rows:
        raise HTTPException(status_code=404, detail="Unknown run id")
    return RunRowsResponse(run_id=run_id, rows=rows)


@app.delete("/api/runs/{run_id}", response_model=RunDeleteResponse)
def remove_run(run_id: str):
    with connect(settings.db_path) as conn:
        result = delete_run(conn, run_id=run_id)
    if result["removed_rows"] == 0 and not result["removed_run"]:
        raise HTTPException(status_code=404, detail="Unknown run id")
    return RunDeleteResponse(**result)
