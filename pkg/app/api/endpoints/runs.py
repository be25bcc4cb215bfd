import asyncio
import json
import logging
import os
import uuid
from datetime import datetime, timezone
from typing import AsyncGenerator

from fastapi import APIRouter, BackgroundTasks, HTTPException, Request
from fastapi.responses import StreamingResponse

from app.core.config import get_settings
from app.core.errors import OptimizerError
from app.models.run_models import RunManifest, RunReportResponse, RunTaskCreate, RunTaskResponse, RunTaskStatus
from app.services import macs
from app.services.problem_registry import resolve_problem
from app.services.report_service import ReportService
from app.services.run_service import RunService

logger = logging.getLogger(__name__)

# In-memory task registry; lost on restart.
fake_tasks_db: dict = {}

router = APIRouter()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _update(task_id: str, **fields) -> None:
    task = fake_tasks_db.get(task_id)
    if task is not None:
        task.update(fields, updated_at=_now())


def run_optimization_background(task_id: str, manifest: RunManifest) -> None:
    _update(task_id, status=RunTaskStatus.PROCESSING, message="Run started.")

    def progress(index: int, generation: macs.GenerationProgress) -> None:
        _update(
            task_id,
            message=(
                f"Repeat {index + 1}/{manifest.repeats}: generation {generation.generation}, "
                f"{generation.evaluations} evaluations, archive {generation.archive_size}"
            ),
        )

    try:
        summary, _ = RunService().execute(manifest, on_generation=progress)
    except Exception as e:
        logger.exception(f"Run task {task_id} failed")
        _update(task_id, status=RunTaskStatus.FAILED, message=f"Run failed: {e}")
        return

    reports = ReportService(manifest.output_dir)
    _update(
        task_id,
        status=RunTaskStatus.COMPLETED,
        message="Run completed successfully.",
        summary=summary.model_dump(),
        archives=[reports.read_archive(r.index) for r in summary.repeats],
    )
    logger.info(f"Finished run task {task_id}")


@router.post("/tasks/", response_model=RunTaskResponse, status_code=202)
async def create_run_task(task_data: RunTaskCreate, background_tasks: BackgroundTasks):
    task_id = str(uuid.uuid4())
    output_dir = os.path.join(get_settings().output_dir, task_id)
    try:
        manifest = RunManifest(
            problem=task_data.problem,
            engine=macs.validate_engine_config(task_data.engine),
            output_dir=output_dir,
            seed=task_data.seed,
            repeats=task_data.repeats,
            problem_config=task_data.problem_config,
            custom_problem=task_data.custom_problem,
        )
        # fail fast on bad problem settings before queueing
        resolve_problem(manifest)
    except OptimizerError as e:
        raise HTTPException(status_code=400, detail=str(e))

    current_time = _now()
    fake_tasks_db[task_id] = {
        "task_id": task_id,
        "status": RunTaskStatus.PENDING,
        "message": "Run received and queued for processing.",
        "created_at": current_time,
        "updated_at": current_time,
        "output_dir": output_dir,
        "summary": None,
        "archives": None,
    }
    background_tasks.add_task(run_optimization_background, task_id, manifest)
    return RunTaskResponse(**fake_tasks_db[task_id])


@router.get("/tasks/{task_id}/status", response_model=RunTaskResponse)
async def get_task_status_http(task_id: str):
    task = fake_tasks_db.get(task_id)
    if not task:
        raise HTTPException(status_code=404, detail="Task not found")
    return RunTaskResponse(**task)


@router.get("/tasks/{task_id}/report", response_model=RunReportResponse)
async def get_task_report(task_id: str):
    task = fake_tasks_db.get(task_id)
    if not task:
        raise HTTPException(status_code=404, detail="Task not found")
    if task["status"] != RunTaskStatus.COMPLETED:
        raise HTTPException(status_code=400, detail=f"Task is not yet completed. Current status: {task['status']}")
    return RunReportResponse(**task)


async def sse_task_status_generator(task_id: str, request: Request) -> AsyncGenerator[str, None]:
    """Streams status updates for a task until it completes or fails."""
    last_sent = None
    while True:
        if await request.is_disconnected():
            logger.info(f"Client for task {task_id} disconnected from SSE stream.")
            break

        task = fake_tasks_db.get(task_id)
        if not task:
            yield f"event: error\ndata: {json.dumps({'error': 'Task disappeared'})}\n\n"
            break

        current = json.dumps(
            {
                "task_id": task["task_id"],
                "status": task["status"],
                "message": task.get("message", ""),
                "updated_at": task.get("updated_at", _now()),
            }
        )
        if current != last_sent:
            yield f"data: {current}\n\n"
            last_sent = current

        if task["status"] in (RunTaskStatus.COMPLETED, RunTaskStatus.FAILED):
            yield f"event: complete\ndata: {current}\n\n"
            break

        await asyncio.sleep(1)


@router.get("/tasks/{task_id}/stream-status")
async def stream_task_status(task_id: str, request: Request):
    if task_id not in fake_tasks_db:
        raise HTTPException(status_code=404, detail="Task not found for SSE streaming.")
    return StreamingResponse(sse_task_status_generator(task_id, request), media_type="text/event-stream")
