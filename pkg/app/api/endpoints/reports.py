from fastapi import APIRouter, HTTPException
from fastapi.responses import StreamingResponse

from app.api.endpoints.runs import fake_tasks_db
from app.services.report_service import ReportService

router = APIRouter()


def _reports_for(task_id: str) -> ReportService:
    task = fake_tasks_db.get(task_id)
    if not task:
        raise HTTPException(status_code=404, detail="Task not found")
    return ReportService(task["output_dir"])


@router.get("/{task_id}/summary")
async def get_summary(task_id: str):
    result = _reports_for(task_id).get_report()
    if not result.get("success"):
        raise HTTPException(status_code=404, detail=result.get("error", "Report not found"))
    return result


@router.get("/{task_id}/archive/{filename}")
async def download_archive(task_id: str, filename: str):
    """Downloads `archive_<index>.<csv|json>` given as `<index>.<format>`."""
    index, _, format = filename.partition(".")
    if not index.isdigit() or format not in ("csv", "json"):
        raise HTTPException(status_code=400, detail="Expected <index>.csv or <index>.json")

    file_data = _reports_for(task_id).download_archive(int(index), format=format)
    if not file_data:
        raise HTTPException(status_code=404, detail="Archive file not found")

    media_type = "text/csv" if format == "csv" else "application/json"
    return StreamingResponse(
        file_data,
        media_type=media_type,
        headers={"Content-Disposition": f"attachment; filename=archive_{index}.{format}"},
    )
