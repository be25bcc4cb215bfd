from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from app import __version__
from app.api.endpoints import logs, reports, runs
from app.services.log_service import configure_logging

configure_logging()

app = FastAPI(title="Robust Design Optimizer API", version=__version__)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["http://localhost:3000", "http://localhost:8000"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.get("/", tags=["Root"])
async def read_root():
    return {"message": "Welcome to Robust Design Optimizer API", "version": __version__}


app.include_router(runs.router, prefix="/api/v1/runs", tags=["Optimization Runs"])
app.include_router(reports.router, prefix="/api/v1/reports", tags=["Reports"])
app.include_router(logs.router, prefix="/api/v1/logs", tags=["Logs"])


if __name__ == "__main__":
    import uvicorn

    uvicorn.run("app.main:app", host="0.0.0.0", port=8000, reload=True)
