import pytest
from fastapi.testclient import TestClient

SMALL_TASK = {"problem": "zdt4", "engine": {"population_size": 4, "n_f": 2, "max_evaluations": 150}, "seed": 2}


@pytest.fixture
def client(tmp_path, monkeypatch):
    monkeypatch.setenv("MACS_OUTPUT_DIR", str(tmp_path / "runs"))
    monkeypatch.setenv("MACS_LOGS_DIR", str(tmp_path / "logs"))
    from app.main import app

    return TestClient(app)


@pytest.fixture
def completed_task(client):
    response = client.post("/api/v1/runs/tasks/", json=SMALL_TASK)
    assert response.status_code == 202
    return response.json()["task_id"]


def test_root(client):
    body = client.get("/").json()
    assert "version" in body


def test_task_lifecycle(client, completed_task):
    status = client.get(f"/api/v1/runs/tasks/{completed_task}/status").json()
    assert status["status"] == "completed"

    report = client.get(f"/api/v1/runs/tasks/{completed_task}/report").json()
    assert report["summary"]["problem"] == "zdt4"
    assert len(report["summary"]["repeats"]) == 1
    assert len(report["archives"]) == 1
    assert "objective_0" in report["archives"][0][0]


def test_summary_and_archive_download(client, completed_task):
    summary = client.get(f"/api/v1/reports/{completed_task}/summary")
    assert summary.status_code == 200
    assert summary.json()["summary"]["repeats"][0]["seed"] == 2

    archive = client.get(f"/api/v1/reports/{completed_task}/archive/0.csv")
    assert archive.status_code == 200
    assert archive.headers["content-type"].startswith("text/csv")
    assert archive.text.startswith("# seed=2")

    assert client.get(f"/api/v1/reports/{completed_task}/archive/0.txt").status_code == 400
    assert client.get(f"/api/v1/reports/{completed_task}/archive/5.json").status_code == 404


def test_unknown_task(client):
    assert client.get("/api/v1/runs/tasks/missing/status").status_code == 404
    assert client.get("/api/v1/reports/missing/summary").status_code == 404


def test_unknown_problem(client):
    assert client.post("/api/v1/runs/tasks/", json={"problem": "rosenbrock"}).status_code == 422


def test_invalid_engine(client):
    response = client.post("/api/v1/runs/tasks/", json={"problem": "zdt4", "engine": {"population_size": 4, "n_f": 9}})
    assert response.status_code == 400
    assert "n_f" in response.json()["detail"]


def test_logs(client):
    response = client.get("/api/v1/logs/", params={"limit": 5})
    assert response.status_code == 200
    assert response.json()["success"] is True
    assert client.get("/api/v1/logs/download/xml").status_code == 400


def test_logs_filtered_by_source(client, completed_task):
    assert client.get(f"/api/v1/runs/tasks/{completed_task}/status").json()["status"] == "completed"
    logs = client.get("/api/v1/logs/", params={"limit": 1000, "source": "app.services.run_service"}).json()["logs"]
    assert logs
    assert all(entry["name"].startswith("app.services.run_service") for entry in logs)
