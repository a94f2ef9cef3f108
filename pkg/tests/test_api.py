import pytest
from fastapi.testclient import TestClient

from app.main import app

from conftest import SMALL_GRID, make_document


@pytest.fixture
def client():
    return TestClient(app)


def test_root_and_health(client):
    assert client.get("/").status_code == 200
    assert client.get("/.health").json() == {"status": "healthy"}


def test_list_scenarios(client):
    response = client.get("/api/scenarios")
    assert response.status_code == 200
    assert response.json()["scenarios"] == ["axisym-robin", "high-peclet-beta3", "linear-advection",
                                            "saturating-flux"]


def test_get_scenario(client):
    body = client.get("/api/scenarios/linear-advection").json()
    assert body["document"]["velocity"]["catalog"] == "constant"
    assert body["document"]["delta1"] == 0.9


def test_unknown_scenario(client):
    response = client.get("/api/scenarios/no-such-scenario")
    assert response.status_code == 404
    assert "error=config" in response.json()["detail"]["error_details"]


def test_validate_reports_failures(client):
    response = client.post("/api/validate", json=make_document(boundary={"catalog": "quadratic", "params": {}}))
    assert response.status_code == 200
    report = response.json()
    assert report["passed"] is False
    failed = {c["name"] for c in report["conditions"] if not c["passed"]}
    assert "third-order-matching" in failed


def test_validate_rejects_schema_errors(client):
    response = client.post("/api/validate", json=make_document(length=-1.0))
    assert response.status_code == 422
    assert "key=length" in response.json()["detail"]["error_details"]


def test_limit_summary(client):
    response = client.post("/api/limit/summary", json=make_document(grid=SMALL_GRID))
    assert response.status_code == 200
    summary = response.json()
    assert summary["mode"] == "characteristics"
    assert summary["truncated"] is False
    assert summary["fan_min_spacing_ratio"] == pytest.approx(1.0)


def test_limit_summary_refuses_invalid_scenarios(client):
    document = make_document(grid=SMALL_GRID, beta=2.0)
    assert client.post("/api/limit/summary", json=document).status_code == 422
