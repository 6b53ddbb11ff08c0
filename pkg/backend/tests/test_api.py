import io

import numpy as np
import pandas as pd
import pytest
from fastapi.testclient import TestClient

from app.main import app
from app.services import result_store


@pytest.fixture
def client(tmp_path, monkeypatch):
    monkeypatch.setattr(result_store, "RESULTS_DIR", str(tmp_path / "results"))
    return TestClient(app)


def _csv_bytes(values: np.ndarray) -> bytes:
    buffer = io.StringIO()
    pd.DataFrame(values).to_csv(buffer, index=False)
    return buffer.getvalue().encode()


def _files(rng, p: int = 8):
    return {
        "sample1": ("a.csv", _csv_bytes(rng.standard_normal((30, p))), "text/csv"),
        "sample2": ("b.csv", _csv_bytes(rng.standard_normal((25, p))), "text/csv"),
    }


def test_health(client):
    res = client.get("/healthz")
    assert res.status_code == 200
    assert res.json()["status"] == "healthy"


def test_params(client):
    res = client.get("/api/params", params={"n1": 100, "n2": 100, "p": 90, "delta1": -1.2, "delta2": -1.2})
    assert res.status_code == 200
    body = res.json()
    assert body["regime"] == "iv"
    assert body["sigma2"] == pytest.approx(0.0829125, abs=1e-6)


def test_params_dimension_error(client):
    res = client.get("/api/params", params={"n1": 10, "n2": 10, "p": 25})
    assert res.status_code == 422
    assert res.json()["error_type"] == "DimensionError"


def test_run_test_and_fetch_result(client, rng):
    res = client.post("/api/test", files=_files(rng), data={"delta1": "0", "delta2": "0"})
    assert res.status_code == 200
    body = res.json()
    assert body["status"] == "completed"
    report = body["report"]
    assert (report["n1"], report["n2"], report["p"]) == (29, 24, 8)
    assert report["decision"] in ("accept", "reject")
    assert "X-Request-ID" in res.headers

    stored = client.get(f"/api/result/{body['job_id']}")
    assert stored.status_code == 200
    assert stored.json()["k"] == pytest.approx(report["k"])


def test_non_numeric_upload_is_rejected(client, rng):
    files = _files(rng)
    files["sample2"] = ("b.csv", b"x,y\n1,abc\n", "text/csv")
    res = client.post("/api/test", files=files)
    assert res.status_code == 422
    assert res.json()["error_type"] == "IngestError"


def test_single_kurtosis_is_rejected(client, rng):
    res = client.post("/api/test", files=_files(rng), data={"delta1": "0"})
    assert res.status_code == 400


def test_unknown_result(client):
    assert client.get("/api/result/does-not-exist").status_code == 404
