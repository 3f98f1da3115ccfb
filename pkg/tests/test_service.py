import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from dwmap.formats import model_to_dict
from dwmap.instances import bipartite_matching, frustrated_triangle
from dwmap.model import Graph
from dwmap.service.app import create_app


@pytest.fixture
def client():
    with TestClient(create_app()) as c:
        yield c


def test_health(client):
    assert client.get("/health").json()["status"] == "ok"


def test_solve_triangle(client):
    body = client.post("/solve", json={"model": model_to_dict(frustrated_triangle())}).json()
    assert body["lp_objective"] == 3.0 and body["value"] == 2.0
    objs = [t["objective"] for t in body["trace"]]
    assert objs == sorted(objs)


def test_solve_with_constraints_and_options(client):
    g, rules = bipartite_matching(np.random.default_rng(1), 4, 4)
    body = {"model": model_to_dict(g, rules), "options": {"workers": 2, "tie_rule": "max-cost"}}
    r = client.post("/solve", json=body).json()
    assert r["many_to_one"] == 0
    brute = client.post("/solve", json={"model": model_to_dict(g, rules), "options": {"backend": "brute"}}).json()
    assert r["value"] <= brute["value"] + 1e-9


def test_invalid_inputs(client):
    bad_graph = model_to_dict(frustrated_triangle())
    bad_graph["edges"][0] = [0, 0]
    assert client.post("/solve", json={"model": bad_graph}).status_code == 422
    r = client.post("/solve", json={"model": model_to_dict(frustrated_triangle()), "options": {"tie_rule": "x"}})
    assert r.status_code == 422
    huge = Graph((10,) * 8, (), tuple(np.zeros(10) for _ in range(8)), ())
    r = client.post("/solve", json={"model": model_to_dict(huge), "options": {"backend": "brute"}})
    assert r.status_code == 400


def test_job_lifecycle(client):
    r = client.post("/jobs", json={"model": model_to_dict(frustrated_triangle())})
    assert r.status_code == 202
    job_id = r.json()["id"]
    for _ in range(200):
        status = client.get(f"/jobs/{job_id}").json()
        if status["state"] in ("done", "failed"):
            break
        time.sleep(0.02)
    assert status["state"] == "done"
    assert status["result"]["lp_objective"] == 3.0
    assert len(status["trace"]) == len(status["result"]["trace"])
    assert client.get("/jobs/nope").status_code == 404


def test_failed_job_reports_error(client):
    huge = Graph((10,) * 8, (), tuple(np.zeros(10) for _ in range(8)), ())
    job_id = client.post("/jobs", json={"model": model_to_dict(huge), "options": {"backend": "brute"}}).json()["id"]
    for _ in range(200):
        status = client.get(f"/jobs/{job_id}").json()
        if status["state"] in ("done", "failed"):
            break
        time.sleep(0.02)
    assert status["state"] == "failed" and "StateSpaceTooLarge" in status["error"]
