import pytest
from fastapi.testclient import TestClient

from lcvn import __version__, config
from lcvn.api import plan as plan_api
from lcvn.api.plan import Planner, PlanRequest, PlanResponse, planner_dependency
from lcvn.config import save_run_config
from lcvn.main import app

# File: tests/test_api.py


class FakePlanner:
    def __init__(self):
        self.requests = []

    def plan(self, req: PlanRequest) -> PlanResponse:
        self.requests.append(req)
        return PlanResponse(
            family=req.family,
            actions=[{"dx": 0.3, "dy": 0.0, "dyaw": 0.0, "stop": False}, {"dx": 0.0, "dy": 0.0, "dyaw": 0.0, "stop": True}],
            poses=[[0.0, 0.0, 0.0], [0.3, 0.0, 0.0], [0.3, 0.0, 0.0]],
            stopped=True,
            latency_s=0.01,
        )


@pytest.fixture
def client():
    yield TestClient(app)
    app.dependency_overrides.clear()
    plan_api.get_planner.cache_clear()


@pytest.fixture
def run_dir(tiny_config):
    """A run directory holding only its config, no checkpoints."""
    save_run_config(tiny_config, tiny_config.run_dir / "config.yaml")
    return tiny_config.run_dir


def test_health(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok", "version": __version__}


def test_plan_with_fake_planner(client):
    fake = FakePlanner()
    app.dependency_overrides[planner_dependency] = lambda: fake
    resp = client.post("/plan", json={"instruction": "go straight then stop", "render": {"layout_seed": 3}, "family": "uni"})
    assert resp.status_code == 200
    body = resp.json()
    assert body["family"] == "uni"
    assert body["stopped"] is True
    assert len(body["poses"]) == len(body["actions"]) + 1
    assert fake.requests[0].t_max == 32


@pytest.mark.parametrize(
    "payload",
    [
        {"instruction": "go", "t_max": 0},
        {"instruction": "go", "family": "random"},
        {"render": {"layout_seed": 1}},
    ],
)
def test_plan_request_validation(client, payload):
    app.dependency_overrides[planner_dependency] = FakePlanner
    assert client.post("/plan", json=payload).status_code == 422


def test_plan_without_run_dir_is_unavailable(client, monkeypatch):
    monkeypatch.setattr(config, "RUN_DIR", None)
    plan_api.get_planner.cache_clear()
    resp = client.post("/plan", json={"instruction": "go", "render": {"layout_seed": 1}})
    assert resp.status_code == 503
    assert "LCVN_RUN_DIR" in resp.json()["detail"]


def test_planner_needs_run_config(tmp_path):
    with pytest.raises(plan_api.PrerequisiteError):
        Planner(tmp_path)


def test_plan_rejects_bad_inputs(client, run_dir):
    planner = Planner(run_dir)
    app.dependency_overrides[planner_dependency] = lambda: planner
    unknown_word = client.post("/plan", json={"instruction": "teleport home", "render": {"layout_seed": 1}})
    assert unknown_word.status_code == 422
    assert "vocabulary" in unknown_word.json()["detail"]
    wrong_shape = client.post("/plan", json={"instruction": "stop", "observation": [[[0.0, 0.0, 0.0]]]})
    assert wrong_shape.status_code == 422
    neither = client.post("/plan", json={"instruction": "stop"})
    assert neither.status_code == 422


def test_plan_without_checkpoints_is_unavailable(client, run_dir):
    planner = Planner(run_dir)
    app.dependency_overrides[planner_dependency] = lambda: planner
    resp = client.post("/plan", json={"instruction": "stop", "render": {"layout_seed": 1, "pose": {"x": 1.0}}})
    assert resp.status_code == 503
    assert "checkpoint" in resp.json()["detail"]


def test_planner_renders_observation(run_dir):
    planner = Planner(run_dir)
    size = planner.ctx.cfg.datagen.image_size
    obs = planner.observation(PlanRequest(instruction="stop", render={"layout_seed": 2}))
    assert obs.shape == (size, size, 3)
