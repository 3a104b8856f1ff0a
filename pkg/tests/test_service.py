import io
import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from layoutdiff.latents import load_latent
from layoutdiff.raster import export_depth, export_masks, render_depth, render_masks
from layoutdiff.scene import scene_from_dict, scene_to_dict
from layoutdiff.service import ServiceConfig, SessionService, create_app
from layoutdiff.toy import ToyDenoiser, ToySchedule
from test_scene import two_object_scene


@pytest.fixture()
def service(tmp_path):
    return SessionService(ServiceConfig(data_dir=tmp_path / "data"))


@pytest.fixture()
def client(service):
    return TestClient(create_app(service))


def layout_doc() -> dict:
    return scene_to_dict(two_object_scene())


def wait_for(client, job_id, timeout=30.0) -> dict:
    deadline = time.time() + timeout
    while time.time() < deadline:
        doc = client.get(f"/jobs/{job_id}").json()
        if doc["status"] in ("done", "failed"):
            return doc
        time.sleep(0.01)
    raise TimeoutError(f"job {job_id} did not finish")


class TestSessions:
    def test_create_and_round_trip(self, client):
        response = client.post("/sessions", json=layout_doc())
        assert response.status_code == 201
        session_id = response.json()["id"]
        state = client.get(f"/sessions/{session_id}").json()
        assert scene_from_dict(state["layout"]) == two_object_scene()
        assert state["latent_hash"] is None

    def test_invalid_layout_is_422_with_report(self, client):
        doc = layout_doc()
        doc["objects"][0]["size"] = [1.0, -1.0, 1.0]
        response = client.post("/sessions", json=doc)
        assert response.status_code == 422
        assert any("size must be positive" in v for v in response.json()["violations"])

    def test_duplicate_create_gives_distinct_sessions(self, client):
        a = client.post("/sessions", json=layout_doc()).json()["id"]
        b = client.post("/sessions", json=layout_doc()).json()["id"]
        assert a != b

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope").status_code == 404


class TestPreviews:
    def test_depth_preview_of_empty_scene_all_zero(self, client):
        doc = layout_doc()
        doc["objects"] = []
        session_id = client.post("/sessions", json=doc).json()["id"]
        response = client.get(f"/sessions/{session_id}/preview", params={"kind": "depth"})
        assert response.status_code == 200
        img = np.asarray(Image.open(io.BytesIO(response.content)))
        assert img.dtype == np.uint16
        assert np.all(img == 0)

    def test_previews_match_rasterizer_exports(self, client):
        session_id = client.post("/sessions", json=layout_doc()).json()["id"]
        scene = two_object_scene()
        depth = client.get(f"/sessions/{session_id}/preview", params={"kind": "depth"})
        masks = client.get(f"/sessions/{session_id}/preview", params={"kind": "masks"})
        assert depth.content == export_depth(render_depth(scene))
        assert masks.content == export_masks(render_masks(scene))

    def test_unknown_session_preview_404(self, client):
        assert client.get("/sessions/nope/preview", params={"kind": "depth"}).status_code == 404

    def test_unknown_kind_422(self, client):
        session_id = client.post("/sessions", json=layout_doc()).json()["id"]
        assert client.get(f"/sessions/{session_id}/preview", params={"kind": "rgb"}).status_code == 422


class TestJobs:
    def test_generate_then_preview_available(self, client):
        session_id = client.post("/sessions", json=layout_doc()).json()["id"]
        response = client.post(
            f"/sessions/{session_id}/jobs",
            json={"kind": "generate", "config": {"steps": 12, "seed": 5}},
        )
        assert response.status_code == 202
        job = wait_for(client, response.json()["job_id"])
        assert job["status"] == "done"
        assert job["progress"] == {"completed": 12, "total": 12}
        preview = client.get(job["result"]["preview_url"])
        assert preview.status_code == 200
        state = client.get(f"/sessions/{session_id}").json()
        assert state["latent_hash"] == job["result"]["latent_hash"]

    def test_edit_before_generate_is_412(self, client):
        session_id = client.post("/sessions", json=layout_doc()).json()["id"]
        response = client.post(
            f"/sessions/{session_id}/jobs",
            json={"kind": "edit", "edits": [{"op": "remove", "id": "a"}]},
        )
        assert response.status_code == 412

    def test_invalid_edit_is_422(self, client):
        session_id = client.post("/sessions", json=layout_doc()).json()["id"]
        job = client.post(f"/sessions/{session_id}/jobs", json={"kind": "generate", "config": {"steps": 5}})
        wait_for(client, job.json()["job_id"])
        response = client.post(
            f"/sessions/{session_id}/jobs",
            json={"kind": "edit", "edits": [{"op": "remove", "id": "zzz"}]},
        )
        assert response.status_code == 422

    def test_concurrent_submit_rejected_409(self, tmp_path):
        slow = SessionService(
            ServiceConfig(data_dir=tmp_path / "slow"),
            denoiser_factory=lambda backend, steps, channels: ToyDenoiser(
                ToySchedule.default(steps), step_latency=0.02
            ),
        )
        slow_client = TestClient(create_app(slow))
        session_id = slow_client.post("/sessions", json=layout_doc()).json()["id"]
        first = slow_client.post(
            f"/sessions/{session_id}/jobs", json={"kind": "generate", "config": {"steps": 50}}
        )
        assert first.status_code == 202
        second = slow_client.post(f"/sessions/{session_id}/jobs", json={"kind": "generate"})
        assert second.status_code == 409
        wait_for(slow_client, first.json()["job_id"])

    def test_poll_unknown_job_404(self, client):
        assert client.get("/jobs/nope").status_code == 404

    def test_edit_job_updates_scene_and_latent(self, client):
        session_id = client.post("/sessions", json=layout_doc()).json()["id"]
        generate = client.post(
            f"/sessions/{session_id}/jobs", json={"kind": "generate", "config": {"steps": 10}}
        )
        done = wait_for(client, generate.json()["job_id"])
        before_hash = done["result"]["latent_hash"]
        edit = client.post(
            f"/sessions/{session_id}/jobs",
            json={
                "kind": "edit",
                "edits": [
                    {
                        "op": "transform",
                        "id": "a",
                        "box": {"center": [1.5, 0.0, 5.0], "size": [1.0, 1.0, 1.0], "yaw": 0.0},
                    }
                ],
                "config": {"steps": 10},
            },
        )
        done = wait_for(client, edit.json()["job_id"])
        assert done["status"] == "done"
        state = client.get(f"/sessions/{session_id}").json()
        assert state["layout"]["objects"][0]["center"] == [1.5, 0.0, 5.0]
        assert state["latent_hash"] != before_hash

    def test_failed_backend_leaves_session_unchanged(self, tmp_path):
        class FailingDenoiser(ToyDenoiser):
            def step(self, latent, t, conditioning):
                if t >= 3:
                    raise ConnectionError("backend died mid-run")
                return super().step(latent, t, conditioning)

            def step_batch(self, latents, t, conditionings):
                if t >= 3:
                    raise ConnectionError("backend died mid-run")
                return super().step_batch(latents, t, conditionings)

        calls = {"n": 0}

        def factory(backend, steps, channels):
            calls["n"] += 1
            if calls["n"] == 1:
                return ToyDenoiser(ToySchedule.default(steps))
            return FailingDenoiser(ToySchedule.default(steps))

        service = SessionService(ServiceConfig(data_dir=tmp_path / "data"), denoiser_factory=factory)
        client = TestClient(create_app(service))
        session_id = client.post("/sessions", json=layout_doc()).json()["id"]
        ok = client.post(f"/sessions/{session_id}/jobs", json={"kind": "generate", "config": {"steps": 8}})
        wait_for(client, ok.json()["job_id"])
        state_before = client.get(f"/sessions/{session_id}").json()

        failing = client.post(
            f"/sessions/{session_id}/jobs",
            json={
                "kind": "edit",
                "edits": [{"op": "remove", "id": "a"}],
                "config": {"steps": 8},
            },
        )
        done = wait_for(client, failing.json()["job_id"])
        assert done["status"] == "failed"
        assert "backend died" in done["error"]
        state_after = client.get(f"/sessions/{session_id}").json()
        assert state_after["layout"] == state_before["layout"]
        assert state_after["latent_hash"] == state_before["latent_hash"]

    def test_bad_job_kind_422(self, client):
        session_id = client.post("/sessions", json=layout_doc()).json()["id"]
        assert client.post(f"/sessions/{session_id}/jobs", json={"kind": "train"}).status_code == 422


class TestPersistence:
    def test_restart_reloads_sessions_bit_identical(self, tmp_path):
        config = ServiceConfig(data_dir=tmp_path / "data")
        service = SessionService(config)
        client = TestClient(create_app(service))
        ids = []
        for seed in (1, 2):
            session_id = client.post("/sessions", json=layout_doc()).json()["id"]
            job = client.post(
                f"/sessions/{session_id}/jobs",
                json={"kind": "generate", "config": {"steps": 10, "seed": seed}},
            )
            wait_for(client, job.json()["job_id"])
            ids.append(session_id)
        snapshots = {i: client.get(f"/sessions/{i}").json() for i in ids}
        latents = {
            i: load_latent(service.blobs.get(snapshots[i]["latent_hash"])) for i in ids
        }

        reloaded = SessionService(config)  # simulated restart on the same data dir
        client2 = TestClient(create_app(reloaded))
        for i in ids:
            state = client2.get(f"/sessions/{i}").json()
            assert state["layout"] == snapshots[i]["layout"]
            assert state["latent_hash"] == snapshots[i]["latent_hash"]
            assert np.array_equal(
                load_latent(reloaded.blobs.get(state["latent_hash"])), latents[i]
            )

    def test_interrupted_job_marked_failed_on_reload(self, tmp_path):
        config = ServiceConfig(data_dir=tmp_path / "data")
        service = SessionService(config)
        session = service.create_session(layout_doc())
        # simulate a crash right after the job record was committed as queued
        record = session.to_dict()
        record["jobs"].append(
            {"id": "j1", "kind": "generate", "status": "running",
             "progress": {"completed": 3, "total": 10}}
        )
        service.documents.save(session.id, record)
        reloaded = SessionService(config)
        job = reloaded.get_job("j1")
        assert job.status == "failed"
        assert "restart" in job.error


class TestConfig:
    def test_env_overrides_file(self, tmp_path, monkeypatch):
        config_file = tmp_path / "config.json"
        config_file.write_text(json.dumps({"data_dir": str(tmp_path / "a"), "default_steps": 7}))
        monkeypatch.setenv("LAYOUTDIFF_STEPS", "9")
        config = ServiceConfig.load(str(config_file))
        assert config.default_steps == 9
        assert config.data_dir == tmp_path / "a"
