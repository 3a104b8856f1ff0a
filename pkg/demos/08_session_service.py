"""The interactive loop over HTTP: create a session, generate, move a box.

Runs the session service on a loopback port, then drives it exactly as the
browser editor does: POST the layout, submit a generate job, poll it, fetch
previews, submit an edit job, and compare the before/after previews.
"""

import tempfile
import threading
import time

import httpx
import uvicorn

from layoutdiff import Camera, ObjectSpec, OrientedBox, Scene
from layoutdiff.scene import scene_to_dict
from layoutdiff.service import ServiceConfig, SessionService, create_app

scene = Scene(
    camera=Camera.default(512, 512),
    objects=(ObjectSpec(OrientedBox("sofa", (-0.8, 0.0, 6.0), (2.0, 1.2, 1.0)), "a green sofa"),),
    background_prompt="a loft apartment",
)

with tempfile.TemporaryDirectory() as data_dir:
    service = SessionService(ServiceConfig(data_dir=data_dir, port=0))
    server = uvicorn.Server(uvicorn.Config(create_app(service), host="127.0.0.1", port=0, log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    base = f"http://127.0.0.1:{port}"
    print("service listening at", base)

    session_id = httpx.post(f"{base}/sessions", json=scene_to_dict(scene)).json()["id"]
    print("session:", session_id)

    def run_job(body):
        job_id = httpx.post(f"{base}/sessions/{session_id}/jobs", json=body).json()["job_id"]
        while True:
            job = httpx.get(f"{base}/jobs/{job_id}").json()
            if job["status"] in ("done", "failed"):
                return job
            time.sleep(0.05)

    job = run_job({"kind": "generate", "config": {"steps": 30, "seed": 2}})
    print("generate:", job["status"], job["progress"])
    before_png = httpx.get(base + job["result"]["preview_url"]).content

    job = run_job({
        "kind": "edit",
        "edits": [{"op": "transform", "id": "sofa",
                   "box": {"center": [1.2, 0.0, 6.0], "size": [2.0, 1.2, 1.0], "yaw": 0.0}}],
        "config": {"steps": 30, "seed": 2},
    })
    print("edit:", job["status"], job["progress"])
    after_png = httpx.get(base + job["result"]["preview_url"]).content
    print(f"previews differ: {before_png != after_png} "
          f"({len(before_png)} vs {len(after_png)} bytes)")

    server.should_exit = True
    thread.join(timeout=5)
