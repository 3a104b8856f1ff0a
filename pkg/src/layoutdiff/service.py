"""HTTP session service: scene CRUD, control-signal previews, generation and
edit jobs, with crash-safe persistence.

Endpoints:
    POST /sessions                         create a session from a layout document
    GET  /sessions/{id}                    canonical layout + session state
    GET  /sessions/{id}/preview?kind=...   depth or masks PNG for the current scene
    POST /sessions/{id}/jobs               submit a generate or edit job
    GET  /jobs/{id}                        poll job status/progress/result
    GET  /images/{hash}                    fetch a stored image blob

Sessions persist as JSON documents plus content-addressed blobs for latents
and previews; a job commits its session atomically (blobs first, then one
document replace), so a crash or a failed backend leaves the last committed
state intact.  At most one job runs per session at a time.
"""

from __future__ import annotations

import argparse
import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse, Response

from . import orchestrator
from .gateway import GatewayError, RemoteDenoiser, make_local_backend
from .latents import load_latent, save_latent
from .orchestrator import GenerationConfig
from .raster import export_depth, export_masks, render_depth, render_masks
from .scene import (
    LayoutParseError,
    Scene,
    SceneError,
    apply_edits,
    edit_from_dict,
    scene_from_dict,
    scene_to_dict,
    validate_scene,
)
from .store import BlobStore, DocumentStore
from .toy import decode_preview


@dataclass(frozen=True)
class ServiceConfig:
    data_dir: Path
    host: str = "127.0.0.1"
    port: int = 8341
    backend: str = "toy"  # "toy" or a backend endpoint URL
    latent_channels: int = 4
    default_steps: int = 50

    def __post_init__(self):
        object.__setattr__(self, "data_dir", Path(self.data_dir))

    @classmethod
    def load(cls, config_path: str | None = None) -> "ServiceConfig":
        """File values first, then environment overrides (LAYOUTDIFF_*)."""
        doc: dict = {}
        if config_path:
            doc = json.loads(Path(config_path).read_text())
        env = os.environ
        return cls(
            data_dir=Path(env.get("LAYOUTDIFF_DATA_DIR", doc.get("data_dir", "./layoutdiff-data"))),
            host=env.get("LAYOUTDIFF_HOST", doc.get("host", "127.0.0.1")),
            port=int(env.get("LAYOUTDIFF_PORT", doc.get("port", 8341))),
            backend=env.get("LAYOUTDIFF_BACKEND", doc.get("backend", "toy")),
            latent_channels=int(env.get("LAYOUTDIFF_CHANNELS", doc.get("latent_channels", 4))),
            default_steps=int(env.get("LAYOUTDIFF_STEPS", doc.get("default_steps", 50))),
        )


@dataclass
class Job:
    id: str
    session_id: str
    kind: str  # "generate" | "edit"
    status: str = "queued"  # queued -> running -> done | failed
    done_steps: int = 0
    total_steps: int = 0
    error: str | None = None
    latent_hash: str | None = None
    preview_hash: str | None = None

    def to_dict(self) -> dict:
        doc = {
            "id": self.id,
            "session_id": self.session_id,
            "kind": self.kind,
            "status": self.status,
            "progress": {"completed": self.done_steps, "total": self.total_steps},
        }
        if self.error is not None:
            doc["error"] = self.error
        if self.status == "done":
            doc["result"] = {
                "latent_hash": self.latent_hash,
                "preview_url": f"/images/{self.preview_hash}",
            }
        return doc


@dataclass
class Session:
    id: str
    scene: Scene
    latent_hash: str | None = None
    job_history: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "layout": scene_to_dict(self.scene),
            "latent_hash": self.latent_hash,
            "jobs": self.job_history,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Session":
        return cls(
            id=doc["id"],
            scene=scene_from_dict(doc["layout"]),
            latent_hash=doc.get("latent_hash"),
            job_history=list(doc.get("jobs", [])),
        )


class ApiError(Exception):
    def __init__(self, status: int, detail, message: str | None = None):
        super().__init__(message or str(detail))
        self.status = status
        self.detail = detail


class SessionService:
    """All state and job logic behind the HTTP surface (testable directly)."""

    def __init__(self, config: ServiceConfig, denoiser_factory=None):
        self.config = config
        self.blobs = BlobStore(config.data_dir / "blobs")
        self.documents = DocumentStore(config.data_dir / "sessions")
        self.denoiser_factory = denoiser_factory or self._default_denoiser
        self.sessions: dict[str, Session] = {}
        self.jobs: dict[str, Job] = {}
        self._running: dict[str, str] = {}  # session id -> job id
        self._lock = threading.Lock()
        self._threads: list[threading.Thread] = []
        self._load()

    # -- persistence -------------------------------------------------------

    def _load(self) -> None:
        for key in self.documents.keys():
            session = Session.from_dict(self.documents.load(key))
            self.sessions[session.id] = session
            for job_doc in session.job_history:
                job = Job(
                    id=job_doc["id"],
                    session_id=session.id,
                    kind=job_doc["kind"],
                    status=job_doc["status"],
                    done_steps=job_doc.get("progress", {}).get("completed", 0),
                    total_steps=job_doc.get("progress", {}).get("total", 0),
                    error=job_doc.get("error"),
                    latent_hash=job_doc.get("result", {}).get("latent_hash"),
                )
                result = job_doc.get("result", {})
                if "preview_url" in result:
                    job.preview_hash = result["preview_url"].rsplit("/", 1)[-1]
                if job.status in ("queued", "running"):
                    job.status = "failed"
                    job.error = "interrupted by service restart"
                self.jobs[job.id] = job

    def _commit(self, session: Session) -> None:
        self.documents.save(session.id, session.to_dict())

    # -- backends ------------------------------------------------------------

    def _default_denoiser(self, backend: str, steps: int, channels: int):
        if backend == "toy":
            return make_local_backend("toy", steps=steps, channels=channels)
        return RemoteDenoiser(backend, expected_channels=channels)

    # -- session operations ----------------------------------------------

    def create_session(self, layout_doc: dict) -> Session:
        try:
            scene = scene_from_dict(layout_doc)
        except LayoutParseError as exc:
            raise ApiError(422, {"violations": [str(exc)]})
        violations = validate_scene(scene)
        if violations:
            raise ApiError(422, {"violations": [str(v) for v in violations]})
        session = Session(id=uuid.uuid4().hex, scene=scene)
        with self._lock:
            self.sessions[session.id] = session
            self._commit(session)
        return session

    def get_session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise ApiError(404, f"unknown session {session_id!r}")
        return session

    def session_state(self, session_id: str) -> dict:
        session = self.get_session(session_id)
        with self._lock:
            active = self._running.get(session_id)
        doc = session.to_dict()
        doc["active_job"] = active
        return doc

    def preview(self, session_id: str, kind: str) -> bytes:
        session = self.get_session(session_id)
        if kind == "depth":
            return export_depth(render_depth(session.scene))
        if kind == "masks":
            return export_masks(render_masks(session.scene))
        raise ApiError(422, f"unknown preview kind {kind!r}")

    def image(self, digest: str) -> bytes:
        try:
            return self.blobs.get(digest)
        except KeyError:
            raise ApiError(404, f"unknown image {digest!r}") from None

    def get_job(self, job_id: str) -> Job:
        job = self.jobs.get(job_id)
        if job is None:
            raise ApiError(404, f"unknown job {job_id!r}")
        return job

    # -- jobs ------------------------------------------------------------

    def submit_job(self, session_id: str, request: dict, wait: bool = False) -> Job:
        session = self.get_session(session_id)
        kind = request.get("kind")
        if kind not in ("generate", "edit"):
            raise ApiError(422, f"job kind must be 'generate' or 'edit', got {kind!r}")

        config = self._generation_config(request.get("config") or {})
        edits = None
        if kind == "edit":
            if session.latent_hash is None:
                raise ApiError(412, "edit requires a prior generation on this session")
            try:
                edits = [edit_from_dict(doc) for doc in request.get("edits", [])]
                if not edits:
                    raise ApiError(422, "edit job carries no edits")
                apply_edits(session.scene, edits)  # validate against the current scene
            except ApiError:
                raise
            except (SceneError, LayoutParseError) as exc:
                raise ApiError(422, {"violations": [str(exc)]})

        backend = request.get("backend", self.config.backend)
        try:
            denoiser = self.denoiser_factory(backend, config.steps, config.latent_channels)
        except GatewayError as exc:
            raise ApiError(422, f"backend unavailable: {exc}")

        job = Job(
            id=uuid.uuid4().hex,
            session_id=session_id,
            kind=kind,
            total_steps=config.steps * (2 if config.two_stage and kind == "generate" else 1),
        )
        with self._lock:
            if session_id in self._running:
                raise ApiError(409, f"job {self._running[session_id]!r} already running on session")
            self._running[session_id] = job.id
            self.jobs[job.id] = job
            session.job_history.append(job.to_dict())
            self._commit(session)

        if wait:
            self._run_job(job, session, denoiser, config, edits)
        else:
            thread = threading.Thread(
                target=self._run_job, args=(job, session, denoiser, config, edits), daemon=True
            )
            self._threads.append(thread)
            thread.start()
        return job

    def _generation_config(self, doc: dict) -> GenerationConfig:
        try:
            return GenerationConfig(
                steps=int(doc.get("steps", self.config.default_steps)),
                seed=int(doc.get("seed", 0)),
                use_background_path=bool(doc.get("use_background_path", True)),
                two_stage=bool(doc.get("two_stage", False)),
                mode=doc.get("mode", orchestrator.PARALLEL),
                latent_channels=int(doc.get("latent_channels", self.config.latent_channels)),
            )
        except ValueError as exc:
            raise ApiError(422, f"invalid generation config: {exc}")

    def _run_job(self, job: Job, session: Session, denoiser, config, edits) -> None:
        job.status = "running"

        def progress(done: int, total: int) -> None:
            job.done_steps = done
            job.total_steps = total

        try:
            if job.kind == "generate":
                latent = orchestrator.generate_scene(
                    session.scene, denoiser, config, progress=progress
                )
                result_scene = session.scene
            else:
                # re-derive from the scene as of job start; the one-writer rule
                # keeps it stable from here on
                new_scene = apply_edits(session.scene, edits)
                z_img = load_latent(self.blobs.get(session.latent_hash))
                latent = orchestrator.edit_apply(
                    session.scene, new_scene, z_img, denoiser, config, progress=progress
                )
                result_scene = new_scene
            latent_hash = self.blobs.put(save_latent(latent))
            preview_hash = self.blobs.put(decode_preview(latent))
            with self._lock:
                session.scene = result_scene
                session.latent_hash = latent_hash
                job.status = "done"
                job.latent_hash = latent_hash
                job.preview_hash = preview_hash
                self._update_history(session, job)
                self._commit(session)
        except Exception as exc:
            with self._lock:
                job.status = "failed"
                job.error = str(exc)
                self._update_history(session, job)
                self._commit(session)
        finally:
            with self._lock:
                self._running.pop(session.id, None)

    def _update_history(self, session: Session, job: Job) -> None:
        for i, doc in enumerate(session.job_history):
            if doc["id"] == job.id:
                session.job_history[i] = job.to_dict()
                return
        session.job_history.append(job.to_dict())


def create_app(service: SessionService) -> FastAPI:
    app = FastAPI(title="layoutdiff session service")

    @app.exception_handler(ApiError)
    async def _api_error(_, exc: ApiError):
        detail = exc.detail if isinstance(exc.detail, (dict, list)) else {"error": exc.detail}
        return JSONResponse(status_code=exc.status, content=detail)

    @app.post("/sessions", status_code=201)
    async def create_session(layout: dict):
        session = service.create_session(layout)
        return {"id": session.id}

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str):
        return service.session_state(session_id)

    @app.get("/sessions/{session_id}/preview")
    async def preview(session_id: str, kind: str = "depth"):
        return Response(content=service.preview(session_id, kind), media_type="image/png")

    @app.post("/sessions/{session_id}/jobs", status_code=202)
    async def submit_job(session_id: str, request: dict):
        job = service.submit_job(session_id, request)
        return {"job_id": job.id}

    @app.get("/jobs/{job_id}")
    async def get_job(job_id: str):
        return service.get_job(job_id).to_dict()

    @app.get("/images/{digest}")
    async def image(digest: str):
        return Response(content=service.image(digest), media_type="image/png")

    return app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="run the layout session service")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--host")
    parser.add_argument("--port", type=int)
    parser.add_argument("--data-dir")
    parser.add_argument("--backend")
    args = parser.parse_args(argv)

    config = ServiceConfig.load(args.config)
    overrides = {
        k: v
        for k, v in {
            "host": args.host,
            "port": args.port,
            "data_dir": Path(args.data_dir) if args.data_dir else None,
            "backend": args.backend,
        }.items()
        if v is not None
    }
    if overrides:
        from dataclasses import replace

        config = replace(config, **overrides)

    import uvicorn

    service = SessionService(config)
    app = create_app(service)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
