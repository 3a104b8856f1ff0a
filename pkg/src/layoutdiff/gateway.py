"""Wire protocol for remote denoiser backends, plus a loopback reference server.

The protocol is deliberately small: one POST /v1/step endpoint taking a JSON
envelope with a batch of step requests (latents as base64 little-endian
float32, C-order), and GET /v1/health returning a backend descriptor.  A
batch of K requests is semantically identical to K single-request calls;
bit-exactness is carried by the raw payload, never the JSON floats.

Reference ids travel as opaque strings.  The toy protocol's ids are
self-describing signatures (see layoutdiff.toy), so the reference server
resolves them without shared state; real GPU backends may substitute their
own handle scheme.
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import httpx

from .latents import decode_payload, encode_payload
from .orchestrator import Conditioning
from .raster import DepthMap, export_depth, import_depth
from .toy import ToyDenoiser, ToySchedule, encode_reference, region_signature

DEFAULT_TIMEOUT = 120.0


class GatewayError(Exception):
    pass


class GatewayTimeoutError(GatewayError):
    pass


class GatewayTransportError(GatewayError):
    pass


class GatewayProtocolError(GatewayError):
    pass


@dataclass(frozen=True)
class StepRequest:
    job_id: str
    path_id: str
    timestep: int
    latent: "object"  # (C, h, w) float32 array
    conditioning: Conditioning
    seed: int = 0


@dataclass(frozen=True)
class StepResponse:
    path_id: str
    timestep: int
    latent: "object"


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    channels: int
    max_batch: int


def _request_to_wire(req: StepRequest, png_cache: dict | None = None) -> dict:
    control_b64 = None
    depth = req.conditioning.control_depth
    if depth is not None:
        if png_cache is not None and id(depth) in png_cache and png_cache[id(depth)][0] is depth:
            control_b64 = png_cache[id(depth)][1]
        else:
            control_b64 = base64.b64encode(export_depth(depth)).decode("ascii")
            if png_cache is not None:
                if len(png_cache) > 8:
                    png_cache.clear()
                png_cache[id(depth)] = (depth, control_b64)
    return {
        "job_id": req.job_id,
        "path_id": req.path_id,
        "timestep": req.timestep,
        "shape": list(req.latent.shape),
        "latent": encode_payload(req.latent),
        "prompt": req.conditioning.prompt,
        "control_png": control_b64,
        "reference_id": req.conditioning.reference_id,
        "guidance": req.conditioning.guidance,
        "seed": req.seed,
    }


def remote_step(
    endpoint: str,
    batch: list[StepRequest],
    timeout: float = DEFAULT_TIMEOUT,
    png_cache: dict | None = None,
) -> list[StepResponse]:
    """Execute a batch of denoiser steps on a remote backend, order-preserving.

    A failed batch has no partial effect: the caller retries the whole
    timestep or fails the job.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    context = f"job {batch[0].job_id!r}, timestep {batch[0].timestep}, paths {[r.path_id for r in batch]}"
    body = {"requests": [_request_to_wire(r, png_cache) for r in batch]}
    try:
        response = httpx.post(f"{endpoint.rstrip('/')}/v1/step", json=body, timeout=timeout)
    except httpx.TimeoutException as exc:
        raise GatewayTimeoutError(f"backend timed out ({context}): {exc}") from exc
    except httpx.TransportError as exc:
        raise GatewayTransportError(f"backend unreachable ({context}): {exc}") from exc
    if response.status_code != 200:
        raise GatewayProtocolError(
            f"backend returned HTTP {response.status_code} ({context}): {response.text[:200]}"
        )
    try:
        payload = response.json()["responses"]
    except (KeyError, ValueError) as exc:
        raise GatewayProtocolError(f"malformed response envelope ({context})") from exc
    if not isinstance(payload, list) or len(payload) != len(batch):
        raise GatewayProtocolError(
            f"expected {len(batch)} responses, got {len(payload) if isinstance(payload, list) else 'non-list'} ({context})"
        )
    out: list[StepResponse] = []
    for req, item in zip(batch, payload):
        item_context = f"path {req.path_id!r}, timestep {req.timestep}"
        try:
            shape = tuple(item["shape"])
            latent = decode_payload(item["latent"], shape)
        except (KeyError, ValueError, TypeError) as exc:
            raise GatewayProtocolError(f"malformed response item ({item_context}): {exc}") from exc
        if shape != tuple(req.latent.shape):
            raise GatewayProtocolError(
                f"shape mismatch ({item_context}): got {shape}, expected {tuple(req.latent.shape)}"
            )
        out.append(StepResponse(path_id=item.get("path_id", req.path_id), timestep=req.timestep, latent=latent))
    return out


def health_check(endpoint: str, timeout: float = 10.0) -> BackendDescriptor:
    try:
        response = httpx.get(f"{endpoint.rstrip('/')}/v1/health", timeout=timeout)
    except httpx.TimeoutException as exc:
        raise GatewayTimeoutError(f"health check timed out: {exc}") from exc
    except httpx.TransportError as exc:
        raise GatewayTransportError(f"backend unreachable: {exc}") from exc
    if response.status_code != 200:
        raise GatewayProtocolError(f"health check returned HTTP {response.status_code}")
    try:
        doc = response.json()
        return BackendDescriptor(
            name=str(doc["name"]), channels=int(doc["channels"]), max_batch=int(doc["max_batch"])
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise GatewayProtocolError(f"malformed health descriptor: {exc}") from exc


class RemoteDenoiser:
    """DenoiserContract adapter for a remote backend endpoint.

    Fetches the backend descriptor up front so channel mismatches fail at job
    start, not mid-run.  Batches a timestep's paths up to the backend's
    max_batch.
    """

    def __init__(
        self,
        endpoint: str,
        job_id: str = "job",
        timeout: float = DEFAULT_TIMEOUT,
        expected_channels: int | None = None,
    ):
        self.endpoint = endpoint
        self.job_id = job_id
        self.timeout = timeout
        self.descriptor = health_check(endpoint)
        if expected_channels is not None and self.descriptor.channels != expected_channels:
            raise GatewayProtocolError(
                f"backend serves {self.descriptor.channels} latent channels, "
                f"session expects {expected_channels}"
            )
        self._png_cache: dict = {}

    def step(self, latent, t: int, conditioning: Conditioning):
        request = StepRequest(self.job_id, "single", t, latent, conditioning)
        return remote_step(self.endpoint, [request], self.timeout, self._png_cache)[0].latent

    def step_batch(self, latents, t: int, conditionings) -> list:
        requests = [
            StepRequest(self.job_id, f"path-{i}", t, z, cond)
            for i, (z, cond) in enumerate(zip(latents, conditionings))
        ]
        out = []
        size = max(1, self.descriptor.max_batch)
        for start in range(0, len(requests), size):
            chunk = requests[start : start + size]
            out.extend(r.latent for r in remote_step(self.endpoint, chunk, self.timeout, self._png_cache))
        return out

    def make_reference(self, latent, mask) -> str:
        # the toy wire protocol's reference ids are content-encoded signatures
        return encode_reference(region_signature(latent, mask))


def make_local_backend(
    name: str, steps: int = 50, channels: int = 4, step_latency: float = 0.0
) -> ToyDenoiser:
    """The gateway's local backend registry; only "toy" is built in."""
    if name == "toy":
        return ToyDenoiser(ToySchedule.default(steps), channels=channels, step_latency=step_latency)
    raise KeyError(f"unknown local backend {name!r}")


# --- reference loopback server ----------------------------------------------

class ToyBackendServer:
    """Serves a ToyDenoiser over the wire protocol on a loopback socket.

    Intended for tests and as the reference implementation for GPU-side
    servers.  Decoded control PNGs are cached by content hash so repeated
    steps against the same layout stay cheap.
    """

    def __init__(self, denoiser: ToyDenoiser | None = None, host: str = "127.0.0.1", port: int = 0):
        self.denoiser = denoiser or ToyDenoiser()
        self._depth_cache: dict[str, DepthMap] = {}
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # quiet
                pass

            def _send_json(self, status: int, doc: dict) -> None:
                data = json.dumps(doc).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self):
                if self.path == "/v1/health":
                    self._send_json(200, server.denoiser.descriptor())
                else:
                    self._send_json(404, {"error": f"unknown path {self.path}"})

            def do_POST(self):
                if self.path != "/v1/step":
                    self._send_json(404, {"error": f"unknown path {self.path}"})
                    return
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    body = json.loads(self.rfile.read(length))
                    responses = [server.handle_step(req) for req in body["requests"]]
                    self._send_json(200, {"responses": responses})
                except Exception as exc:
                    self._send_json(400, {"error": str(exc)})

        self.httpd = ThreadingHTTPServer((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def handle_step(self, req: dict) -> dict:
        shape = tuple(int(d) for d in req["shape"])
        latent = decode_payload(req["latent"], shape)
        depth = None
        if req.get("control_png"):
            png = base64.b64decode(req["control_png"])
            key = hashlib.sha256(png).hexdigest()
            depth = self._depth_cache.get(key)
            if depth is None:
                depth = import_depth(png)
                if len(self._depth_cache) > 8:
                    self._depth_cache.clear()
                self._depth_cache[key] = depth
        conditioning = Conditioning(
            prompt=req["prompt"],
            control_depth=depth,
            reference_id=req.get("reference_id"),
            guidance=req.get("guidance", 1.0),
        )
        out = self.denoiser.step(latent, int(req["timestep"]), conditioning)
        return {
            "path_id": req["path_id"],
            "timestep": int(req["timestep"]),
            "shape": list(out.shape),
            "latent": encode_payload(out),
        }

    def start(self) -> "ToyBackendServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def __enter__(self) -> "ToyBackendServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()
