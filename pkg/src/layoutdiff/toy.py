"""A deterministic toy denoiser with a closed-form limit.

Each step contracts the latent toward a target tensor derived from the
conditioning: z' = z + alpha_t * (target - z).  The target is a per-channel
constant hashed from the prompt, additively modulated by the normalized
control depth (weight 0.1), and — when a reference is attached — averaged
50/50 with the reference signature.  Because the update is elementwise, any
masked region orchestrated on top of this denoiser converges to exactly its
own conditioning's target, which is what makes the blending, inpainting, and
identity-preservation properties checkable without a neural network.

Reference ids are self-describing ("toyref1:" + base64 of the per-channel
float32 signature), so a loopback server can resolve them statelessly.
"""

from __future__ import annotations

import base64
import hashlib
import time
from dataclasses import dataclass

import numpy as np

from .raster import DepthMap, depth_to_codes

CONTROL_WEIGHT = 0.1
REFERENCE_MIX = 0.5
REFERENCE_PREFIX = "toyref1:"

BACKEND_NAME = "toy"
MAX_BATCH = 64


@dataclass(frozen=True)
class ToySchedule:
    """Per-step contraction rates, each in (0, 1]."""

    alphas: np.ndarray

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=np.float64)
        if alphas.ndim != 1 or alphas.size == 0:
            raise ValueError("schedule needs a 1-D, non-empty alpha array")
        if np.any(alphas <= 0.0) or np.any(alphas > 1.0):
            raise ValueError("alphas must lie in (0, 1]")
        object.__setattr__(self, "alphas", alphas)

    @property
    def steps(self) -> int:
        return int(self.alphas.size)

    @classmethod
    def default(cls, steps: int = 50) -> "ToySchedule":
        # ramping 0.25 -> 0.45 keeps prod(1 - alpha) far below 1e-6 at N = 50
        return cls(np.linspace(0.25, 0.45, steps))

    @classmethod
    def constant(cls, alpha: float, steps: int) -> "ToySchedule":
        return cls(np.full(steps, float(alpha)))


def prompt_base(prompt: str, channels: int) -> np.ndarray:
    """Stable per-channel constants in [-1, 1] from a 64-bit prompt hash."""
    digest = hashlib.blake2b(prompt.encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    return rng.uniform(-1.0, 1.0, size=channels)


def region_signature(latent: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-channel mean of the latent over the masked cells, float32."""
    if latent.shape[1:] != mask.shape:
        raise ValueError(f"mask shape {mask.shape} != latent grid {latent.shape[1:]}")
    if not bool(np.any(mask)):
        return np.zeros(latent.shape[0], dtype=np.float32)
    return latent[:, mask].mean(axis=1, dtype=np.float64).astype(np.float32)


def encode_reference(signature: np.ndarray) -> str:
    payload = np.ascontiguousarray(signature, dtype="<f4").tobytes()
    return REFERENCE_PREFIX + base64.b64encode(payload).decode("ascii")


def decode_reference(reference_id: str, channels: int) -> np.ndarray:
    if not reference_id.startswith(REFERENCE_PREFIX):
        raise ValueError(f"unknown reference id {reference_id!r}")
    try:
        raw = base64.b64decode(reference_id[len(REFERENCE_PREFIX):], validate=True)
    except Exception as exc:
        raise ValueError(f"unknown reference id {reference_id!r}") from exc
    if len(raw) != channels * 4:
        raise ValueError(
            f"reference id carries {len(raw)} bytes, expected {channels * 4}"
        )
    return np.frombuffer(raw, dtype="<f4").copy()


class ToyDenoiser:
    """In-process denoiser backend; registered under the name "toy".

    step_latency simulates the fixed cost of one backbone forward pass: a
    batched call pays it once, per-path calls pay it per path.  It defaults
    to zero so functional tests run fast; the scalability benchmark turns it
    on to reproduce the parallel-vs-iterative timing shape.
    """

    name = BACKEND_NAME
    max_batch = MAX_BATCH

    def __init__(
        self,
        schedule: ToySchedule | None = None,
        channels: int = 4,
        step_latency: float = 0.0,
    ):
        self.schedule = schedule or ToySchedule.default()
        self.channels = channels
        self.step_latency = step_latency
        self._control_cache: dict[tuple[int, tuple[int, int]], tuple[DepthMap, np.ndarray]] = {}

    # -- target construction -------------------------------------------

    def _control_field(self, depth: DepthMap, grid: tuple[int, int]) -> np.ndarray:
        key = (id(depth), grid)
        cached = self._control_cache.get(key)
        if cached is not None and cached[0] is depth:
            return cached[1]
        h, w = grid
        if depth.height % h or depth.width % w:
            raise ValueError(
                f"control depth {depth.width}x{depth.height} does not reduce to grid {w}x{h}"
            )
        codes, _ = depth_to_codes(depth)
        fh, fw = depth.height // h, depth.width // w
        field = (
            codes.astype(np.float64).reshape(h, fh, w, fw).mean(axis=(1, 3)) / 65535.0
        )
        if len(self._control_cache) > 8:
            self._control_cache.clear()
        self._control_cache[key] = (depth, field)
        return field

    def _target64(self, conditioning, shape: tuple[int, int, int]) -> np.ndarray:
        channels, h, w = shape
        target = np.empty(shape, dtype=np.float64)
        target[:] = prompt_base(conditioning.prompt, channels)[:, None, None]
        if conditioning.control_depth is not None:
            target += CONTROL_WEIGHT * self._control_field(conditioning.control_depth, (h, w))
        if conditioning.reference_id is not None:
            signature = decode_reference(conditioning.reference_id, channels)
            target = (1.0 - REFERENCE_MIX) * target + REFERENCE_MIX * signature[
                :, None, None
            ].astype(np.float64)
        return target

    def target_latent(self, conditioning, shape: tuple[int, int, int]) -> np.ndarray:
        """The fixed point the denoiser contracts toward, as a float32 latent."""
        return self._target64(conditioning, shape).astype(np.float32)

    # -- DenoiserContract ------------------------------------------------

    def _step_pure(self, latent: np.ndarray, t: int, conditioning) -> np.ndarray:
        if not 0 <= t < self.schedule.steps:
            raise ValueError(f"timestep {t} outside schedule range [0, {self.schedule.steps})")
        # the float32 target is the exact fixed point; do the update in
        # float64 so repeated steps follow the geometric decay closely
        target = self.target_latent(conditioning, latent.shape).astype(np.float64)
        z = latent.astype(np.float64)
        out = z + self.schedule.alphas[t] * (target - z)
        return out.astype(latent.dtype)

    def step(self, latent: np.ndarray, t: int, conditioning) -> np.ndarray:
        if self.step_latency:
            time.sleep(self.step_latency)
        return self._step_pure(latent, t, conditioning)

    def step_batch(self, latents, t: int, conditionings) -> list[np.ndarray]:
        """One simulated forward for the whole batch, then per-path math."""
        if self.step_latency:
            time.sleep(self.step_latency)
        return [self._step_pure(z, t, c) for z, c in zip(latents, conditionings)]

    def make_reference(self, latent: np.ndarray, mask: np.ndarray) -> str:
        return encode_reference(region_signature(latent, mask))

    def descriptor(self) -> dict:
        return {"name": self.name, "channels": self.channels, "max_batch": self.max_batch}


def decode_preview(latent: np.ndarray, upsample: int = 8) -> bytes:
    """Deterministic grayscale colormap of channel 0, upsampled, as PNG RGB."""
    from io import BytesIO

    from PIL import Image

    channel = latent[0].astype(np.float64)
    gray = np.clip(np.rint(128.0 + 64.0 * channel), 0, 255).astype(np.uint8)
    gray = np.repeat(np.repeat(gray, upsample, axis=0), upsample, axis=1)
    rgb = np.stack([gray, gray, gray], axis=-1)
    buf = BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
