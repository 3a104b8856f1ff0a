"""Desk-scale scalability benchmark for the orchestrator.

Synthesizes grid layouts of increasing object count and times generation in
both scheduling modes.  "Memory" is the orchestrator's tracked live latent
bytes (allocator-independent), since the interesting quantity is how many
latent tensors each schedule keeps alive, not Python heap noise.  The toy
backend runs with a small simulated per-call latency standing in for the
fixed cost of one backbone forward, so batching effects are measurable.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from .orchestrator import PARALLEL, SEQUENTIAL, GenerationConfig, TensorLedger, generate_scene
from .scene import Camera, ObjectSpec, OrientedBox, Scene
from .toy import ToyDenoiser, ToySchedule

DEFAULT_STEP_LATENCY = 0.004  # seconds per simulated backbone forward


@dataclass(frozen=True)
class BenchRow:
    objects: int
    mode: str
    seconds: float
    peak_tensor_bytes: int


@dataclass(frozen=True)
class BenchReport:
    steps: int
    step_latency: float
    latent_bytes: int
    rows: tuple[BenchRow, ...] = field(default_factory=tuple)

    def __post_init__(self):
        by_mode: dict[str, int] = {}
        for row in self.rows:
            last = by_mode.get(row.mode)
            if last is not None and row.objects <= last:
                raise ValueError("object counts must be strictly increasing per mode")
            by_mode[row.mode] = row.objects

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "step_latency": self.step_latency,
            "latent_bytes": self.latent_bytes,
            "rows": [
                {
                    "objects": r.objects,
                    "mode": r.mode,
                    "seconds": r.seconds,
                    "peak_tensor_bytes": r.peak_tensor_bytes,
                }
                for r in self.rows
            ],
        }


def grid_scene(n_objects: int, resolution: int = 128) -> Scene:
    """A camera-facing grid of boxes, spaced so every object owns pixels."""
    cols = max(1, math.ceil(math.sqrt(n_objects)))
    rows = math.ceil(n_objects / cols)
    objects = []
    for k in range(n_objects):
        r, c = divmod(k, cols)
        x = (c - (cols - 1) / 2.0) * 2.0
        y = ((rows - 1) / 2.0 - r) * 2.0
        objects.append(
            ObjectSpec(
                box=OrientedBox(id=f"object_{k}", center=(x, y, 8.0), size=(1.2, 1.2, 1.2)),
                prompt=f"benchmark object {k}",
            )
        )
    return Scene(
        camera=Camera.default(resolution, resolution),
        objects=tuple(objects),
        background_prompt="benchmark background",
    )


def run_bench(
    sizes: list[int],
    steps: int = 50,
    modes: tuple[str, ...] = (PARALLEL, SEQUENTIAL),
    step_latency: float = DEFAULT_STEP_LATENCY,
    seed: int = 0,
    resolution: int = 128,
) -> BenchReport:
    rows: list[BenchRow] = []
    channels = 4
    latent_bytes = channels * (resolution // 8) ** 2 * 4
    for mode in modes:
        for n in sizes:
            scene = grid_scene(n, resolution)
            denoiser = ToyDenoiser(
                ToySchedule.default(steps), channels=channels, step_latency=step_latency
            )
            config = GenerationConfig(steps=steps, seed=seed, mode=mode, latent_channels=channels)
            ledger = TensorLedger()
            start = time.perf_counter()
            generate_scene(scene, denoiser, config, ledger=ledger)
            elapsed = time.perf_counter() - start
            rows.append(BenchRow(n, mode, elapsed, ledger.peak))
    return BenchReport(
        steps=steps, step_latency=step_latency, latent_bytes=latent_bytes, rows=tuple(rows)
    )


def format_table(report: BenchReport) -> str:
    lines = [
        f"steps={report.steps}  step_latency={report.step_latency * 1000:.1f}ms  "
        f"latent={report.latent_bytes} B",
        f"{'objects':>8} {'mode':>22} {'seconds':>9} {'peak tensor bytes':>18}",
    ]
    for r in report.rows:
        lines.append(f"{r.objects:>8} {r.mode:>22} {r.seconds:>9.3f} {r.peak_tensor_bytes:>18}")
    return "\n".join(lines)
