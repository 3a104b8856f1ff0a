"""Blended multi-path latent diffusion orchestration.

One denoising path runs per object plus one for the background, every path
conditioned on its own prompt and the shared layout depth map.  After each
timestep the per-path predictions are merged into a single composed latent by
masked summation (exact selection for binary partition masks), and that
composed latent feeds every path at the next timestep.  Edits reuse the same
machinery over the add/remove regions only, re-blending against the original
image latent each step so everything outside the active region is preserved
bit-for-bit.  Moved objects carry a reference to their source-region
signature so a backend can keep their appearance; camera changes fall back to
full regeneration with every surviving object referencing the current image.

The orchestrator never looks inside the denoiser: any object satisfying
``DenoiserContract`` works, locally or across the wire.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Protocol, runtime_checkable

import numpy as np

from .latents import seeded_latent
from .raster import DepthMap, MaskSet, downsample_masks, render_depth, render_masks
from .scene import (
    AddObject,
    ObjectSpec,
    OrientedBox,
    RemoveObject,
    ReplaceObject,
    Scene,
    SetCamera,
    TransformObject,
    diff_scenes,
    validate_scene,
)

PARALLEL = "parallel"
SEQUENTIAL = "sequential-emulation"

ProgressFn = Callable[[int, int], None]


class OrchestrationError(Exception):
    """A generation/edit job failed; message carries path and timestep context."""


@dataclass(frozen=True)
class Conditioning:
    prompt: str
    control_depth: DepthMap | None = None
    reference_id: str | None = None
    guidance: float = 1.0

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("conditioning prompt must be non-empty")
        if self.guidance < 0:
            raise ValueError("guidance must be >= 0")


@runtime_checkable
class DenoiserContract(Protocol):
    """One denoising step: deterministic for fixed inputs, shape-preserving.

    Implementations may additionally provide ``step_batch(latents, t, conds)``
    (one backbone invocation for a whole timestep's paths) and
    ``make_reference(latent, mask) -> str`` (mint a reference id for
    identity-preserving conditioning).
    """

    def step(self, latent: np.ndarray, t: int, conditioning: Conditioning) -> np.ndarray:
        ...


@dataclass(frozen=True)
class GenerationConfig:
    steps: int = 50
    seed: int = 0
    use_background_path: bool = True
    two_stage: bool = False
    mode: str = PARALLEL
    latent_channels: int = 4
    downsample_factor: int = 8
    guidance: float = 1.0
    retries: int = 2  # whole-timestep retries on denoiser failure

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.mode not in (PARALLEL, SEQUENTIAL):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class EditMaskTriple:
    """Addition/removal/preservation masks at latent resolution."""

    m_add: np.ndarray
    m_rem: np.ndarray
    m_pres: np.ndarray

    @property
    def active(self) -> np.ndarray:
        return self.m_add | self.m_rem


class TensorLedger:
    """Tracks live latent-tensor bytes the orchestrator holds, and their peak.

    Deliberately allocator-independent: it counts the latent-resolution
    float32 tensors the dataflow keeps alive, which is the quantity the
    parallel-vs-sequential schedule actually changes.
    """

    def __init__(self):
        self.live = 0
        self.peak = 0

    def alloc(self, nbytes: int) -> None:
        self.live += int(nbytes)
        if self.live > self.peak:
            self.peak = self.live

    def free(self, nbytes: int) -> None:
        self.live -= int(nbytes)


@dataclass
class PathSpec:
    path_id: str
    mask: np.ndarray  # (h, w) bool
    conditioning: Conditioning
    mask_f: np.ndarray = field(init=False)

    def __post_init__(self):
        self.mask = self.mask.astype(bool)
        self.mask_f = self.mask.astype(np.float32)


# --- the two blending primitives ------------------------------------------

def _as_bool_mask(mask: np.ndarray, grid: tuple[int, int]) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.shape != grid:
        raise ValueError(f"mask shape {mask.shape} != latent grid {grid}")
    return mask.astype(bool)


def blend_latents(
    predictions: list[tuple[np.ndarray, np.ndarray]],
    require_partition: bool = True,
) -> np.ndarray:
    """Merge per-path predictions: sum of prediction * mask, in list order.

    Masks must be mutually disjoint; with ``require_partition`` they must
    also cover every cell, making the merge an exact per-cell selection.
    """
    if not predictions:
        raise ValueError("nothing to blend")
    first = predictions[0][0]
    grid = first.shape[1:]
    cover = np.zeros(grid, dtype=np.int64)
    for pred, mask in predictions:
        if pred.shape != first.shape:
            raise ValueError(f"prediction shape {pred.shape} != {first.shape}")
        cover += _as_bool_mask(mask, grid)
    if np.any(cover > 1):
        raise ValueError("masks overlap; they must be disjoint")
    if require_partition and np.any(cover != 1):
        raise ValueError("masks do not form a partition of the latent grid")
    out = np.zeros(first.shape, dtype=np.float32)
    for pred, mask in predictions:
        out += pred.astype(np.float32) * np.asarray(mask).astype(np.float32)
    return out


def inpaint_blend(prediction: np.ndarray, m_obj: np.ndarray, z_img: np.ndarray) -> np.ndarray:
    """mask * prediction + (1 - mask) * image latent, elementwise."""
    if prediction.shape != z_img.shape:
        raise ValueError(f"prediction shape {prediction.shape} != image {z_img.shape}")
    mask_f = _as_bool_mask(m_obj, prediction.shape[1:]).astype(np.float32)
    return prediction.astype(np.float32) * mask_f + z_img.astype(np.float32) * (1.0 - mask_f)


# --- mask derivation --------------------------------------------------------

def latent_grid(scene: Scene, config: GenerationConfig) -> tuple[int, int, int]:
    cam = scene.camera
    f = config.downsample_factor
    if cam.width % f or cam.height % f:
        raise ValueError(
            f"camera resolution {cam.width}x{cam.height} not divisible by factor {f}"
        )
    return (config.latent_channels, cam.height // f, cam.width // f)


def scene_latent_masks(scene: Scene, factor: int) -> tuple[MaskSet, DepthMap]:
    """Occlusion-aware masks downsampled to the latent grid, plus the full-res
    depth map used both for tie-breaking and as the shared control signal."""
    depth = render_depth(scene)
    masks = downsample_masks(render_masks(scene), factor, depth)
    return masks, depth


def make_edit_masks(
    old_box: OrientedBox | None,
    new_box: OrientedBox | None,
    scene: Scene,
    factor: int = 8,
) -> EditMaskTriple:
    """Edit-mask triple for moving/adding/removing one box.

    `scene` provides the occluder context; any object sharing the edited
    box's id is excluded from it.  Overlap between the destination and the
    vacated region resolves toward the addition mask (the incoming object
    wins at its destination).
    """
    if old_box is None and new_box is None:
        raise ValueError("at least one of old_box/new_box is required")
    edited_ids = {box.id for box in (old_box, new_box) if box is not None}
    context = tuple(s for s in scene.objects if s.box.id not in edited_ids)

    def box_mask(box: OrientedBox) -> np.ndarray:
        probe = replace(scene, objects=context + (ObjectSpec(box=box, prompt="edited"),))
        masks, _ = scene_latent_masks(probe, factor)
        return masks.object_masks[box.id]

    grid = (scene.camera.height // factor, scene.camera.width // factor)
    m_add = box_mask(new_box) if new_box is not None else np.zeros(grid, dtype=bool)
    m_rem = box_mask(old_box) if old_box is not None else np.zeros(grid, dtype=bool)
    m_rem = m_rem & ~m_add
    return EditMaskTriple(m_add=m_add, m_rem=m_rem, m_pres=~(m_add | m_rem))


# --- the denoising loop -----------------------------------------------------

def _step_paths(
    denoiser: DenoiserContract,
    z: np.ndarray,
    t: int,
    paths: list[PathSpec],
    mode: str,
) -> list[np.ndarray]:
    if mode == PARALLEL and hasattr(denoiser, "step_batch"):
        preds = denoiser.step_batch([z] * len(paths), t, [p.conditioning for p in paths])
        preds = list(preds)
    else:
        preds = [denoiser.step(z, t, p.conditioning) for p in paths]
    for path, pred in zip(paths, preds):
        if pred.shape != z.shape:
            raise OrchestrationError(
                f"path {path.path_id!r} returned shape {pred.shape} at timestep {t}, "
                f"expected {z.shape}"
            )
    return preds


def _denoise_loop(
    z: np.ndarray,
    paths: list[PathSpec],
    denoiser: DenoiserContract,
    config: GenerationConfig,
    *,
    z_img: np.ndarray | None = None,
    active_mask: np.ndarray | None = None,
    carry_mask: np.ndarray | None = None,
    ledger: TensorLedger | None = None,
    progress: ProgressFn | None = None,
    done_steps: int = 0,
    total_steps: int | None = None,
) -> np.ndarray:
    """Run `config.steps` composed denoising steps over `paths`.

    With `z_img`/`active_mask` set, each composed step is re-blended against
    the image latent (inpainting mode).  `carry_mask` names cells no path
    owns; they carry the current latent forward unchanged (used when the
    background path is disabled).
    """
    ledger = ledger or TensorLedger()
    total = total_steps if total_steps is not None else config.steps
    nbytes = z.nbytes
    active_f = active_mask.astype(np.float32) if active_mask is not None else None
    carry_f = carry_mask.astype(np.float32) if carry_mask is not None else None

    for t in range(config.steps):
        attempt = 0
        while True:
            allocated = 0
            try:
                if config.mode == PARALLEL:
                    preds = _step_paths(denoiser, z, t, paths, config.mode)
                    allocated = sum(p.nbytes for p in preds)
                    ledger.alloc(allocated)
                    merged = np.zeros(z.shape, dtype=np.float32)
                    ledger.alloc(merged.nbytes)
                    allocated += merged.nbytes
                    for path, pred in zip(paths, preds):
                        merged += pred * path.mask_f
                    ledger.free(sum(p.nbytes for p in preds))
                    allocated = merged.nbytes
                else:
                    merged = np.zeros(z.shape, dtype=np.float32)
                    ledger.alloc(merged.nbytes)
                    allocated = merged.nbytes
                    for path in paths:
                        pred = denoiser.step(z, t, path.conditioning)
                        if pred.shape != z.shape:
                            raise OrchestrationError(
                                f"path {path.path_id!r} returned shape {pred.shape} "
                                f"at timestep {t}, expected {z.shape}"
                            )
                        ledger.alloc(pred.nbytes)
                        merged += pred * path.mask_f
                        ledger.free(pred.nbytes)
                if carry_f is not None:
                    merged += z * carry_f
                if z_img is not None:
                    composed = merged * active_f + z_img * (1.0 - active_f)
                    ledger.alloc(composed.nbytes)
                    ledger.free(merged.nbytes)
                    merged = composed
                break
            except OrchestrationError:
                ledger.free(allocated)
                raise
            except Exception as exc:
                ledger.free(allocated)
                attempt += 1
                if attempt > config.retries:
                    path_ids = [p.path_id for p in paths]
                    raise OrchestrationError(
                        f"denoiser failed at timestep {t} for paths {path_ids} "
                        f"after {config.retries} retries: {exc}"
                    ) from exc
        ledger.free(nbytes)
        z = merged
        if progress is not None:
            progress(done_steps + t + 1, total)
    return z


def _build_paths(
    scene: Scene,
    masks: MaskSet,
    depth: DepthMap,
    config: GenerationConfig,
    references: dict[str, str] | None = None,
) -> list[PathSpec]:
    references = references or {}
    paths = [
        PathSpec(
            path_id=spec.box.id,
            mask=masks.object_masks[spec.box.id],
            conditioning=Conditioning(
                prompt=spec.prompt,
                control_depth=depth,
                reference_id=references.get(spec.box.id),
                guidance=config.guidance,
            ),
        )
        for spec in scene.objects
    ]
    if config.use_background_path:
        paths.append(
            PathSpec(
                path_id="background",
                mask=masks.background_mask,
                conditioning=Conditioning(
                    prompt=scene.background_prompt,
                    control_depth=depth,
                    guidance=config.guidance,
                ),
            )
        )
    return paths


def _require_valid(scene: Scene) -> None:
    violations = validate_scene(scene)
    if violations:
        raise ValueError(
            "invalid scene: " + "; ".join(str(v) for v in violations)
        )


def _make_reference(denoiser: DenoiserContract, latent: np.ndarray, mask: np.ndarray) -> str:
    make = getattr(denoiser, "make_reference", None)
    if make is None:
        raise OrchestrationError("backend does not support reference conditioning")
    return make(latent, mask)


def generate_scene(
    scene: Scene,
    denoiser: DenoiserContract,
    config: GenerationConfig = GenerationConfig(),
    *,
    progress: ProgressFn | None = None,
    ledger: TensorLedger | None = None,
) -> np.ndarray:
    """One-shot scene generation: parallel per-region paths, merged each step.

    With ``two_stage`` the first full pass produces a reference image and the
    second re-runs generation with every object conditioned on its region of
    that reference.
    """
    return _generate(scene, denoiser, config, progress=progress, ledger=ledger)


def _generate(
    scene: Scene,
    denoiser: DenoiserContract,
    config: GenerationConfig,
    references: dict[str, str] | None = None,
    *,
    progress: ProgressFn | None = None,
    ledger: TensorLedger | None = None,
) -> np.ndarray:
    _require_valid(scene)
    ledger = ledger or TensorLedger()
    shape = latent_grid(scene, config)
    masks, depth = scene_latent_masks(scene, config.downsample_factor)
    two_stage = config.two_stage and references is None and bool(scene.objects)
    total = config.steps * (2 if two_stage else 1)

    if not scene.objects and not config.use_background_path:
        return seeded_latent(shape, config.seed)  # nothing owns any cell

    carry = None if config.use_background_path else masks.background_mask

    def run(refs: dict[str, str] | None, done: int) -> np.ndarray:
        paths = _build_paths(scene, masks, depth, config, refs)
        z = seeded_latent(shape, config.seed)
        ledger.alloc(z.nbytes)
        return _denoise_loop(
            z,
            paths,
            denoiser,
            config,
            carry_mask=carry,
            ledger=ledger,
            progress=progress,
            done_steps=done,
            total_steps=total,
        )

    z = run(references, 0)
    if two_stage:
        refs = {
            spec.box.id: _make_reference(denoiser, z, masks.object_masks[spec.box.id])
            for spec in scene.objects
        }
        ledger.free(z.nbytes)
        z = run(refs, config.steps)
    return z


# --- editing ----------------------------------------------------------------

def edit_apply(
    old_scene: Scene,
    new_scene: Scene,
    z_img: np.ndarray,
    denoiser: DenoiserContract,
    config: GenerationConfig = GenerationConfig(),
    *,
    progress: ProgressFn | None = None,
    ledger: TensorLedger | None = None,
) -> np.ndarray:
    """Apply the layout change from old_scene to new_scene onto z_img.

    Moves regenerate the object at its destination (conditioned on the
    source-region reference) while the vacated region is inpainted with the
    background prompt; adds/replaces/removes run a single active path.  Cells
    outside every active region stay bit-identical to z_img.  A camera change
    regenerates the whole scene with per-object references to z_img.
    """
    _require_valid(old_scene)
    _require_valid(new_scene)
    old_shape = latent_grid(old_scene, config)
    if z_img.shape != old_shape:
        raise ValueError(f"z_img shape {z_img.shape} != latent grid {old_shape}")
    edits = diff_scenes(old_scene, new_scene)
    if not edits:
        return z_img.copy()

    if any(isinstance(e, SetCamera) for e in edits):
        old_masks, _ = scene_latent_masks(old_scene, config.downsample_factor)
        refs = {
            spec.box.id: _make_reference(
                denoiser, z_img, old_masks.object_masks[spec.box.id]
            )
            for spec in old_scene.objects
            if new_scene.find(spec.box.id) is not None
        }
        return _generate(
            new_scene,
            denoiser,
            replace(config, two_stage=False),
            references=refs,
            progress=progress,
            ledger=ledger,
        )

    ledger = ledger or TensorLedger()
    factor = config.downsample_factor
    old_masks, _ = scene_latent_masks(old_scene, factor)
    new_masks, new_depth = scene_latent_masks(new_scene, factor)

    moved_ref: set[str] = set()
    add_ids: list[str] = []
    rem_ids: list[str] = []
    for edit in edits:
        if isinstance(edit, TransformObject):
            add_ids.append(edit.id)
            rem_ids.append(edit.id)
            moved_ref.add(edit.id)
        elif isinstance(edit, (AddObject,)):
            add_ids.append(edit.spec.box.id)
        elif isinstance(edit, ReplaceObject):
            add_ids.append(edit.id)
            moved_ref.discard(edit.id)  # new identity: drop the reference
        elif isinstance(edit, RemoveObject):
            rem_ids.append(edit.id)
        else:  # pragma: no cover - diff_scenes only emits the variants above
            raise OrchestrationError(f"unsupported edit {edit!r}")

    # destination regions, in new-scene order, occlusion-resolved already
    seen: set[str] = set()
    paths: list[PathSpec] = []
    m_add_union = np.zeros(z_img.shape[1:], dtype=bool)
    for spec in new_scene.objects:
        object_id = spec.box.id
        if object_id not in add_ids or object_id in seen:
            continue
        seen.add(object_id)
        mask = new_masks.object_masks[object_id]
        m_add_union |= mask
        paths.append(
            PathSpec(
                path_id=object_id,
                mask=mask,
                conditioning=Conditioning(
                    prompt=spec.prompt,
                    control_depth=new_depth,
                    reference_id=(
                        _make_reference(denoiser, z_img, old_masks.object_masks[object_id])
                        if object_id in moved_ref
                        else None
                    ),
                    guidance=config.guidance,
                ),
            )
        )

    m_rem_union = np.zeros(z_img.shape[1:], dtype=bool)
    for object_id in rem_ids:
        m_rem_union |= old_masks.object_masks[object_id]
    m_rem_union &= ~m_add_union
    if np.any(m_rem_union):
        paths.append(
            PathSpec(
                path_id="removal",
                mask=m_rem_union,
                conditioning=Conditioning(
                    prompt=new_scene.background_prompt,
                    control_depth=new_depth,
                    guidance=config.guidance,
                ),
            )
        )

    active = m_add_union | m_rem_union
    if not paths or not np.any(active):
        return z_img.copy()

    z = seeded_latent(z_img.shape, config.seed)
    active_f = active.astype(np.float32)
    z = z * active_f + z_img * (1.0 - active_f)
    ledger.alloc(z.nbytes)
    return _denoise_loop(
        z,
        paths,
        denoiser,
        config,
        z_img=z_img,
        active_mask=active,
        ledger=ledger,
        progress=progress,
    )
