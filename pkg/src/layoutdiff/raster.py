"""Control-signal rendering: layout depth maps and occlusion-aware object masks.

Everything here is per-pixel ray casting against the scene's oriented boxes.
A pixel ray is built with its camera-space z component normalized to 1, so the
ray parameter t *is* the camera-space depth of the point it reaches.  Depth is
camera-space z (not Euclidean ray length): a fronto-parallel box face reads a
constant value across the image, which keeps the oracles simple.

Pixel (row i, col j) is sampled at its center, continuous image coordinates
(u, v) = (j + 0.5, i + 0.5) with u growing right and v growing down.  The
pinhole projection is u = cx + fx * x/z, v = cy - fy * y/z (the sign flip maps
the world's +Y-up camera frame onto row-down images).
"""

from __future__ import annotations

import colorsys
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from .scene import Camera, OrientedBox, Scene

DEFAULT_FAR = 100.0


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel camera-space z of the nearest box hit; misses hold `far`."""

    width: int
    height: int
    values: np.ndarray  # (height, width) float64, in (0, far]
    far: float = DEFAULT_FAR

    def __post_init__(self):
        if self.values.shape != (self.height, self.width):
            raise ValueError(
                f"depth shape {self.values.shape} != (height={self.height}, width={self.width})"
            )


@dataclass(frozen=True)
class MaskSet:
    """Binary masks partitioning the image: one per object plus background.

    At every pixel exactly one mask is set; the background is the complement
    of the union of the object masks.  `object_masks` preserves scene order.
    """

    width: int
    height: int
    object_masks: dict[str, np.ndarray]  # id -> (height, width) bool
    background_mask: np.ndarray  # (height, width) bool


@dataclass(frozen=True)
class RayHit:
    t_entry: float  # ray parameter at entry (meters for a unit direction), >= 0
    z_depth: float  # depth of the entry point measured along the view axis


def camera_rotation(yaw: float, pitch: float) -> np.ndarray:
    """Camera-to-world rotation.  Positive pitch tilts the view toward +Y."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    r_yaw = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    r_pitch = np.array([[1.0, 0.0, 0.0], [0.0, cp, sp], [0.0, -sp, cp]])
    return r_yaw @ r_pitch


def pixel_rays(camera: Camera) -> tuple[np.ndarray, np.ndarray]:
    """World-space rays through all pixel centers, z-normalized.

    Returns (origin (3,), directions (H, W, 3)).  Directions are scaled so
    their camera-space z component is exactly 1; the ray parameter of any
    point along them equals its camera-space depth.
    """
    xs = (np.arange(camera.width) + 0.5 - camera.cx) / camera.fx
    ys = -(np.arange(camera.height) + 0.5 - camera.cy) / camera.fy
    dirs_cam = np.empty((camera.height, camera.width, 3))
    dirs_cam[:, :, 0] = xs[None, :]
    dirs_cam[:, :, 1] = ys[:, None]
    dirs_cam[:, :, 2] = 1.0
    rot = camera_rotation(camera.yaw, camera.pitch)
    dirs = dirs_cam @ rot.T
    return np.asarray(camera.position, dtype=float), dirs


def _yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _entry_params(origin: np.ndarray, dirs: np.ndarray, box: OrientedBox) -> np.ndarray:
    """Slab-method entry parameter per ray; +inf where the ray misses.

    `dirs` has shape (..., 3).  Entry is clamped to 0 when the origin lies
    inside the box (the ray starts inside).
    """
    rot = _yaw_matrix(box.yaw)
    local_origin = rot.T @ (origin - np.asarray(box.center))
    local_dirs = dirs @ rot
    half = np.asarray(box.size) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t_a = (-half - local_origin) / local_dirs
        t_b = (half - local_origin) / local_dirs
    lo = np.minimum(t_a, t_b)
    hi = np.maximum(t_a, t_b)
    # Rays parallel to a slab never cross its planes: inside spans everything,
    # outside excludes everything.
    parallel = local_dirs == 0.0
    inside = np.abs(local_origin) <= half
    lo = np.where(parallel, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(parallel, np.where(inside, np.inf, -np.inf), hi)
    t_near = lo.max(axis=-1)
    t_far = hi.min(axis=-1)
    hit = (t_near <= t_far) & (t_far >= 0.0)
    return np.where(hit, np.maximum(t_near, 0.0), np.inf)


def ray_box_intersect(
    origin, direction, box: OrientedBox, z_axis=(0.0, 0.0, 1.0)
) -> RayHit | None:
    """Nearest non-negative ray/box entry, or None on a miss.

    z_depth is the depth of the entry point measured from `origin` along
    `z_axis` (the view axis; defaults to the frame's +Z).  A ray starting
    inside the box reports t_entry = 0.
    """
    direction = np.asarray(direction, dtype=float)
    if not np.any(direction != 0.0):
        raise ValueError("direction must be non-zero")
    t = _entry_params(np.asarray(origin, dtype=float), direction, box)
    t = float(t)
    if not math.isfinite(t):
        return None
    z = t * float(np.dot(direction, np.asarray(z_axis, dtype=float)))
    return RayHit(t_entry=t, z_depth=z)


def _render(scene: Scene, far: float) -> tuple[np.ndarray, np.ndarray]:
    """Shared pass behind render_depth / render_masks.

    Returns (depth (H, W) float64, winner (H, W) int32) where winner is the
    scene-order index of the nearest box, or -1 for background.  Hits at
    camera-space z <= 0 are clipped.  Equal-depth ties go to the earlier box
    (strict < never replaces an incumbent).
    """
    origin, dirs = pixel_rays(scene.camera)
    shape = (scene.camera.height, scene.camera.width)
    best = np.full(shape, np.inf)
    winner = np.full(shape, -1, dtype=np.int32)
    for index, spec in enumerate(scene.objects):
        t = _entry_params(origin, dirs, spec.box)
        t = np.where(t > 0.0, t, np.inf)  # z-normalized rays: t is camera z
        closer = t < best
        best = np.where(closer, t, best)
        winner = np.where(closer, np.int32(index), winner)
    depth = np.where(np.isfinite(best), np.minimum(best, far), far)
    return depth, winner


def render_depth(scene: Scene, far: float = DEFAULT_FAR) -> DepthMap:
    depth, _ = _render(scene, far)
    return DepthMap(scene.camera.width, scene.camera.height, depth, far)


def render_masks(scene: Scene, far: float = DEFAULT_FAR) -> MaskSet:
    _, winner = _render(scene, far)
    object_masks = {
        spec.box.id: winner == index for index, spec in enumerate(scene.objects)
    }
    return MaskSet(
        width=scene.camera.width,
        height=scene.camera.height,
        object_masks=object_masks,
        background_mask=winner == -1,
    )


def check_partition(masks: MaskSet) -> bool:
    """True iff exactly one mask (object or background) is set at every pixel."""
    total = masks.background_mask.astype(np.int64)
    for mask in masks.object_masks.values():
        total = total + mask.astype(np.int64)
    return bool(np.all(total == 1))


def downsample_masks(masks: MaskSet, factor: int, depth: DepthMap | None = None) -> MaskSet:
    """Majority-vote each factor x factor block down to a coarse partition.

    Tie-breaks: background loses any tie against an object; ties between
    objects go to the candidate with the smaller mean depth inside the cell
    when `depth` is given, else to the earlier object in mask order.
    """
    if factor <= 0 or masks.width % factor or masks.height % factor:
        raise ValueError(f"factor {factor} must divide {masks.width}x{masks.height}")
    ids = list(masks.object_masks)
    n = len(ids)
    labels = np.full((masks.height, masks.width), n, dtype=np.int32)  # n = background
    for index, object_id in enumerate(ids):
        labels[masks.object_masks[object_id]] = index

    coarse_h, coarse_w = masks.height // factor, masks.width // factor
    blocks = labels.reshape(coarse_h, factor, coarse_w, factor)
    counts = np.stack(
        [(blocks == k).sum(axis=(1, 3)) for k in range(n + 1)], axis=0
    )  # (n+1, coarse_h, coarse_w)

    winners = counts.argmax(axis=0).astype(np.int32)  # first max: scene order, bg last
    top = counts.max(axis=0)
    tied = (counts == top).sum(axis=0) > 1
    if np.any(tied):
        depth_blocks = (
            depth.values.reshape(coarse_h, factor, coarse_w, factor)
            if depth is not None
            else None
        )
        for ci, cj in zip(*np.nonzero(tied)):
            cands = [k for k in range(n + 1) if counts[k, ci, cj] == top[ci, cj]]
            objs = [k for k in cands if k < n]
            if not objs:
                winners[ci, cj] = n
                continue
            if depth_blocks is not None and len(objs) > 1:
                cell_labels = blocks[ci, :, cj, :]
                cell_depth = depth_blocks[ci, :, cj, :]
                objs.sort(key=lambda k: (float(cell_depth[cell_labels == k].mean()), k))
            winners[ci, cj] = objs[0]

    object_masks = {object_id: winners == index for index, object_id in enumerate(ids)}
    return MaskSet(
        width=coarse_w,
        height=coarse_h,
        object_masks=object_masks,
        background_mask=winners == n,
    )


# --- interchange formats ---------------------------------------------------

def depth_to_codes(depth: DepthMap) -> tuple[np.ndarray, float]:
    """Quantize to the 16-bit inverse-depth code used by the PNG export.

    code = round(65535 * (1/z - 1/far) / (1/near - 1/far)) with near = the
    map's smallest depth; misses (values at `far`) code to 0.  Returns
    (codes uint16, near).  An all-miss map reports near = far.
    """
    miss = depth.values >= depth.far
    if bool(np.all(miss)):
        return np.zeros(depth.values.shape, dtype=np.uint16), depth.far
    near = float(depth.values[~miss].min())
    scale = 1.0 / near - 1.0 / depth.far
    normalized = (1.0 / depth.values - 1.0 / depth.far) / scale
    codes = np.rint(65535.0 * normalized)
    codes[miss] = 0.0
    return codes.astype(np.uint16), near


def export_depth(depth: DepthMap) -> bytes:
    """16-bit grayscale PNG; the inverse-depth mapping (near, far) rides along
    as text chunks so consumers can undo the normalization."""
    codes, near = depth_to_codes(depth)
    image = Image.fromarray(codes)  # uint16 -> 16-bit grayscale ("I;16")
    info = PngInfo()
    info.add_text("depth:near", repr(near))
    info.add_text("depth:far", repr(depth.far))
    info.add_text(
        "depth:mapping", "code = round(65535*(1/z - 1/far)/(1/near - 1/far)); 0 = miss"
    )
    buf = io.BytesIO()
    image.save(buf, format="PNG", pnginfo=info)
    return buf.getvalue()


def import_depth(data: bytes) -> DepthMap:
    """Invert export_depth (up to 16-bit quantization).  Code 0 reads as far."""
    image = Image.open(io.BytesIO(data))
    codes = np.asarray(image, dtype=np.float64)
    text = getattr(image, "text", {})
    try:
        near = float(text["depth:near"])
        far = float(text["depth:far"])
    except KeyError as exc:
        raise ValueError(f"depth PNG missing metadata chunk {exc.args[0]!r}") from exc
    if near >= far:
        values = np.full(codes.shape, far)
    else:
        inv = codes / 65535.0 * (1.0 / near - 1.0 / far) + 1.0 / far
        values = 1.0 / inv
        values[codes == 0] = far
    height, width = codes.shape
    return DepthMap(width, height, values, far)


def _palette(n: int) -> list[int]:
    # index 0 black for background, then a golden-ratio hue walk
    flat = [0, 0, 0]
    for k in range(1, n + 1):
        r, g, b = colorsys.hsv_to_rgb((k * 0.6180339887) % 1.0, 0.85, 0.95)
        flat += [int(255 * r), int(255 * g), int(255 * b)]
    return flat + [0] * (768 - len(flat))


def export_masks(masks: MaskSet) -> bytes:
    """8-bit indexed PNG: index 0 = background, index k = k-th object in order."""
    ids = list(masks.object_masks)
    indexed = np.zeros((masks.height, masks.width), dtype=np.uint8)
    for k, object_id in enumerate(ids, start=1):
        indexed[masks.object_masks[object_id]] = k
    image = Image.fromarray(indexed, mode="P")
    image.putpalette(_palette(len(ids)))
    info = PngInfo()
    info.add_text("masks:objects", json.dumps(ids))
    buf = io.BytesIO()
    image.save(buf, format="PNG", pnginfo=info)
    return buf.getvalue()


def import_mask_indices(data: bytes) -> tuple[np.ndarray, list[str]]:
    """Read back an export_masks PNG as (index grid, object ids in order)."""
    image = Image.open(io.BytesIO(data))
    indices = np.asarray(image, dtype=np.uint8)
    ids = json.loads(getattr(image, "text", {}).get("masks:objects", "[]"))
    return indices, ids
