"""Camera fitting against 2D box annotations, and 2D-to-3D box lifting.

The curation pipeline: lift annotated 2D rectangles to 3D boxes using the
average depth behind each rectangle, then recover a camera pose by minimizing
1 - mean IoU between the boxes' image-plane projections and the annotated
rectangles.  The objective is piecewise-smooth but not differentiable at
containment/disjointness boundaries, so the minimizer is derivative-free
(Nelder-Mead) with a handful of jittered restarts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .raster import DepthMap, camera_rotation
from .scene import Camera, OrientedBox

NEAR_PLANE = 0.01  # meters; corners at or behind this z do not project


@dataclass(frozen=True)
class Rect2D:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"inverted rect {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class FitResult:
    camera: Camera
    final_loss: float
    iterations: int
    restarts_used: int


@dataclass(frozen=True)
class FitConfig:
    restarts: int = 5
    max_iterations: int = 500  # per restart
    simplex_tol: float = 1e-4
    jitter_position: float = 0.2  # meters, stddev of restart jitter
    jitter_angle: float = 0.05  # radians
    seed: int = 0


def box_corners(box: OrientedBox) -> np.ndarray:
    """The 8 world-space corners, (8, 3)."""
    half = np.asarray(box.size) / 2.0
    signs = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float
    )
    local = signs * half
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return local @ rot.T + np.asarray(box.center)


def project_points(camera: Camera, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pinhole-project world points; returns ((N, 2) pixel uv, (N,) camera z).

    Points at z below the near plane are projected with z clamped to the near
    plane, which keeps the fitting objective finite and penalizes cameras
    that push geometry behind themselves.
    """
    rot = camera_rotation(camera.yaw, camera.pitch)
    cam = (points - np.asarray(camera.position)) @ rot
    z = cam[:, 2]
    z_safe = np.maximum(z, NEAR_PLANE)
    u = camera.cx + camera.fx * cam[:, 0] / z_safe
    v = camera.cy - camera.fy * cam[:, 1] / z_safe
    return np.stack([u, v], axis=1), z


def project_box_rect(camera: Camera, box: OrientedBox) -> Rect2D | None:
    """Axis-aligned hull of the 8 projected corners, clipped to the image.

    None when every corner sits at or behind the near plane (nothing of the
    box is projectable).
    """
    uv, z = project_points(camera, box_corners(box))
    if bool(np.all(z <= NEAR_PLANE)):
        return None
    return Rect2D(
        x_min=float(np.clip(uv[:, 0].min(), 0.0, camera.width)),
        y_min=float(np.clip(uv[:, 1].min(), 0.0, camera.height)),
        x_max=float(np.clip(uv[:, 0].max(), 0.0, camera.width)),
        y_max=float(np.clip(uv[:, 1].max(), 0.0, camera.height)),
    )


def rect_iou(a: Rect2D, b: Rect2D) -> float:
    inter_w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    inter_h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if inter_w <= 0.0 or inter_h <= 0.0:
        return 0.0
    inter = inter_w * inter_h
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def mean_iou(pred: list[Rect2D | None], gt: list[Rect2D]) -> float:
    """Arithmetic mean of per-pair IoU; a None projection scores 0 for its pair."""
    if len(pred) != len(gt):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(gt)} targets")
    if not gt:
        return 0.0
    total = 0.0
    for p, g in zip(pred, gt):
        if p is not None:
            total += rect_iou(p, g)
    return total / len(gt)


def _camera_with_pose(base: Camera, params: np.ndarray) -> Camera:
    x, y, z, yaw, pitch = (float(p) for p in params)
    return replace(base, position=(x, y, z), yaw=yaw, pitch=pitch)


def fit_camera(
    boxes: list[OrientedBox],
    gt: list[Rect2D],
    init: Camera,
    config: FitConfig = FitConfig(),
) -> FitResult:
    """Recover the 5-DoF camera pose (position, yaw, pitch) minimizing 1 - mIoU.

    Intrinsics stay fixed at `init`'s values.  Runs Nelder-Mead from `init`
    plus `config.restarts - 1` jittered starts and keeps the best result;
    restart 0 is the unjittered init, so the returned loss never exceeds the
    loss at `init`.
    """
    if not boxes:
        raise ValueError("cannot fit a camera against an empty object list")
    if len(boxes) != len(gt):
        raise ValueError(f"length mismatch: {len(boxes)} boxes vs {len(gt)} targets")

    pitch_limit = math.pi / 2 - 1e-6

    def loss(params: np.ndarray) -> float:
        pitch = params[4]
        if abs(pitch) >= pitch_limit:
            return 1.0 + abs(pitch) - pitch_limit  # steer back into the domain
        camera = _camera_with_pose(init, params)
        pred = [project_box_rect(camera, box) for box in boxes]
        return 1.0 - mean_iou(pred, gt)

    rng = np.random.default_rng(config.seed)
    x0 = np.array([*init.position, init.yaw, init.pitch], dtype=float)
    # initial simplex at the pose parameters' natural scales; scipy's default
    # (5% of each coordinate) collapses immediately around zero coordinates
    spread = np.array([config.jitter_position] * 3 + [config.jitter_angle] * 2)
    best_x, best_loss, total_iter = x0, loss(x0), 0
    for restart in range(config.restarts):
        start = x0.copy()
        if restart > 0:
            start[:3] += rng.normal(0.0, config.jitter_position, size=3)
            start[3:] += rng.normal(0.0, config.jitter_angle, size=2)
            start[4] = np.clip(start[4], -pitch_limit + 1e-3, pitch_limit - 1e-3)
        result = minimize(
            loss,
            start,
            method="Nelder-Mead",
            options={
                "xatol": config.simplex_tol,
                "fatol": 1e-10,
                "maxiter": config.max_iterations,
                "initial_simplex": np.vstack([start, start + np.diag(spread)]),
            },
        )
        total_iter += int(result.nit)
        if result.fun < best_loss:
            best_loss, best_x = float(result.fun), np.asarray(result.x)

    best_x = best_x.copy()
    best_x[4] = np.clip(best_x[4], -pitch_limit, pitch_limit)
    camera = _camera_with_pose(init, best_x)
    final_pred = [project_box_rect(camera, box) for box in boxes]
    return FitResult(
        camera=camera,
        final_loss=1.0 - mean_iou(final_pred, gt),
        iterations=total_iter,
        restarts_used=config.restarts,
    )


def lift_box(
    rect: Rect2D,
    depth: DepthMap,
    camera: Camera,
    box_id: str = "lifted",
    depth_extent: float | None = None,
) -> OrientedBox:
    """Lift a 2D rectangle to a yaw-0 3D box at the rect's average depth.

    The box center backprojects the rect center at z = mean of the non-far
    depth values inside the rect; width/height backproject the rect extents
    at that z.  The extent along the view axis is unknowable from one view;
    the default heuristic (width + height) / 2 can be overridden.
    """
    if rect.width <= 0.0 or rect.height <= 0.0:
        raise ValueError(f"degenerate rect {rect}")
    j0 = max(0, math.ceil(rect.x_min - 0.5))
    j1 = min(depth.width - 1, math.floor(rect.x_max - 0.5))
    i0 = max(0, math.ceil(rect.y_min - 0.5))
    i1 = min(depth.height - 1, math.floor(rect.y_max - 0.5))
    if j0 > j1 or i0 > i1:
        raise ValueError(f"rect {rect} covers no pixel centers")
    region = depth.values[i0 : i1 + 1, j0 : j1 + 1]
    hit = region < depth.far
    if not bool(np.any(hit)):
        raise ValueError("no non-far depth inside rect")
    d = float(region[hit].mean())

    u_c = (rect.x_min + rect.x_max) / 2.0
    v_c = (rect.y_min + rect.y_max) / 2.0
    cam_center = np.array(
        [(u_c - camera.cx) / camera.fx * d, -(v_c - camera.cy) / camera.fy * d, d]
    )
    rot = camera_rotation(camera.yaw, camera.pitch)
    world_center = rot @ cam_center + np.asarray(camera.position)

    width = rect.width * d / camera.fx
    height = rect.height * d / camera.fy
    if depth_extent is None:
        depth_extent = (width + height) / 2.0
    return OrientedBox(
        id=box_id, center=tuple(world_center), size=(width, height, depth_extent), yaw=0.0
    )
