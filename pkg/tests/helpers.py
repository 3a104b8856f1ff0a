"""Shared test utilities: scene generators and independent geometry oracles.

The oracles deliberately avoid the production slab-intersection code path:
depth/mask rendering is re-derived from ray/face-plane intersections, and
single-ray checks can fall back to brute-force ray marching.
"""

from __future__ import annotations

import math

import numpy as np

from layoutdiff.scene import Camera, ObjectSpec, OrientedBox, Scene


def random_scene(
    rng: np.random.Generator,
    n_boxes: int | None = None,
    resolution: int = 128,
    max_boxes: int = 5,
) -> Scene:
    """A camera with a mild random pose plus frustum-filling random boxes."""
    camera = Camera(
        position=tuple(rng.uniform(-2.0, 2.0, size=3)),
        yaw=rng.uniform(-math.pi, math.pi),
        pitch=rng.uniform(-0.3, 0.3),
        fx=float(resolution),
        fy=float(resolution),
        cx=resolution / 2.0,
        cy=resolution / 2.0,
        width=resolution,
        height=resolution,
    )
    if n_boxes is None:
        n_boxes = int(rng.integers(1, max_boxes + 1))
    rot = _camera_rotation(camera.yaw, camera.pitch)
    objects = []
    for k in range(n_boxes):
        z = rng.uniform(3.0, 12.0)
        cam_space = np.array([rng.uniform(-0.4, 0.4) * z, rng.uniform(-0.4, 0.4) * z, z])
        center = rot @ cam_space + np.asarray(camera.position)
        size = rng.uniform(0.3, 2.5, size=3)
        objects.append(
            ObjectSpec(
                box=OrientedBox(
                    id=f"box_{k}",
                    center=tuple(center),
                    size=tuple(size),
                    yaw=rng.uniform(-math.pi, math.pi),
                ),
                prompt=f"object {k}",
            )
        )
    return Scene(camera=camera, objects=tuple(objects), background_prompt="test background")


def _camera_rotation(yaw: float, pitch: float) -> np.ndarray:
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    r_yaw = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    r_pitch = np.array([[1.0, 0.0, 0.0], [0.0, cp, sp], [0.0, -sp, cp]])
    return r_yaw @ r_pitch


def _yaw_rotation(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def face_oracle_render(scene: Scene, far: float = 100.0) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-hit render via ray/face-plane intersections (no slab method).

    Returns (depth, winner) shaped (H, W); winner -1 means background.  For
    each box, each of the 6 face planes is intersected analytically and the
    hit is kept when it lands inside the face rectangle; the entry is the
    smallest non-negative face hit, or 0 if the ray starts inside the box.
    Hits need camera-space z > 0 to count; ties keep the earlier box.
    """
    cam = scene.camera
    rot = _camera_rotation(cam.yaw, cam.pitch)
    h, w = cam.height, cam.width
    us = (np.arange(w) + 0.5 - cam.cx) / cam.fx
    vs = -(np.arange(h) + 0.5 - cam.cy) / cam.fy
    dirs_cam = np.stack(
        [np.broadcast_to(us, (h, w)), np.broadcast_to(vs[:, None], (h, w)), np.ones((h, w))],
        axis=-1,
    )
    dirs = dirs_cam @ rot.T  # ray parameter t equals camera-space z
    origin = np.asarray(cam.position)

    best = np.full((h, w), np.inf)
    winner = np.full((h, w), -1, dtype=np.int32)
    axes = ((1, 2), (0, 2), (0, 1))
    for index, spec in enumerate(scene.objects):
        box = spec.box
        yaw_rot = _yaw_rotation(box.yaw)
        o = yaw_rot.T @ (origin - np.asarray(box.center))
        d = dirs @ yaw_rot
        half = np.asarray(box.size) / 2.0
        if bool(np.all(np.abs(o) <= half)):
            entry = np.zeros((h, w))
        else:
            entry = np.full((h, w), np.inf)
            for axis in range(3):
                for sign in (-1.0, 1.0):
                    denom = d[:, :, axis]
                    with np.errstate(divide="ignore", invalid="ignore"):
                        t = (sign * half[axis] - o[axis]) / denom
                    a, b = axes[axis]
                    pa = o[a] + t * d[:, :, a]
                    pb = o[b] + t * d[:, :, b]
                    ok = (
                        np.isfinite(t)
                        & (t >= 0.0)
                        & (np.abs(pa) <= half[a])
                        & (np.abs(pb) <= half[b])
                    )
                    entry = np.where(ok & (t < entry), t, entry)
        entry = np.where(entry > 0.0, entry, np.inf)  # camera-space z clip
        closer = entry < best
        best = np.where(closer, entry, best)
        winner = np.where(closer, np.int32(index), winner)
    depth = np.where(np.isfinite(best), np.minimum(best, far), far)
    return depth, winner


def ray_march_hit(origin, direction, box: OrientedBox, t_max: float = 30.0, step: float = 1e-4):
    """Brute-force first-entry search by marching along the ray."""
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    yaw_rot = _yaw_rotation(box.yaw)
    half = np.asarray(box.size) / 2.0

    ts = np.arange(0.0, t_max, step)
    points = origin[None, :] + ts[:, None] * direction[None, :]
    local = (points - np.asarray(box.center)) @ yaw_rot
    inside = np.all(np.abs(local) <= half, axis=1)
    hits = np.nonzero(inside)[0]
    if hits.size == 0:
        return None
    t = float(ts[hits[0]])
    return t, origin + t * direction
