import math

import numpy as np
import pytest

from helpers import _camera_rotation
from layoutdiff.fit import (
    FitConfig,
    Rect2D,
    box_corners,
    fit_camera,
    lift_box,
    mean_iou,
    project_box_rect,
    rect_iou,
)
from layoutdiff.raster import DepthMap, render_depth
from layoutdiff.scene import Camera, ObjectSpec, OrientedBox, Scene


def fit_camera_256() -> Camera:
    return Camera((0, 0, 0), 0.0, 0.0, 256.0, 256.0, 128.0, 128.0, 256, 256)


def synthetic_fit_scene(rng: np.random.Generator, n_boxes: int = 3):
    """A known camera + boxes whose projections make good fitting targets."""
    camera = Camera(
        position=tuple(rng.uniform(-1.0, 1.0, 3)),
        yaw=rng.uniform(-0.4, 0.4),
        pitch=rng.uniform(-0.2, 0.2),
        fx=256.0,
        fy=256.0,
        cx=128.0,
        cy=128.0,
        width=256,
        height=256,
    )
    rot = _camera_rotation(camera.yaw, camera.pitch)
    boxes, rects = [], []
    while len(boxes) < n_boxes:
        z = rng.uniform(4.0, 10.0)
        cam_space = np.array([rng.uniform(-0.3, 0.3) * z, rng.uniform(-0.3, 0.3) * z, z])
        box = OrientedBox(
            f"box_{len(boxes)}",
            center=tuple(rot @ cam_space + np.asarray(camera.position)),
            size=tuple(rng.uniform(0.5, 1.8, 3)),
            yaw=rng.uniform(-math.pi, math.pi),
        )
        rect = project_box_rect(camera, box)
        if rect is None or rect.area < 100.0:
            continue
        boxes.append(box)
        rects.append(rect)
    return camera, boxes, rects


def perturbed(camera: Camera, rng: np.random.Generator, d_pos=0.2, d_ang=0.05) -> Camera:
    return Camera(
        position=tuple(np.asarray(camera.position) + rng.uniform(-d_pos, d_pos, 3)),
        yaw=camera.yaw + rng.uniform(-d_ang, d_ang),
        pitch=camera.pitch + rng.uniform(-d_ang, d_ang),
        fx=camera.fx,
        fy=camera.fy,
        cx=camera.cx,
        cy=camera.cy,
        width=camera.width,
        height=camera.height,
    )


class TestProjection:
    def test_point_box_projects_to_principal_point(self):
        rect = project_box_rect(fit_camera_256(), OrientedBox("a", (0, 0, 5), (0, 0, 0)))
        assert (rect.x_min, rect.y_min, rect.x_max, rect.y_max) == (128, 128, 128, 128)

    def test_box_behind_camera_is_none(self):
        assert project_box_rect(fit_camera_256(), OrientedBox("a", (0, 0, -5), (1, 1, 1))) is None

    def test_unit_box_matches_corner_oracle(self):
        camera = fit_camera_256()
        box = OrientedBox("a", (0, 0, 5), (1, 1, 1))
        rect = project_box_rect(camera, box)
        assert rect.x_min == pytest.approx(99.56, abs=1e-2)
        assert rect.x_max == pytest.approx(156.44, abs=1e-2)
        # independent 8-corner projection
        us, vs = [], []
        for corner in box_corners(box):
            x, y, z = corner
            us.append(128.0 + 256.0 * x / z)
            vs.append(128.0 - 256.0 * y / z)
        assert rect.x_min == pytest.approx(min(us), abs=1e-9)
        assert rect.x_max == pytest.approx(max(us), abs=1e-9)
        assert rect.y_min == pytest.approx(min(vs), abs=1e-9)
        assert rect.y_max == pytest.approx(max(vs), abs=1e-9)

    def test_hull_clipped_to_image(self):
        rect = project_box_rect(fit_camera_256(), OrientedBox("a", (6.0, 0, 5), (4, 4, 4)))
        assert rect.x_max <= 256.0 and rect.x_min >= 0.0


class TestMeanIou:
    def test_identical_lists_score_one(self):
        rects = [Rect2D(0, 0, 10, 10), Rect2D(5, 5, 20, 30)]
        assert mean_iou(rects, rects) == pytest.approx(1.0)

    def test_disjoint_pairs_score_zero(self):
        a = [Rect2D(0, 0, 1, 1)]
        b = [Rect2D(5, 5, 6, 6)]
        assert mean_iou(a, b) == 0.0

    def test_known_third_overlap_with_fine_grid_oracle(self):
        a, b = Rect2D(0, 0, 2, 2), Rect2D(1, 0, 3, 2)
        value = rect_iou(a, b)
        assert value == pytest.approx(1.0 / 3.0)
        # fine-grid pixel counting over the union bounding box, 1000 cells/unit
        xs = (np.arange(3000) + 0.5) / 1000.0
        ys = (np.arange(2000) + 0.5) / 1000.0
        gx, gy = np.meshgrid(xs, ys)
        in_a = (gx > a.x_min) & (gx < a.x_max) & (gy > a.y_min) & (gy < a.y_max)
        in_b = (gx > b.x_min) & (gx < b.x_max) & (gy > b.y_min) & (gy < b.y_max)
        counted = (in_a & in_b).sum() / (in_a | in_b).sum()
        assert value == pytest.approx(counted, abs=1e-3)

    def test_none_prediction_scores_zero(self):
        assert mean_iou([None], [Rect2D(0, 0, 1, 1)]) == 0.0

    def test_length_mismatch_raises(self):
        with pytest.raises(ValueError, match="length mismatch"):
            mean_iou([], [Rect2D(0, 0, 1, 1)])

    def test_empty_lists_defined_as_zero(self):
        assert mean_iou([], []) == 0.0

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            vals = rng.uniform(0, 100, 8)
            a = Rect2D(min(vals[0], vals[1]), min(vals[2], vals[3]), max(vals[0], vals[1]), max(vals[2], vals[3]))
            b = Rect2D(min(vals[4], vals[5]), min(vals[6], vals[7]), max(vals[4], vals[5]), max(vals[6], vals[7]))
            assert rect_iou(a, b) == pytest.approx(rect_iou(b, a))
            assert 0.0 <= rect_iou(a, b) <= 1.0


class TestFitCamera:
    def test_exact_init_is_already_optimal(self):
        camera, boxes, rects = synthetic_fit_scene(np.random.default_rng(1))
        result = fit_camera(boxes, rects, camera)
        assert result.final_loss < 1e-6
        assert np.allclose(result.camera.position, camera.position, atol=1e-2)

    def test_final_loss_matches_returned_camera(self):
        camera, boxes, rects = synthetic_fit_scene(np.random.default_rng(2))
        result = fit_camera(boxes, rects, perturbed(camera, np.random.default_rng(3)))
        pred = [project_box_rect(result.camera, box) for box in boxes]
        assert result.final_loss == pytest.approx(1.0 - mean_iou(pred, rects), abs=1e-12)

    def test_recovers_from_perturbed_init(self):
        rng = np.random.default_rng(4)
        camera, boxes, rects = synthetic_fit_scene(rng)
        result = fit_camera(boxes, rects, perturbed(camera, rng))
        assert result.final_loss < 0.05

    def test_never_worse_than_init(self):
        rng = np.random.default_rng(5)
        camera, boxes, rects = synthetic_fit_scene(rng)
        init = perturbed(camera, rng, d_pos=0.5, d_ang=0.2)
        init_pred = [project_box_rect(init, box) for box in boxes]
        init_loss = 1.0 - mean_iou(init_pred, rects)
        result = fit_camera(boxes, rects, init)
        assert result.final_loss <= init_loss + 1e-12

    def test_empty_object_list_raises(self):
        with pytest.raises(ValueError, match="empty"):
            fit_camera([], [], fit_camera_256())

    def test_loss_invariant_under_joint_translation(self):
        rng = np.random.default_rng(6)
        camera, boxes, rects = synthetic_fit_scene(rng)
        offset = np.array([3.0, -1.0, 2.0])
        moved_boxes = [
            OrientedBox(b.id, tuple(np.asarray(b.center) + offset), b.size, b.yaw) for b in boxes
        ]
        moved_camera = Camera(
            tuple(np.asarray(camera.position) + offset),
            camera.yaw, camera.pitch, camera.fx, camera.fy,
            camera.cx, camera.cy, camera.width, camera.height,
        )
        original = 1.0 - mean_iou([project_box_rect(camera, b) for b in boxes], rects)
        translated = 1.0 - mean_iou(
            [project_box_rect(moved_camera, b) for b in moved_boxes], rects
        )
        assert translated == pytest.approx(original, abs=1e-9)


class TestLiftBox:
    def test_full_image_uniform_depth_centers_on_axis(self):
        camera = fit_camera_256()
        depth = DepthMap(256, 256, np.full((256, 256), 7.0), far=100.0)
        box = lift_box(Rect2D(0, 0, 256, 256), depth, camera)
        assert box.center[0] == pytest.approx(0.0, abs=1e-9)
        assert box.center[1] == pytest.approx(0.0, abs=1e-9)
        assert box.center[2] == pytest.approx(7.0)
        assert box.yaw == 0.0

    def test_round_trip_recovers_box_dimensions(self):
        camera = fit_camera_256()
        original = OrientedBox("a", (0.4, -0.2, 8.0), (1.0, 0.8, 0.9))
        scene = Scene(camera, (ObjectSpec(original, "x"),), "bg")
        depth = render_depth(scene)
        rect = project_box_rect(camera, original)
        lifted = lift_box(rect, depth, camera)
        # recovered at the front-face depth, sizes within 5%
        assert lifted.size[0] == pytest.approx(original.size[0], rel=0.05)
        assert lifted.size[1] == pytest.approx(original.size[1], rel=0.05)
        front = original.center[2] - original.size[2] / 2.0
        assert lifted.center[2] == pytest.approx(front, rel=0.05)

    def test_zero_area_rect_raises(self):
        depth = DepthMap(64, 64, np.full((64, 64), 5.0), far=100.0)
        with pytest.raises(ValueError, match="degenerate rect"):
            lift_box(Rect2D(10, 10, 10, 20), depth, Camera.default(64, 64))

    def test_all_far_region_raises(self):
        depth = DepthMap(64, 64, np.full((64, 64), 100.0), far=100.0)
        with pytest.raises(ValueError, match="no non-far depth"):
            lift_box(Rect2D(10, 10, 20, 20), depth, Camera.default(64, 64))
