import math

import numpy as np
import pytest

from helpers import face_oracle_render, random_scene, ray_march_hit
from layoutdiff.raster import (
    DepthMap,
    check_partition,
    depth_to_codes,
    downsample_masks,
    export_depth,
    export_masks,
    import_depth,
    import_mask_indices,
    ray_box_intersect,
    render_depth,
    render_masks,
)
from layoutdiff.scene import Camera, ObjectSpec, OrientedBox, Scene


def make_scene(objects, resolution=128) -> Scene:
    return Scene(
        camera=Camera.default(resolution, resolution),
        objects=tuple(ObjectSpec(box, f"object {box.id}") for box in objects),
        background_prompt="background",
    )


class TestRayBoxIntersect:
    def test_axis_aligned_front_face(self):
        hit = ray_box_intersect((0, 0, 0), (0, 0, 1), OrientedBox("a", (0, 0, 5), (1, 1, 1)))
        assert hit.t_entry == pytest.approx(4.5)
        assert hit.z_depth == pytest.approx(4.5)

    def test_disjoint_misses(self):
        assert ray_box_intersect((0, 0, 0), (0, 0, 1), OrientedBox("a", (10, 0, 5), (1, 1, 1))) is None

    def test_origin_inside_box_enters_at_zero(self):
        hit = ray_box_intersect((0, 0, 5), (0, 0, 1), OrientedBox("a", (0, 0, 5), (2, 2, 2)))
        assert hit.t_entry == 0.0

    def test_box_behind_camera_misses(self):
        assert ray_box_intersect((0, 0, 0), (0, 0, 1), OrientedBox("a", (0, 0, -5), (1, 1, 1))) is None

    def test_zero_direction_rejected(self):
        with pytest.raises(ValueError):
            ray_box_intersect((0, 0, 0), (0, 0, 0), OrientedBox("a", (0, 0, 5), (1, 1, 1)))

    @pytest.mark.parametrize("seed", range(10))
    def test_yawed_oblique_rays_match_ray_march(self, seed):
        rng = np.random.default_rng(seed)
        box = OrientedBox(
            "a",
            center=tuple(rng.uniform(-1, 1, 3) + (0, 0, 6)),
            size=tuple(rng.uniform(0.5, 2.0, 3)),
            yaw=math.pi / 4 if seed == 0 else rng.uniform(-math.pi, math.pi),
        )
        direction = np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 1.0])
        direction /= np.linalg.norm(direction)
        hit = ray_box_intersect((0.0, 0.0, 0.0), tuple(direction), box)
        marched = ray_march_hit((0.0, 0.0, 0.0), direction, box)
        if hit is None:
            assert marched is None
        else:
            assert marched is not None
            point = np.asarray((0.0, 0.0, 0.0)) + hit.t_entry * direction
            assert np.linalg.norm(point - marched[1]) < 1e-3


class TestRenderDepth:
    def test_empty_scene_all_far(self):
        depth = render_depth(make_scene([]))
        assert np.all(depth.values == 100.0)

    def test_fronto_parallel_face_constant_depth(self):
        depth = render_depth(make_scene([OrientedBox("a", (0, 0, 5), (1, 1, 1))]))
        covered = depth.values < depth.far
        assert covered.sum() > 0
        assert np.all(depth.values[covered] == 4.5)

    def test_two_overlapping_boxes_pixelwise_min(self):
        # brute-force oracle: per-pixel min over each box rendered alone
        near = OrientedBox("a", (0.2, 0.0, 4.0), (1.5, 1.5, 1.0))
        far_box = OrientedBox("b", (-0.2, 0.1, 6.0), (2.0, 2.0, 1.0))
        both = render_depth(make_scene([near, far_box]))
        only_a = render_depth(make_scene([near]))
        only_b = render_depth(make_scene([far_box]))
        expected = np.minimum(only_a.values, only_b.values)
        assert np.array_equal(both.values, expected)

    def test_purity_bit_identical(self):
        scene = random_scene(np.random.default_rng(7))
        a = render_depth(scene)
        b = render_depth(scene)
        assert np.array_equal(a.values, b.values)


class TestRenderMasks:
    def test_empty_scene_background_everywhere(self):
        masks = render_masks(make_scene([]))
        assert np.all(masks.background_mask)

    def test_single_box_mask_is_hit_set(self):
        scene = make_scene([OrientedBox("a", (0, 0, 5), (1, 1, 1))])
        masks = render_masks(scene)
        depth = render_depth(scene)
        assert np.array_equal(masks.object_masks["a"], depth.values < depth.far)
        assert np.array_equal(masks.background_mask, ~masks.object_masks["a"])

    def test_occlusion_excludes_overlap(self):
        near = OrientedBox("near", (0.0, 0.0, 4.0), (1.0, 1.0, 1.0))
        behind = OrientedBox("far", (0.0, 0.0, 6.0), (2.0, 2.0, 1.0))
        masks = render_masks(make_scene([near, behind]))
        assert not np.any(masks.object_masks["near"] & masks.object_masks["far"])
        # the far box alone would own the near box's pixels
        alone = render_masks(make_scene([behind]))
        assert np.all(masks.object_masks["near"] <= alone.object_masks["far"])

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_face_oracle(self, seed):
        scene = random_scene(np.random.default_rng(100 + seed))
        depth = render_depth(scene)
        masks = render_masks(scene)
        oracle_depth, oracle_winner = face_oracle_render(scene)
        ids = list(masks.object_masks)
        winner = np.full(depth.values.shape, -1, dtype=np.int32)
        for index, object_id in enumerate(ids):
            winner[masks.object_masks[object_id]] = index
        assert np.array_equal(winner, oracle_winner)
        assert np.allclose(depth.values, oracle_depth, rtol=1e-12, atol=1e-9)

    @pytest.mark.parametrize("seed", range(12))
    def test_partition_property(self, seed):
        masks = render_masks(random_scene(np.random.default_rng(200 + seed)))
        assert check_partition(masks)

    @pytest.mark.parametrize("seed", range(8))
    def test_occlusion_monotonicity(self, seed):
        # adding a box never enlarges any existing object's mask
        rng = np.random.default_rng(300 + seed)
        scene = random_scene(rng, n_boxes=3)
        before = render_masks(scene)
        extra = random_scene(rng, n_boxes=1)
        grown = Scene(
            camera=scene.camera,
            objects=scene.objects + (ObjectSpec(
                OrientedBox("added", extra.objects[0].box.center, extra.objects[0].box.size,
                            extra.objects[0].box.yaw), "added"),),
            background_prompt=scene.background_prompt,
        )
        after = render_masks(grown)
        for object_id, mask in before.object_masks.items():
            assert np.all(after.object_masks[object_id] <= mask)


class TestDownsample:
    def test_all_background_stays_background(self):
        masks = render_masks(make_scene([], resolution=64))
        coarse = downsample_masks(masks, 8)
        assert np.all(coarse.background_mask)
        assert coarse.width == coarse.height == 8

    def test_aligned_block_maps_to_single_cell(self):
        masks = render_masks(make_scene([], resolution=64))
        grid = np.zeros((64, 64), dtype=bool)
        grid[16:24, 32:40] = True  # exactly one 8x8-aligned block
        aligned = type(masks)(
            width=64, height=64, object_masks={"a": grid}, background_mask=~grid
        )
        coarse = downsample_masks(aligned, 8)
        expected = np.zeros((8, 8), dtype=bool)
        expected[2, 4] = True
        assert np.array_equal(coarse.object_masks["a"], expected)

    def test_non_divisible_factor_rejected(self):
        masks = render_masks(make_scene([], resolution=64))
        with pytest.raises(ValueError):
            downsample_masks(masks, 7)

    @pytest.mark.parametrize("seed", range(6))
    def test_random_partition_matches_recount(self, seed):
        # oracle: independent majority-vote recount per cell
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 4, size=(64, 64))  # 0..2 objects, 3 background
        object_masks = {f"o{k}": labels == k for k in range(3)}
        masks = type(render_masks(make_scene([])))(
            width=64, height=64, object_masks=object_masks, background_mask=labels == 3
        )
        coarse = downsample_masks(masks, 8)
        for ci in range(8):
            for cj in range(8):
                cell = labels[ci * 8 : (ci + 1) * 8, cj * 8 : (cj + 1) * 8]
                counts = [(cell == k).sum() for k in range(4)]
                top = max(counts)
                candidates = [k for k in range(4) if counts[k] == top]
                objs = [k for k in candidates if k < 3]
                expected = objs[0] if objs else 3
                if expected == 3:
                    assert coarse.background_mask[ci, cj]
                else:
                    assert coarse.object_masks[f"o{expected}"][ci, cj]

    def test_tie_breaks_toward_smaller_mean_depth(self):
        # two objects split a cell 32/32; the nearer one must win when depth given
        labels = np.full((8, 8), 2)
        labels[:, :4] = 0
        labels[:, 4:] = 1
        masks = type(render_masks(make_scene([])))(
            width=8,
            height=8,
            object_masks={"near": labels == 0, "far": labels == 1},
            background_mask=np.zeros((8, 8), dtype=bool),
        )
        values = np.where(labels == 0, 3.0, 6.0)
        depth = DepthMap(8, 8, values.astype(float), far=100.0)
        coarse = downsample_masks(masks, 8, depth)
        assert coarse.object_masks["near"][0, 0]
        # swap depths: the other object wins
        depth_swapped = DepthMap(8, 8, np.where(labels == 0, 6.0, 3.0).astype(float), 100.0)
        coarse2 = downsample_masks(masks, 8, depth_swapped)
        assert coarse2.object_masks["far"][0, 0]

    def test_background_loses_ties_against_objects(self):
        labels = np.full((8, 8), 1)
        labels[:4, :] = 0  # 32 object pixels vs 32 background pixels
        masks = type(render_masks(make_scene([])))(
            width=8,
            height=8,
            object_masks={"a": labels == 0},
            background_mask=labels == 1,
        )
        coarse = downsample_masks(masks, 8)
        assert coarse.object_masks["a"][0, 0]

    @pytest.mark.parametrize("seed", range(4))
    def test_downsampled_partition_preserved(self, seed):
        scene = random_scene(np.random.default_rng(400 + seed))
        masks = render_masks(scene)
        depth = render_depth(scene)
        coarse = downsample_masks(masks, 8, depth)
        assert check_partition(coarse)


class TestDepthExport:
    def test_all_far_maps_to_zero(self):
        depth = render_depth(make_scene([]))
        codes, near = depth_to_codes(depth)
        assert np.all(codes == 0)
        assert near == depth.far

    def test_constant_near_maps_to_full_scale(self):
        values = np.full((16, 16), 2.5)
        codes, near = depth_to_codes(DepthMap(16, 16, values, far=100.0))
        assert near == 2.5
        assert np.all(codes == 65535)

    @pytest.mark.parametrize("seed", range(4))
    def test_codes_match_formula_per_pixel(self, seed):
        scene = random_scene(np.random.default_rng(500 + seed), resolution=32)
        depth = render_depth(scene)
        codes, near = depth_to_codes(depth)
        far = depth.far
        for i in range(32):
            for j in range(32):
                z = depth.values[i, j]
                if z >= far:
                    assert codes[i, j] == 0
                else:
                    expected = int(np.rint(65535.0 * (1.0 / z - 1.0 / far) / (1.0 / near - 1.0 / far)))
                    assert codes[i, j] == expected

    def test_png_round_trip_preserves_codes_and_metadata(self):
        scene = make_scene([OrientedBox("a", (0, 0, 5), (1, 1, 1))], resolution=64)
        depth = render_depth(scene)
        codes, near = depth_to_codes(depth)
        data = export_depth(depth)
        back = import_depth(data)
        codes2, near2 = depth_to_codes(back)
        assert np.array_equal(codes, codes2)
        assert near2 == pytest.approx(near, rel=1e-12)
        assert back.far == depth.far

    def test_export_deterministic(self):
        depth = render_depth(make_scene([OrientedBox("a", (0, 0, 5), (1, 1, 1))], 64))
        assert export_depth(depth) == export_depth(depth)


class TestMaskExport:
    def test_indexed_png_round_trip(self):
        scene = make_scene(
            [OrientedBox("a", (0, 0, 4), (1, 1, 1)), OrientedBox("b", (1.5, 0, 6), (1, 1, 1))],
            resolution=64,
        )
        masks = render_masks(scene)
        indices, ids = import_mask_indices(export_masks(masks))
        assert ids == ["a", "b"]
        assert np.array_equal(indices == 1, masks.object_masks["a"])
        assert np.array_equal(indices == 2, masks.object_masks["b"])
        assert np.array_equal(indices == 0, masks.background_mask)
