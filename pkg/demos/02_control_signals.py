"""Render the two geometric control signals: depth map and occlusion masks.

Every pixel casts a ray; the depth map stores camera-space z of the nearest
box surface, and each pixel's mask index is the box that owns that nearest
hit — so masks are occlusion-aware by construction and always partition the
image exactly.
"""

from pathlib import Path

import numpy as np

from layoutdiff import (
    Camera,
    ObjectSpec,
    OrientedBox,
    Scene,
    downsample_masks,
    export_depth,
    export_masks,
    render_depth,
    render_masks,
)

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

# a near box partially occluding a far one
scene = Scene(
    camera=Camera.default(512, 512),
    objects=(
        ObjectSpec(OrientedBox("near", (-0.4, 0.0, 5.0), (1.5, 1.5, 1.5)), "a crate"),
        ObjectSpec(OrientedBox("far", (0.8, 0.0, 8.0), (2.5, 2.5, 1.5), yaw=0.6), "a bookshelf"),
    ),
    background_prompt="a workshop",
)

depth = render_depth(scene)
hit = depth.values < depth.far
print(f"depth range over geometry: {depth.values[hit].min():.2f} .. {depth.values[hit].max():.2f} m")

masks = render_masks(scene)
for object_id, mask in masks.object_masks.items():
    print(f"  {object_id:>5}: {mask.sum():6d} px")
print(f"  background: {masks.background_mask.sum()} px")

# the far box loses exactly the overlap to the near one
total = masks.background_mask.astype(int) + sum(m.astype(int) for m in masks.object_masks.values())
assert np.all(total == 1), "masks must partition the image"

# latent-resolution masks: majority vote per 8x8 block, depth breaks ties
coarse = downsample_masks(masks, 8, depth)
print(f"latent grid {coarse.width}x{coarse.height}: near owns {coarse.object_masks['near'].sum()} cells")

(out / "control_depth.png").write_bytes(export_depth(depth))
(out / "control_masks.png").write_bytes(export_masks(masks))
print(f"wrote {out / 'control_depth.png'} (16-bit inverse-depth) and {out / 'control_masks.png'} (indexed)")
