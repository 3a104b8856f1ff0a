"""Warping-free object move: regenerate at the target, inpaint the source.

A layout move becomes three masks — addition (new location), removal
(vacated location), preservation (everything else).  The object is
regenerated at the destination conditioned on a reference signature of its
source region, the vacated region is inpainted with the background prompt,
and preserved cells are re-blended against the original latent every step,
so they stay bit-identical.  No pixels are warped.
"""

from pathlib import Path

import numpy as np

from layoutdiff import (
    Camera,
    GenerationConfig,
    ObjectSpec,
    OrientedBox,
    Scene,
    TransformObject,
    apply_edit,
    edit_apply,
    generate_scene,
)
from layoutdiff.orchestrator import scene_latent_masks
from layoutdiff.toy import ToyDenoiser, decode_preview, region_signature

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

scene = Scene(
    camera=Camera.default(512, 512),
    objects=(
        ObjectSpec(OrientedBox("lamp", (-1.5, 0.0, 5.0), (1.2, 1.8, 1.2)), "a brass lamp"),
        ObjectSpec(OrientedBox("chair", (1.4, 0.0, 7.0), (1.6, 1.8, 1.6)), "a velvet chair"),
    ),
    background_prompt="a study at dusk",
)
toy = ToyDenoiser()
config = GenerationConfig(steps=50, seed=9)

before = generate_scene(scene, toy, config)
(out / "edit_before.png").write_bytes(decode_preview(before))

# move the lamp to the other side of the room
moved = apply_edit(scene, TransformObject("lamp", OrientedBox("lamp", (0.0, 0.0, 9.0), (1.2, 1.8, 1.2))))
after = edit_apply(scene, moved, before, toy, config)
(out / "edit_after.png").write_bytes(decode_preview(after))

old_masks, _ = scene_latent_masks(scene, 8)
new_masks, _ = scene_latent_masks(moved, 8)
m_add = new_masks.object_masks["lamp"]
m_rem = old_masks.object_masks["lamp"] & ~m_add
m_pres = ~(m_add | m_rem)

print(f"active region: {m_add.sum()} add cells + {m_rem.sum()} removal cells")
print("preserved cells bit-identical:", bool(np.array_equal(after[:, m_pres], before[:, m_pres])))

# the moved object keeps its identity: the destination signature stays
# near the source one (the small drift is the depth-conditioning term,
# which legitimately changes when the object moves to a new depth)
source = region_signature(before, old_masks.object_masks["lamp"])
result = region_signature(after, m_add)
print(f"identity drift |signature delta| = {np.abs(result - source).max():.2e}")
print(f"wrote {out / 'edit_before.png'} and {out / 'edit_after.png'}")
