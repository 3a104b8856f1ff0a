"""Build a 3D box layout, edit it, and round-trip the on-disk format.

A scene is a camera plus oriented boxes, each bound to a text prompt that
says what should appear inside it.  Everything is a value: edits return new
scenes, and the JSON layout document round-trips exactly.
"""

from pathlib import Path

from layoutdiff import (
    AddObject,
    Camera,
    ObjectSpec,
    OrientedBox,
    Scene,
    TransformObject,
    apply_edit,
    diff_scenes,
    load_layout,
    save_layout,
    validate_scene,
)

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

# a small tabletop scene: two objects in front of a default camera
scene = Scene(
    camera=Camera.default(512, 512),
    objects=(
        ObjectSpec(OrientedBox("teapot", (-1.0, 0.0, 6.0), (1.2, 1.0, 1.2)), "a copper teapot"),
        ObjectSpec(OrientedBox("stack", (1.3, 0.2, 8.0), (1.0, 1.8, 1.0), yaw=0.4), "a stack of books"),
    ),
    background_prompt="a rustic wooden table in warm light",
)
print("violations:", validate_scene(scene) or "none")

# edits are values too; the input scene is never mutated
moved = apply_edit(scene, TransformObject("teapot", OrientedBox("teapot", (0.5, 0.0, 6.0), (1.2, 1.0, 1.2))))
grown = apply_edit(moved, AddObject(ObjectSpec(OrientedBox("mug", (-1.6, -0.3, 5.0), (0.6, 0.6, 0.6)), "a striped mug")))
print("edit trail reconstructed by diff:", [type(e).__name__ for e in diff_scenes(scene, grown)])

# the layout document is plain JSON with exact 64-bit floats
layout_path = out / "tabletop.layout.json"
layout_path.write_bytes(save_layout(grown))
assert load_layout(layout_path.read_bytes()) == grown
print(f"layout round-trips exactly; wrote {layout_path}")
