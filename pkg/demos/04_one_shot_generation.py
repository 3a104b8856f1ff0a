"""One-shot multi-object generation with blended parallel denoising paths.

One denoising path runs per object plus one for the background, each
conditioned on its own prompt and the shared layout depth map.  After every
step the per-path predictions are merged through the masks, and the merged
latent feeds all paths at the next step.  With the deterministic toy
denoiser each region provably converges to its own conditioning's target,
so the semantic binding is directly checkable.
"""

from pathlib import Path

import numpy as np

from layoutdiff import Camera, GenerationConfig, ObjectSpec, OrientedBox, Scene, generate_scene
from layoutdiff.orchestrator import Conditioning, scene_latent_masks
from layoutdiff.toy import ToyDenoiser, decode_preview

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

scene = Scene(
    camera=Camera.default(512, 512),
    objects=(
        ObjectSpec(OrientedBox("cat", (-1.1, 0.0, 5.0), (1.4, 1.4, 1.4)), "a tabby cat"),
        ObjectSpec(OrientedBox("plant", (1.2, 0.3, 7.0), (1.2, 2.0, 1.2)), "a potted palm"),
    ),
    background_prompt="a bright living room",
)

toy = ToyDenoiser()
config = GenerationConfig(steps=50, seed=3)
latent = generate_scene(scene, toy, config)
print("latent:", latent.shape, latent.dtype)

# each region sits within 1e-3 of its own prompt's closed-form target
masks, depth = scene_latent_masks(scene, config.downsample_factor)
for spec in scene.objects:
    region = masks.object_masks[spec.box.id]
    target = toy.target_latent(Conditioning(spec.prompt, depth), latent.shape)
    err = np.abs(latent - target)[:, region].max()
    print(f"  {spec.box.id:>5}: {region.sum():3d} cells, max |latent - target| = {err:.2e}")

(out / "generated_preview.png").write_bytes(decode_preview(latent))
print(f"wrote {out / 'generated_preview.png'}")

# the two scheduling modes produce bit-identical results
sequential = generate_scene(scene, toy, GenerationConfig(steps=50, seed=3, mode="sequential-emulation"))
print("parallel == sequential-emulation:", bool(np.array_equal(latent, sequential)))
