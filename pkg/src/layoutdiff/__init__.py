"""layoutdiff: 3D-layout guided image generation toolkit.

Scenes are sets of oriented 3D boxes bound to text prompts plus a camera.
The package renders the geometric control signals (layout depth maps and
occlusion-aware masks), fits cameras to 2D annotations, and orchestrates
blended multi-path latent diffusion — generation, inpainting edits, and
warping-free moves — against any denoiser backend, including a deterministic
in-process toy backend and remote backends behind a small wire protocol.
"""

from .fit import FitConfig, FitResult, Rect2D, fit_camera, lift_box, mean_iou, project_box_rect
from .orchestrator import (
    Conditioning,
    DenoiserContract,
    EditMaskTriple,
    GenerationConfig,
    OrchestrationError,
    TensorLedger,
    blend_latents,
    edit_apply,
    generate_scene,
    inpaint_blend,
    make_edit_masks,
)
from .raster import (
    DepthMap,
    MaskSet,
    RayHit,
    downsample_masks,
    export_depth,
    export_masks,
    import_depth,
    ray_box_intersect,
    render_depth,
    render_masks,
)
from .scene import (
    AddObject,
    Camera,
    EditError,
    LayoutParseError,
    ObjectSpec,
    OrientedBox,
    RemoveObject,
    ReplaceObject,
    Scene,
    SceneEdit,
    SetCamera,
    TransformObject,
    apply_edit,
    diff_scenes,
    load_layout,
    save_layout,
    validate_scene,
)
from .toy import ToyDenoiser, ToySchedule, decode_preview

__version__ = "0.1.0"
