"""Object-level image editing with paired structure/appearance conditioning.

Images are decomposed into object instances; each object's structure
(category + mask) and appearance (pooled multi-level features) condition a
diffusion model, enabling appearance transfer, shape edits, object
addition, and seed-driven variations with region-local resampling.
"""

from .conditioning import (
    AppearanceTensor,
    ConditioningBundle,
    DropoutConfig,
    StructureTensor,
    apply_dropout,
    assemble_conditioning,
    build_structure_tensor,
    splat_appearance,
)
from .editops import (
    EditSpec,
    GuidanceWeights,
    add_object,
    edit_appearance,
    edit_shape,
    interpolate_appearance,
    make_variation,
)
from .engine import ModelContext, execute_edit
from .errors import PairError
from .representation import (
    Image,
    PanopticMap,
    SceneDescription,
    build_scene,
    downsample_mask,
    pool_appearance,
    segment,
)
from .sampler import (
    SamplerConfig,
    cfg_combine_factorized,
    cfg_combine_joint,
    ddim_invert,
    ddim_step,
    sample,
)
from .schedule import NoiseSchedule, forward_diffuse

__version__ = "0.1.0"

__all__ = [
    "AppearanceTensor",
    "ConditioningBundle",
    "DropoutConfig",
    "EditSpec",
    "GuidanceWeights",
    "Image",
    "ModelContext",
    "NoiseSchedule",
    "PairError",
    "PanopticMap",
    "SamplerConfig",
    "SceneDescription",
    "StructureTensor",
    "add_object",
    "apply_dropout",
    "assemble_conditioning",
    "build_scene",
    "build_structure_tensor",
    "cfg_combine_factorized",
    "cfg_combine_joint",
    "ddim_invert",
    "ddim_step",
    "downsample_mask",
    "edit_appearance",
    "edit_shape",
    "execute_edit",
    "forward_diffuse",
    "interpolate_appearance",
    "make_variation",
    "pool_appearance",
    "sample",
    "segment",
    "splat_appearance",
]
