"""Segment-wise latent inversion and local editing of images.

A toolkit that inverts an image into one latent code per user-drawn segment,
edits those codes locally or globally, refines segment boundaries by front
propagation, and reassembles the result with gradient-domain stitching -
all against a built-in deterministic differentiable generator.
"""

from .generator import (
    GeneratorConfig,
    LatentCode,
    Space,
    ToyGenerator,
    map_z_to_w,
    new_generator,
    promote,
    synth_grad_code,
    synth_grad_weights,
    synthesize,
)
from .image import (
    BinaryMask,
    ImageBuffer,
    LabelMap,
    compose,
    dilate,
    load_image,
    load_label_map,
    mask_of,
    save_image,
    save_label_map,
)
from .editing import (
    EditDirection,
    EditScript,
    EditStep,
    apply_direction,
    direction_from_codes,
    edit_incremental,
    edit_simultaneous,
    reconstruct,
)
from .levelset import (
    LevelSetField,
    RefineParams,
    StoppingFunction,
    evolve,
    refine_segment,
    signed_distance_from_mask,
    stopping_function,
)
from .poisson import StitchConfig, build_problem, solve, solve_dense, stitch_composite
from .projection import (
    ProjectionConfig,
    SegmentProjection,
    finetune_segment,
    masked_loss,
    project_all,
    project_global,
    project_segment,
)

__version__ = "0.1.0"
