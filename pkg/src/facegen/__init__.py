"""Attribute-driven, identity-preserving image generation by gradient descent
on CNN feature losses, with landmark masks and a linear YCbCr color transfer."""

from facegen.color import (
    ColorTransform,
    apply_color_transform,
    fit_color_transform,
    rgb_to_ycbcr,
    sample_pixel_pairs,
    ycbcr_to_rgb,
)
from facegen.generator import (
    GenerationDiverged,
    GenerationResult,
    OptimizerConfig,
    initialize_target,
    layer_sweep,
    run_generation,
    run_guided_image_mode,
    tv_sweep,
)
from facegen.guided import (
    CorpusEntry,
    GuidedSet,
    assign_weights,
    filter_by_attributes,
    pose_distance,
    rank_candidates,
    select_guided_set,
)
from facegen.kernels import BACKEND
from facegen.losses import (
    LossValue,
    Objective,
    ObjectiveConfig,
    attribute_loss,
    identity_loss,
    perceptual_loss,
    total_objective,
    tv_loss,
)
from facegen.masks import build_mask, convex_hull, expand_and_rasterize
from facegen.network import (
    NetworkSpec,
    backward_to_image,
    forward,
    load_network,
    make_seeded_network,
    save_network,
)

__version__ = "0.1.0"
