"""Misalignment-robust multi-focus image fusion.

One box-filter Hessian scale space per image drives both feature-based
translation registration and saliency-driven fusion, so the all-in-focus
result comes at nearly the cost of registration alone.
"""

from .evalharness import QualityReport, SyntheticSpec, evaluate, generate, textured_base
from .features import Descriptor, KeyPoint, describe, describe_all, detect
from .fusion import (
    GuidedFilterParams,
    SaliencyMap,
    fuse,
    guided_filter,
    initial_weights,
    align_saliency,
    saliency,
)
from .imgcore import (
    Image,
    IntegralImage,
    ValidityMask,
    box_sum,
    integral,
    load_image,
    save_image,
    to_grayscale,
    translate,
)
from .matching import Match, MatchStats, match_descriptors, top_k
from .pipeline import PipelineConfig, RunReport, run_pipeline, sweep
from .registration import (
    RegistrationError,
    TranslationModel,
    VoteGrid,
    hough_vote,
    register_stack,
    select_reference,
)
from .scalespace import (
    ResponseLayer,
    ScaleSpace,
    ScaleSpaceConfig,
    build_scale_space,
    filter_size,
    hessian_response,
)

__version__ = "0.1.0"

__all__ = [
    "Image",
    "IntegralImage",
    "ValidityMask",
    "load_image",
    "save_image",
    "to_grayscale",
    "integral",
    "box_sum",
    "translate",
    "ScaleSpaceConfig",
    "ScaleSpace",
    "ResponseLayer",
    "filter_size",
    "hessian_response",
    "build_scale_space",
    "KeyPoint",
    "Descriptor",
    "detect",
    "describe",
    "describe_all",
    "Match",
    "MatchStats",
    "match_descriptors",
    "top_k",
    "TranslationModel",
    "VoteGrid",
    "RegistrationError",
    "select_reference",
    "hough_vote",
    "register_stack",
    "SaliencyMap",
    "GuidedFilterParams",
    "saliency",
    "align_saliency",
    "initial_weights",
    "guided_filter",
    "fuse",
    "PipelineConfig",
    "RunReport",
    "run_pipeline",
    "sweep",
    "SyntheticSpec",
    "QualityReport",
    "generate",
    "evaluate",
    "textured_base",
]
