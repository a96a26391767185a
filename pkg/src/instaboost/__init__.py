"""Crop-paste augmentation for instance segmentation.

Cuts annotated instances out of their image with a feathered alpha,
inpaints the hole, scores candidate paste centers by how well the
surrounding background matches the original neighborhood, samples a
placement, and composites the instance back with regenerated COCO
annotations.
"""

__version__ = "0.1.0"

from .annotations import (
    DatasetIndex,
    ImageRecord,
    InstanceAnnotation,
    ValidationReport,
    build_index,
    parse_dataset,
    serialize_dataset,
    validate,
)
from .errors import (
    DanglingReference,
    DegenerateDistribution,
    DegenerateGeometry,
    EmptyMask,
    EmptyResult,
    FullyClipped,
    HoleCoversImage,
    InstaBoostError,
    IoFailure,
    MalformedDocument,
    ValidationFailure,
)
from .heatmap import (
    ConsistencyHeatmap,
    HeatmapConfig,
    ProbabilityMap,
    appearance_distance,
    compute_heatmap,
    log_rescale,
    sample_center,
    to_probability,
)
from .inpaint import InpaintConfig, InpaintResult, inpaint
from .maskops import (
    AlphaInstancePatch,
    ContourRingSet,
    contour_rings,
    cut_instance,
    feather_alpha,
    mask_to_bbox,
    rasterize,
)
from .pipeline import (
    AugmentConfig,
    AugmentedSample,
    RunStats,
    augment_dataset,
    augment_image,
    config_from_dict,
)
from .transform import (
    AffineTuple,
    JitterConfig,
    affine_matrix,
    sample_jitter,
    transform_annotation,
    warp_patch,
)

__all__ = [
    "__version__",
    "AffineTuple",
    "AlphaInstancePatch",
    "AugmentConfig",
    "AugmentedSample",
    "ConsistencyHeatmap",
    "ContourRingSet",
    "DanglingReference",
    "DatasetIndex",
    "DegenerateDistribution",
    "DegenerateGeometry",
    "EmptyMask",
    "EmptyResult",
    "FullyClipped",
    "HeatmapConfig",
    "HoleCoversImage",
    "ImageRecord",
    "InpaintConfig",
    "InpaintResult",
    "InstaBoostError",
    "InstanceAnnotation",
    "IoFailure",
    "JitterConfig",
    "MalformedDocument",
    "ProbabilityMap",
    "RunStats",
    "ValidationFailure",
    "ValidationReport",
    "affine_matrix",
    "appearance_distance",
    "augment_dataset",
    "augment_image",
    "build_index",
    "compute_heatmap",
    "config_from_dict",
    "contour_rings",
    "cut_instance",
    "feather_alpha",
    "inpaint",
    "log_rescale",
    "mask_to_bbox",
    "parse_dataset",
    "rasterize",
    "sample_center",
    "sample_jitter",
    "serialize_dataset",
    "to_probability",
    "transform_annotation",
    "validate",
    "warp_patch",
]
