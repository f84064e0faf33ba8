"""posekit: the non-neural pipeline of a bottom-up multi-robot 2D pose
estimator, complete and verifiable without a trained network.

Ground-truth heatmap encoding, heatmap decoding into pose instances via
greedy part association, masked MSE training losses, and OKS-based AP/AR
evaluation, plus dataset tooling, a deterministic synthetic-scene
generator, and a CLI.
"""

__version__ = "0.1.0"

from . import errors
from .association import (
    ConnectionCandidate,
    DecodeParams,
    assemble_poses,
    decode_image,
    match_limb,
    score_connection,
)
from .dataset_io import (
    AnnotationSet,
    DatasetStats,
    ImageInfo,
    compute_stats,
    load_annotations,
    load_results,
    write_annotations,
    write_results,
)
from .evaluation import (
    EvalReport,
    evaluate,
    match_and_score,
    oks,
    scale_class,
    segment_area,
)
from .heatmaps import (
    PeakCandidate,
    detect_peaks,
    encode_keypoints,
    encode_limbs,
    export_png16,
    fuse_multiscale,
    read_pkhm,
    write_pkhm,
)
from .loss import LossBreakdown, keypoint_loss, limb_loss, resize_mask, total_loss
from .synthgen import SceneConfig, generate_scene, perturb, scenes_to_annotations
from .types import (
    Heatmap,
    HeatmapStack,
    Keypoint,
    LossMask,
    PoseInstance,
    SkeletonSpec,
    default_spec,
    validate_spec,
)
