"""Coarse-to-fine pseudo-labels for unsupervised video anomaly detection.

The pipeline turns a bundle of pre-extracted segment features into frame-level
anomaly scores without any human labels: video magnitude summaries are split
into normal/anomalous clusters, each anomalous video gets one low-density
segment window marked, and a small attention detector trains on those
pseudo-labels.
"""

from .cpl import CoarseLabels, GmmModel, assign_clusters, fit_gmm_2, generate_coarse_labels
from .detector import (
    ATTENTION_MODES,
    DetectorModel,
    TrainConfig,
    TrainReport,
    forward,
    gradient_check,
    init_model,
    load_model,
    loss,
    save_model,
    train,
)
from .errors import (
    BundleFormatError,
    C2FPLError,
    DataInvariantError,
    DegenerateSplitError,
    DimensionMismatchError,
    DuplicateVideoIdError,
    InsufficientDataError,
    MalformedHeaderError,
    NonFiniteValueError,
    UndefinedAucError,
)
from .evaluate import (
    RocResult,
    ScoredVideo,
    frame_auc,
    per_video_auc,
    score_bundle,
    threshold_frames,
)
from .features import (
    FeatureBundle,
    VideoRecord,
    VideoSummary,
    read_bundle,
    segment_norm,
    summarize_bundle,
    summarize_video,
    write_bundle,
)
from .fpl import (
    FineLabels,
    NullModel,
    fit_null_model,
    generate_fine_labels,
    p_value,
    p_values,
    segment_representation,
    select_window,
)
from .pipeline import ABLATION_MODES, PipelineConfig, PipelineResult, run, sweep
from .seeding import derive_seed
from .synth import GroundTruth, SynthConfig, generate, load_manifest

__version__ = "0.1.0"

__all__ = [
    "ABLATION_MODES",
    "ATTENTION_MODES",
    "BundleFormatError",
    "C2FPLError",
    "CoarseLabels",
    "DataInvariantError",
    "DegenerateSplitError",
    "DetectorModel",
    "DimensionMismatchError",
    "DuplicateVideoIdError",
    "FeatureBundle",
    "FineLabels",
    "GmmModel",
    "GroundTruth",
    "InsufficientDataError",
    "MalformedHeaderError",
    "NonFiniteValueError",
    "NullModel",
    "PipelineConfig",
    "PipelineResult",
    "RocResult",
    "ScoredVideo",
    "SynthConfig",
    "TrainConfig",
    "TrainReport",
    "UndefinedAucError",
    "VideoRecord",
    "VideoSummary",
    "assign_clusters",
    "derive_seed",
    "fit_gmm_2",
    "fit_null_model",
    "forward",
    "frame_auc",
    "generate",
    "generate_coarse_labels",
    "generate_fine_labels",
    "gradient_check",
    "init_model",
    "load_manifest",
    "load_model",
    "loss",
    "p_value",
    "p_values",
    "per_video_auc",
    "read_bundle",
    "run",
    "save_model",
    "score_bundle",
    "segment_norm",
    "segment_representation",
    "select_window",
    "summarize_bundle",
    "summarize_video",
    "sweep",
    "threshold_frames",
    "train",
    "write_bundle",
]
