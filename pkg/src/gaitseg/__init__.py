"""Body-part-selective gait recognition.

Silhouette sequences become gait templates, the rows of validation GEIs are
segmented into body parts by group fused Lasso change-point detection, the most
dynamic parts are kept, and recognition runs PCA plus LDA with a nearest
neighbour rule on the kept rows.
"""

from .dataio import (
    CASIA_ANGLES,
    Condition,
    DataError,
    DatasetManifest,
    Role,
    SilhouetteSequence,
    detect_gait_cycle,
    load_sequence,
    normalize_frame,
    normalize_sequence,
    read_manifest,
    save_sequence,
    write_manifest,
)
from .kernels import available_backends, backend
from .motion import MotionMatrix, assemble_motion_matrix, motion_vector
from .recognition import CdaModel, FeatureSet, cross_view_matrix, evaluate_ccr, fit_cda, fit_lda, fit_pca, load_model, save_model
from .segmentation import (
    BodyPartition,
    ChangePointPath,
    detect_change_points,
    segment_motion,
    segment_with_bagging,
    select_parts,
)
from .synth import SyntheticConfig, generate, generate_sequences
from .templates import GaitTemplate, TemplateKind, compute_gei, compute_geni, compute_gppe, compute_template
from .viewfree import PoseEstimator, estimate_view, recognize_view_free

__version__ = "0.1.0"

__all__ = [
    "CASIA_ANGLES",
    "BodyPartition",
    "CdaModel",
    "ChangePointPath",
    "Condition",
    "DataError",
    "DatasetManifest",
    "FeatureSet",
    "GaitTemplate",
    "MotionMatrix",
    "PoseEstimator",
    "Role",
    "SilhouetteSequence",
    "SyntheticConfig",
    "TemplateKind",
    "assemble_motion_matrix",
    "available_backends",
    "backend",
    "compute_gei",
    "compute_geni",
    "compute_gppe",
    "compute_template",
    "cross_view_matrix",
    "detect_change_points",
    "detect_gait_cycle",
    "estimate_view",
    "evaluate_ccr",
    "fit_cda",
    "fit_lda",
    "fit_pca",
    "generate",
    "generate_sequences",
    "load_model",
    "load_sequence",
    "motion_vector",
    "normalize_frame",
    "normalize_sequence",
    "read_manifest",
    "recognize_view_free",
    "save_model",
    "save_sequence",
    "segment_motion",
    "segment_with_bagging",
    "select_parts",
    "write_manifest",
]
