"""Tapered-whisker physical reservoir computing for terrain sensing.

A tapered cantilever excited by synthetic terrain acts as the reservoir; a
ridge readout, an eigenspace novelty detector, a simplex mixture labeler
and a terrain-following navigation loop sit on top.
"""
from .errors import (
    ArgumentError,
    BoundaryError,
    ConfigError,
    NumericalError,
    StageDependencyError,
    UsageError,
    WhiskerRCError,
)
from .novelty import (
    EigenSpaceDetector,
    RoughnessRegressor,
    detect_novel,
    fit_detector,
    fit_roughness,
    mahalanobis_distance,
    predict_roughness,
)
from .readout import (
    ConfusionMatrix,
    FeatureVector,
    ReadoutModel,
    classify,
    evaluate,
    extract_features,
    featurize_dataset,
    train_readout,
)
from .semilabel import (
    AutoLabelRecord,
    CentroidBank,
    MixtureEstimate,
    auto_label,
    estimate_mixture,
    update_bank,
)
from .terrain import (
    ExcitationSignal,
    LabeledDataset,
    TerrainClass,
    TerrainProfile,
    Traversal,
    make_dataset,
    sample_profile,
    traverse_to_excitation,
)
from .whisker import (
    DiscretizedWhisker,
    Material,
    ModalBasis,
    WhiskerGeometry,
    build_whisker,
    modal_analysis,
    simulate_response,
    tap_signals,
)

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "BoundaryError",
    "ConfigError",
    "NumericalError",
    "StageDependencyError",
    "UsageError",
    "WhiskerRCError",
    "EigenSpaceDetector",
    "RoughnessRegressor",
    "detect_novel",
    "fit_detector",
    "fit_roughness",
    "mahalanobis_distance",
    "predict_roughness",
    "ConfusionMatrix",
    "FeatureVector",
    "ReadoutModel",
    "classify",
    "evaluate",
    "extract_features",
    "featurize_dataset",
    "train_readout",
    "AutoLabelRecord",
    "CentroidBank",
    "MixtureEstimate",
    "auto_label",
    "estimate_mixture",
    "update_bank",
    "ExcitationSignal",
    "LabeledDataset",
    "TerrainClass",
    "TerrainProfile",
    "Traversal",
    "make_dataset",
    "sample_profile",
    "traverse_to_excitation",
    "DiscretizedWhisker",
    "Material",
    "ModalBasis",
    "WhiskerGeometry",
    "build_whisker",
    "modal_analysis",
    "simulate_response",
    "tap_signals",
]
