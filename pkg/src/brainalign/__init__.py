"""Neural alignment for recurrent vision models.

Train a hierarchical recurrent CNN to generate measured brain responses
alongside its classification behavior, then evaluate how closely its stage
representations track neural data: RDM-based similarity per ROI, time-resolved
EEG decoding comparisons, and unique-variance profiles over interpretable
object dimensions.
"""

from .arrayio import read_array, read_array_bundle, write_array, write_array_bundle
from .backbone import (
    STAGE_NAMES,
    Backbone,
    BackboneSpec,
    build_backbone,
    full_spec,
    tiny_spec,
)
from .data import (
    EEGEpochs,
    IngestionError,
    ManifestValidationError,
    NeuralResponseMatrix,
    StimulusSet,
    average_repetitions,
    load_dataset,
    load_images,
    parse_manifest,
    pseudo_trial_average,
)
from .decoding import DecodingConfig, build_eeg_rdms, pairwise_decoding_accuracy
from .dimensions import (
    DimensionProfile,
    difference_profile,
    dimension_profile,
    feature_rdm,
    partial_spearman,
    rdm_partial_spearman,
)
from .encoder_head import ResponseHead, build_response_head
from .losses import (
    LossBreakdown,
    alignment_loss,
    classification_loss,
    correlation,
    generation_loss,
    soft_rank,
)
from .pca import PCAModel, fit_pca, fit_response_pipeline, fit_zscore
from .rsa import (
    RDM,
    RoiSimilarity,
    compare_rdms,
    improvement_ratio,
    layer_rdms,
    one_minus_pearson_rdm,
    roi_similarity,
    temporal_contrast,
    temporal_similarity,
)
from .training import (
    AlignmentConfig,
    GradCheckReport,
    TrainingResult,
    check_gradients,
    generate_responses,
    load_checkpoint,
    save_checkpoint,
    train,
    train_individual_suite,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentConfig",
    "Backbone",
    "BackboneSpec",
    "DecodingConfig",
    "DimensionProfile",
    "EEGEpochs",
    "GradCheckReport",
    "IngestionError",
    "LossBreakdown",
    "ManifestValidationError",
    "NeuralResponseMatrix",
    "PCAModel",
    "RDM",
    "ResponseHead",
    "RoiSimilarity",
    "STAGE_NAMES",
    "StimulusSet",
    "TrainingResult",
    "alignment_loss",
    "average_repetitions",
    "build_backbone",
    "build_eeg_rdms",
    "build_response_head",
    "check_gradients",
    "classification_loss",
    "compare_rdms",
    "correlation",
    "difference_profile",
    "dimension_profile",
    "feature_rdm",
    "fit_pca",
    "fit_response_pipeline",
    "fit_zscore",
    "full_spec",
    "generate_responses",
    "generation_loss",
    "improvement_ratio",
    "layer_rdms",
    "load_checkpoint",
    "load_dataset",
    "load_images",
    "one_minus_pearson_rdm",
    "pairwise_decoding_accuracy",
    "parse_manifest",
    "partial_spearman",
    "pseudo_trial_average",
    "rdm_partial_spearman",
    "read_array",
    "read_array_bundle",
    "roi_similarity",
    "save_checkpoint",
    "soft_rank",
    "temporal_contrast",
    "temporal_similarity",
    "tiny_spec",
    "train",
    "train_individual_suite",
    "write_array",
    "write_array_bundle",
]
