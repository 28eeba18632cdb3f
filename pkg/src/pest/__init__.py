"""Prompt-ensemble self-training for open-vocabulary adaptation, at desk scale.

A toy linear vision-language model is contrastively pretrained on paired
source data, then adapted to a shifted, unlabeled target domain by
self-training whose pseudo-labels are steered by three prompt ensembles:
over rewritten text prompts, over augmented image views, and over time.
Everything runs in a small embedding space on synthetic tasks, so full
experiments finish in seconds and are bit-reproducible.
"""

from .encoders import EncoderGradient, LinearEncoder, MomentumEncoder
from .ensembles import (
    CentroidBank,
    baseline_majority_vote,
    baseline_uniform,
    baseline_weighted,
    init_fused,
    language_ensemble,
    temporal_update,
    vision_ensemble,
)
from .exceptions import (
    BadLabelError,
    ConfigError,
    CorruptFileError,
    DimensionMismatchError,
    FormatVersionError,
    MissingCentroidError,
    NonPositiveTemperatureError,
    PestError,
    ResampleExhaustedError,
    StepOutOfRangeError,
    TaskSpecError,
    ZeroNormError,
)
from .linalg import dot, l2_normalize, l2_normalize_rows, softmax_cross_entropy
from .metrics import MetricsRow, read_run_metrics, read_summary, write_run_metrics
from .optim import AdamW, CosineSchedule
from .pretrain import ContrastivePretrainer, PretrainConfig, contrastive_loss, pretrain_vlm
from .selftrain import (
    AdaptConfig,
    AdaptResult,
    MODES,
    PromptEnsembleSelfTrainer,
    PseudoLabel,
    adapt,
    pest_pseudo_label,
    self_training_loss,
    st_pseudo_label,
    zero_shot_scores,
)
from .synthbench import (
    AugmentOp,
    SyntheticTask,
    TaskSpec,
    augment,
    augment_views,
    default_augment_ops,
    generate_task,
    load_task,
    save_task,
)

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "AdaptConfig",
    "AdaptResult",
    "AugmentOp",
    "BadLabelError",
    "CentroidBank",
    "ConfigError",
    "ContrastivePretrainer",
    "CorruptFileError",
    "CosineSchedule",
    "DimensionMismatchError",
    "EncoderGradient",
    "FormatVersionError",
    "LinearEncoder",
    "MODES",
    "MetricsRow",
    "MissingCentroidError",
    "MomentumEncoder",
    "NonPositiveTemperatureError",
    "PestError",
    "PretrainConfig",
    "PromptEnsembleSelfTrainer",
    "PseudoLabel",
    "ResampleExhaustedError",
    "StepOutOfRangeError",
    "SyntheticTask",
    "TaskSpec",
    "TaskSpecError",
    "ZeroNormError",
    "adapt",
    "augment",
    "augment_views",
    "baseline_majority_vote",
    "baseline_uniform",
    "baseline_weighted",
    "contrastive_loss",
    "default_augment_ops",
    "dot",
    "generate_task",
    "init_fused",
    "l2_normalize",
    "l2_normalize_rows",
    "language_ensemble",
    "load_task",
    "pest_pseudo_label",
    "pretrain_vlm",
    "read_run_metrics",
    "read_summary",
    "save_task",
    "self_training_loss",
    "softmax_cross_entropy",
    "st_pseudo_label",
    "temporal_update",
    "vision_ensemble",
    "write_run_metrics",
    "zero_shot_scores",
]
