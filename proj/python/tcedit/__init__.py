"""Multi-camera editing with temporal and contextual transformer encoders."""

from ._core import (
    ConfigError,
    DimensionError,
    FormatError,
    EditOptions,
    EvalReport,
    FeaturePool,
    EditAnnotation,
    Model,
    ModelConfig,
    Scene,
    Shot,
    StreamMode,
    SyntheticSpec,
    TrainConfig,
    annotation_from_shots,
    autoregressive_edit,
    average_precision,
    evaluate,
    generate_synthetic_show,
    gradcheck_model,
    init_params,
    load_annotation,
    load_checkpoint,
    load_pool,
    precision_at,
    random_baseline,
    run_cli,
    save_annotation,
    save_checkpoint,
    save_pool,
    shots_from_annotation,
    split_scenes,
    tiny_model_config,
    track_accuracy,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
