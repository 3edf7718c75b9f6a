"""Dense semantic RGB-D reconstruction pipeline."""

from semfusion._core import (
    ConfigError,
    DataError,
    PipelineConfig,
    PropagationParams,
    SegParams,
    TsdfParams,
    __version__,
    apply_override,
    config_hash,
    dump_config,
    evaluate,
    load_config,
    propagate,
    read_ply,
    recon_error_cm,
    reconstruct,
    semantic,
    semantic_scores,
    synth,
)

__all__ = [
    "ConfigError",
    "DataError",
    "PipelineConfig",
    "PropagationParams",
    "SegParams",
    "TsdfParams",
    "__version__",
    "apply_override",
    "config_hash",
    "dump_config",
    "evaluate",
    "load_config",
    "propagate",
    "read_ply",
    "recon_error_cm",
    "reconstruct",
    "semantic",
    "semantic_scores",
    "synth",
]
