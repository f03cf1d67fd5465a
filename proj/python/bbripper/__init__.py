"""Black-box model ripping: evolutionary latent search and distillation."""

from ._core import (
    BlackBoxOracle,
    Classifier,
    ConfigError,
    DisjointnessError,
    DivergenceError,
    Error,
    EvolutionConfig,
    ExperimentConfig,
    ExperimentReport,
    FormatError,
    InvalidInputError,
    ModeResult,
    ResponseMode,
    RoleMismatchError,
    ShapeError,
    Stage,
    StageOrderError,
    Vae,
    derive_seed,
    evolve,
    evolve_budget,
    fitness_from_probs,
    generate_shapes,
    load_report,
    proxy_shape_catalog,
    run_pipeline,
    run_stage,
    softmax,
    true_shape_catalog,
)

__all__ = [
    "BlackBoxOracle",
    "Classifier",
    "ConfigError",
    "DisjointnessError",
    "DivergenceError",
    "Error",
    "EvolutionConfig",
    "ExperimentConfig",
    "ExperimentReport",
    "FormatError",
    "InvalidInputError",
    "ModeResult",
    "ResponseMode",
    "RoleMismatchError",
    "ShapeError",
    "Stage",
    "StageOrderError",
    "Vae",
    "derive_seed",
    "evolve",
    "evolve_budget",
    "fitness_from_probs",
    "generate_shapes",
    "load_report",
    "proxy_shape_catalog",
    "run_pipeline",
    "run_stage",
    "softmax",
    "true_shape_catalog",
]
