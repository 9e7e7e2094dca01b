"""Heterogeneous domain adaptation with shared dictionary codes.

Aligns a labeled source domain and a sparsely labeled target domain of
different feature dimensionality in a shared code space, matches the code
distributions adversarially, and trains a single multi-class hinge
classifier on both domains.
"""

from .datasets import (
    AdaptationTask,
    DomainDataset,
    SplitSpec,
    SyntheticSpec,
    load_dense,
    load_sparse,
    make_synthetic,
    save_dense,
    split_target,
    standardize_task,
)
from .errors import (
    ContractError,
    DataFormatError,
    DegeneracyError,
    HetdaError,
    NumericError,
    ShapeError,
)
from .trainer import (
    ABLATION_MODES,
    GridResult,
    ModelState,
    StopRule,
    TrainConfig,
    ablate,
    grid_search,
    predict_target,
    target_only_baseline,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ABLATION_MODES",
    "AdaptationTask",
    "ContractError",
    "DataFormatError",
    "DegeneracyError",
    "DomainDataset",
    "GridResult",
    "HetdaError",
    "ModelState",
    "NumericError",
    "ShapeError",
    "SplitSpec",
    "StopRule",
    "SyntheticSpec",
    "TrainConfig",
    "ablate",
    "grid_search",
    "load_dense",
    "load_sparse",
    "make_synthetic",
    "predict_target",
    "save_dense",
    "split_target",
    "standardize_task",
    "target_only_baseline",
    "train",
    "__version__",
]
