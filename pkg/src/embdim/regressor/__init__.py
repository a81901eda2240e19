"""Regression heads: random forest (default) and the MLP baseline."""

from .forest import ForestConfig, ForestModel, Tree, forest_fit, forest_predict
from .mlp import (
    MLPConfig,
    MLPModel,
    MlpTrainReport,
    mlp_fit,
    mlp_gradient_check,
    mlp_predict,
)

__all__ = [
    "ForestConfig",
    "ForestModel",
    "Tree",
    "forest_fit",
    "forest_predict",
    "MLPConfig",
    "MLPModel",
    "MlpTrainReport",
    "mlp_fit",
    "mlp_gradient_check",
    "mlp_predict",
]
