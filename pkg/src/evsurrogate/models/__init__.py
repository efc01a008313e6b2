"""Surrogate predictors: features, model families, selection and bundle files."""

from .bundle import BundleError, load_bundle, save_bundle
from .features import (KIND_FILTER, M_E_D, M_E_S, M_L, M_O, M_V, PREDICTORS, FeatureSchema,
                       build_features, raw_features)
from .metrics import mape, mse
from .selection import (DEFAULT_GRIDS, FAMILIES, ModelBundle, TrainedModel, TrainingError, evaluate,
                        grid_search, predict_batch, select_bundle, train_all, train_predictor)

__all__ = [
    "BundleError", "load_bundle", "save_bundle", "KIND_FILTER", "M_E_D", "M_E_S", "M_L", "M_O", "M_V",
    "PREDICTORS", "FeatureSchema", "build_features", "raw_features", "mape", "mse", "DEFAULT_GRIDS",
    "FAMILIES", "ModelBundle", "TrainedModel", "TrainingError", "evaluate", "grid_search",
    "predict_batch", "select_bundle", "train_all", "train_predictor",
]
