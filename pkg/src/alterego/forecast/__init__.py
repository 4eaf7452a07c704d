"""Per-asset return forecasting: OLS, elastic net, random forest, neural net, ensemble."""

from .features import FEATURE_NAMES, FeatureSet, InsufficientHistory, SplitSpec, make_features
from .forest import ForestModel, fit_random_forest, grow_tree
from .lab import (
    KINDS,
    PRIORITY,
    ForecastConfig,
    ForecastPanel,
    RetrainResult,
    TrainedModel,
    combine_panels,
    en_l2_ranking,
    ensemble_predict,
    evaluate_and_select,
    load_forecasts,
    negative_forecast_fraction,
    rolling_retrain,
    select_winner,
    train_asset,
    window_bounds,
    write_forecasts,
    write_window_outputs,
)
from .linear import LinearModel, elastic_net, fit_elastic_net, fit_ols
from .nnet import NeuralNetModel, fit_neural_net, loss_and_grad

__all__ = [
    "FEATURE_NAMES", "FeatureSet", "InsufficientHistory", "SplitSpec", "make_features",
    "ForestModel", "fit_random_forest", "grow_tree",
    "KINDS", "PRIORITY", "ForecastConfig", "ForecastPanel", "RetrainResult", "TrainedModel",
    "combine_panels", "en_l2_ranking", "ensemble_predict", "evaluate_and_select", "load_forecasts",
    "negative_forecast_fraction", "rolling_retrain", "select_winner", "train_asset",
    "window_bounds", "write_forecasts", "write_window_outputs",
    "LinearModel", "elastic_net", "fit_elastic_net", "fit_ols",
    "NeuralNetModel", "fit_neural_net", "loss_and_grad",
]
