"""Persistence-gated mixture-of-experts for ordinal time-series prediction."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .core import (
    InsufficientDataError,
    OrdinalScale,
    Standardization,
    TimeSeriesRecord,
    WindowedDataset,
    WindowedPattern,
    build_windows,
    class_distribution,
    discretize,
    persistence_rate,
)
from .datagen import GenConfig, generate, oracle_bayes_accuracy
from .metrics import ConfusionMatrix, EvalReport, evaluate
from .mixture import LossConfig, MixtureParams, gate, loss, loss_gradient, mixture_probs, predict
from .nnpom import NnpomConfig, NnpomParams, PomParams, class_probs, init_params, latent, prob_gradients
from .optimizer import IRpropPlus, MinimizeResult, RpropConfig, minimize
from .training import (
    ExperimentResult,
    FittedModel,
    HyperGrid,
    TrainSpec,
    cross_validate,
    fit_method,
    make_winter_splits,
    run_experiment,
    train_itme,
    train_persist,
    train_stme,
)

__version__ = "0.1.0"
