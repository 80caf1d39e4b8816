"""Logistic and multi-task DPP models for shopping-basket completion."""

from .data import (
    BasketDataset,
    BasketSplit,
    EvaluationCase,
    ItemCatalog,
    ProtocolSpec,
    filter_dataset,
    load_baskets,
    make_examples,
    regularization_weights,
    split,
)
from .errors import (
    BasketDppError,
    ConfigError,
    EvaluationError,
    InputError,
    NumericalError,
    ParseError,
    SingularKernelError,
    TrainingError,
)
from .evaluation import MetricsReport, evaluate, model_scorer, percentile_rank
from .gradients import GradientSet, grad_logistic, grad_multitask
from .kernel import FactorizedKernel, SubmatrixResult, build_submatrix, det_and_inverse
from .models import (
    LogisticDppModel,
    MultiTaskDppModel,
    Observation,
    greedy_complete,
    load_model,
    penalized_log_likelihood_logistic,
    penalized_log_likelihood_multitask,
    rank_targets,
    save_model,
    success_probability_logistic,
    success_probability_multitask,
)
from .trainer import TrainConfig, TrainReport, initialize, train

__version__ = "0.1.0"
