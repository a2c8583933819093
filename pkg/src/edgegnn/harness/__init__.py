"""Training, evaluation, persistence and experiment orchestration."""

from edgegnn.harness.training import (
    Dataset,
    EvalResult,
    InputNorm,
    LossConfig,
    TrainConfig,
    evaluate,
    fit_norm,
    loss,
    make_dataset,
    model_input,
    train,
)

__all__ = [
    "Dataset", "EvalResult", "InputNorm", "LossConfig", "TrainConfig", "evaluate", "fit_norm", "loss",
    "make_dataset", "model_input", "train",
]
