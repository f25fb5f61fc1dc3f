# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Loss, optimizer, the epoch loop, evaluation and the late-vote pipeline."""

import logging
import math
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import MODALITIES, MultimodalSample, make_batches
from .errors import ConfigError, ContractError, DataError
from .fusion import (
    FUSION_INIT_INDEX,
    Approach,
    FusionMode,
    FusionModel,
    Model,
    UnimodalModel,
    create_model,
    late_fusion_predict,
    model_logits,
    unimodal_logits,
)
from .tensor import GradTape, Tensor, backward, log_softmax, mean, pick
from .transformer import NUM_CLASSES, EncoderConfig
from .utils import Stream, make_rng


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings of one training run.

    Attributes:
        learning_rate (float): Adam step size
        beta1 (float): Decay of the first-moment estimate, in (0, 1)
        beta2 (float): Decay of the second-moment estimate, in (0, 1)
        eps (float): Denominator offset
        batch_size (int): Samples per step
        epochs (int): Passes over the training set; 0 leaves the model untouched
        seed (int): Run seed from which all random streams derive
        approach (Approach): What is trained
    """

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    approach: Approach = Approach.A1

    def __post_init__(self) -> None:
        """Validate the configuration."""
        object.__setattr__(self, "approach", Approach(self.approach))
        if self.learning_rate <= 0 or self.eps <= 0:
            msg = f"learning_rate and eps must be positive, got {self.learning_rate}, {self.eps}"
            raise ConfigError(msg)
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            msg = f"beta1 and beta2 must lie in (0, 1), got {self.beta1}, {self.beta2}"
            raise ConfigError(msg)
        if self.batch_size < 1 or self.epochs < 0:
            msg = f"Need batch_size >= 1 and epochs >= 0, got {self.batch_size}, {self.epochs}"
            raise ConfigError(msg)
        if not 0 <= self.seed < 2**64:
            msg = f"seed must be a 64-bit unsigned integer, got {self.seed}"
            raise ConfigError(msg)


@dataclass
class AdamState:
    """First and second moment estimates per parameter name, plus the step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray] | None,
    state: AdamState,
    cfg: TrainConfig,
) -> None:
    """
    One Adam update with bias correction; the parameter gradients are cleared afterwards.

    Args:
        params (Mapping[str, Tensor]): Parameters keyed by name
        grads (Mapping[str, np.ndarray] | None): Gradients keyed by name; None uses the
            accumulated `grad` of every parameter (missing gradients count as zero)
        state (AdamState): Moments, updated in place
        cfg (TrainConfig): Hyperparameters

    Raises:
        ContractError: If a gradient or stored moment does not match its parameter's shape
    """
    state.t += 1
    correction1 = 1.0 - cfg.beta1**state.t
    correction2 = 1.0 - cfg.beta2**state.t
    for name, param in params.items():
        grad = param.grad if grads is None else grads.get(name)
        grad = np.zeros_like(param.data) if grad is None else np.asarray(grad)
        if grad.shape != param.shape:
            msg = f"Gradient of {name} has shape {grad.shape}, parameter {param.shape}"
            raise ContractError(msg)
        m = state.m.setdefault(name, np.zeros_like(param.data))
        v = state.v.setdefault(name, np.zeros_like(param.data))
        if m.shape != param.shape or v.shape != param.shape:
            msg = f"Adam moments of {name} have shape {m.shape}, parameter {param.shape}"
            raise ContractError(msg)
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * grad
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * grad * grad
        step = cfg.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + cfg.eps)
        param.data = (param.data - step).astype(param.dtype)
        param.grad = None


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """
    Mean negative log-likelihood of the labels under the softmax of the logits.

    Args:
        logits (Tensor): (b, 3) logits
        labels (np.ndarray): (b,) classes in {0, 1, 2}

    Returns:
        Tensor: Scalar loss

    Raises:
        DataError: If a label is out of range
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= NUM_CLASSES):
        msg = f"Labels must lie in [0, {NUM_CLASSES}), got {np.unique(labels).tolist()}"
        raise DataError(msg)
    return -mean(pick(log_softmax(logits, axis=-1), labels))


@dataclass(frozen=True)
class EpochMetrics:
    """Losses and accuracies after one epoch."""

    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass
class Metrics:
    """Training history and final results of a run.

    Attributes:
        history (list[EpochMetrics]): One entry per epoch
        test_accuracy (float | None): Accuracy on the held-out test split
        unimodal (dict[str, float]): Test accuracy of every single-modality model of a late
            vote
    """

    history: list[EpochMetrics] = field(default_factory=list)
    test_accuracy: float | None = None
    unimodal: dict[str, float] = field(default_factory=dict)


def _stream_index(model: Model) -> int:
    if isinstance(model, UnimodalModel):
        return MODALITIES.index(model.modality)
    return FUSION_INIT_INDEX


def evaluate_predictions(
    model: Model, samples: Sequence[MultimodalSample], batch_size: int = 32
) -> tuple[np.ndarray, float, float]:
    """
    Predictions, accuracy and mean loss of a model on a dataset, dropout disabled.

    For late-vote models the loss is the mean of the three single-modality cross-entropies.

    Returns:
        tuple[np.ndarray, float, float]: Per-sample predictions in input order, accuracy, mean
            loss

    Raises:
        DataError: If `samples` is empty
    """
    if not samples:
        msg = "Cannot evaluate on an empty dataset"
        raise DataError(msg)
    predictions = np.empty(len(samples), dtype=np.int64)
    labels = np.empty(len(samples), dtype=np.int64)
    total_loss = 0.0
    late_vote = isinstance(model, FusionModel) and model.mode is FusionMode.LATE_VOTE
    for batch in make_batches(samples, batch_size):
        if late_vote:
            per_modality = unimodal_logits(model, batch)
            logits = [per_modality[m] for m in MODALITIES]
            batch_predictions = late_fusion_predict(*logits)
            loss = float(np.mean([cross_entropy(lg, batch.labels).item() for lg in logits]))
        else:
            logits = model_logits(model, batch)
            batch_predictions = logits.data.argmax(axis=1)
            loss = cross_entropy(logits, batch.labels).item()
        predictions[batch.indices] = batch_predictions
        labels[batch.indices] = batch.labels
        total_loss += loss * len(batch)
    accuracy = float(np.mean(predictions == labels))
    return predictions, accuracy, total_loss / len(samples)


def evaluate(
    model: Model, samples: Sequence[MultimodalSample], batch_size: int = 32
) -> tuple[float, float]:
    """Accuracy and mean loss, see `evaluate_predictions`."""
    _, accuracy, loss = evaluate_predictions(model, samples, batch_size)
    return accuracy, loss


def train(
    model: Model,
    train_set: Sequence[MultimodalSample],
    val_set: Sequence[MultimodalSample],
    cfg: TrainConfig,
) -> Metrics:
    """
    Train a model for a fixed number of epochs.

    Every epoch shuffles the training set with the data-order stream, runs forward, loss,
    backward and an Adam step per batch, and then evaluates on the validation set. The model
    keeps its final-epoch parameters.

    Args:
        model (Model): A single-modality, early-concat or attention model
        train_set (Sequence[MultimodalSample]): Training samples
        val_set (Sequence[MultimodalSample]): Validation samples; when empty the validation
            columns are NaN
        cfg (TrainConfig): Settings, `cfg.approach` must match the model

    Returns:
        Metrics: Per-epoch history

    Raises:
        DataError: If the training set is empty
        ContractError: If the model does not match `cfg.approach` or is a late-vote model
    """
    if model.approach is not cfg.approach:
        msg = f"Model implements {model.approach.value}, config asks for {cfg.approach.value}"
        raise ContractError(msg)
    if cfg.approach is Approach.A0:
        msg = "Late-vote models are trained through late_fusion_pipeline"
        raise ContractError(msg)
    if not train_set:
        msg = "Cannot train on an empty dataset"
        raise DataError(msg)
    if not val_set:
        logging.warning("Validation set is empty, validation metrics will be NaN")

    index = _stream_index(model)
    order_rng = make_rng(cfg.seed, Stream.DATA_ORDER, index)
    dropout_rng = make_rng(cfg.seed, Stream.DROPOUT, index)
    params = model.parameters()
    state = AdamState()
    metrics = Metrics()

    for epoch in range(1, cfg.epochs + 1):
        total_loss, correct = 0.0, 0
        for batch in make_batches(train_set, cfg.batch_size, order_rng):
            with GradTape() as tape:
                logits = model_logits(model, batch, rng=dropout_rng)
                loss = cross_entropy(logits, batch.labels)
            backward(loss, tape)
            adam_step(params, None, state, cfg)
            total_loss += loss.item() * len(batch)
            correct += int(np.sum(logits.data.argmax(axis=1) == batch.labels))

        val_accuracy, val_loss = evaluate(model, val_set, cfg.batch_size) if val_set else (
            math.nan,
            math.nan,
        )
        record = EpochMetrics(
            epoch=epoch,
            train_loss=total_loss / len(train_set),
            train_accuracy=correct / len(train_set),
            val_loss=val_loss,
            val_accuracy=val_accuracy,
        )
        metrics.history.append(record)
        logging.info(
            "%s epoch %d/%d: train loss %.4f acc %.4f, val loss %.4f acc %.4f",
            cfg.approach.value,
            epoch,
            cfg.epochs,
            record.train_loss,
            record.train_accuracy,
            record.val_loss,
            record.val_accuracy,
        )
    return metrics


def average_history(histories: Sequence[list[EpochMetrics]]) -> list[EpochMetrics]:
    """Average per-epoch records of runs that share an epoch count (the a0 history)."""
    averaged = []
    for records in zip(*histories, strict=True):
        averaged.append(
            EpochMetrics(
                epoch=records[0].epoch,
                train_loss=float(np.mean([r.train_loss for r in records])),
                train_accuracy=float(np.mean([r.train_accuracy for r in records])),
                val_loss=float(np.mean([r.val_loss for r in records])),
                val_accuracy=float(np.mean([r.val_accuracy for r in records])),
            )
        )
    return averaged


@dataclass
class RunResult:
    """Outcome of training one approach.

    Attributes:
        model (Model): The trained model (for a0 the assembled late-vote model)
        metrics (Metrics): History and test results
        unimodal_models (dict[str, UnimodalModel]): The single-modality models of a0
        test_predictions (np.ndarray): Predicted classes on the test split
    """

    model: Model
    metrics: Metrics
    unimodal_models: dict[str, UnimodalModel] = field(default_factory=dict)
    test_predictions: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


def input_dims_of(samples: Sequence[MultimodalSample]) -> tuple[int, int, int]:
    """Feature dimension per modality of a non-empty dataset."""
    if not samples:
        msg = "Cannot infer feature dimensions of an empty dataset"
        raise DataError(msg)
    return tuple(d for _, d in samples[0].shapes)  # type: ignore[return-value]


def late_fusion_pipeline(  # noqa: PLR0913
    train_set: Sequence[MultimodalSample],
    val_set: Sequence[MultimodalSample],
    test_set: Sequence[MultimodalSample],
    cfg: TrainConfig,
    encoder_config: EncoderConfig,
    *,
    dtype: np.dtype | str = np.float32,
    workers: int = 1,
) -> RunResult:
    """
    Train one model per modality independently and combine them by majority vote.

    Each modality model gets its own initialization, data-order and dropout streams, so the
    results do not depend on `workers`.

    Returns:
        RunResult: The late-vote model, averaged history, voted and per-modality test accuracy
    """
    dims = input_dims_of(train_set)

    def fit(modality: str) -> tuple[UnimodalModel, Metrics]:
        model = create_model(modality, dims, encoder_config, seed=cfg.seed, dtype=dtype)
        metrics = train(model, train_set, val_set, replace(cfg, approach=Approach(modality)))
        return model, metrics  # type: ignore[return-value]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(MODALITIES))) as pool:
            fitted = list(pool.map(fit, MODALITIES))
    else:
        fitted = [fit(modality) for modality in MODALITIES]

    models = {modality: model for modality, (model, _) in zip(MODALITIES, fitted, strict=True)}
    fused = FusionModel.from_unimodal(list(models.values()))
    metrics = Metrics(history=average_history([m.history for _, m in fitted]))
    predictions = np.empty(0, dtype=np.int64)
    if test_set:
        for modality, model in models.items():
            metrics.unimodal[modality], _ = evaluate(model, test_set, cfg.batch_size)
        predictions, metrics.test_accuracy, _ = evaluate_predictions(
            fused, test_set, cfg.batch_size
        )
        logging.info(
            "a0 test accuracy %.4f (video %.4f, audio %.4f, text %.4f)",
            metrics.test_accuracy,
            *(metrics.unimodal[m] for m in MODALITIES),
        )
    return RunResult(fused, metrics, models, predictions)


def run_approach(  # noqa: PLR0913
    train_set: Sequence[MultimodalSample],
    val_set: Sequence[MultimodalSample],
    test_set: Sequence[MultimodalSample],
    cfg: TrainConfig,
    encoder_config: EncoderConfig,
    *,
    head_hidden_dim: int = 64,
    dtype: np.dtype | str = np.float32,
    workers: int = 1,
    prepare: Callable[[Model], None] | None = None,
) -> RunResult:
    """
    Build, train and test the model of `cfg.approach`.

    Args:
        train_set (Sequence[MultimodalSample]): Training split
        val_set (Sequence[MultimodalSample]): Validation split
        test_set (Sequence[MultimodalSample]): Test split; skipped when empty
        cfg (TrainConfig): Settings
        encoder_config (EncoderConfig): Shape of the modality encoders
        head_hidden_dim (int): Hidden width of fused heads
        dtype (np.dtype | str): Training precision
        workers (int): Parallel single-modality trainings for a0
        prepare (Callable[[Model], None] | None): Called with the fresh model before training,
            e.g. to warm-start encoders

    Returns:
        RunResult: Trained model and metrics
    """
    if cfg.approach is Approach.A0:
        return late_fusion_pipeline(
            train_set, val_set, test_set, cfg, encoder_config, dtype=dtype, workers=workers
        )
    model = create_model(
        cfg.approach,
        input_dims_of(train_set),
        encoder_config,
        head_hidden_dim=head_hidden_dim,
        seed=cfg.seed,
        dtype=dtype,
    )
    if prepare is not None:
        prepare(model)
    metrics = train(model, train_set, val_set, cfg)
    predictions = np.empty(0, dtype=np.int64)
    if test_set:
        predictions, metrics.test_accuracy, _ = evaluate_predictions(
            model, test_set, cfg.batch_size
        )
        logging.info("%s test accuracy %.4f", cfg.approach.value, metrics.test_accuracy)
    return RunResult(model, metrics, test_predictions=predictions)
