"""Mini-batch training loop with validation-based model selection, plus prediction.

Example:
    >>> train_set, val_set, test_set = gen_synthetic(SyntheticSpec(seed=1))
    >>> params, history = train(TrainConfig(max_epochs=5), train_set, val_set)
    >>> evaluate(params, TrainConfig().loss, test_set).mean_f1
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Final, List, Literal, NamedTuple, Optional, Tuple, Union

import numpy as np

from attnhar.data.windowing import WindowDataset
from attnhar.errors import ConfigError, DataError, NumericError, TrainingError
from attnhar.model.network import AttentionTrace, forward, loss_and_gradients
from attnhar.model.network import loss as objective
from attnhar.model.params import LossConfig, ModelDims, ModelParams
from attnhar.reporter.metrics import ConfusionMatrix, EvalReport, report
from attnhar.training.optimizer import OptimizerState, adam_step, clip_global_norm, init_params

logger = logging.getLogger(__name__)

# Second entropy word of the batch-shuffling generator; the first is the run seed.
SHUFFLE_STREAM: Final[int] = 1

PREDICT_BATCH_SIZE: Final[int] = 256

TieBreak = Literal["earlier", "val_loss"]
TIE_BREAKS: Final[Tuple[str, ...]] = ("earlier", "val_loss")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings.

    Attributes:
        hidden_size: LSTM hidden width H.
        learning_rate: Adam step size.
        max_grad_norm: Global gradient norm clip.
        batch_size: Windows per mini-batch.
        max_epochs: Upper bound on epochs.
        patience: Epochs without validation improvement tolerated before stopping.
        seed: Seed of initialization and batch shuffling.
        loss: Variant and continuity weights.
        sensor_hidden: Width k of the sensor attention (defaults to M).
        stacked: Add a second LSTM layer.
        cell_bias: Give the cell candidate a bias.
        tie_break: How epochs with equal validation mean F1 are ranked. ``"earlier"`` keeps
            the first of them; ``"val_loss"`` prefers a strictly lower validation objective,
            so training that has saturated F1 still moves the kept parameters.
    """

    hidden_size: int = 128
    learning_rate: float = 0.05
    max_grad_norm: float = 1.0
    batch_size: int = 64
    max_epochs: int = 30
    patience: int = 5
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    sensor_hidden: Optional[int] = None
    stacked: bool = False
    cell_bias: bool = False
    tie_break: TieBreak = "earlier"

    def __post_init__(self) -> None:
        for name in ("hidden_size", "batch_size", "max_epochs"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"must be a positive integer, got {value}", name)
        if int(self.patience) != self.patience or self.patience < 0:
            raise ConfigError(f"must be a non-negative integer, got {self.patience}", "patience")
        for name in ("learning_rate", "max_grad_norm"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f"must be positive, got {value}", name)
        if self.sensor_hidden is not None and self.sensor_hidden < 1:
            raise ConfigError(f"must be positive, got {self.sensor_hidden}", "sensor_hidden")
        if self.tie_break not in TIE_BREAKS:
            raise ConfigError(
                f"must be one of {', '.join(TIE_BREAKS)}, got '{self.tie_break}'", "tie_break"
            )

    def dims_for(self, dataset: WindowDataset) -> ModelDims:
        return ModelDims(
            input_size=dataset.n_channels,
            hidden_size=self.hidden_size,
            n_classes=dataset.n_classes,
            n_modalities=dataset.n_modalities,
            sensor_hidden=self.sensor_hidden,
            modality_map=dataset.modality_map,
        )


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_mean_f1: float
    val_loss: float = 0.0
    seconds: float = field(default=0.0, compare=False)


@dataclass
class TrainHistory:
    """Per-epoch records; ``best_epoch`` is the epoch whose parameters were returned."""

    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def __len__(self) -> int:
        return len(self.records)

    @property
    def best(self) -> Optional[EpochRecord]:
        return next((r for r in self.records if r.epoch == self.best_epoch), None)


class Prediction(NamedTuple):
    classes: np.ndarray
    probs: np.ndarray
    trace: AttentionTrace


def _check_splits(train_set: WindowDataset, val_set: WindowDataset) -> None:
    if len(train_set) == 0:
        raise DataError("training split has no windows")
    if len(val_set) == 0:
        raise DataError("validation split has no windows")
    train_set.check_compatible(val_set)


def train(
    config: TrainConfig,
    train_set: WindowDataset,
    val_set: WindowDataset,
    progress_callback: Optional[Callable[[EpochRecord], None]] = None,
) -> Tuple[ModelParams, TrainHistory]:
    """Fit a model and return the parameters with the best validation mean F1.

    Each epoch visits the training windows in a seeded random order in mini-batches of
    ``config.batch_size``: mean loss and gradients, global-norm clip, Adam step. Validation
    mean F1 and the validation objective are measured after every epoch; only a strict
    improvement replaces the kept parameters. Ties in mean F1 go to the earlier epoch unless
    ``config.tie_break`` is ``"val_loss"``, which ranks them by the validation objective.
    Training stops after ``max_epochs`` or once more than ``patience`` consecutive epochs
    fail to improve.

    Args:
        config: Optimization settings.
        train_set: Training windows.
        val_set: Validation windows with the same layout.
        progress_callback: Called with each finished epoch's record.

    Raises:
        DataError: If a split is empty or the splits disagree in layout.
        TrainingError: If the loss or a gradient becomes non-finite.
    """
    _check_splits(train_set, val_set)
    cfg = config.loss
    params = init_params(
        config.seed, config.dims_for(train_set), cfg.variant, config.stacked, config.cell_bias
    )
    state = OptimizerState.init(params)
    rng = np.random.default_rng([config.seed, SHUFFLE_STREAM])

    X, y = train_set.X, train_set.y
    n_windows = len(train_set)
    history = TrainHistory()
    best_params, best_f1, best_loss, bad_epochs = params, -np.inf, np.inf, 0
    logger.debug(
        f"Training {cfg.variant.value} (H={config.hidden_size}) on {n_windows} windows, "
        f"validating on {len(val_set)}"
    )

    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(n_windows)
        loss_sum = 0.0
        for batch, begin in enumerate(range(0, n_windows, config.batch_size)):
            idx = order[begin : begin + config.batch_size]
            value, grads, _ = loss_and_gradients(params, cfg, X[idx], y[idx])
            if not np.isfinite(value):
                raise TrainingError(f"loss diverged to {value}", epoch, batch)
            try:
                grads = clip_global_norm(grads, config.max_grad_norm)
            except NumericError as e:
                raise TrainingError(str(e), epoch, batch) from e
            params, state = adam_step(state, params, grads, config.learning_rate)
            loss_sum += value * len(idx)

        prediction = predict(params, cfg, val_set)
        cm = ConfusionMatrix.from_pairs(val_set.y, prediction.classes, val_set.n_classes)
        val_f1 = report(cm).mean_f1
        val_loss = objective(prediction.probs, val_set.y, prediction.trace, cfg)
        record = EpochRecord(
            epoch=epoch,
            train_loss=loss_sum / n_windows,
            val_mean_f1=val_f1,
            val_loss=val_loss,
            seconds=time.perf_counter() - started,
        )
        history.records.append(record)
        logger.info(
            f"Epoch {epoch}: loss {record.train_loss:.4f}, val mean F1 {val_f1:.4f} "
            f"({record.seconds:.1f}s)"
        )
        if progress_callback:
            progress_callback(record)

        improved = val_f1 > best_f1 or (
            config.tie_break == "val_loss" and val_f1 == best_f1 and val_loss < best_loss
        )
        if improved:
            best_params, best_f1, best_loss, bad_epochs = params, val_f1, val_loss, 0
            history.best_epoch = epoch
        else:
            bad_epochs += 1
            if bad_epochs > config.patience:
                history.stopped_early = epoch < config.max_epochs
                logger.info(
                    f"Early stop after epoch {epoch}: no improvement for {bad_epochs} epoch(s), "
                    f"best {best_f1:.4f} at epoch {history.best_epoch}"
                )
                break

    return best_params, history


def predict(
    params: ModelParams,
    cfg: LossConfig,
    windows: Union[WindowDataset, np.ndarray],
    batch_size: int = PREDICT_BATCH_SIZE,
) -> Prediction:
    """Class predictions, probabilities and attention traces of every window, in order.

    Raises:
        DataError: If there are no windows.
    """
    X = windows.X if isinstance(windows, WindowDataset) else np.asarray(windows, dtype=np.float64)
    if X.ndim != 3 or X.shape[0] == 0:
        raise DataError("no windows to predict")
    if batch_size < 1:
        raise ValueError(f"batch_size must be positive, got {batch_size}")

    probs, alphas, betas, contexts = [], [], [], []
    for begin in range(0, X.shape[0], batch_size):
        result = forward(params, cfg, X[begin : begin + batch_size])
        probs.append(result.probs)
        alphas.append(result.trace.alpha)
        betas.append(result.trace.beta)
        contexts.append(result.trace.context)

    all_probs = np.concatenate(probs)
    trace = AttentionTrace(
        alpha=np.concatenate(alphas), beta=np.concatenate(betas), context=np.concatenate(contexts)
    )
    return Prediction(np.argmax(all_probs, axis=-1), all_probs, trace)


def confusion(
    params: ModelParams, cfg: LossConfig, dataset: WindowDataset
) -> Tuple[ConfusionMatrix, Prediction]:
    if len(dataset) == 0:
        raise DataError(f"{dataset.name or 'dataset'} has no windows")
    if dataset.n_channels != params.input_size or dataset.n_classes != params.n_classes:
        raise DataError(
            f"model expects D={params.input_size}, C={params.n_classes}; "
            f"data has D={dataset.n_channels}, C={dataset.n_classes}"
        )
    prediction = predict(params, cfg, dataset)
    cm = ConfusionMatrix.from_pairs(dataset.y, prediction.classes, dataset.n_classes)
    return cm, prediction


def evaluate(params: ModelParams, cfg: LossConfig, dataset: WindowDataset) -> EvalReport:
    """Score the model on a split.

    Raises:
        DataError: If the split is empty or its layout differs from the model's.
    """
    cm, _ = confusion(params, cfg, dataset)
    return report(cm, dataset.class_names)
