"""Parameter initialization, global-norm clipping and Adam."""

from dataclasses import dataclass
from typing import Final, Tuple

import numpy as np

from attnhar.errors import NumericError
from attnhar.model.params import (
    ClassifierHead,
    LstmParams,
    ModelDims,
    ModelParams,
    SensorAttentionParams,
    TemporalAttentionParams,
    Variant,
)

ADAM_BETA1: Final[float] = 0.9
ADAM_BETA2: Final[float] = 0.999
ADAM_EPS: Final[float] = 1e-8


def _uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _init_lstm(
    rng: np.random.Generator, input_size: int, hidden_size: int, cell_bias: bool
) -> LstmParams:
    gates = "ifco"
    w_x = {f"W_x{g}": _uniform(rng, (input_size, hidden_size), input_size) for g in gates}
    w_h = {f"W_h{g}": _uniform(rng, (hidden_size, hidden_size), hidden_size) for g in gates}
    biases = {f"b_{g}": np.zeros(hidden_size) for g in "ifo"}
    return LstmParams(
        **w_x, **w_h, **biases, b_c=np.zeros(hidden_size) if cell_bias else None
    )


def init_params(
    seed: int,
    dims: ModelDims,
    variant: Variant = Variant.TEMPORAL_SENSOR,
    stacked: bool = False,
    cell_bias: bool = False,
) -> ModelParams:
    """Fresh parameters for ``variant``.

    Weights are uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``, biases zero. Only the
    attention components the variant uses are created.

    Args:
        seed: Seed of the generator; equal seeds give bit-identical parameters.
        dims: Model dimensions (D, H, C, M, k and the modality map).
        variant: Which attention mechanisms to create.
        stacked: Add a second LSTM layer on top of the first.
        cell_bias: Give the LSTM cell candidate a bias ``b_c``.
    """
    variant = Variant(variant)
    rng = np.random.default_rng(seed)
    d, h, c, m = dims.input_size, dims.hidden_size, dims.n_classes, dims.n_modalities
    k = dims.sensor_hidden
    assert k is not None and dims.modality_map is not None

    sensor = None
    if variant.has_sensor:
        sensor = SensorAttentionParams(
            W_beta=_uniform(rng, (k, m), m),
            W_x=_uniform(rng, (k, d), d),
            V_e=_uniform(rng, (m, k), k),
            modality_map=dims.modality_map,
        )
    lstm = _init_lstm(rng, d, h, cell_bias)
    lstm2 = _init_lstm(rng, h, h, cell_bias) if stacked else None
    temporal = None
    if variant.has_temporal:
        temporal = TemporalAttentionParams(W_alpha=_uniform(rng, (h, h), h))
    head = ClassifierHead(W_y=_uniform(rng, (h, c), h), b_y=np.zeros(c))
    return ModelParams(
        lstm=lstm,
        head=head,
        temporal=temporal,
        sensor=sensor,
        lstm2=lstm2,
        modality_map=dims.modality_map,
    )


def global_norm(grads: ModelParams) -> float:
    """``sqrt`` of the sum of squares of every gradient entry."""
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.named_tensors().values())))


def check_finite(grads: ModelParams) -> None:
    """Raise NumericError naming the first tensor with a NaN or infinite entry."""
    for name, g in grads.named_tensors().items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in '{name}'")


def clip_global_norm(grads: ModelParams, max_norm: float = 1.0) -> ModelParams:
    """Rescale all gradients by ``max_norm / norm`` when their global norm exceeds ``max_norm``.

    Raises:
        ValueError: If ``max_norm`` is not positive.
        NumericError: If a gradient holds NaN or infinity.
    """
    if not max_norm > 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    check_finite(grads)
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return grads.map(lambda g: g * scale)


@dataclass(frozen=True, eq=False)
class OptimizerState:
    """Adam moment estimates (shaped like the parameters) and the number of steps taken."""

    m: ModelParams
    v: ModelParams
    step: int = 0

    @classmethod
    def init(cls, params: ModelParams) -> "OptimizerState":
        return cls(m=params.zeros_like(), v=params.zeros_like(), step=0)


def adam_step(
    state: OptimizerState,
    params: ModelParams,
    grads: ModelParams,
    lr: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> Tuple[ModelParams, OptimizerState]:
    """One bias-corrected Adam update ``theta -= lr * m_hat / (sqrt(v_hat) + eps)``.

    Raises:
        ValueError: If ``lr`` is not positive.
    """
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    step = state.step + 1
    m = state.m.map(lambda m_, g: beta1 * m_ + (1.0 - beta1) * g, grads)
    v = state.v.map(lambda v_, g: beta2 * v_ + (1.0 - beta2) * g * g, grads)
    m_scale = 1.0 / (1.0 - beta1**step)
    v_scale = 1.0 / (1.0 - beta2**step)
    new_params = params.map(
        lambda p, m_, v_: p - lr * (m_ * m_scale) / (np.sqrt(v_ * v_scale) + eps), m, v
    )
    return new_params, OptimizerState(m=m, v=v, step=step)

