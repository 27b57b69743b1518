"""Forward and backward passes of the attention LSTM variants.

The four variants share one pipeline::

    X --[sensor attention]--> X' --LSTM (--LSTM)--> h_1..h_T --[temporal attention]--> H
      --softmax(H W_y + b_y)--> probs

Every function accepts a single window ``X`` of shape ``(T, D)`` or a batch of shape
``(..., T, D)``; all leading axes are treated as independent windows. Losses and gradients
of a batch are means over its windows.

Plain and sensor-only variants classify from ``h_T`` (attention fixed one-hot at ``T``);
variants without sensor attention report uniform ``beta`` rows.
"""

from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from attnhar.errors import CacheError, NumericError, ShapeError
from attnhar.model.numerics import (
    activation,
    activation_vjp,
    matmul,
    sigmoid,
    softmax,
    softmax_vjp,
)
from attnhar.model.params import (
    ClassifierHead,
    LossConfig,
    LstmParams,
    ModelParams,
    SensorAttentionParams,
    TemporalAttentionParams,
    Variant,
)

# Probabilities are clamped to this floor inside the log.
PROB_FLOOR = 1e-12

Labels = Union[int, Sequence[int], np.ndarray]


@dataclass(frozen=True, eq=False)
class StepCache:
    """Gate activations of one LSTM step, kept for the backward pass."""

    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    tanh_c: np.ndarray


@dataclass(frozen=True, eq=False)
class LstmStates:
    """Hidden and cell sequences of one LSTM layer plus the gate activations.

    Arrays are ``(..., T, H)``; ``x`` holds the layer inputs ``(..., T, D)``.
    """

    x: np.ndarray
    h: np.ndarray
    c: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    tanh_c: np.ndarray


@dataclass(frozen=True, eq=False)
class SensorStates:
    """Sensor attention sequence: ``beta_prev`` and ``beta`` are ``(..., T, M)``."""

    beta_prev: np.ndarray
    beta: np.ndarray
    u: np.ndarray
    x_weighted: np.ndarray


@dataclass(frozen=True, eq=False)
class AttentionTrace:
    """Attention weights of a forward pass.

    Attributes:
        alpha: ``(..., T)`` temporal weights, each summing to 1.
        beta: ``(..., T, M)`` sensor weights, each row summing to 1.
        context: ``(..., H)`` sequence representation fed to the classifier.
    """

    alpha: np.ndarray
    beta: np.ndarray
    context: np.ndarray

    def window(self, index: int) -> "AttentionTrace":
        """Trace of a single window of a batched pass."""
        return AttentionTrace(
            alpha=self.alpha[index], beta=self.beta[index], context=self.context[index]
        )


@dataclass(frozen=True, eq=False)
class ForwardCache:
    """Everything :func:`backward` needs from the matching :func:`forward` call."""

    params_id: int
    variant: Variant
    X: np.ndarray
    sensor: Optional[SensorStates]
    layers: Tuple[LstmStates, ...]
    alpha: np.ndarray
    alpha_fixed: bool
    query: Optional[np.ndarray]
    context: np.ndarray
    probs: np.ndarray


class ForwardResult(NamedTuple):
    probs: np.ndarray
    trace: AttentionTrace
    cache: ForwardCache


def _check_finite(name: str, array: np.ndarray) -> None:
    if not np.all(np.isfinite(array)):
        raise NumericError(f"{name} contains non-finite values")


def lstm_step(
    p: LstmParams, x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, StepCache]:
    """One LSTM recurrence step.

    ``i, f, o = sigmoid(x W_x* + h W_h* + b_*)``, ``c = f * c_prev + i * tanh(x W_xc + h W_hc
    [+ b_c])`` and ``h = o * tanh(c)``.

    Raises:
        ShapeError: If the state or input widths disagree with ``p``.
    """
    hidden = p.hidden_size
    if np.shape(h_prev)[-1:] != (hidden,) or np.shape(c_prev) != np.shape(h_prev):
        raise ShapeError("LSTM state has the wrong width", np.shape(h_prev), (hidden,))
    z = matmul(x_t, p.W_x_stacked) + matmul(h_prev, p.W_h_stacked) + p.b_stacked
    i = sigmoid(z[..., :hidden])
    f = sigmoid(z[..., hidden : 2 * hidden])
    g = activation("tanh", z[..., 2 * hidden : 3 * hidden])
    o = sigmoid(z[..., 3 * hidden :])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, StepCache(x=x_t, h_prev=h_prev, c_prev=c_prev, i=i, f=f, g=g, o=o, tanh_c=tanh_c)


def lstm_forward(p: LstmParams, X: np.ndarray) -> LstmStates:
    """Run :func:`lstm_step` over ``X`` (``(..., T, D)``) from a zero state.

    Raises:
        ValueError: If the sequence is empty.
        ShapeError: If ``D`` differs from the layer's input size.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim < 2 or X.shape[-2] == 0:
        raise ValueError(f"LSTM input must be a non-empty (T, D) sequence, got {X.shape}")
    if X.shape[-1] != p.input_size:
        raise ShapeError("input channels differ from the LSTM input size", X.shape, p.W_xi.shape)

    state_shape = X.shape[:-2] + (p.hidden_size,)
    h = np.zeros(state_shape)
    c = np.zeros(state_shape)
    steps = []
    hs, cs = [], []
    for t in range(X.shape[-2]):
        h, c, cache = lstm_step(p, X[..., t, :], h, c)
        steps.append(cache)
        hs.append(h)
        cs.append(c)

    def stack(name: str) -> np.ndarray:
        return np.stack([getattr(s, name) for s in steps], axis=-2)

    return LstmStates(
        x=X,
        h=np.stack(hs, axis=-2),
        c=np.stack(cs, axis=-2),
        i=stack("i"),
        f=stack("f"),
        g=stack("g"),
        o=stack("o"),
        tanh_c=stack("tanh_c"),
    )


def _scores(h: np.ndarray, W_alpha: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    query = h[..., -1, :] @ W_alpha
    return np.einsum("...th,...h->...t", h, query), query


def temporal_attention(
    states: Union[LstmStates, np.ndarray], p: TemporalAttentionParams
) -> Tuple[np.ndarray, np.ndarray]:
    """Bilinear temporal attention over all hidden states, queried by ``h_T``.

    Returns:
        ``(H, alpha)`` with ``alpha = softmax_t(h_T W_alpha h_t)`` and ``H = sum_t alpha_t h_t``.
    """
    h = states.h if isinstance(states, LstmStates) else np.asarray(states, dtype=np.float64)
    if h.ndim < 2 or h.shape[-2] == 0:
        raise ValueError(f"temporal attention needs a non-empty state sequence, got {h.shape}")
    if h.shape[-1] != p.W_alpha.shape[0]:
        raise ShapeError("hidden width differs from W_alpha", h.shape, p.W_alpha.shape)
    scores, _ = _scores(h, p.W_alpha)
    alpha = softmax(scores, axis=-1)
    return np.einsum("...t,...th->...h", alpha, h), alpha


def _is_probability(v: np.ndarray, tol: float = 1e-6) -> bool:
    return bool(np.all(v >= 0) and np.all(np.abs(np.sum(v, axis=-1) - 1.0) <= tol))


def _sensor_step(
    p: SensorAttentionParams, beta_prev: np.ndarray, x_t: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    u = np.tanh(beta_prev @ p.W_beta.T + x_t @ p.W_x.T)
    beta = softmax(u @ p.V_e.T, axis=-1)
    return beta, (beta @ p.membership.T) * x_t, u


def sensor_attention_step(
    p: SensorAttentionParams, beta_prev: np.ndarray, x_t: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """One step of the sensor attention recurrence.

    Returns:
        ``(beta_t, x'_t)`` where ``x'_t[d] = beta_t[modality_map[d]] * x_t[d]``.

    Raises:
        ValueError: If ``beta_prev`` is not a probability vector.
    """
    beta_prev = np.asarray(beta_prev, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    if beta_prev.shape[-1:] != (p.n_modalities,) or not _is_probability(beta_prev):
        raise ValueError("beta_prev must be a probability vector over the modalities")
    if x_t.shape[-1:] != (len(p.modality_map),):
        raise ShapeError("input channels differ from the modality map", x_t.shape, p.W_x.shape)
    beta, x_weighted, _ = _sensor_step(p, beta_prev, x_t)
    return beta, x_weighted


def sensor_attention(p: SensorAttentionParams, X: np.ndarray) -> SensorStates:
    """Unroll the sensor attention over ``X`` starting from a uniform ``beta_0``."""
    m = p.n_modalities
    beta = np.full(X.shape[:-2] + (m,), 1.0 / m)
    prevs, betas, us, xs = [], [], [], []
    for t in range(X.shape[-2]):
        prevs.append(beta)
        beta, x_weighted, u = _sensor_step(p, beta, X[..., t, :])
        betas.append(beta)
        us.append(u)
        xs.append(x_weighted)
    return SensorStates(
        beta_prev=np.stack(prevs, axis=-2),
        beta=np.stack(betas, axis=-2),
        u=np.stack(us, axis=-2),
        x_weighted=np.stack(xs, axis=-2),
    )


def forward(
    params: ModelParams,
    cfg: LossConfig,
    X: np.ndarray,
    alpha_override: Optional[np.ndarray] = None,
) -> ForwardResult:
    """Class probabilities and attention trace for one window or a batch.

    Args:
        params: Model parameters; must hold the components ``cfg.variant`` needs.
        cfg: Variant and regularizer configuration.
        X: ``(T, D)`` window or ``(..., T, D)`` batch.
        alpha_override: Temporal weights to use instead of the computed ones (``(T,)`` or
            broadcastable to ``(..., T)``). The classifier then reads ``sum_t alpha_t h_t``.

    Returns:
        ForwardResult ``(probs, trace, cache)``.

    Raises:
        ConfigError: If a component required by the variant is missing.
        ShapeError: If ``X`` does not have ``D`` channels.
        NumericError: If ``X`` contains NaN or infinity.
    """
    variant = cfg.variant
    params.check_variant(variant)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim < 2 or X.shape[-2] == 0:
        raise ValueError(f"forward needs a non-empty (T, D) window, got shape {X.shape}")
    if X.shape[-1] != params.input_size:
        raise ShapeError(
            "window channels differ from the model input size", X.shape[-1:], (params.input_size,)
        )
    _check_finite("input window", X)

    sensor_states = None
    x_in = X
    if variant.has_sensor:
        assert params.sensor is not None
        sensor_states = sensor_attention(params.sensor, X)
        x_in = sensor_states.x_weighted
        beta = sensor_states.beta
    else:
        m = params.n_modalities
        beta = np.full(X.shape[:-1] + (m,), 1.0 / m)

    layers = [lstm_forward(params.lstm, x_in)]
    if params.lstm2 is not None:
        layers.append(lstm_forward(params.lstm2, layers[0].h))
    h = layers[-1].h
    n_steps = h.shape[-2]

    query = None
    if alpha_override is not None:
        alpha = np.broadcast_to(np.asarray(alpha_override, dtype=np.float64), h.shape[:-1]).copy()
        context = np.einsum("...t,...th->...h", alpha, h)
        alpha_fixed = True
    elif variant.has_temporal:
        assert params.temporal is not None
        scores, query = _scores(h, params.temporal.W_alpha)
        alpha = softmax(scores, axis=-1)
        context = np.einsum("...t,...th->...h", alpha, h)
        alpha_fixed = False
    else:
        alpha = np.zeros(h.shape[:-1])
        alpha[..., n_steps - 1] = 1.0
        context = h[..., -1, :].copy()
        alpha_fixed = True

    logits = context @ params.head.W_y + params.head.b_y
    probs = softmax(logits, axis=-1)

    trace = AttentionTrace(alpha=alpha, beta=beta, context=context)
    cache = ForwardCache(
        params_id=id(params),
        variant=variant,
        X=X,
        sensor=sensor_states,
        layers=tuple(layers),
        alpha=alpha,
        alpha_fixed=alpha_fixed,
        query=query,
        context=context,
        probs=probs,
    )
    return ForwardResult(probs, trace, cache)


def class_indices(y: Labels, probs: np.ndarray) -> np.ndarray:
    """Normalize labels (class index, indices, or one-hot rows) to an index array.

    Raises:
        ValueError: If labels are out of range or do not match the batch shape.
    """
    y_arr = np.asarray(y)
    n_classes = probs.shape[-1]
    if y_arr.shape == probs.shape and y_arr.shape[-1] == n_classes and probs.ndim >= 1:
        if not np.all((y_arr == 0) | (y_arr == 1)) or not np.all(y_arr.sum(axis=-1) == 1):
            raise ValueError("one-hot labels must contain exactly one 1 per window")
        return np.argmax(y_arr, axis=-1)
    y_arr = y_arr.astype(np.int64)
    if y_arr.shape != probs.shape[:-1]:
        raise ValueError(f"labels of shape {y_arr.shape} do not match probs {probs.shape}")
    if np.any(y_arr < 0) or np.any(y_arr >= n_classes):
        raise ValueError(f"class labels must lie in [0, {n_classes})")
    return y_arr


def total_variation(seq: np.ndarray, time_axis: int = -1) -> np.ndarray:
    """Unscaled continuity sum ``sum_{t>=2} |s_t - s_{t-1}|`` along ``time_axis``.

    Axes after ``time_axis`` are summed too (L1 norm of each difference vector).
    """
    seq = np.asarray(seq, dtype=np.float64)
    axis = time_axis % seq.ndim
    diffs = np.abs(np.diff(seq, axis=axis))
    return np.sum(diffs, axis=tuple(range(axis, seq.ndim)))


def attention_mass_in_interval(alpha: np.ndarray, start: int, end: int) -> np.ndarray:
    """Temporal attention mass on steps ``start..end`` (inclusive) of each window."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if not 0 <= start <= end < alpha.shape[-1]:
        raise ValueError(f"interval [{start}, {end}] outside [0, {alpha.shape[-1]})")
    return alpha[..., start : end + 1].sum(axis=-1)


def mean_modality_weight(beta: np.ndarray, modality: int) -> np.ndarray:
    """Time-averaged sensor weight of one modality for each window."""
    beta = np.asarray(beta, dtype=np.float64)
    if not 0 <= modality < beta.shape[-1]:
        raise ValueError(f"modality {modality} outside [0, {beta.shape[-1]})")
    return beta[..., modality].mean(axis=-1)


def _total_variation_subgradient(seq: np.ndarray, time_axis: int) -> np.ndarray:
    # sign(0) = 0 at ties
    moved = np.moveaxis(seq, time_axis, -1)
    signs = np.sign(np.diff(moved, axis=-1))
    grad = np.zeros_like(moved)
    grad[..., 1:] += signs
    grad[..., :-1] -= signs
    return np.moveaxis(grad, -1, time_axis)


def cross_entropy(probs: np.ndarray, y: Labels) -> np.ndarray:
    """Per-window ``-log(max(probs[y], 1e-12))``."""
    idx = class_indices(y, probs)
    picked = np.take_along_axis(probs, idx[..., None], axis=-1)[..., 0]
    return -np.log(np.maximum(picked, PROB_FLOOR))


def loss(probs: np.ndarray, y: Labels, trace: AttentionTrace, cfg: LossConfig) -> float:
    """Cross-entropy plus the continuity penalties of the active attentions.

    ``lambda1 * sum_{t>=2} |alpha_t - alpha_{t-1}|`` is added for temporal variants and
    ``lambda2 * sum_{t>=2} ||beta_t - beta_{t-1}||_1`` for sensor variants. Batches return the
    mean over windows.
    """
    per_window = cross_entropy(probs, y)
    if cfg.variant.has_temporal:
        per_window = per_window + cfg.lambda1 * total_variation(trace.alpha, time_axis=-1)
    if cfg.variant.has_sensor:
        per_window = per_window + cfg.lambda2 * total_variation(trace.beta, time_axis=-2)
    return float(np.mean(per_window))


def _flat(a: np.ndarray) -> np.ndarray:
    return a.reshape(-1, a.shape[-1])


def _lstm_backward(
    p: LstmParams, states: LstmStates, d_h: np.ndarray
) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """BPTT through one layer given upstream gradients on every hidden state."""
    hidden = p.hidden_size
    n_steps = states.h.shape[-2]
    d_pre = np.zeros(states.h.shape[:-1] + (4 * hidden,))
    dh_next = np.zeros(states.h.shape[:-2] + (hidden,))
    dc_next = np.zeros_like(dh_next)
    W_h_t = p.W_h_stacked.T

    for t in reversed(range(n_steps)):
        i, f = states.i[..., t, :], states.f[..., t, :]
        g, o = states.g[..., t, :], states.o[..., t, :]
        tanh_c = states.tanh_c[..., t, :]
        c_prev = states.c[..., t - 1, :] if t > 0 else np.zeros_like(dh_next)

        dh = d_h[..., t, :] + dh_next
        dc = dc_next + activation_vjp("tanh", tanh_c, dh * o)
        d_pre[..., t, :hidden] = activation_vjp("sigmoid", i, dc * g)
        d_pre[..., t, hidden : 2 * hidden] = activation_vjp("sigmoid", f, dc * c_prev)
        d_pre[..., t, 2 * hidden : 3 * hidden] = activation_vjp("tanh", g, dc * i)
        d_pre[..., t, 3 * hidden :] = activation_vjp("sigmoid", o, dh * tanh_c)
        dc_next = dc * f
        dh_next = d_pre[..., t, :] @ W_h_t

    h_prev = np.concatenate([np.zeros_like(states.h[..., :1, :]), states.h[..., :-1, :]], axis=-2)
    flat_pre = _flat(d_pre)
    d_wx = _flat(states.x).T @ flat_pre
    d_wh = _flat(h_prev).T @ flat_pre
    d_b = flat_pre.sum(axis=0)

    grads: Dict[str, np.ndarray] = {}
    for gate, k in (("i", 0), ("f", 1), ("c", 2), ("o", 3)):
        cols = slice(k * hidden, (k + 1) * hidden)
        grads[f"W_x{gate}"] = d_wx[:, cols]
        grads[f"W_h{gate}"] = d_wh[:, cols]
        if gate != "c" or p.b_c is not None:
            grads[f"b_{gate}"] = d_b[cols]
    return grads, d_pre @ p.W_x_stacked.T


def _sensor_backward(
    p: SensorAttentionParams,
    X: np.ndarray,
    states: SensorStates,
    d_x_weighted: np.ndarray,
    d_beta_ext: np.ndarray,
) -> Dict[str, np.ndarray]:
    """Reverse the sensor recurrence; ``beta_t`` feeds ``beta_{t+1}`` through ``W_beta``."""
    d_w_beta = np.zeros_like(p.W_beta)
    d_w_x = np.zeros_like(p.W_x)
    d_v_e = np.zeros_like(p.V_e)
    d_carry = np.zeros(X.shape[:-2] + (p.n_modalities,))

    for t in reversed(range(X.shape[-2])):
        x_t = X[..., t, :]
        u = states.u[..., t, :]
        d_beta = d_beta_ext[..., t, :] + d_carry + (d_x_weighted[..., t, :] * x_t) @ p.membership
        d_energy = softmax_vjp(states.beta[..., t, :], d_beta)
        d_v_e += _flat(d_energy).T @ _flat(u)
        d_a = activation_vjp("tanh", u, d_energy @ p.V_e)
        d_w_beta += _flat(d_a).T @ _flat(states.beta_prev[..., t, :])
        d_w_x += _flat(d_a).T @ _flat(x_t)
        d_carry = d_a @ p.W_beta

    return {"W_beta": d_w_beta, "W_x": d_w_x, "V_e": d_v_e}


def backward(
    params: ModelParams,
    cfg: LossConfig,
    X: np.ndarray,
    y: Labels,
    cache: ForwardCache,
) -> ModelParams:
    """Exact reverse-mode gradients of :func:`loss` with respect to every learnable tensor.

    Returns:
        A ModelParams-shaped container of gradients (mean over the batch).

    Raises:
        CacheError: If ``cache`` was produced by another (params, X) pair.
    """
    X = np.asarray(X, dtype=np.float64)
    if cache.params_id != id(params) or cache.variant != cfg.variant or cache.X.shape != X.shape:
        raise CacheError("forward cache does not belong to these parameters and inputs")
    if not np.array_equal(cache.X, X):
        raise CacheError("forward cache was computed on a different window")

    variant = cfg.variant
    probs = cache.probs
    idx = class_indices(y, probs)
    n_windows = max(int(np.prod(probs.shape[:-1])), 1)
    scale = 1.0 / n_windows

    # Cross-entropy through the softmax; clamped probabilities pass no gradient.
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, idx[..., None], 1.0, axis=-1)
    picked = np.take_along_axis(probs, idx[..., None], axis=-1)
    d_logits = (probs - onehot) * (picked >= PROB_FLOOR) * scale

    head = params.head
    d_head = {"W_y": _flat(cache.context).T @ _flat(d_logits), "b_y": _flat(d_logits).sum(axis=0)}
    d_context = d_logits @ head.W_y.T

    h = cache.layers[-1].h
    alpha = cache.alpha
    d_h = alpha[..., :, None] * d_context[..., None, :]
    d_temporal = None
    if not cache.alpha_fixed:
        assert params.temporal is not None and cache.query is not None
        W_alpha = params.temporal.W_alpha
        d_alpha = np.einsum("...h,...th->...t", d_context, h)
        if variant.has_temporal and cfg.lambda1 > 0:
            d_alpha = d_alpha + cfg.lambda1 * scale * _total_variation_subgradient(alpha, -1)
        d_scores = softmax_vjp(alpha, d_alpha)
        d_query = np.einsum("...t,...th->...h", d_scores, h)
        d_h = d_h + d_scores[..., :, None] * cache.query[..., None, :]
        d_h[..., -1, :] += d_query @ W_alpha.T
        d_temporal = {"W_alpha": _flat(h[..., -1, :]).T @ _flat(d_query)}
    elif params.temporal is not None:
        d_temporal = {"W_alpha": np.zeros_like(params.temporal.W_alpha)}

    layer_grads = []
    d_layer = d_h
    layer_params = [params.lstm] + ([params.lstm2] if params.lstm2 is not None else [])
    for p_layer, states in reversed(list(zip(layer_params, cache.layers))):
        grads, d_layer = _lstm_backward(p_layer, states, d_layer)
        layer_grads.append(grads)
    layer_grads.reverse()

    d_sensor = None
    if cache.sensor is not None:
        assert params.sensor is not None
        d_beta_ext = np.zeros_like(cache.sensor.beta)
        if cfg.lambda2 > 0:
            d_beta_ext = cfg.lambda2 * scale * _total_variation_subgradient(cache.sensor.beta, -2)
        d_sensor = _sensor_backward(params.sensor, X, cache.sensor, d_layer, d_beta_ext)
    elif params.sensor is not None:
        d_sensor = {
            "W_beta": np.zeros_like(params.sensor.W_beta),
            "W_x": np.zeros_like(params.sensor.W_x),
            "V_e": np.zeros_like(params.sensor.V_e),
        }

    return ModelParams(
        lstm=LstmParams(**layer_grads[0]),
        lstm2=LstmParams(**layer_grads[1]) if params.lstm2 is not None else None,
        temporal=TemporalAttentionParams(**d_temporal) if d_temporal is not None else None,
        sensor=(
            SensorAttentionParams(**d_sensor, modality_map=params.sensor.modality_map)
            if d_sensor is not None and params.sensor is not None
            else None
        ),
        head=ClassifierHead(**d_head),
        modality_map=params.modality_map,
    )


def loss_and_gradients(
    params: ModelParams, cfg: LossConfig, X: np.ndarray, y: Labels
) -> Tuple[float, ModelParams, ForwardResult]:
    """Forward, loss and backward in one call (mean over the windows of ``X``)."""
    result = forward(params, cfg, X)
    value = loss(result.probs, y, result.trace, cfg)
    grads = backward(params, cfg, X, y, result.cache)
    return value, grads, result
