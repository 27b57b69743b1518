import numpy as np
import pytest

from attnhar.errors import CacheError, ConfigError, ShapeError
from attnhar.model.network import (
    AttentionTrace,
    backward,
    cross_entropy,
    forward,
    loss,
    loss_and_gradients,
    lstm_forward,
    lstm_step,
    sensor_attention,
    sensor_attention_step,
    temporal_attention,
    total_variation,
)
from attnhar.model.numerics import grad_check
from attnhar.model.params import (
    LossConfig,
    LstmParams,
    ModelDims,
    ModelParams,
    SensorAttentionParams,
    TemporalAttentionParams,
    Variant,
)
from attnhar.training.optimizer import init_params

D, H, T, C, M, K = 4, 5, 7, 3, 2, 2


def make_params(variant, seed=0, stacked=False, cell_bias=False, m=M, scale=1.0):
    """Initial parameters with jittered biases so no gradient is structurally zero."""
    dims = ModelDims(input_size=D, hidden_size=H, n_classes=C, n_modalities=m, sensor_hidden=K)
    params = init_params(seed, dims, variant, stacked=stacked, cell_bias=cell_bias)
    rng = np.random.default_rng(seed + 100)
    return params.map(lambda w: w * scale + 0.1 * rng.normal(size=w.shape))


def window(seed=0, t=T):
    return np.random.default_rng(seed + 200).normal(size=(t, D))


def with_tensor(params, name, value):
    tensors = dict(params.named_tensors())
    tensors[name] = value
    return ModelParams.from_named(tensors, params.modality_map)


def assert_gradients_match(params, cfg, X, y, tol=1e-4):
    _, grads, _ = loss_and_gradients(params, cfg, X, y)
    analytic = grads.named_tensors()
    for name, tensor in params.named_tensors().items():

        def f(value, name=name):
            p = with_tensor(params, name, value)
            result = forward(p, cfg, X)
            return loss(result.probs, y, result.trace, cfg)

        report = grad_check(f, tensor, analytic[name], eps=1e-5)
        assert report.max_rel_error < tol, f"{name}: {report}"


def zero_lstm(d=D, h=H):
    zeros_x, zeros_h, zeros_b = np.zeros((d, h)), np.zeros((h, h)), np.zeros(h)
    return LstmParams(
        zeros_x, zeros_x, zeros_x, zeros_x, zeros_h, zeros_h, zeros_h, zeros_h,
        zeros_b, zeros_b, zeros_b,
    )


# LSTM


def test_lstm_step_zero_parameters():
    c_prev = np.linspace(-1, 1, H)
    h, c, _ = lstm_step(zero_lstm(), np.ones(D), np.zeros(H), c_prev)
    assert np.allclose(c, 0.5 * c_prev, atol=1e-15)
    h0, c0, _ = lstm_step(zero_lstm(), np.ones(D), np.zeros(H), np.zeros(H))
    assert np.all(h0 == 0) and np.all(c0 == 0)


def test_lstm_step_single_unit_by_hand():
    w = {"W_xi": 0.5, "W_xf": -0.3, "W_xc": 0.8, "W_xo": 0.1,
         "W_hi": 0.2, "W_hf": 0.4, "W_hc": -0.6, "W_ho": 0.7}
    b = {"b_i": 0.05, "b_f": -0.1, "b_o": 0.2}
    weights = {k: np.array([[v]]) for k, v in w.items()}
    p = LstmParams(**weights, **{k: np.array([v]) for k, v in b.items()})
    x, h_prev, c_prev = 1.5, -0.4, 0.3

    def s(z):
        return 1.0 / (1.0 + np.exp(-z))

    i = s(x * 0.5 + h_prev * 0.2 + 0.05)
    f = s(x * -0.3 + h_prev * 0.4 - 0.1)
    o = s(x * 0.1 + h_prev * 0.7 + 0.2)
    c = f * c_prev + i * np.tanh(x * 0.8 + h_prev * -0.6)
    h = o * np.tanh(c)

    h_t, c_t, _ = lstm_step(p, np.array([x]), np.array([h_prev]), np.array([c_prev]))
    assert abs(h_t[0] - h) < 1e-12
    assert abs(c_t[0] - c) < 1e-12


def test_lstm_hidden_states_bounded():
    params = make_params(Variant.PLAIN, scale=5.0)
    h = lstm_forward(params.lstm, window() * 10).h
    assert np.all(np.abs(h) < 1.0)


def test_lstm_forward_single_step_equals_lstm_step():
    params = make_params(Variant.PLAIN)
    X = window(t=1)
    h, c, _ = lstm_step(params.lstm, X[0], np.zeros(H), np.zeros(H))
    states = lstm_forward(params.lstm, X)
    assert np.array_equal(states.h[0], h)
    assert np.array_equal(states.c[0], c)


def test_lstm_forward_prefix_property():
    params = make_params(Variant.PLAIN, seed=1)
    X = window(1)
    full = lstm_forward(params.lstm, X)
    for t in range(1, T + 1):
        prefix = lstm_forward(params.lstm, X[:t])
        assert np.array_equal(prefix.h, full.h[:t])


def test_lstm_forward_is_order_sensitive():
    params = make_params(Variant.PLAIN, seed=2)
    X = window(2)
    reversed_h = lstm_forward(params.lstm, X[::-1]).h[-1]
    assert not np.allclose(lstm_forward(params.lstm, X).h[-1], reversed_h)


def test_lstm_forward_empty_sequence():
    with pytest.raises(ValueError):
        lstm_forward(make_params(Variant.PLAIN).lstm, np.zeros((0, D)))


def test_lstm_forward_wrong_channels():
    with pytest.raises(ShapeError):
        lstm_forward(make_params(Variant.PLAIN).lstm, np.zeros((T, D + 1)))


def test_lstm_batch_equals_single_windows():
    params = make_params(Variant.PLAIN, seed=3)
    batch = np.stack([window(s) for s in range(4)])
    states = lstm_forward(params.lstm, batch)
    for n in range(4):
        assert np.allclose(states.h[n], lstm_forward(params.lstm, batch[n]).h, atol=1e-14)


# temporal attention


def test_temporal_attention_single_step():
    h = np.random.default_rng(0).normal(size=(1, H))
    context, alpha = temporal_attention(h, TemporalAttentionParams(np.eye(H)))
    assert alpha.tolist() == [1.0]
    assert np.array_equal(context, h[0])


def test_temporal_attention_zero_weights_is_mean():
    h = np.random.default_rng(1).normal(size=(T, H))
    context, alpha = temporal_attention(h, TemporalAttentionParams(np.zeros((H, H))))
    assert np.allclose(alpha, 1.0 / T, atol=1e-15)
    assert np.allclose(context, h.mean(axis=0), atol=1e-14)


def test_temporal_attention_scores_against_last_state():
    rng = np.random.default_rng(2)
    h, W = rng.normal(size=(T, H)), rng.normal(size=(H, H))
    _, alpha = temporal_attention(h, TemporalAttentionParams(W))
    scores = np.array([h[-1] @ W @ h[t] for t in range(T)])
    expected = np.exp(scores - scores.max()) / np.exp(scores - scores.max()).sum()
    assert np.allclose(alpha, expected, atol=1e-12)


# sensor attention


def sensor_params(rng, m=M, d=D, k=K, zero=False):
    mapping = tuple(i * m // d for i in range(d))
    shape = {"W_beta": (k, m), "W_x": (k, d), "V_e": (m, k)}
    values = {n: np.zeros(s) if zero else rng.normal(size=s) for n, s in shape.items()}
    return SensorAttentionParams(**values, modality_map=mapping)


def test_sensor_step_zero_parameters_is_uniform():
    p = sensor_params(None, zero=True)
    x = np.arange(1.0, D + 1)
    beta, x_weighted = sensor_attention_step(p, np.full(M, 1.0 / M), x)
    assert np.allclose(beta, 1.0 / M, atol=1e-15)
    assert np.allclose(x_weighted, x / M, atol=1e-15)


def test_sensor_step_single_modality_passthrough():
    p = sensor_params(np.random.default_rng(0), m=1)
    x = np.random.default_rng(1).normal(size=D)
    beta, x_weighted = sensor_attention_step(p, np.ones(1), x)
    assert beta.tolist() == [1.0]
    assert np.array_equal(x_weighted, x)


def test_sensor_step_rejects_non_probability():
    p = sensor_params(np.random.default_rng(0))
    with pytest.raises(ValueError):
        sensor_attention_step(p, np.array([0.7, 0.7]), np.zeros(D))


def test_sensor_attention_two_steps_by_hand():
    rng = np.random.default_rng(4)
    d, m, k = 2, 2, 2
    p = sensor_params(rng, m=m, d=d, k=k)
    X = rng.normal(size=(2, d))

    beta = np.array([0.5, 0.5])
    expected_beta, expected_x = [], []
    for t in range(2):
        energy = p.V_e @ np.tanh(p.W_beta @ beta + p.W_x @ X[t])
        beta = np.exp(energy) / np.exp(energy).sum()
        expected_beta.append(beta)
        expected_x.append(np.array([beta[p.modality_map[c]] * X[t, c] for c in range(d)]))

    states = sensor_attention(p, X)
    assert np.allclose(states.beta, expected_beta, atol=1e-12)
    assert np.allclose(states.x_weighted, expected_x, atol=1e-12)


def test_sensor_attention_is_causal():
    p = sensor_params(np.random.default_rng(5))
    X = window(5)
    changed = X.copy()
    changed[4:] += 3.0
    assert np.array_equal(sensor_attention(p, X).beta[:4], sensor_attention(p, changed).beta[:4])


# forward


@pytest.mark.parametrize("variant", list(Variant))
def test_forward_normalization_over_many_windows(variant):
    params = make_params(variant, seed=6)
    X = np.random.default_rng(6).normal(scale=2.0, size=(1000, T, D))
    probs, trace, _ = forward(params, LossConfig(variant), X)
    assert np.allclose(probs.sum(axis=-1), 1.0, atol=1e-9)
    assert np.allclose(trace.alpha.sum(axis=-1), 1.0, atol=1e-9)
    assert np.allclose(trace.beta.sum(axis=-1), 1.0, atol=1e-9)
    assert trace.alpha.shape == (1000, T)
    assert trace.beta.shape == (1000, T, M)


def test_forward_plain_alpha_is_one_hot_at_last_step():
    params = make_params(Variant.PLAIN)
    _, trace, _ = forward(params, LossConfig(Variant.PLAIN), window())
    assert trace.alpha.tolist() == [0.0] * (T - 1) + [1.0]
    assert np.allclose(trace.beta, 1.0 / M)


def test_forward_is_deterministic():
    params = make_params(Variant.TEMPORAL_SENSOR, seed=7)
    cfg = LossConfig(Variant.TEMPORAL_SENSOR)
    a = forward(params, cfg, window(7)).probs
    b = forward(params, cfg, window(7)).probs
    assert np.array_equal(a, b)


def test_forward_missing_component():
    params = make_params(Variant.PLAIN)
    with pytest.raises(ConfigError):
        forward(params, LossConfig(Variant.TEMPORAL), window())
    with pytest.raises(ConfigError):
        forward(params, LossConfig(Variant.SENSOR), window())


def test_forward_wrong_channel_count():
    params = make_params(Variant.PLAIN)
    with pytest.raises(ShapeError):
        forward(params, LossConfig(Variant.PLAIN), np.zeros((T, D + 2)))


def test_alpha_override_reduces_to_plain():
    plain_cfg, temporal_cfg = LossConfig(Variant.PLAIN), LossConfig(Variant.TEMPORAL)
    one_hot = np.zeros(T)
    one_hot[-1] = 1.0
    for seed in range(100):
        params = make_params(Variant.TEMPORAL, seed=seed)
        X = window(seed)
        overridden = forward(params, temporal_cfg, X, alpha_override=one_hot)
        plain = forward(params, plain_cfg, X)
        assert np.array_equal(overridden.trace.context, plain.trace.context)
        assert np.array_equal(overridden.probs, plain.probs)


def test_single_modality_sensor_reduces_to_plain():
    for seed in range(100):
        params = make_params(Variant.SENSOR, seed=seed, m=1)
        X = window(seed)
        sensor = forward(params, LossConfig(Variant.SENSOR), X)
        plain = forward(params, LossConfig(Variant.PLAIN), X)
        assert np.array_equal(sensor.probs, plain.probs)


def test_single_modality_temporal_sensor_equals_temporal():
    params = make_params(Variant.TEMPORAL_SENSOR, seed=8, m=1)
    X = window(8)
    both = forward(params, LossConfig(Variant.TEMPORAL_SENSOR), X)
    temporal = forward(params, LossConfig(Variant.TEMPORAL), X)
    assert np.array_equal(both.probs, temporal.probs)
    assert np.array_equal(both.trace.alpha, temporal.trace.alpha)


# loss and regularizers


def test_loss_perfect_prediction_is_zero():
    trace = AttentionTrace(alpha=np.full(3, 1 / 3), beta=np.full((3, 2), 0.5), context=np.zeros(2))
    probs = np.array([0.0, 1.0, 0.0])
    assert loss(probs, 1, trace, LossConfig(Variant.TEMPORAL_SENSOR, 0.0, 0.0)) == 0.0


def test_loss_accepts_one_hot_labels():
    trace = AttentionTrace(alpha=np.full(3, 1 / 3), beta=np.full((3, 2), 0.5), context=np.zeros(2))
    probs = np.array([0.2, 0.5, 0.3])
    cfg = LossConfig(Variant.PLAIN)
    assert loss(probs, np.array([0, 0, 1]), trace, cfg) == pytest.approx(-np.log(0.3))


def test_cross_entropy_floor():
    assert cross_entropy(np.array([1.0, 0.0]), 1) == pytest.approx(-np.log(1e-12))


def test_constant_attention_has_no_penalty():
    beta = np.tile([0.3, 0.7], (5, 1))
    trace = AttentionTrace(alpha=np.full(5, 0.2), beta=beta, context=np.zeros(2))
    probs = np.array([0.25, 0.75])
    base = loss(probs, 1, trace, LossConfig(Variant.PLAIN))
    assert loss(probs, 1, trace, LossConfig(Variant.TEMPORAL_SENSOR, 1.0, 1.0)) == base
    assert total_variation(trace.alpha) == 0.0
    assert total_variation(trace.beta, time_axis=-2) == 0.0


def test_total_variation_hand_values():
    assert total_variation(np.array([1.0, 0.0, 1.0, 0.0])) == 3.0
    assert total_variation(np.array([1.0, 0.0, 0.0, 0.0])) == 1.0
    assert total_variation(np.array([0.0, 0.0, 0.0, 1.0])) == 1.0


def test_total_variation_matches_direct_summation():
    rng = np.random.default_rng(9)
    for _ in range(10):
        alpha = rng.dirichlet(np.ones(T))
        beta = rng.dirichlet(np.ones(M), size=T)
        direct_alpha = sum(abs(alpha[t] - alpha[t - 1]) for t in range(1, T))
        direct_beta = sum(
            abs(beta[t, m] - beta[t - 1, m]) for t in range(1, T) for m in range(M)
        )
        assert abs(total_variation(alpha) - direct_alpha) < 1e-12
        assert abs(total_variation(beta, time_axis=-2) - direct_beta) < 1e-12
        assert total_variation(alpha) == pytest.approx(total_variation(alpha[::-1]), abs=1e-15)

        trace = AttentionTrace(alpha=alpha, beta=beta, context=np.zeros(H))
        probs = np.array([0.2, 0.3, 0.5])
        cfg = LossConfig(Variant.TEMPORAL_SENSOR, 0.1, 0.5)
        expected = -np.log(0.5) + 0.1 * direct_alpha + 0.5 * direct_beta
        assert abs(loss(probs, 2, trace, cfg) - expected) < 1e-12


def test_inactive_regularizers_are_ignored():
    beta = np.array([[1.0, 0.0], [0.0, 1.0]])
    trace = AttentionTrace(alpha=np.array([1.0, 0.0]), beta=beta, context=np.zeros(1))
    probs = np.array([0.5, 0.5])
    base = np.log(2)
    assert loss(probs, 0, trace, LossConfig(Variant.PLAIN, 5.0, 5.0)) == pytest.approx(base)
    assert loss(probs, 0, trace, LossConfig(Variant.TEMPORAL, 1.0, 5.0)) == pytest.approx(base + 1)
    assert loss(probs, 0, trace, LossConfig(Variant.SENSOR, 5.0, 1.0)) == pytest.approx(base + 2)


def test_batch_loss_is_mean_of_window_losses():
    params = make_params(Variant.TEMPORAL_SENSOR, seed=10)
    cfg = LossConfig(Variant.TEMPORAL_SENSOR)
    X = np.stack([window(s) for s in range(3)])
    y = np.array([0, 2, 1])
    batch = forward(params, cfg, X)
    singles = []
    for n in range(3):
        r = forward(params, cfg, X[n])
        singles.append(loss(r.probs, y[n], r.trace, cfg))
    assert loss(batch.probs, y, batch.trace, cfg) == pytest.approx(np.mean(singles), abs=1e-12)


# backward


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("variant", list(Variant))
def test_gradients_pass_grad_check(variant, seed):
    params = make_params(variant, seed=seed)
    assert_gradients_match(params, LossConfig(variant, 0.1, 0.5), window(seed), seed % C)


@pytest.mark.parametrize("variant", [Variant.PLAIN, Variant.TEMPORAL_SENSOR])
def test_stacked_and_cell_bias_gradients(variant):
    params = make_params(variant, seed=11, stacked=True, cell_bias=True)
    assert params.lstm2 is not None and params.lstm.b_c is not None
    assert_gradients_match(params, LossConfig(variant, 0.1, 0.5), window(11), 1)


def test_batched_gradients_pass_grad_check():
    params = make_params(Variant.TEMPORAL_SENSOR, seed=12)
    X = np.stack([window(s) for s in range(3)])
    assert_gradients_match(params, LossConfig(Variant.TEMPORAL_SENSOR), X, np.array([2, 0, 1]))


def test_zero_lambdas_match_lambda_free_gradients():
    params = make_params(Variant.TEMPORAL_SENSOR, seed=13)
    X = window(13)
    # an inactive regularizer weight must not leak into the gradients
    _, sensor_a, _ = loss_and_gradients(params, LossConfig(Variant.SENSOR, 0.0, 0.5), X, 0)
    _, sensor_b, _ = loss_and_gradients(params, LossConfig(Variant.SENSOR, 7.0, 0.5), X, 0)
    for name, g in sensor_a.named_tensors().items():
        assert np.array_equal(g, sensor_b.named_tensors()[name])
    assert_gradients_match(params, LossConfig(Variant.TEMPORAL_SENSOR, 0.0, 0.0), X, 0)


def test_unused_components_get_zero_gradients():
    params = make_params(Variant.TEMPORAL_SENSOR, seed=14)
    _, grads, _ = loss_and_gradients(params, LossConfig(Variant.PLAIN), window(14), 1)
    assert np.all(grads.temporal.W_alpha == 0)
    assert np.all(grads.sensor.V_e == 0)


def test_backward_rejects_foreign_cache():
    params = make_params(Variant.TEMPORAL, seed=15)
    other = make_params(Variant.TEMPORAL, seed=16)
    cfg = LossConfig(Variant.TEMPORAL)
    X = window(15)
    cache = forward(other, cfg, X).cache
    with pytest.raises(CacheError):
        backward(params, cfg, X, 0, cache)
    with pytest.raises(CacheError):
        backward(params, cfg, X + 1.0, 0, forward(params, cfg, X).cache)
