import numpy as np
import pytest

from model.encoder import (
    Encoder,
    EncoderConfig,
    ScaleMode,
    _layer_norm,
    attention_weights,
    embed,
    forward,
    init_params,
    multi_head_attention,
    param_shapes,
    transformer_layer,
)
from model.span_model import EncoderBatch
from nlp.tokenizer import ModelInput


def _model_input(ids, m):
    ids = np.asarray(ids, dtype=np.int64)
    p = len(ids)
    segments = np.zeros(p, dtype=np.int64)
    segments[m + 2 :] = 1
    mask = np.zeros(p, dtype=bool)
    mask[1 : m + 1] = True
    return ModelInput(ids, segments, np.arange(p, dtype=np.int64), mask, m, p - m - 2)


SEVEN = _model_input([2, 5, 6, 7, 3, 8, 9], 3)


def test_config_validation():
    with pytest.raises(ValueError, match="divisible"):
        EncoderConfig(vocab_size=10, hidden_dim=10, num_heads=3)
    with pytest.raises(ValueError):
        EncoderConfig(vocab_size=10, dropout=1.0)
    with pytest.raises(ValueError):
        EncoderConfig(vocab_size=10, dtype="float16")
    with pytest.raises(ValueError, match="Unknown encoder config"):
        EncoderConfig.from_dict({"vocab_size": 10, "width": 3})


def test_attention_scale_modes():
    cfg = EncoderConfig(vocab_size=10, hidden_dim=16, num_heads=4)
    assert cfg.attention_scale == pytest.approx(4.0)
    head = EncoderConfig(vocab_size=10, hidden_dim=16, num_heads=4, scale_mode="head_dim")
    assert head.scale_mode is ScaleMode.HEAD_DIM
    assert head.attention_scale == pytest.approx(2.0)
    assert EncoderConfig.from_dict(head.to_dict()) == head


def test_init_shapes_and_truncation(small_config, rng):
    params = init_params(small_config, rng)
    assert {k: v.shape for k, v in params.items()} == param_shapes(small_config)
    for name, arr in params.items():
        assert arr.dtype == np.float64
        if name.endswith(".gain"):
            assert np.all(arr == 1.0)
        elif name.endswith(".bias"):
            assert np.all(arr == 0.0)
        else:
            assert np.max(np.abs(arr)) <= 2 * small_config.init_std


def test_embed_zero_tables(small_config, rng):
    params = {k: np.zeros_like(v) for k, v in init_params(small_config, rng).items()}
    assert np.all(embed(SEVEN, params) == 0.0)


def test_embed_one_hot_token_table(small_config, rng):
    params = {k: np.zeros_like(v) for k, v in init_params(small_config, rng).items()}
    params["embeddings.token"][:16] = np.eye(16)
    X = embed(SEVEN, params)
    np.testing.assert_array_equal(X, np.eye(16)[SEVEN.ids])


def test_embed_rejects_out_of_range_ids(small_config, rng):
    params = init_params(small_config, rng)
    with pytest.raises(IndexError):
        embed(_model_input([2, 99, 3], 1), params)


def test_forward_shape_and_determinism(small_config, small_model):
    X = forward(SEVEN, small_model.encoder.params, small_config)
    assert X.shape == (7, 16)
    again = forward(SEVEN, small_model.encoder.params, small_config)
    np.testing.assert_array_equal(X, again)
    np.testing.assert_array_equal(small_model.encoder.forward(SEVEN), X)


def test_zero_layers_is_embedding(rng):
    cfg = EncoderConfig(vocab_size=30, num_layers=0, hidden_dim=8, num_heads=2, ffn_dim=8, max_positions=16)
    params = init_params(cfg, rng)
    np.testing.assert_array_equal(forward(SEVEN, params, cfg), embed(SEVEN, params))


def test_attention_rows_sum_to_one(rng):
    cfg = EncoderConfig(vocab_size=10, num_layers=1, hidden_dim=4, num_heads=2, ffn_dim=8)
    params = init_params(cfg, rng)
    X = rng.normal(size=(6, 4))
    weights = attention_weights(X, params, 0, cfg)
    assert weights.shape == (2, 6, 6)
    np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(weights >= 0)


def test_identical_rows_attend_uniformly(rng):
    cfg = EncoderConfig(vocab_size=10, num_layers=1, hidden_dim=4, num_heads=2, ffn_dim=8)
    params = init_params(cfg, rng)
    X = np.tile(rng.normal(size=(1, 4)), (5, 1))
    np.testing.assert_allclose(attention_weights(X, params, 0, cfg), 0.2, atol=1e-12)
    out = multi_head_attention(X, params, 0, cfg)
    np.testing.assert_allclose(out, np.tile(out[:1], (5, 1)), atol=1e-12)


def test_single_position_attention_is_value_projection(rng):
    cfg = EncoderConfig(vocab_size=10, num_layers=1, hidden_dim=4, num_heads=2, ffn_dim=8)
    params = init_params(cfg, rng)
    X = rng.normal(size=(1, 4))
    values = [X @ params["layers.0.attention.value"][j] for j in range(2)]
    expected = np.concatenate(values, axis=-1) @ params["layers.0.attention.output"]
    np.testing.assert_allclose(multi_head_attention(X, params, 0, cfg), expected, atol=1e-12)


def test_layer_norm_rows_have_zero_mean_and_unit_variance(rng):
    d = 16
    for scale in (1e-2, 1.0, 1e3):
        x = rng.normal(loc=3.0, scale=scale, size=(50, d))
        out, _ = _layer_norm(x, np.ones(d), np.zeros(d), 1e-12)
        assert np.all(np.abs(out.mean(axis=-1)) <= 1e-6)
        assert np.all(np.abs(out.var(axis=-1) - 1.0) <= 1e-4)


def test_layer_norm_of_constant_rows_is_bias(rng):
    cfg = EncoderConfig(vocab_size=10, num_layers=1, hidden_dim=4, num_heads=2, ffn_dim=8)
    params = {k: np.zeros_like(v) for k, v in init_params(cfg, rng).items()}
    params["layers.0.attention_norm.gain"][:] = 1.0
    params["layers.0.ffn_norm.gain"][:] = 1.0
    out = transformer_layer(np.full((3, 4), 2.5), params, 0, cfg)
    assert out.shape == (3, 4)
    np.testing.assert_allclose(out, 0.0, atol=1e-9)


def test_padded_keys_get_zero_weight_and_do_not_change_outputs(small_config, small_model):
    short = _model_input([2, 5, 6, 3, 8], 2)
    batch = EncoderBatch.from_inputs([SEVEN, short], pad_id=0)
    params = small_model.encoder.params
    X0 = embed(batch, params)
    weights = attention_weights(X0, params, 0, small_config, batch.attention_mask)
    assert np.all(weights[1, :, :, 5:] == 0.0)
    np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-12)

    batched = forward(batch, params, small_config)
    np.testing.assert_allclose(batched[1, :5], forward(short, params, small_config), atol=1e-12)
    np.testing.assert_allclose(batched[0], forward(SEVEN, params, small_config), atol=1e-12)


def test_backward_requires_cached_forward(small_model):
    with pytest.raises(RuntimeError):
        small_model.encoder.backward(np.zeros((7, 16)))
    small_model.encoder.forward(SEVEN)
    small_model.encoder.backward(np.zeros((7, 16)))
    # the cache is consumed by backward
    with pytest.raises(RuntimeError):
        small_model.encoder.backward(np.zeros((7, 16)))


def test_zero_upstream_gives_zero_gradients(small_model):
    enc = small_model.encoder
    enc.forward(SEVEN)
    grads = enc.backward(np.zeros((7, 16)))
    assert set(grads) == set(enc.params)
    for name, g in grads.items():
        assert g.shape == enc.params[name].shape
        assert not np.any(g), name


def test_duplicated_example_doubles_gradient(small_model, rng):
    enc = small_model.encoder
    upstream = rng.normal(size=(7, 16))
    enc.forward(SEVEN)
    single = enc.backward(upstream)
    batch = EncoderBatch.from_inputs([SEVEN, SEVEN], pad_id=0)
    enc.forward(batch)
    double = enc.backward(np.stack([upstream, upstream]))
    for name in single:
        np.testing.assert_allclose(double[name], 2 * single[name], rtol=1e-10, atol=1e-14)


def test_encoder_rejects_mismatched_params(small_config, rng):
    params = init_params(small_config, rng)
    params.pop("layers.1.ffn.up")
    with pytest.raises(ValueError, match="missing"):
        Encoder(small_config, params)


def test_dropout_is_seeded_and_skipped_at_inference(small_config):
    cfg = EncoderConfig(**{**small_config.to_dict(), "dropout": 0.1})
    enc = Encoder.initialize(cfg, np.random.default_rng(0))
    a = enc.forward(SEVEN, rng=np.random.default_rng(5))
    b = enc.forward(SEVEN, rng=np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, enc.forward_inference(SEVEN))
