# model/encoder.py
"""
Transformer encoder with hand-written reverse-mode gradients.

    X_0     = token_emb[ids] + position_emb[t] + segment_emb[seg]
    H_i     = LayerNorm(MultiHead(X_i) + X_i)
    X_{i+1} = LayerNorm(max(0, H_i U) V + H_i)

MultiHead(X) = [h_1; …; h_k] W_o with h_j = softmax(X W1_j (X W2_j)^T / s) X W3_j,
where s = sqrt(d) (model_dim, the default) or sqrt(d / k) (head_dim).

All arrays are batched as (B, p, d); a single ModelInput is treated as B = 1.
Keys at padded positions are masked to -inf before the softmax.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional

import numpy as np
from scipy.stats import truncnorm

logger = logging.getLogger(__name__)

EncoderParams = dict[str, np.ndarray]


class ScaleMode(str, Enum):
    MODEL_DIM = "model_dim"
    HEAD_DIM = "head_dim"


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    num_layers: int = 2
    hidden_dim: int = 32
    num_heads: int = 2
    ffn_dim: int = 64
    max_positions: int = 128
    num_segments: int = 2
    scale_mode: ScaleMode = ScaleMode.MODEL_DIM
    dropout: float = 0.0
    init_std: float = 0.02
    layer_norm_eps: float = 1e-12
    dtype: str = "float64"

    def __post_init__(self) -> None:
        object.__setattr__(self, "scale_mode", ScaleMode(self.scale_mode))
        if self.num_layers < 0:
            raise ValueError("num_layers must be non-negative")
        if self.hidden_dim < 2 or self.num_heads < 1 or self.ffn_dim < 1:
            raise ValueError("hidden_dim must be ≥ 2, num_heads and ffn_dim ≥ 1")
        if self.hidden_dim % self.num_heads:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} is not divisible by num_heads {self.num_heads}"
            )
        if self.vocab_size < 1 or self.max_positions < 1:
            raise ValueError("vocab_size and max_positions must be positive")
        if self.num_segments != 2:
            raise ValueError("Exactly two segments (source, auxiliary) are supported")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads

    @property
    def attention_scale(self) -> float:
        if self.scale_mode is ScaleMode.MODEL_DIM:
            return math.sqrt(self.hidden_dim)
        return math.sqrt(self.head_dim)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "EncoderConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"Unknown encoder config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["scale_mode"] = self.scale_mode.value
        return out


def param_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    d, k, f = config.hidden_dim, config.num_heads, config.ffn_dim
    shapes: dict[str, tuple[int, ...]] = {
        "embeddings.token": (config.vocab_size, d),
        "embeddings.position": (config.max_positions, d),
        "embeddings.segment": (config.num_segments, d),
    }
    for i in range(config.num_layers):
        pre = f"layers.{i}"
        shapes.update(
            {
                f"{pre}.attention.query": (k, d, d // k),
                f"{pre}.attention.key": (k, d, d // k),
                f"{pre}.attention.value": (k, d, d // k),
                f"{pre}.attention.output": (d, d),
                f"{pre}.attention_norm.gain": (d,),
                f"{pre}.attention_norm.bias": (d,),
                f"{pre}.ffn.up": (d, f),
                f"{pre}.ffn.down": (f, d),
                f"{pre}.ffn_norm.gain": (d,),
                f"{pre}.ffn_norm.bias": (d,),
            }
        )
    return shapes


def truncated_normal(
    shape: tuple[int, ...], std: float, rng: np.random.Generator, dtype: str = "float64"
) -> np.ndarray:
    """Normal(0, std) truncated at two standard deviations."""
    return truncnorm.rvs(-2.0, 2.0, scale=std, size=shape, random_state=rng).astype(dtype)


def init_params(config: EncoderConfig, rng: np.random.Generator) -> EncoderParams:
    params: EncoderParams = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".gain"):
            params[name] = np.ones(shape, dtype=config.dtype)
        elif name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=config.dtype)
        else:
            params[name] = truncated_normal(shape, config.init_std, rng, config.dtype)
    return params


def _scope(params: Mapping[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    pre = f"{prefix}."
    return {name[len(pre) :]: arr for name, arr in params.items() if name.startswith(pre)}


def _layer(params: Mapping[str, np.ndarray], i: int) -> dict[str, np.ndarray]:
    return _scope(params, f"layers.{i}")


# ─────────────────────────────────────────────────────────────── Primitives
def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def _layer_norm(x, gain, bias, eps):
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv_std
    return x_hat * gain + bias, (x_hat, inv_std, gain)


def _layer_norm_backward(dy, cache):
    x_hat, inv_std, gain = cache
    d_gain = np.sum(dy * x_hat, axis=tuple(range(dy.ndim - 1)))
    d_bias = np.sum(dy, axis=tuple(range(dy.ndim - 1)))
    d_hat = dy * gain
    dx = inv_std * (
        d_hat
        - d_hat.mean(axis=-1, keepdims=True)
        - x_hat * np.mean(d_hat * x_hat, axis=-1, keepdims=True)
    )
    return dx, d_gain, d_bias


def _dropout(x, rate, rng):
    if rate <= 0.0 or rng is None:
        return x, None
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * mask, mask


def _flat(x: np.ndarray) -> np.ndarray:
    return x.reshape(-1, x.shape[-1])


def _as_batch(x: np.ndarray, key_mask: Optional[np.ndarray]):
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
        key_mask = None if key_mask is None else key_mask[None]
    return x, key_mask, squeeze


# ─────────────────────────────────────────────────────── Forward components
def embed(inputs, params: Mapping[str, np.ndarray]) -> np.ndarray:
    """
    X_0[t] = token_emb[id_t] + position_emb[t] + segment_emb[seg_t].

    `inputs` is a ModelInput (shape (p,)) or an EncoderBatch (shape (B, p)).
    """
    for ids, table in (
        (inputs.ids, "embeddings.token"),
        (inputs.position_ids, "embeddings.position"),
        (inputs.segment_ids, "embeddings.segment"),
    ):
        rows = params[table].shape[0]
        if ids.size and (ids.min() < 0 or ids.max() >= rows):
            raise IndexError(f"Id out of range for {table} ({rows} rows): {ids.min()}..{ids.max()}")
    return (
        params["embeddings.token"][inputs.ids]
        + params["embeddings.position"][inputs.position_ids]
        + params["embeddings.segment"][inputs.segment_ids]
    )


def _attention_forward(X, lp, scale, key_mask):
    batch, p, d = X.shape
    Xh = X[:, None]
    Q = Xh @ lp["query"]
    K = Xh @ lp["key"]
    V = Xh @ lp["value"]
    scores = (Q @ np.swapaxes(K, -1, -2)) / scale
    if key_mask is not None:
        scores = np.where(key_mask[:, None, None, :], scores, -np.inf)
    weights = _softmax(scores)
    heads = weights @ V
    concat = heads.transpose(0, 2, 1, 3).reshape(batch, p, d)
    out = concat @ lp["output"]
    return out, {"X": X, "Q": Q, "K": K, "V": V, "weights": weights, "concat": concat}


def _attention_backward(d_out, lp, scale, cache):
    X, Q, K, V = cache["X"], cache["Q"], cache["K"], cache["V"]
    weights, concat = cache["weights"], cache["concat"]
    batch, p, d = d_out.shape
    k = lp["query"].shape[0]

    grads = {"output": _flat(concat).T @ _flat(d_out)}
    d_concat = d_out @ lp["output"].T
    d_heads = d_concat.reshape(batch, p, k, d // k).transpose(0, 2, 1, 3)

    d_weights = d_heads @ np.swapaxes(V, -1, -2)
    d_V = np.swapaxes(weights, -1, -2) @ d_heads
    # masked keys have weight 0, so their score gradient is exactly 0
    d_scores = weights * (d_weights - np.sum(d_weights * weights, axis=-1, keepdims=True))
    d_scores /= scale
    d_Q = d_scores @ K
    d_K = np.swapaxes(d_scores, -1, -2) @ Q

    Xt = np.swapaxes(X, -1, -2)[:, None]
    d_X = np.zeros_like(X)
    for name, d_proj in (("query", d_Q), ("key", d_K), ("value", d_V)):
        grads[name] = np.sum(Xt @ d_proj, axis=0)
        d_X += np.sum(d_proj @ np.swapaxes(lp[name], -1, -2), axis=1)
    return d_X, grads


def _layer_forward(X, lp, config: EncoderConfig, key_mask, rng):
    attn, attn_cache = _attention_forward(
        X, _scope(lp, "attention"), config.attention_scale, key_mask
    )
    attn, attn_drop = _dropout(attn, config.dropout, rng)
    H, norm1 = _layer_norm(
        attn + X, lp["attention_norm.gain"], lp["attention_norm.bias"], config.layer_norm_eps
    )
    Z = H @ lp["ffn.up"]
    R = np.maximum(Z, 0.0)
    F = R @ lp["ffn.down"]
    F, ffn_drop = _dropout(F, config.dropout, rng)
    out, norm2 = _layer_norm(F + H, lp["ffn_norm.gain"], lp["ffn_norm.bias"], config.layer_norm_eps)
    cache = {
        "attention": attn_cache,
        "attn_drop": attn_drop,
        "norm1": norm1,
        "H": H,
        "Z": Z,
        "R": R,
        "ffn_drop": ffn_drop,
        "norm2": norm2,
    }
    return out, cache


def _layer_backward(d_out, lp, config: EncoderConfig, cache):
    grads: dict[str, np.ndarray] = {}
    d_sum2, grads["ffn_norm.gain"], grads["ffn_norm.bias"] = _layer_norm_backward(
        d_out, cache["norm2"]
    )
    d_F = d_sum2 if cache["ffn_drop"] is None else d_sum2 * cache["ffn_drop"]
    grads["ffn.down"] = _flat(cache["R"]).T @ _flat(d_F)
    d_Z = (d_F @ lp["ffn.down"].T) * (cache["Z"] > 0)
    grads["ffn.up"] = _flat(cache["H"]).T @ _flat(d_Z)
    d_H = d_sum2 + d_Z @ lp["ffn.up"].T

    d_sum1, grads["attention_norm.gain"], grads["attention_norm.bias"] = _layer_norm_backward(
        d_H, cache["norm1"]
    )
    d_attn = d_sum1 if cache["attn_drop"] is None else d_sum1 * cache["attn_drop"]
    d_X, attn_grads = _attention_backward(
        d_attn, _scope(lp, "attention"), config.attention_scale, cache["attention"]
    )
    for name, g in attn_grads.items():
        grads[f"attention.{name}"] = g
    return d_X + d_sum1, grads


def multi_head_attention(
    X: np.ndarray,
    params: Mapping[str, np.ndarray],
    layer: int,
    config: EncoderConfig,
    key_mask: Optional[np.ndarray] = None,
) -> np.ndarray:
    Xb, mask, squeeze = _as_batch(X, key_mask)
    attention = _scope(_layer(params, layer), "attention")
    out, _ = _attention_forward(Xb, attention, config.attention_scale, mask)
    return out[0] if squeeze else out


def attention_weights(
    X: np.ndarray,
    params: Mapping[str, np.ndarray],
    layer: int,
    config: EncoderConfig,
    key_mask: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Per-head attention weights, shape (k, p, p) or (B, k, p, p)."""
    Xb, mask, squeeze = _as_batch(X, key_mask)
    attention = _scope(_layer(params, layer), "attention")
    _, cache = _attention_forward(Xb, attention, config.attention_scale, mask)
    return cache["weights"][0] if squeeze else cache["weights"]


def transformer_layer(
    X: np.ndarray,
    params: Mapping[str, np.ndarray],
    layer: int,
    config: EncoderConfig,
    key_mask: Optional[np.ndarray] = None,
) -> np.ndarray:
    Xb, mask, squeeze = _as_batch(X, key_mask)
    out, _ = _layer_forward(Xb, _layer(params, layer), config, mask, None)
    return out[0] if squeeze else out


def forward(inputs, params: Mapping[str, np.ndarray], config: EncoderConfig) -> np.ndarray:
    """Pure inference pass: embed, then every layer. No caching, no dropout."""
    X = embed(inputs, params)
    key_mask = getattr(inputs, "attention_mask", None)
    for i in range(config.num_layers):
        X = transformer_layer(X, params, i, config, key_mask)
    return X


# ─────────────────────────────────────────────────────────── Stateful model
@dataclass
class Activation:
    """What a training forward keeps for `backward`."""

    inputs: Any
    embed_drop: Optional[np.ndarray] = None
    layer_caches: list[dict[str, Any]] = field(default_factory=list)


class Encoder:
    """
    Encoder parameters plus the activation cache of the last training forward.

    One instance must not run forward/backward from several threads at once;
    `forward_inference` touches no state.
    """

    def __init__(self, config: EncoderConfig, params: EncoderParams):
        expected = param_shapes(config)
        if set(params) != set(expected):
            raise ValueError(
                f"Parameter names do not match config: missing {sorted(set(expected) - set(params))}, "
                f"unexpected {sorted(set(params) - set(expected))}"
            )
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {params[name].shape}")
        self.config = config
        self.params = params
        self._cache: Optional[Activation] = None

    @classmethod
    def initialize(cls, config: EncoderConfig, rng: np.random.Generator) -> "Encoder":
        return cls(config, init_params(config, rng))

    def forward_inference(self, inputs) -> np.ndarray:
        return forward(inputs, self.params, self.config)

    def forward(self, inputs, *, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Training pass; caches activations for `backward`. Dropout uses `rng`."""
        squeeze = inputs.ids.ndim == 1
        X = embed(inputs, self.params)
        key_mask = getattr(inputs, "attention_mask", None)
        if squeeze:
            X = X[None]
            key_mask = None if key_mask is None else key_mask[None]
        X, embed_drop = _dropout(X, self.config.dropout, rng)

        cache = Activation(inputs=inputs, embed_drop=embed_drop)
        for i in range(self.config.num_layers):
            X, layer_cache = _layer_forward(X, _layer(self.params, i), self.config, key_mask, rng)
            cache.layer_caches.append(layer_cache)
        self._cache = cache
        return X[0] if squeeze else X

    def backward(self, d_output: np.ndarray) -> EncoderParams:
        """Gradients of the scalar loss for every parameter, given dLoss/dX_sf."""
        cache = self._cache
        if cache is None:
            raise RuntimeError("backward() called without a cached forward pass")
        self._cache = None

        inputs = cache.inputs
        squeeze = inputs.ids.ndim == 1
        d_X = d_output[None] if squeeze else d_output
        grads: EncoderParams = {}
        for i in reversed(range(self.config.num_layers)):
            d_X, layer_grads = _layer_backward(
                d_X, _layer(self.params, i), self.config, cache.layer_caches[i]
            )
            for name, g in layer_grads.items():
                grads[f"layers.{i}.{name}"] = g

        if cache.embed_drop is not None:
            d_X = d_X * cache.embed_drop
        ids, positions, segments = inputs.ids, inputs.position_ids, inputs.segment_ids
        if squeeze:
            ids, positions, segments = ids[None], positions[None], segments[None]
        for name, index in (
            ("embeddings.token", ids),
            ("embeddings.position", positions),
            ("embeddings.segment", segments),
        ):
            g = np.zeros_like(self.params[name])
            np.add.at(g, index, d_X)
            grads[name] = g
        return {name: grads[name] for name in self.params}
