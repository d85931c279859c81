# model/span_decoder.py
"""
Start/end distributions over source tokens, the span loss, and decoding.

    p_start = softmax(X_sf d_start)    p_end = softmax(X_sf d_end)
    L       = -log p_start(a*) - log p_end(b*)

Positions outside the source mask get a -inf logit, so they carry exactly
zero probability and zero gradient. Arrays may be single (p,) / (p, d) or
batched (B, p) / (B, p, d).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

DEFAULT_MAX_SPAN_LEN = 30


class DecodeMode(str, Enum):
    INDEPENDENT = "independent"
    JOINT = "joint"


@dataclass
class SpanHead:
    d_start: np.ndarray
    d_end: np.ndarray

    def __post_init__(self) -> None:
        if self.d_start.shape != self.d_end.shape or self.d_start.ndim != 1:
            raise ValueError("d_start and d_end must be vectors of equal length")
        if not (np.all(np.isfinite(self.d_start)) and np.all(np.isfinite(self.d_end))):
            raise ValueError("Span head vectors must be finite")

    def as_params(self) -> dict[str, np.ndarray]:
        return {"head.d_start": self.d_start, "head.d_end": self.d_end}

    @classmethod
    def from_params(cls, params: Mapping[str, np.ndarray]) -> "SpanHead":
        return cls(params["head.d_start"], params["head.d_end"])


@dataclass(frozen=True)
class SpanDistribution:
    log_start: np.ndarray
    log_end: np.ndarray
    source_mask: np.ndarray

    @property
    def p_start(self) -> np.ndarray:
        return np.exp(self.log_start)

    @property
    def p_end(self) -> np.ndarray:
        return np.exp(self.log_end)


@dataclass(frozen=True)
class SpanPrediction:
    start: int
    end: int
    log_score: float


def _masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    masked = np.where(mask, logits, -np.inf)
    top = np.max(masked, axis=-1, keepdims=True)
    shifted = masked - top
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def score_spans(X_sf: np.ndarray, head: SpanHead, source_mask: np.ndarray) -> SpanDistribution:
    mask = np.asarray(source_mask, dtype=bool)
    if not np.all(mask.any(axis=-1)):
        raise ValueError("Source mask marks no position; nothing to extract from")
    return SpanDistribution(
        log_start=_masked_log_softmax(X_sf @ head.d_start, mask),
        log_end=_masked_log_softmax(X_sf @ head.d_end, mask),
        source_mask=mask,
    )


def _check_gold(dist: SpanDistribution, starts: np.ndarray, ends: np.ndarray) -> None:
    mask = dist.source_mask.reshape(-1, dist.source_mask.shape[-1])
    rows = np.arange(mask.shape[0])
    p = mask.shape[1]
    if np.any((starts < 0) | (starts >= p) | (ends < 0) | (ends >= p)):
        raise ValueError("Gold span index outside the input")
    if not (np.all(mask[rows, starts]) and np.all(mask[rows, ends])):
        raise ValueError("Gold span index falls on a masked (non-source) position")


def _gold_arrays(dist: SpanDistribution, gold) -> tuple[np.ndarray, np.ndarray]:
    starts, ends = (np.atleast_1d(np.asarray(g, dtype=np.int64)) for g in gold)
    _check_gold(dist, starts, ends)
    return starts, ends


def span_loss(dist: SpanDistribution, gold) -> float:
    """
    Cross-entropy of the gold start and end, summed over the batch.

    `gold` is (a*, b*) for a single example or (starts, ends) arrays for a batch.
    """
    starts, ends = _gold_arrays(dist, gold)
    log_start = dist.log_start.reshape(-1, dist.log_start.shape[-1])
    log_end = dist.log_end.reshape(-1, dist.log_end.shape[-1])
    rows = np.arange(log_start.shape[0])
    return float(-np.sum(log_start[rows, starts]) - np.sum(log_end[rows, ends]))


def span_loss_backward(
    X_sf: np.ndarray, head: SpanHead, dist: SpanDistribution, gold
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Exact gradients of `span_loss` w.r.t. X_sf and the head vectors."""
    starts, ends = _gold_arrays(dist, gold)
    grads_logits = []
    for log_p, gold_idx in ((dist.log_start, starts), (dist.log_end, ends)):
        probs = np.exp(log_p).reshape(-1, log_p.shape[-1])
        probs[np.arange(probs.shape[0]), gold_idx] -= 1.0
        grads_logits.append(probs.reshape(log_p.shape))
    d_start_logits, d_end_logits = grads_logits

    d_X = d_start_logits[..., None] * head.d_start + d_end_logits[..., None] * head.d_end
    flat_X = X_sf.reshape(-1, X_sf.shape[-1])
    grads = {
        "head.d_start": flat_X.T @ d_start_logits.reshape(-1),
        "head.d_end": flat_X.T @ d_end_logits.reshape(-1),
    }
    return d_X, grads


def decode(
    dist: SpanDistribution,
    mode: DecodeMode | str = DecodeMode.INDEPENDENT,
    max_span_len: int = DEFAULT_MAX_SPAN_LEN,
) -> SpanPrediction:
    """
    independent: a = argmax p_start, b = argmax p_end (b < a is possible).
    joint: best a ≤ b ≤ a + max_span_len - 1 by log p_start(a) + log p_end(b).
    Ties go to the smallest a, then the smallest b.
    """
    mode = DecodeMode(mode)
    log_start, log_end = dist.log_start, dist.log_end
    if log_start.ndim != 1:
        raise ValueError("decode() takes a single (unbatched) distribution")

    if mode is DecodeMode.INDEPENDENT:
        a = int(np.argmax(log_start))
        b = int(np.argmax(log_end))
        return SpanPrediction(a, b, float(log_start[a] + log_end[b]))

    if max_span_len < 1:
        raise ValueError("max_span_len must be at least 1")
    p = log_start.shape[0]
    offsets = np.arange(p)[None, :] - np.arange(p)[:, None]
    allowed = (offsets >= 0) & (offsets < max_span_len)
    scores = np.where(allowed, log_start[:, None] + log_end[None, :], -np.inf)
    flat = int(np.argmax(scores))
    a, b = divmod(flat, p)
    return SpanPrediction(a, b, float(scores[a, b]))
