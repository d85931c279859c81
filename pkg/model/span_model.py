# model/span_model.py
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from model.encoder import Encoder, EncoderConfig, EncoderParams, truncated_normal
from model.span_decoder import (
    DEFAULT_MAX_SPAN_LEN,
    DecodeMode,
    SpanDistribution,
    SpanHead,
    SpanPrediction,
    decode,
    score_spans,
    span_loss,
    span_loss_backward,
)
from nlp.tokenizer import ModelInput

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncoderBatch:
    """ModelInputs right-padded to a common length p."""

    ids: np.ndarray
    segment_ids: np.ndarray
    position_ids: np.ndarray
    attention_mask: np.ndarray
    source_mask: np.ndarray
    gold_start: Optional[np.ndarray] = None
    gold_end: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    @classmethod
    def from_inputs(
        cls,
        inputs: Sequence[ModelInput],
        *,
        pad_id: int,
        gold: Optional[Sequence[tuple[int, int]]] = None,
    ) -> "EncoderBatch":
        if not inputs:
            raise ValueError("Cannot build an empty batch")
        batch, p = len(inputs), max(inp.length for inp in inputs)
        ids = np.full((batch, p), pad_id, dtype=np.int64)
        segments = np.zeros((batch, p), dtype=np.int64)
        positions = np.tile(np.arange(p, dtype=np.int64), (batch, 1))
        attention = np.zeros((batch, p), dtype=bool)
        source = np.zeros((batch, p), dtype=bool)
        for row, inp in enumerate(inputs):
            n = inp.length
            ids[row, :n] = inp.ids
            segments[row, :n] = inp.segment_ids
            attention[row, :n] = True
            source[row, :n] = inp.source_mask
        gold_start = gold_end = None
        if gold is not None:
            gold_start = np.asarray([g[0] for g in gold], dtype=np.int64)
            gold_end = np.asarray([g[1] for g in gold], dtype=np.int64)
        return cls(ids, segments, positions, attention, source, gold_start, gold_end)


class SpanExtractionModel:
    """Encoder + span head. The same architecture serves every task."""

    def __init__(self, encoder: Encoder, head: SpanHead):
        if head.d_start.shape[0] != encoder.config.hidden_dim:
            raise ValueError("Span head size does not match the encoder hidden size")
        self.encoder = encoder
        self.head = head

    @property
    def config(self) -> EncoderConfig:
        return self.encoder.config

    @classmethod
    def initialize(cls, config: EncoderConfig, seed: int) -> "SpanExtractionModel":
        rng = np.random.default_rng(seed)
        encoder = Encoder.initialize(config, rng)
        d = config.hidden_dim
        head = SpanHead(
            truncated_normal((d,), config.init_std, rng, config.dtype),
            truncated_normal((d,), config.init_std, rng, config.dtype),
        )
        logger.info(
            "Initialised model: %d layers, d=%d, k=%d, f=%d, %d parameters (seed %d)",
            config.num_layers,
            config.hidden_dim,
            config.num_heads,
            config.ffn_dim,
            sum(a.size for a in encoder.params.values()) + 2 * d,
            seed,
        )
        return cls(encoder, head)

    @classmethod
    def from_params(cls, config: EncoderConfig, params: EncoderParams) -> "SpanExtractionModel":
        head = SpanHead.from_params(params)
        encoder_params = {k: v for k, v in params.items() if not k.startswith("head.")}
        return cls(Encoder(config, encoder_params), head)

    def parameters(self) -> EncoderParams:
        """Live references to every trainable tensor, in a fixed order."""
        return {**self.encoder.params, **self.head.as_params()}

    def params_digest(self) -> str:
        h = hashlib.sha256()
        for name, arr in self.parameters().items():
            h.update(name.encode("utf-8"))
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def clone(self) -> "SpanExtractionModel":
        return SpanExtractionModel.from_params(
            self.config, {k: v.copy() for k, v in self.parameters().items()}
        )

    def __deepcopy__(self, memo):
        return self.clone()

    # ── training ────────────────────────────────────────────────────────
    def loss_and_grads(
        self, batch: EncoderBatch, rng: Optional[np.random.Generator] = None
    ) -> tuple[float, EncoderParams]:
        if batch.gold_start is None or batch.gold_end is None:
            raise ValueError("Batch has no gold spans")
        X_sf = self.encoder.forward(batch, rng=rng)
        dist = score_spans(X_sf, self.head, batch.source_mask)
        gold = (batch.gold_start, batch.gold_end)
        loss = span_loss(dist, gold)
        d_X, head_grads = span_loss_backward(X_sf, self.head, dist, gold)
        grads = self.encoder.backward(d_X)
        grads.update(head_grads)
        return loss, grads

    # ── inference ───────────────────────────────────────────────────────
    def distributions(self, batch: EncoderBatch | ModelInput) -> SpanDistribution:
        X_sf = self.encoder.forward_inference(batch)
        return score_spans(X_sf, self.head, batch.source_mask)

    def loss(self, batch: EncoderBatch) -> float:
        return span_loss(self.distributions(batch), (batch.gold_start, batch.gold_end))

    def predict(
        self,
        batch: EncoderBatch,
        mode: DecodeMode | str = DecodeMode.INDEPENDENT,
        max_span_len: int = DEFAULT_MAX_SPAN_LEN,
    ) -> list[SpanPrediction]:
        dist = self.distributions(batch)
        return [
            decode(
                SpanDistribution(dist.log_start[row], dist.log_end[row], dist.source_mask[row]),
                mode,
                max_span_len,
            )
            for row in range(len(batch))
        ]
