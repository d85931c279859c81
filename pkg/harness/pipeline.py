# harness/pipeline.py
"""
SpanExample → model input → predicted span text.

Token positions handed to the model and returned by it are positions in the
full ModelInput, so source token i sits at position i + 1 (after [CLS]).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from harness.metrics import MetricReport, compute_metric
from model.span_decoder import DEFAULT_MAX_SPAN_LEN, DecodeMode, SpanPrediction
from model.span_model import EncoderBatch, SpanExtractionModel
from nlp.reformulation import BucketSpec, LabelSet, SpanExample, TaskKind
from nlp.tokenizer import (
    ModelInput,
    TokenSequence,
    Vocabulary,
    align_char_span,
    encode_pair,
    wordpiece_tokenize,
)

logger = logging.getLogger(__name__)

EVAL_BATCH_SIZE = 64


@dataclass(frozen=True)
class EncodedExample:
    example: SpanExample
    source: TokenSequence
    model_input: ModelInput
    # (a*, b*) as input positions; None when truncation removed the gold span
    gold: Optional[tuple[int, int]]


def encode_texts(
    source_text: str, auxiliary_text: str, vocab: Vocabulary, max_len: int
) -> tuple[TokenSequence, ModelInput]:
    source = wordpiece_tokenize(source_text, vocab)
    auxiliary = wordpiece_tokenize(auxiliary_text, vocab)
    return source, encode_pair(source, auxiliary, max_len, vocab=vocab)


def encode_example(example: SpanExample, vocab: Vocabulary, max_len: int) -> EncodedExample:
    source, model_input = encode_texts(example.source_text, example.auxiliary_text, vocab, max_len)
    first, last = align_char_span(example.gold_char_span, source)
    gold = None
    if last < model_input.source_token_count:
        gold = (first + 1, last + 1)
    return EncodedExample(example, source, model_input, gold)


def encode_examples(
    examples: Sequence[SpanExample],
    vocab: Vocabulary,
    max_len: int,
    *,
    require_gold: bool = True,
) -> list[EncodedExample]:
    """
    Encode a dataset. With `require_gold`, examples whose gold span was cut by
    truncation are dropped with a warning; otherwise they are kept for scoring.
    """
    encoded = [encode_example(ex, vocab, max_len) for ex in examples]
    if not require_gold:
        return encoded
    kept = [e for e in encoded if e.gold is not None]
    dropped = len(encoded) - len(kept)
    if dropped:
        logger.warning(
            "Dropped %d of %d examples whose gold span lies beyond max_len=%d",
            dropped,
            len(encoded),
            max_len,
        )
    return kept


def make_batch(encoded: Sequence[EncodedExample], vocab: Vocabulary) -> EncoderBatch:
    gold = None
    if all(e.gold is not None for e in encoded):
        gold = [e.gold for e in encoded]
    return EncoderBatch.from_inputs(
        [e.model_input for e in encoded], pad_id=vocab.pad_id, gold=gold
    )


def iter_batches(
    encoded: Sequence[EncodedExample],
    batch_size: int,
    vocab: Vocabulary,
    rng: Optional[np.random.Generator] = None,
) -> Iterator[EncoderBatch]:
    """One pass over `encoded`; shuffled when an rng is given. The last batch may be short."""
    order = rng.permutation(len(encoded)) if rng is not None else np.arange(len(encoded))
    for start in range(0, len(order), batch_size):
        yield make_batch([encoded[i] for i in order[start : start + batch_size]], vocab)


def batch_count(n_examples: int, batch_size: int) -> int:
    return -(-n_examples // batch_size)


def span_text(prediction: SpanPrediction, encoded: EncodedExample) -> str:
    """Source text under a predicted span; an inverted span (b < a) reads token a alone."""
    first = prediction.start - 1
    last = max(prediction.end, prediction.start) - 1
    return encoded.source.span_text(first, last)


def predict_spans(
    model: SpanExtractionModel,
    encoded: Sequence[EncodedExample],
    vocab: Vocabulary,
    *,
    mode: DecodeMode | str = DecodeMode.INDEPENDENT,
    max_span_len: int = DEFAULT_MAX_SPAN_LEN,
    batch_size: int = EVAL_BATCH_SIZE,
) -> list[str]:
    texts: list[str] = []
    for start in range(0, len(encoded), batch_size):
        chunk = encoded[start : start + batch_size]
        batch = make_batch(chunk, vocab)
        for pred, enc in zip(model.predict(batch, mode, max_span_len), chunk):
            texts.append(span_text(pred, enc))
    return texts


def gold_answers(encoded: Sequence[EncodedExample]) -> list:
    """Gold label indices for classification, values for regression, span text otherwise."""
    out = []
    for e in encoded:
        ex = e.example
        if ex.task_kind is TaskKind.CLASSIFICATION:
            out.append(ex.gold_label)
        elif ex.task_kind is TaskKind.REGRESSION:
            out.append(ex.gold_value)
        else:
            out.append(ex.gold_text)
    return out


def evaluate(
    model: SpanExtractionModel,
    examples: Sequence[SpanExample],
    vocab: Vocabulary,
    *,
    metric: str,
    max_len: int,
    labels: Optional[LabelSet] = None,
    buckets: Optional[BucketSpec] = None,
    mode: DecodeMode | str = DecodeMode.INDEPENDENT,
    max_span_len: int = DEFAULT_MAX_SPAN_LEN,
) -> MetricReport:
    encoded = encode_examples(examples, vocab, max_len, require_gold=False)
    preds = predict_spans(model, encoded, vocab, mode=mode, max_span_len=max_span_len)
    return compute_metric(preds, gold_answers(encoded), metric, labels=labels, buckets=buckets)


@dataclass(frozen=True)
class SpanView:
    """One prediction with everything the explorer displays."""

    text: str
    start: int
    end: int
    log_score: float
    source_tokens: tuple[str, ...]
    p_start: np.ndarray
    p_end: np.ndarray


def predict_one(
    model: SpanExtractionModel,
    source_text: str,
    auxiliary_text: str,
    vocab: Vocabulary,
    *,
    max_len: int,
    mode: DecodeMode | str = DecodeMode.INDEPENDENT,
    max_span_len: int = DEFAULT_MAX_SPAN_LEN,
) -> SpanView:
    """
    Predict on raw source/auxiliary text; no gold span is needed.
    `start`/`end` and the probability vectors are indexed by source token (0..m-1).
    """
    source, model_input = encode_texts(source_text, auxiliary_text, vocab, max_len)
    batch = EncoderBatch.from_inputs([model_input], pad_id=vocab.pad_id)
    dist = model.distributions(batch)
    pred = model.predict(batch, mode, max_span_len)[0]
    m = model_input.source_token_count
    last = max(pred.end, pred.start) - 1
    return SpanView(
        text=source.span_text(pred.start - 1, last),
        start=pred.start - 1,
        end=pred.end - 1,
        log_score=pred.log_score,
        source_tokens=source.tokens[:m],
        p_start=dist.p_start[0, 1 : m + 1],
        p_end=dist.p_end[0, 1 : m + 1],
    )
