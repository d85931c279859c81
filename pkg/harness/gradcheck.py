# harness/gradcheck.py
"""Central finite-difference check of every analytic gradient."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from model.encoder import EncoderConfig
from model.span_model import EncoderBatch, SpanExtractionModel
from nlp.tokenizer import SPECIAL_TOKENS

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-6
DEFAULT_TOLERANCE = 1e-5
# below this absolute difference the two gradients agree up to finite-difference round-off
DEFAULT_ATOL = 1e-7


@dataclass(frozen=True)
class TensorCheck:
    name: str
    relative_error: float
    absolute_error: float
    checked_entries: int
    passed: bool

    def to_dict(self) -> dict:
        return {
            "tensor": self.name,
            "relative_error": self.relative_error,
            "absolute_error": self.absolute_error,
            "checked_entries": self.checked_entries,
            "passed": self.passed,
        }


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / (||a|| + ||n||), 0 when both vanish."""
    denom = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if denom < 1e-12:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def gradients_agree(
    analytic: np.ndarray,
    numeric: np.ndarray,
    *,
    tolerance: float = DEFAULT_TOLERANCE,
    atol: float = DEFAULT_ATOL,
) -> bool:
    """
    Relative agreement, or an absolute one for tensors whose true gradient is
    zero (e.g. the last LayerNorm bias, which shifts every logit equally).
    """
    if np.linalg.norm(analytic - numeric) <= atol:
        return True
    return relative_error(analytic, numeric) <= tolerance


def random_batch(
    config: EncoderConfig,
    rng: np.random.Generator,
    *,
    batch_size: int = 2,
    max_len: int = 10,
) -> EncoderBatch:
    """Rows of random ids laid out as [CLS] source [SEP] auxiliary, p ≤ max_len, with gold spans."""
    pad_id, cls_id, sep_id = 0, SPECIAL_TOKENS.index("[CLS]"), SPECIAL_TOKENS.index("[SEP]")
    max_len = min(max_len, config.max_positions)
    rows, gold = [], []
    for _ in range(batch_size):
        p = int(rng.integers(3, max_len + 1))
        m = int(rng.integers(1, p - 1))
        n = p - m - 2
        ids = np.concatenate(
            [
                [cls_id],
                rng.integers(len(SPECIAL_TOKENS), config.vocab_size, m),
                [sep_id],
                rng.integers(len(SPECIAL_TOKENS), config.vocab_size, n),
            ]
        ).astype(np.int64)
        a = int(rng.integers(1, m + 1))
        b = int(rng.integers(a, m + 1))
        rows.append((ids, m))
        gold.append((a, b))

    width = max(len(ids) for ids, _ in rows)
    batch_ids = np.full((batch_size, width), pad_id, dtype=np.int64)
    segments = np.zeros((batch_size, width), dtype=np.int64)
    attention = np.zeros((batch_size, width), dtype=bool)
    source = np.zeros((batch_size, width), dtype=bool)
    for r, (ids, m) in enumerate(rows):
        batch_ids[r, : len(ids)] = ids
        segments[r, m + 2 : len(ids)] = 1
        attention[r, : len(ids)] = True
        source[r, 1 : m + 1] = True
    return EncoderBatch(
        ids=batch_ids,
        segment_ids=segments,
        position_ids=np.tile(np.arange(width, dtype=np.int64), (batch_size, 1)),
        attention_mask=attention,
        source_mask=source,
        gold_start=np.asarray([g[0] for g in gold], dtype=np.int64),
        gold_end=np.asarray([g[1] for g in gold], dtype=np.int64),
    )


def numeric_gradient(
    model: SpanExtractionModel,
    batch: EncoderBatch,
    name: str,
    *,
    eps: float = DEFAULT_EPS,
    entries: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Central differences for the flat `entries` of one tensor (all entries by default)."""
    param = model.parameters()[name]
    flat = param.reshape(-1)
    if entries is None:
        entries = np.arange(flat.size)
    out = np.zeros(len(entries), dtype=np.float64)
    for k, idx in enumerate(entries):
        original = flat[idx]
        flat[idx] = original + eps
        plus = model.loss(batch)
        flat[idx] = original - eps
        minus = model.loss(batch)
        flat[idx] = original
        out[k] = (plus - minus) / (2.0 * eps)
    return out


def check_gradients(
    model: SpanExtractionModel,
    batch: EncoderBatch,
    *,
    eps: float = DEFAULT_EPS,
    tolerance: float = DEFAULT_TOLERANCE,
    atol: float = DEFAULT_ATOL,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> list[TensorCheck]:
    """
    Compare analytic and numeric gradients tensor by tensor. With
    `max_entries`, each tensor is checked on a random subset of entries.
    """
    _, grads = model.loss_and_grads(batch)
    rng = rng or np.random.default_rng(0)
    checks = []
    for name, param in model.parameters().items():
        entries = None
        if max_entries is not None and param.size > max_entries:
            entries = np.sort(rng.choice(param.size, max_entries, replace=False))
        numeric = numeric_gradient(model, batch, name, eps=eps, entries=entries)
        analytic = grads[name].reshape(-1)
        if entries is not None:
            analytic = analytic[entries]
        err = relative_error(analytic, numeric)
        abs_err = float(np.linalg.norm(analytic - numeric))
        passed = gradients_agree(analytic, numeric, tolerance=tolerance, atol=atol)
        checks.append(TensorCheck(name, err, abs_err, len(numeric), passed))
        if not passed:
            logger.warning(
                "Gradient mismatch for %s: relative error %.3e, absolute %.3e", name, err, abs_err
            )
    return checks


def gradcheck(
    config: EncoderConfig,
    seed: int = 0,
    *,
    batch_size: int = 2,
    max_len: int = 10,
    eps: float = DEFAULT_EPS,
    tolerance: float = DEFAULT_TOLERANCE,
    atol: float = DEFAULT_ATOL,
    max_entries: Optional[int] = None,
) -> list[TensorCheck]:
    """Fresh model and random batch from `seed`, then `check_gradients`."""
    if np.dtype(config.dtype) != np.float64:
        raise ValueError("Gradient checks need float64 parameters")
    if config.dropout:
        raise ValueError("Gradient checks need dropout 0")
    model = SpanExtractionModel.initialize(config, seed)
    rng = np.random.default_rng(seed)
    batch = random_batch(config, rng, batch_size=batch_size, max_len=max_len)
    checks = check_gradients(
        model, batch, eps=eps, tolerance=tolerance, atol=atol, max_entries=max_entries, rng=rng
    )
    failed = [c.name for c in checks if not c.passed]
    logger.info(
        "gradcheck seed %d: %d tensors, %d failed%s",
        seed,
        len(checks),
        len(failed),
        f" ({', '.join(failed)})" if failed else "",
    )
    return checks
