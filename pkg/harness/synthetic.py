# harness/synthetic.py
"""
Desk-scale stand-ins for QA, sentiment and similarity data.

    lookup_qa           source "k1 : v1 ; k2 : v2 ; …", auxiliary "what is ki ?", answer vi
    cue_classification  auxiliary sentence with one cue word tied to the label,
                        source "positive or negative?"
    overlap_regression  two sentences; value = shared words / sentence length

Words come from a fixed pool of made-up two-syllable words, so a pool of the
same size is identical across seeds and splits.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Literal, Optional

import numpy as np

from nlp.reformulation import (
    BucketSpec,
    LabelSet,
    SpanExample,
    classify_to_span,
    qa_to_span,
    regress_to_span,
)

logger = logging.getLogger(__name__)

SuiteKind = Literal["lookup_qa", "cue_classification", "overlap_regression"]
SUITE_KINDS: tuple[str, ...] = ("lookup_qa", "cue_classification", "overlap_regression")

CUE_LABELS = LabelSet(("positive", "negative"))
OVERLAP_BUCKETS = BucketSpec(0.0, 1.0, 11)

LOOKUP_PAIRS = 3
CUES_PER_LABEL = 4
SENTENCE_LENGTH = 5

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
_POOL_SEED = 0


@dataclass(frozen=True)
class SuiteInfo:
    metric: str
    labels: Optional[LabelSet] = None
    buckets: Optional[BucketSpec] = None


SUITE_INFO: dict[str, SuiteInfo] = {
    "lookup_qa": SuiteInfo("exact_match"),
    "cue_classification": SuiteInfo("accuracy", labels=CUE_LABELS),
    "overlap_regression": SuiteInfo("pearson_spearman_avg", buckets=OVERLAP_BUCKETS),
}


def word_pool(size: int) -> list[str]:
    syllables = [c + v for c, v in itertools.product(_CONSONANTS, _VOWELS)]
    words = [a + b for a, b in itertools.product(syllables, repeat=2)]
    if not 1 <= size <= len(words):
        raise ValueError(f"Word pool size must be in 1..{len(words)}, got {size}")
    order = np.random.default_rng(_POOL_SEED).permutation(len(words))[:size]
    return [words[i] for i in order]


def _lookup_qa(rng: np.random.Generator, pool: list[str]) -> SpanExample:
    half = len(pool) // 2
    if half < LOOKUP_PAIRS:
        raise ValueError(f"lookup_qa needs a pool of at least {2 * LOOKUP_PAIRS} words")
    keys = [pool[i] for i in rng.choice(half, LOOKUP_PAIRS, replace=False)]
    values = [pool[half + i] for i in rng.choice(len(pool) - half, LOOKUP_PAIRS, replace=False)]
    asked = int(rng.integers(LOOKUP_PAIRS))

    parts, start = [], 0
    answer = (0, 0)
    for i, (k, v) in enumerate(zip(keys, values)):
        chunk = f"{k} : "
        if i:
            chunk = " ; " + chunk
        value_start = start + len(chunk)
        if i == asked:
            answer = (value_start, value_start + len(v))
        parts.append(chunk + v)
        start = value_start + len(v)
    return qa_to_span("".join(parts), f"what is {keys[asked]} ?", answer)


def _cue_words(pool: list[str]) -> tuple[list[str], list[list[str]]]:
    n_cues = CUES_PER_LABEL * len(CUE_LABELS)
    if len(pool) <= n_cues + SENTENCE_LENGTH:
        raise ValueError(f"cue_classification needs a pool of more than {n_cues + SENTENCE_LENGTH} words")
    cues = pool[-n_cues:]
    per_label = [cues[i * CUES_PER_LABEL : (i + 1) * CUES_PER_LABEL] for i in range(len(CUE_LABELS))]
    return pool[:-n_cues], per_label


def _cue_classification(rng: np.random.Generator, pool: list[str]) -> SpanExample:
    fillers, cues = _cue_words(pool)
    label = int(rng.integers(len(CUE_LABELS)))
    words = [fillers[i] for i in rng.choice(len(fillers), SENTENCE_LENGTH, replace=False)]
    cue = cues[label][int(rng.integers(CUES_PER_LABEL))]
    words.insert(int(rng.integers(len(words) + 1)), cue)
    return classify_to_span(None, " ".join(words), CUE_LABELS, label)


def _overlap_regression(rng: np.random.Generator, pool: list[str]) -> SpanExample:
    if len(pool) < 2 * SENTENCE_LENGTH:
        raise ValueError(f"overlap_regression needs a pool of at least {2 * SENTENCE_LENGTH} words")
    first_idx = rng.choice(len(pool), SENTENCE_LENGTH, replace=False)
    shared = int(rng.integers(SENTENCE_LENGTH + 1))
    rest = np.setdiff1d(np.arange(len(pool)), first_idx)
    second_idx = np.concatenate(
        [
            rng.choice(first_idx, shared, replace=False),
            rng.choice(rest, SENTENCE_LENGTH - shared, replace=False),
        ]
    )
    rng.shuffle(second_idx)
    first = " ".join(pool[i] for i in first_idx)
    second = " ".join(pool[i] for i in second_idx)
    return regress_to_span(first, second, OVERLAP_BUCKETS, shared / SENTENCE_LENGTH)


_GENERATORS: dict[str, Callable[[np.random.Generator, list[str]], SpanExample]] = {
    "lookup_qa": _lookup_qa,
    "cue_classification": _cue_classification,
    "overlap_regression": _overlap_regression,
}


def generate_synthetic_suite(
    kind: SuiteKind,
    n: int,
    seed: int,
    vocab_size: int = 64,
    *,
    dev_n: Optional[int] = None,
) -> tuple[list[SpanExample], list[SpanExample]]:
    """
    (train, dev) with n and dev_n (default max(1, n // 4)) examples. No
    source/auxiliary pair appears in both splits or twice in one.
    """
    if kind not in _GENERATORS:
        raise ValueError(f"Unknown synthetic suite {kind!r}; choose from {SUITE_KINDS}")
    if n < 1:
        raise ValueError("n must be ≥ 1")
    dev_n = max(1, n // 4) if dev_n is None else dev_n
    if dev_n < 0:
        raise ValueError("dev_n must be ≥ 0")

    generate = _GENERATORS[kind]
    pool = word_pool(vocab_size)
    rng = np.random.default_rng(seed)
    wanted = n + dev_n
    seen: set[tuple[str, str]] = set()
    examples: list[SpanExample] = []
    attempts = 0
    while len(examples) < wanted:
        attempts += 1
        if attempts > 50 * wanted:
            raise ValueError(
                f"Could not draw {wanted} distinct {kind} examples from a pool of {vocab_size} words"
            )
        ex = generate(rng, pool)
        key = (ex.source_text, ex.auxiliary_text)
        if key in seen:
            continue
        seen.add(key)
        examples.append(ex)

    logger.info("Generated %s: %d train / %d dev (seed %d, pool %d)", kind, n, dev_n, seed, vocab_size)
    return examples[:n], examples[n:]
