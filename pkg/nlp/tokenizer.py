# nlp/tokenizer.py
from __future__ import annotations

import logging
import pathlib
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from utils.files import atomic_write_text

logger = logging.getLogger(__name__)

CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
UNK_TOKEN = "[UNK]"
PAD_TOKEN = "[PAD]"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN)

MAX_CHARS_PER_WORD = 100

CharRange = tuple[int, int]


class SpanAlignmentError(ValueError):
    """A character range could not be mapped onto token positions."""


class EncodingError(ValueError):
    """A source/auxiliary pair cannot be laid out as a model input."""


# ─────────────────────────────────────────────────────────────── Vocabulary
@dataclass(frozen=True)
class Vocabulary:
    """
    Dense token → id table. The id of a token is its position in `tokens`,
    which is also its line number in the vocabulary file.
    """

    tokens: tuple[str, ...]
    continuation_prefix: str = "##"
    lowercase: bool = True
    entries: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        entries: dict[str, int] = {}
        for idx, tok in enumerate(self.tokens):
            if not tok:
                raise ValueError(f"Empty token at id {idx}")
            if tok in entries:
                raise ValueError(f"Duplicate token {tok!r} at ids {entries[tok]} and {idx}")
            entries[tok] = idx
        missing = [s for s in SPECIAL_TOKENS if s not in entries]
        if missing:
            raise ValueError(f"Vocabulary is missing special tokens: {missing}")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.entries

    @property
    def cls_id(self) -> int:
        return self.entries[CLS_TOKEN]

    @property
    def sep_id(self) -> int:
        return self.entries[SEP_TOKEN]

    @property
    def unk_id(self) -> int:
        return self.entries[UNK_TOKEN]

    @property
    def pad_id(self) -> int:
        return self.entries[PAD_TOKEN]

    @classmethod
    def from_file(
        cls,
        path: str | pathlib.Path,
        *,
        lowercase: bool = True,
        continuation_prefix: str = "##",
    ) -> "Vocabulary":
        text = pathlib.Path(path).read_text(encoding="utf-8")
        tokens = [line.rstrip("\r") for line in text.split("\n")]
        # a trailing newline is not an extra (empty) token
        if tokens and tokens[-1] == "":
            tokens.pop()
        vocab = cls(tuple(tokens), continuation_prefix=continuation_prefix, lowercase=lowercase)
        logger.info("Loaded vocabulary of %d tokens from %s", len(vocab), path)
        return vocab

    def save(self, path: str | pathlib.Path) -> None:
        atomic_write_text(path, "".join(f"{tok}\n" for tok in self.tokens))


# ─────────────────────────────────────────────────────────── Pre-tokenising
def _is_punctuation(char: str) -> bool:
    cp = ord(char)
    # ASCII symbols such as "$" and "^" count as punctuation, as in BERT
    if 33 <= cp <= 47 or 58 <= cp <= 64 or 91 <= cp <= 96 or 123 <= cp <= 126:
        return True
    return unicodedata.category(char).startswith("P")


def _split_words(text: str) -> list[CharRange]:
    """Whitespace-delimited words, with every punctuation character split off."""
    words: list[CharRange] = []
    start: int | None = None
    for i, ch in enumerate(text):
        if ch.isspace():
            if start is not None:
                words.append((start, i))
                start = None
        elif _is_punctuation(ch):
            if start is not None:
                words.append((start, i))
                start = None
            words.append((i, i + 1))
        elif start is None:
            start = i
    if start is not None:
        words.append((start, len(text)))
    return words


def _fold(word: str, lowercase: bool) -> str:
    if not lowercase:
        return word
    # keep a 1:1 character mapping so offsets stay valid
    return "".join(c.lower() if len(c.lower()) == 1 else c for c in word)


# ─────────────────────────────────────────────────────────── Token sequences
@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...] = ()
    ids: tuple[int, ...] = ()
    offsets: tuple[CharRange, ...] = ()
    text: str = ""

    def __post_init__(self) -> None:
        if not (len(self.tokens) == len(self.ids) == len(self.offsets)):
            raise ValueError("tokens, ids and offsets must have equal length")

    def __len__(self) -> int:
        return len(self.tokens)

    def span_text(self, first: int, last: int) -> str:
        """Original text covered by tokens first..last (inclusive)."""
        return self.text[self.offsets[first][0] : self.offsets[last][1]]


def wordpiece_tokenize(text: str, vocab: Vocabulary) -> TokenSequence:
    """
    Greedy longest-match-first subword tokenisation.

    Unknown words (or words longer than MAX_CHARS_PER_WORD) become a single
    [UNK] whose offsets cover the whole word; never raises.
    """
    tokens: list[str] = []
    ids: list[int] = []
    offsets: list[CharRange] = []
    prefix = vocab.continuation_prefix

    for w_start, w_end in _split_words(text):
        word = _fold(text[w_start:w_end], vocab.lowercase)
        pieces: list[tuple[str, int, int]] = []
        if len(word) <= MAX_CHARS_PER_WORD:
            start = 0
            while start < len(word):
                end = len(word)
                found = None
                while start < end:
                    piece = word[start:end]
                    if start > 0:
                        piece = prefix + piece
                    if piece in vocab.entries:
                        found = piece
                        break
                    end -= 1
                if found is None:
                    pieces = []
                    break
                pieces.append((found, start, end))
                start = end

        if not pieces:
            tokens.append(UNK_TOKEN)
            ids.append(vocab.unk_id)
            offsets.append((w_start, w_end))
            continue

        for piece, p_start, p_end in pieces:
            tokens.append(piece)
            ids.append(vocab.entries[piece])
            offsets.append((w_start + p_start, w_start + p_end))

    return TokenSequence(tuple(tokens), tuple(ids), tuple(offsets), text)


def build_vocabulary(
    texts: Iterable[str],
    *,
    max_words: int = 1000,
    lowercase: bool = True,
    continuation_prefix: str = "##",
) -> Vocabulary:
    """
    Frequency-based vocabulary: specials, the `max_words` most frequent whole
    words, then every seen character both as a word-initial piece and as a
    continuation piece, so no seen word ever degrades to [UNK].
    """
    counts: Counter[str] = Counter()
    chars: set[str] = set()
    for text in texts:
        for w_start, w_end in _split_words(text):
            word = _fold(text[w_start:w_end], lowercase)
            counts[word] += 1
            chars.update(word)

    tokens: list[str] = list(SPECIAL_TOKENS)
    seen = set(tokens)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    for word, _ in ranked[:max_words]:
        if word not in seen:
            tokens.append(word)
            seen.add(word)
    for ch in sorted(chars):
        for piece in (ch, continuation_prefix + ch):
            if piece not in seen:
                tokens.append(piece)
                seen.add(piece)

    logger.info(
        "Built vocabulary: %d tokens (%d distinct words seen, %d chars)",
        len(tokens),
        len(counts),
        len(chars),
    )
    return Vocabulary(tuple(tokens), continuation_prefix=continuation_prefix, lowercase=lowercase)


# ────────────────────────────────────────────────────────────── Model input
@dataclass(frozen=True)
class ModelInput:
    """[CLS] source… [SEP] auxiliary…: p = m + n + 2 positions."""

    ids: np.ndarray
    segment_ids: np.ndarray
    position_ids: np.ndarray
    source_mask: np.ndarray
    source_token_count: int
    auxiliary_token_count: int

    @property
    def length(self) -> int:
        return int(self.ids.shape[0])


def encode_pair(
    source: TokenSequence,
    auxiliary: TokenSequence,
    max_len: int,
    *,
    vocab: Vocabulary,
) -> ModelInput:
    """
    Lay out a source/auxiliary pair. When m + n + 2 exceeds max_len the
    auxiliary tail is dropped first, then the source tail; specials are never
    dropped.
    """
    if max_len < 3:
        raise EncodingError(f"max_len must be at least 3, got {max_len}")

    m, n = len(source), len(auxiliary)
    overflow = m + n + 2 - max_len
    if overflow > 0:
        cut = min(overflow, n)
        n -= cut
        m -= overflow - cut
    if m <= 0:
        raise EncodingError("Source text is empty after truncation; no span can be extracted")

    ids = [vocab.cls_id, *source.ids[:m], vocab.sep_id, *auxiliary.ids[:n]]
    p = m + n + 2
    segments = np.zeros(p, dtype=np.int64)
    segments[m + 2 :] = 1
    source_mask = np.zeros(p, dtype=bool)
    source_mask[1 : m + 1] = True

    return ModelInput(
        ids=np.asarray(ids, dtype=np.int64),
        segment_ids=segments,
        position_ids=np.arange(p, dtype=np.int64),
        source_mask=source_mask,
        source_token_count=m,
        auxiliary_token_count=n,
    )


def align_char_span(char_range: CharRange, seq: TokenSequence) -> tuple[int, int]:
    """Minimal inclusive token range (first, last) whose offsets cover char_range."""
    start, end = char_range
    if start >= end:
        raise SpanAlignmentError(f"Empty character range {char_range}")
    hits = [i for i, (o_start, o_end) in enumerate(seq.offsets) if o_start < end and o_end > start]
    if not hits:
        raise SpanAlignmentError(f"Character range {char_range} overlaps no token")
    return hits[0], hits[-1]
