from __future__ import annotations

import pathlib

import numpy as np
import pytest

from harness.synthetic import generate_synthetic_suite
from model.encoder import EncoderConfig
from model.span_model import SpanExtractionModel
from nlp.tokenizer import SPECIAL_TOKENS, Vocabulary, build_vocabulary

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> pathlib.Path:
    return FIXTURES


@pytest.fixture
def toy_vocab() -> Vocabulary:
    words = [
        "positive", "or", "negative", "?", "it", "'", "s", "slow", "-", ",", "very",
        "what", "is", "the", "a", "un", "##answer", "##able", "answer", "##s",
    ]
    return Vocabulary(SPECIAL_TOKENS + tuple(words))


@pytest.fixture
def small_config() -> EncoderConfig:
    return EncoderConfig(
        vocab_size=30, num_layers=2, hidden_dim=16, num_heads=2, ffn_dim=32, max_positions=16
    )


@pytest.fixture
def small_model(small_config) -> SpanExtractionModel:
    return SpanExtractionModel.initialize(small_config, seed=0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def lookup_suite():
    return generate_synthetic_suite("lookup_qa", 100, seed=0, dev_n=10)


@pytest.fixture(scope="session")
def lookup_vocab(lookup_suite) -> Vocabulary:
    train, dev = lookup_suite
    return build_vocabulary(t for ex in train + dev for t in (ex.source_text, ex.auxiliary_text))


@pytest.fixture
def tiny_config(lookup_vocab) -> EncoderConfig:
    return EncoderConfig(
        vocab_size=len(lookup_vocab),
        num_layers=1,
        hidden_dim=8,
        num_heads=2,
        ffn_dim=16,
        max_positions=32,
    )
