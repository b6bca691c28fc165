"""Shared fixtures: a small synthetic task, split, vocabulary, and model."""

from __future__ import annotations

import pytest

from cppf import toy
from cppf.experiment import build_vocabulary
from cppf.model import ModelConfig, init_reference_model
from cppf.tasks import get_task, sample_few_shot
from cppf.tokenizer import Tokenizer


@pytest.fixture(scope="session")
def toy_spec():
    return toy.toy_task()


@pytest.fixture(scope="session")
def toy_pool(toy_spec):
    return toy.generate_toy_dataset(24, seed=7, id_prefix="toy-train")


@pytest.fixture(scope="session")
def toy_split(toy_spec, toy_pool):
    return sample_few_shot(toy_pool, 8, seed=3, task=toy_spec)


@pytest.fixture(scope="session")
def toy_vocab(toy_spec, toy_split):
    paraphrases = [
        toy.rule_synonym_paraphrase(ex.sentence1)
        for ex in toy_split.train_examples()
    ]
    return build_vocabulary(toy_spec, toy_split, paraphrases)


@pytest.fixture(scope="session")
def toy_tokenizer(toy_vocab):
    return Tokenizer(toy_vocab, max_seq_len=64)


@pytest.fixture()
def tiny_model(toy_vocab):
    config = ModelConfig(
        vocab_size=len(toy_vocab),
        hidden_dim=16,
        layers=1,
        heads=2,
        max_seq_len=64,
        init_seed=11,
    )
    return init_reference_model(config)


@pytest.fixture(scope="session")
def sst2():
    return get_task("SST-2")


@pytest.fixture(scope="session")
def mnli():
    return get_task("MNLI")
