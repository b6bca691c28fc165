"""Augmenter adapters that turn labeled examples into augmentation records.

Each adapter produces one :class:`AugmentationRecord` per example with a
method tag matching the generating operation. ``precompute_augmentations``
materializes the whole training split up front so the training loop stays
offline-deterministic and makes exactly one augmentation call per example.
"""

from __future__ import annotations

import hashlib
import logging
import random
from typing import Iterable, Protocol, Sequence

from cppf import backtranslation, eda
from cppf.clients import AugmentationRecord, LLMClient, TranslationClient
from cppf.paraphrase import (
    DemoPair,
    build_paraphrase_prompt,
    paraphrase,
    select_demo_pairs,
)
from cppf.tasks import LabeledExample

logger = logging.getLogger(__name__)

EDA_METHODS = ("eda-sr", "eda-ri", "eda-rs", "eda-rd", "eda-all")


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class Augmenter(Protocol):
    method: str

    def augment(self, example: LabeledExample, rng: random.Random) -> AugmentationRecord: ...


class ParaphraseAugmenter:
    """Few-shot paraphrasing through an LLM client (live or replay).

    Demonstration pairs are the fixture pairs sharing the example's task
    and label, excluding the example itself, in fixture order; the prompt
    construction is therefore deterministic, which is what lets replay
    fixtures be pre-generated.
    """

    method = "paraphrase-llm"

    def __init__(
        self,
        client: LLMClient,
        demo_pairs: Sequence[DemoPair],
        task_name: str,
        demo_template_id: int = 1,
        instruction_template_id: int | None = None,
    ):
        self.client = client
        self.demo_pairs = list(demo_pairs)
        self.task_name = task_name
        self.demo_template_id = demo_template_id
        self.instruction_template_id = instruction_template_id

    def build_prompt(self, example: LabeledExample) -> str:
        pairs = select_demo_pairs(
            self.demo_pairs, self.task_name, example.label, example.sentence1
        )
        return build_paraphrase_prompt(
            pairs,
            example.sentence1,
            self.demo_template_id,
            self.instruction_template_id,
        )

    def augment(self, example: LabeledExample, rng: random.Random) -> AugmentationRecord:
        prompt = self.build_prompt(example)
        text = paraphrase(self.client, prompt)
        if text == example.sentence1:
            logger.warning(
                "paraphrase of %s is identical to the original", example.id
            )
        return AugmentationRecord(
            original_id=example.id,
            original_text=example.sentence1,
            augmented_text=text,
            method=self.method,
            meta={
                "endpoint": getattr(self.client, "endpoint", "unknown"),
                "demo_template": self.demo_template_id,
                "instruction_template": self.instruction_template_id,
                "prompt_digest": text_digest(prompt),
            },
        )


class EdaAugmenter:
    def __init__(
        self,
        method: str,
        lexicon: eda.Lexicon,
        params: eda.EdaParams | None = None,
    ):
        if method not in EDA_METHODS:
            raise ValueError(f"unknown EDA method {method!r}; use one of {EDA_METHODS}")
        self.method = method
        self.lexicon = lexicon
        self.params = params or eda.EdaParams()

    def _apply(self, text: str, rng: random.Random) -> str:
        p = self.params
        if self.method == "eda-sr":
            return eda.eda_synonym_replacement(text, p.n_sr, self.lexicon, rng)
        if self.method == "eda-ri":
            return eda.eda_random_insertion(text, p.n_ri, self.lexicon, rng)
        if self.method == "eda-rs":
            return eda.eda_random_swap(text, p.n_rs, rng)
        if self.method == "eda-rd":
            return eda.eda_random_deletion(text, p.p_rd, rng)
        return eda.eda_all(text, p, self.lexicon, rng)

    def augment(self, example: LabeledExample, rng: random.Random) -> AugmentationRecord:
        text = self._apply(example.sentence1, rng)
        return AugmentationRecord(
            original_id=example.id,
            original_text=example.sentence1,
            augmented_text=text,
            method=self.method,
            meta={"params": vars(self.params)},
        )


class BackTranslationAugmenter:
    def __init__(self, client: TranslationClient, pivot: str):
        self.method = backtranslation.method_tag(pivot)
        self.client = client
        self.pivot = pivot

    def augment(self, example: LabeledExample, rng: random.Random) -> AugmentationRecord:
        text = backtranslation.back_translate(self.client, example.sentence1, self.pivot)
        return AugmentationRecord(
            original_id=example.id,
            original_text=example.sentence1,
            augmented_text=text,
            method=self.method,
            meta={"endpoint": getattr(self.client, "endpoint", "unknown")},
        )


def precompute_augmentations(
    examples: Iterable[LabeledExample],
    augmenter: Augmenter,
    seed: int = 0,
) -> dict[str, AugmentationRecord]:
    """Augment every example once, emitting records in input order."""
    rng = random.Random(seed)
    records: dict[str, AugmentationRecord] = {}
    for example in examples:
        records[example.id] = augmenter.augment(example, rng)
    return records
