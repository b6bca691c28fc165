"""Synthetic two-class sentiment-like task for desk-scale runs.

The two classes draw their content words (nouns and adjectives) from
disjoint lexicons, so the task is separable by construction; only
function words are shared. A deterministic synonym table doubles as a
rule-based paraphraser, as the demonstration-pair source, and as an EDA
lexicon, which lets the full paraphrase-augmented pipeline run offline:
``make_paraphrase_fixtures`` pre-computes the exact replay completions
that the LLM-backed augmenter will request.
"""

from __future__ import annotations

import random
from typing import Iterable, Sequence

from cppf.augmenters import ParaphraseAugmenter
from cppf.clients import prompt_digest
from cppf.paraphrase import DemoPair, build_paraphrase_prompt, select_demo_pairs
from cppf.tasks import LabeledExample, TaskSpec, register_task

TOY_TASK_NAME = "toy-sentiment"

# Content lexicons; each word maps to its in-class synonym partner.
_POS_ADJECTIVES = {
    "wonderful": "marvelous",
    "delightful": "charming",
    "superb": "excellent",
    "uplifting": "heartwarming",
    "brilliant": "dazzling",
    "graceful": "elegant",
    "thrilling": "exciting",
    "funny": "hilarious",
}
_NEG_ADJECTIVES = {
    "dreadful": "horrid",
    "tedious": "boring",
    "clumsy": "awkward",
    "dismal": "bleak",
    "painful": "agonizing",
    "shallow": "hollow",
    "messy": "sloppy",
    "dull": "lifeless",
}
_POS_NOUNS = {
    "masterpiece": "classic",
    "gem": "treasure",
    "delight": "joy",
    "triumph": "victory",
}
_NEG_NOUNS = {
    "flop": "failure",
    "bore": "drag",
    "mess": "shambles",
    "letdown": "disappointment",
}

SYNONYMS: dict[str, str] = {
    **_POS_ADJECTIVES,
    **_NEG_ADJECTIVES,
    **_POS_NOUNS,
    **_NEG_NOUNS,
}

_PATTERNS = (
    "the {noun} was {adj1} and {adj2}",
    "a truly {adj1} {noun}",
    "this {noun} felt {adj1} , almost {adj2}",
)


def toy_task() -> TaskSpec:
    """Register (idempotently) and return the toy task."""
    spec = TaskSpec(
        name=TOY_TASK_NAME,
        template="<S1> It was [MASK] .",
        label_space=("positive", "negative"),
        verbalizers={"positive": "great", "negative": "terrible"},
    )
    return register_task(spec, overwrite=True)


VOCABULARY_CHOICES = ("base", "synonym", "mixed")


def _make_sentence(rng: random.Random, label: str, vocabulary: str = "base") -> str:
    adjectives = _POS_ADJECTIVES if label == "positive" else _NEG_ADJECTIVES
    nouns = _POS_NOUNS if label == "positive" else _NEG_NOUNS
    use_synonyms = vocabulary == "synonym" or (
        vocabulary == "mixed" and rng.random() < 0.5
    )
    adj_pool = sorted(adjectives.values() if use_synonyms else adjectives)
    noun_pool = sorted(nouns.values() if use_synonyms else nouns)
    pattern = rng.choice(_PATTERNS)
    adj1, adj2 = rng.sample(adj_pool, 2)
    noun = rng.choice(noun_pool)
    return pattern.format(noun=noun, adj1=adj1, adj2=adj2)


def generate_toy_dataset(
    n_per_class: int,
    seed: int,
    id_prefix: str = "toy",
    vocabulary: str = "base",
) -> list[LabeledExample]:
    """Sample labeled sentences, alternating classes, deterministic in seed.

    ``vocabulary`` picks the content-word pool: the base lexicon (what the
    training corpus uses), its synonym partners (reachable in training only
    through paraphrase views), or a per-sentence mix of the two. A test set
    drawn with ``mixed`` therefore rewards methods that actually learn from
    the paraphrase-side vocabulary.
    """
    if vocabulary not in VOCABULARY_CHOICES:
        raise ValueError(f"vocabulary must be one of {VOCABULARY_CHOICES}")
    rng = random.Random(seed)
    examples: list[LabeledExample] = []
    for index in range(n_per_class):
        for label in ("positive", "negative"):
            examples.append(
                LabeledExample(
                    id=f"{id_prefix}-{label[:3]}-{index:04d}",
                    sentence1=_make_sentence(rng, label, vocabulary),
                    label=label,
                )
            )
    return examples


def rule_synonym_paraphrase(text: str) -> str:
    """Replace every known content word with its synonym partner."""
    return " ".join(SYNONYMS.get(token, token) for token in text.split())


def make_demo_pairs(examples: Iterable[LabeledExample]) -> list[DemoPair]:
    """Demonstration pairs: each example with its rule-based paraphrase."""
    return [
        DemoPair(
            original=ex.sentence1,
            paraphrase=rule_synonym_paraphrase(ex.sentence1),
            task_name=TOY_TASK_NAME,
            label=ex.label,
        )
        for ex in examples
    ]


def make_paraphrase_fixtures(
    examples: Sequence[LabeledExample],
    demo_pairs: Sequence[DemoPair],
    demo_template_id: int = 1,
    instruction_template_id: int | None = None,
) -> dict[str, dict]:
    """Replay fixture rows keyed by digest, one per example.

    Prompts are built exactly as :class:`ParaphraseAugmenter` will build
    them, so strict replay never misses.
    """
    rows: dict[str, dict] = {}
    for ex in examples:
        pairs = select_demo_pairs(demo_pairs, TOY_TASK_NAME, ex.label, ex.sentence1)
        prompt = build_paraphrase_prompt(
            pairs, ex.sentence1, demo_template_id, instruction_template_id
        )
        digest = prompt_digest(prompt)
        rows[digest] = {
            "digest": digest,
            "prompt": prompt,
            "completion": rule_synonym_paraphrase(ex.sentence1),
            "endpoint": "toy-rule-synonym",
        }
    return rows


def make_backtranslation_fixtures(
    examples: Sequence[LabeledExample],
    pivots: Sequence[str] = ("AR", "FR", "DE", "ZH", "HI"),
) -> dict[str, dict]:
    """Replay rows simulating a lossy round trip through each pivot.

    The forward leg emits a tagged placeholder; the return leg lands on
    the rule-based synonym paraphrase, which is how a real pivot round
    trip tends to drift onto synonyms.
    """
    from cppf.clients import translation_request_key

    rows: dict[str, dict] = {}

    def add(key: str, completion: str) -> None:
        digest = prompt_digest(key)
        rows[digest] = {
            "digest": digest,
            "prompt": key,
            "completion": completion,
            "endpoint": "toy-rule-synonym",
        }

    for ex in examples:
        for pivot in pivots:
            tagged = f"<{pivot}> {ex.sentence1}"
            add(translation_request_key(ex.sentence1, "EN", pivot), tagged)
            add(
                translation_request_key(tagged, pivot, "EN"),
                rule_synonym_paraphrase(ex.sentence1),
            )
    return rows


def make_replay_augmenter(
    examples: Sequence[LabeledExample],
    demo_pairs: Sequence[DemoPair] | None = None,
    demo_template_id: int = 1,
    instruction_template_id: int | None = None,
) -> ParaphraseAugmenter:
    """A fully offline paraphrase augmenter backed by generated fixtures."""
    from cppf.clients import ReplayLLMClient

    pairs = make_demo_pairs(examples) if demo_pairs is None else list(demo_pairs)
    fixtures = make_paraphrase_fixtures(
        examples, pairs, demo_template_id, instruction_template_id
    )
    return ParaphraseAugmenter(
        ReplayLLMClient(fixtures),
        pairs,
        TOY_TASK_NAME,
        demo_template_id=demo_template_id,
        instruction_template_id=instruction_template_id,
    )


def toy_eda_lexicon() -> dict[str, list[str]]:
    """Word -> synonyms table over the toy content vocabulary."""
    lexicon: dict[str, list[str]] = {}
    for word, synonym in SYNONYMS.items():
        lexicon.setdefault(word, []).append(synonym)
        lexicon.setdefault(synonym, []).append(word)
    return lexicon


def toy_model_overrides() -> dict:
    """Model dimensions for the desk-scale reference runs."""
    return {"hidden_dim": 32, "layers": 2, "heads": 4, "max_seq_len": 64}


def toy_train_overrides() -> dict:
    """Training knobs calibrated on the toy task (a from-scratch model
    needs far larger learning rates than a pretrained one)."""
    return {
        "batch_size_supcon": 8,
        "lr_mlm": 2e-3,
        "lr_supcon": 1.4e-3,
        "max_steps": 150,
    }
