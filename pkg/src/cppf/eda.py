"""Easy-data-augmentation text operations over whitespace tokens.

Four edits: synonym replacement, random insertion, random swap, random
deletion, plus a combined mode that applies one of the four chosen
uniformly. The synonym source is a pluggable word -> synonyms table so
the module stays offline-testable; a WordNet dump is one possible
provider.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

# Standard stop-word list; SR and RI never touch these words.
STOP_WORDS = frozenset(
    """i me my myself we our ours ourselves you your yours yourself yourselves
    he him his himself she her hers herself it its itself they them their
    theirs themselves what which who whom this that these those am is are was
    were be been being have has had having do does did doing a an the and but
    if or because as until while of at by for with about against between into
    through during before after above below to from up down in out on off
    over under again further then once here there when where why how all any
    both each few more most other some such no nor not only own same so than
    too very s t can will just don should now""".split()
)

Lexicon = Mapping[str, Sequence[str]]


@dataclass(frozen=True)
class EdaParams:
    """Knobs for the combined operation."""

    n_sr: int = 1
    n_ri: int = 1
    n_rs: int = 1
    p_rd: float = 0.1

    def __post_init__(self) -> None:
        if min(self.n_sr, self.n_ri, self.n_rs) < 0:
            raise ValueError("edit counts must be >= 0")
        if not 0.0 <= self.p_rd <= 1.0:
            raise ValueError("deletion probability must be in [0, 1]")


def load_lexicon(path: str | Path) -> dict[str, list[str]]:
    """Load a JSON word -> synonym-list table."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return {word: list(syns) for word, syns in raw.items()}


def save_lexicon(lexicon: Lexicon, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps({w: list(s) for w, s in lexicon.items()}, indent=2, sort_keys=True),
        encoding="utf-8",
    )


def _tokens(text: str) -> list[str]:
    return text.split()


def eda_synonym_replacement(
    text: str, n: int, lexicon: Lexicon, rng: random.Random
) -> str:
    """Replace up to ``n`` random non-stop-word tokens with random synonyms."""
    words = _tokens(text)
    candidates = [
        i
        for i, w in enumerate(words)
        if w.lower() not in STOP_WORDS and lexicon.get(w)
    ]
    rng.shuffle(candidates)
    for i in candidates[:n]:
        words[i] = rng.choice(list(lexicon[words[i]]))
    return " ".join(words)


def eda_random_insertion(
    text: str, n: int, lexicon: Lexicon, rng: random.Random
) -> str:
    """Insert synonyms of ``n`` random non-stop words at random positions."""
    words = _tokens(text)
    if not words:
        return text
    for _ in range(n):
        sources = [
            w for w in words if w.lower() not in STOP_WORDS and lexicon.get(w)
        ]
        if not sources:
            break
        word = rng.choice(sources)
        synonym = rng.choice(list(lexicon[word]))
        words.insert(rng.randint(0, len(words)), synonym)
    return " ".join(words)


def eda_random_swap(text: str, n: int, rng: random.Random) -> str:
    """Transpose two random positions, ``n`` times. Token multiset preserved."""
    words = _tokens(text)
    if len(words) < 2:
        return text
    for _ in range(n):
        i = rng.randrange(len(words))
        j = rng.randrange(len(words))
        words[i], words[j] = words[j], words[i]
    return " ".join(words)


def eda_random_deletion(text: str, p: float, rng: random.Random) -> str:
    """Drop each token independently with probability ``p``.

    If everything is dropped, one random original token survives so the
    result is never empty.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("deletion probability must be in [0, 1]")
    words = _tokens(text)
    if len(words) <= 1 or p == 0.0:
        return text
    kept = [w for w in words if rng.random() >= p]
    if not kept:
        kept = [words[rng.randrange(len(words))]]
    return " ".join(kept)


def eda_all(text: str, params: EdaParams, lexicon: Lexicon, rng: random.Random) -> str:
    """Apply one uniformly chosen sub-operation."""
    op = rng.randrange(4)
    if op == 0:
        return eda_synonym_replacement(text, params.n_sr, lexicon, rng)
    if op == 1:
        return eda_random_insertion(text, params.n_ri, lexicon, rng)
    if op == 2:
        return eda_random_swap(text, params.n_rs, rng)
    return eda_random_deletion(text, params.p_rd, rng)
