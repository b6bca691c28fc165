"""Word-level tokenizer with a fixed, file-persistable vocabulary.

Tokenization splits on whitespace and punctuation while keeping the
bracketed control tokens intact, so encode/decode round-trips exactly at
the token level. The vocabulary is built from the training split (plus
template words and verbalizers); anything else maps to ``[UNK]``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)

_TOKEN_RE = re.compile(r"\[(?:PAD|UNK|CLS|SEP|MASK)\]|\w+|[^\w\s]")


class TokenizationError(ValueError):
    """Mask-count or length contract violated."""


def word_tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


@dataclass(frozen=True)
class TokenizedPrompt:
    token_ids: tuple[int, ...]
    mask_index: int
    attention_length: int

    def __post_init__(self) -> None:
        if not 0 <= self.mask_index < len(self.token_ids):
            raise TokenizationError("mask index out of range")
        if self.attention_length > len(self.token_ids):
            raise TokenizationError("attention length exceeds sequence length")


class Vocabulary:
    """Token <-> id table with the five control tokens pinned first."""

    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ValueError(f"vocabulary must begin with {SPECIAL_TOKENS}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary contains duplicate tokens")
        self._tokens = tuple(tokens)
        self._ids = {token: i for i, token in enumerate(tokens)}

    @classmethod
    def build(cls, texts: Iterable[str]) -> "Vocabulary":
        """Collect word tokens from ``texts``; sorted for determinism."""
        seen: set[str] = set()
        for text in texts:
            seen.update(word_tokenize(text))
        seen.difference_update(SPECIAL_TOKENS)
        return cls(list(SPECIAL_TOKENS) + sorted(seen))

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    @property
    def pad_id(self) -> int:
        return self._ids[PAD]

    @property
    def unk_id(self) -> int:
        return self._ids[UNK]

    @property
    def mask_id(self) -> int:
        return self._ids[MASK]

    def id_of(self, token: str) -> int:
        return self._ids.get(token, self._ids[UNK])

    def token_of(self, token_id: int) -> str:
        return self._tokens[token_id]

    def encode_words(self, text: str) -> list[int]:
        return [self.id_of(token) for token in word_tokenize(text)]

    def decode(self, token_ids: Iterable[int]) -> str:
        return " ".join(self._tokens[i] for i in token_ids)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self._tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        tokens = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tokens)


class Tokenizer:
    """Frames prompts as [CLS] ... [SEP] and enforces the one-mask contract."""

    def __init__(self, vocab: Vocabulary, max_seq_len: int = 128):
        if max_seq_len < 4:
            raise ValueError("max_seq_len must allow frame + mask")
        self.vocab = vocab
        self.max_seq_len = max_seq_len

    def encode_prompt(self, text: str, target_end: int | None = None) -> TokenizedPrompt:
        """Tokenize one prompt containing exactly one mask.

        Overlength prompts are truncated from the right, dropping
        demonstration tokens; the target segment (``text[:target_end]``,
        when given, otherwise everything up to the mask) must survive or
        the prompt is rejected.
        """
        if not text.strip():
            raise TokenizationError("cannot tokenize an empty prompt")
        tokens = word_tokenize(text)
        mask_positions = [i for i, token in enumerate(tokens) if token == MASK]
        if len(mask_positions) != 1:
            raise TokenizationError(
                f"prompt must contain exactly one {MASK}, found {len(mask_positions)}"
            )
        body_budget = self.max_seq_len - 2  # room for [CLS] and [SEP]
        if len(tokens) > body_budget:
            protected = len(word_tokenize(text[:target_end])) if target_end else (
                mask_positions[0] + 1
            )
            if protected > body_budget or mask_positions[0] >= body_budget:
                raise TokenizationError(
                    f"target segment ({protected} tokens) exceeds the "
                    f"{body_budget}-token budget; cannot truncate demonstrations only"
                )
            tokens = tokens[:body_budget]
        framed = [CLS] + tokens + [SEP]
        token_ids = tuple(self.vocab.id_of(token) for token in framed)
        return TokenizedPrompt(
            token_ids=token_ids,
            mask_index=mask_positions[0] + 1,
            attention_length=len(token_ids),
        )

    def pad_to(self, prompt: TokenizedPrompt, length: int) -> TokenizedPrompt:
        """Append [PAD] ids; attention length is unchanged."""
        if length < len(prompt.token_ids):
            raise TokenizationError("cannot pad to a shorter length")
        if length > self.max_seq_len:
            raise TokenizationError("pad length exceeds max_seq_len")
        padding = (self.vocab.pad_id,) * (length - len(prompt.token_ids))
        return TokenizedPrompt(
            token_ids=prompt.token_ids + padding,
            mask_index=prompt.mask_index,
            attention_length=prompt.attention_length,
        )
