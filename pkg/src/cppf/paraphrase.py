"""Few-shot paraphrasing prompts and completion handling.

A paraphrasing query shows a generative LM several (original, paraphrase)
pairs rendered in one of six demonstration templates, optionally preceded
by one of five task instructions, and ends with the query sentence in the
original slot, leaving the paraphrase slot open for the completion.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from cppf.clients import EmptyCompletionError, LLMClient

logger = logging.getLogger(__name__)

# Demonstration templates, keyed 1..6. The final one phrases the pair as a
# single running sentence instead of slot markers.
DEMO_TEMPLATES: dict[int, str] = {
    1: "Original:{original}\nParaphrase:{paraphrase}",
    2: "[Original]:{original}\n[Paraphrase]:{paraphrase}",
    3: "Original:{original}\nRewrite:{paraphrase}",
    4: "[Original]:{original}\n[Rewrite]:{paraphrase}",
    5: "Here is the original source: {original}\nHere is the paraphrase: {paraphrase}",
    6: "{original}, in other words {paraphrase}",
}

# Instruction lines, keyed 1..5, prepended before any demonstrations.
INSTRUCTION_TEMPLATES: dict[int, str] = {
    1: "Summarize the following text in your own words",
    2: "Rewrite the following text that expresses the same idea in a different way",
    3: "Generate a paraphrase of the following text that expresses the same ideas in a different way",
    4: "Generate a paraphrase of the following text using different words and sentence structures while still conveying the same meaning",
    5: "Generate a summary or paraphrase of the following text that captures the essence of the ideas in a concise manner",
}

# Keywords whose echo in a completion marks the start of template spillover.
_ECHO_KEYWORDS = (
    "[Original]:",
    "[Paraphrase]:",
    "[Rewrite]:",
    "Original:",
    "Paraphrase:",
    "Rewrite:",
    "Here is the original source:",
    "Here is the paraphrase:",
    ", in other words",
)


class ParaphrasePromptError(ValueError):
    """Bad template id or malformed prompt inputs."""


@dataclass(frozen=True)
class DemoPair:
    """A worked paraphrase example used to demonstrate the task."""

    original: str
    paraphrase: str
    task_name: str | None = None
    label: str | None = None


@dataclass(frozen=True)
class ParaphrasePrompt:
    demo_template_id: int
    demo_pairs: tuple[DemoPair, ...]
    query: str
    instruction_template_id: int | None = None
    text: str = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "text",
            build_paraphrase_prompt(
                self.demo_pairs,
                self.query,
                self.demo_template_id,
                self.instruction_template_id,
            ),
        )


def render_demo_pair(pair: DemoPair, demo_template_id: int) -> str:
    template = DEMO_TEMPLATES.get(demo_template_id)
    if template is None:
        raise ParaphrasePromptError(f"unknown demonstration template {demo_template_id}")
    # str.replace, not str.format: user text may contain literal braces.
    return template.replace("{original}", pair.original).replace(
        "{paraphrase}", pair.paraphrase
    )


def render_open_query(query: str, demo_template_id: int) -> str:
    """Render the query with the paraphrase slot left open for completion."""
    template = DEMO_TEMPLATES.get(demo_template_id)
    if template is None:
        raise ParaphrasePromptError(f"unknown demonstration template {demo_template_id}")
    head = template.split("{paraphrase}", 1)[0]
    return head.replace("{original}", query).rstrip(" ")


def build_paraphrase_prompt(
    demo_pairs: Sequence[DemoPair],
    query: str,
    demo_template_id: int,
    instruction_template_id: int | None = None,
) -> str:
    """Compose instruction (optional), demonstrations, then the open query."""
    if not query:
        raise ParaphrasePromptError("query must be nonempty")
    if instruction_template_id is not None:
        instruction = INSTRUCTION_TEMPLATES.get(instruction_template_id)
        if instruction is None:
            raise ParaphrasePromptError(
                f"unknown instruction template {instruction_template_id}"
            )
    else:
        instruction = None
        if not demo_pairs:
            raise ParaphrasePromptError(
                "demonstration pairs may be empty only when an instruction is given"
            )
    blocks: list[str] = []
    if instruction is not None:
        blocks.append(instruction)
    blocks.extend(render_demo_pair(pair, demo_template_id) for pair in demo_pairs)
    blocks.append(render_open_query(query, demo_template_id))
    return "\n".join(blocks)


def clean_completion(completion: str) -> str:
    """Trim a raw completion and cut any echoed template continuation.

    Keeps only the first line, then drops everything from the earliest
    template keyword onward; echoing endpoints otherwise corrupt the
    augmented text.
    """
    text = completion.strip()
    if "\n" in text:
        text = text.split("\n", 1)[0]
    cut = len(text)
    for keyword in _ECHO_KEYWORDS:
        idx = text.find(keyword)
        if idx != -1:
            cut = min(cut, idx)
    return text[:cut].strip()


def paraphrase(client: LLMClient, prompt: str) -> str:
    """Fetch one completion for a paraphrasing prompt and post-process it."""
    completion = client.complete(prompt)
    cleaned = clean_completion(completion)
    if not cleaned:
        raise EmptyCompletionError(
            f"endpoint {getattr(client, 'endpoint', '?')!r} returned an empty "
            "completion after cleaning"
        )
    return cleaned


def load_demo_pairs(path: str | Path) -> list[DemoPair]:
    """Read the demonstration-pair fixture: JSONL of
    {taskName, label, original, paraphrase}."""
    pairs: list[DemoPair] = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            raw = json.loads(line)
            try:
                pairs.append(
                    DemoPair(
                        original=raw["original"],
                        paraphrase=raw["paraphrase"],
                        task_name=raw.get("taskName"),
                        label=raw.get("label"),
                    )
                )
            except KeyError as exc:
                raise ParaphrasePromptError(
                    f"{path}:{lineno}: demo pair missing field {exc}"
                ) from exc
    return pairs


def save_demo_pairs(pairs: Sequence[DemoPair], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(
                json.dumps(
                    {
                        "taskName": pair.task_name,
                        "label": pair.label,
                        "original": pair.original,
                        "paraphrase": pair.paraphrase,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def select_demo_pairs(
    pairs: Sequence[DemoPair],
    task_name: str,
    label: str,
    query: str,
) -> list[DemoPair]:
    """Same-class pairs for a query, excluding the query itself, file order."""
    return [
        pair
        for pair in pairs
        if pair.task_name == task_name
        and pair.label == label
        and pair.original != query
    ]
