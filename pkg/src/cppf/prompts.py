"""Template rendering and prompt-view assembly.

A prompt view is one full model input: the target sentence rendered with
an open ``[MASK]`` slot, followed by demonstrations rendered with their
verbalizers filled in. Each training example yields two views, the second
built from a paraphrase (or another sample) with freshly drawn
demonstrations.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Sequence

from cppf.tasks import MASK_TOKEN, FewShotSplit, LabeledExample, TaskSpec

DEFAULT_SEPARATOR = " "
DEFAULT_DEMO_COUNT = 2


class PromptError(ValueError):
    """Template slots and rendered inputs out of contract."""


@dataclass(frozen=True)
class RenderedSentence:
    """A single example pushed through the task template.

    ``masked`` mode keeps the [MASK] slot open; ``verbalized`` mode fills
    it with the example's label word.
    """

    text: str
    mask_present: bool
    source_id: str
    render_mode: str  # "masked" | "verbalized"
    label: str

    def __post_init__(self) -> None:
        count = self.text.count(MASK_TOKEN)
        if self.render_mode == "masked" and count != 1:
            raise PromptError(
                f"masked render of {self.source_id!r} must contain exactly one "
                f"{MASK_TOKEN}, found {count}"
            )
        if self.render_mode == "verbalized" and count != 0:
            raise PromptError(
                f"verbalized render of {self.source_id!r} must not contain {MASK_TOKEN}"
            )


@dataclass(frozen=True)
class PromptView:
    """One assembled model input with exact mask bookkeeping."""

    text: str
    mask_char_span: tuple[int, int]
    target_id: str
    demo_ids: tuple[str, ...]
    view_kind: str  # "original" | "paraphrase"
    label: str
    target_char_end: int

    def __post_init__(self) -> None:
        if self.text.count(MASK_TOKEN) != 1:
            raise PromptError("prompt must contain exactly one mask")
        start, end = self.mask_char_span
        if self.text[start:end] != MASK_TOKEN:
            raise PromptError(
                f"mask span {self.mask_char_span} does not resolve to {MASK_TOKEN}"
            )

    @property
    def target_text(self) -> str:
        return self.text[: self.target_char_end]


def render_template(
    spec: TaskSpec, example: LabeledExample, mode: str = "masked"
) -> RenderedSentence:
    """Substitute <S1>/<S2> verbatim; fill or keep the mask per ``mode``."""
    if mode not in ("masked", "verbalized"):
        raise PromptError(f"unknown render mode {mode!r}")
    spec.validate_example(example)
    text = spec.template.replace("<S1>", example.sentence1)
    if spec.is_pair_task:
        assert example.sentence2 is not None  # validate_example guarantees it
        text = text.replace("<S2>", example.sentence2)
    if mode == "verbalized":
        text = text.replace(MASK_TOKEN, spec.verbalizers[example.label])
    return RenderedSentence(
        text=text,
        mask_present=(mode == "masked"),
        source_id=example.id,
        render_mode=mode,
        label=example.label,
    )


def sample_demonstrations(
    split: FewShotSplit,
    target: LabeledExample,
    count: int,
    rng: random.Random,
) -> list[LabeledExample]:
    """Uniform sample without replacement from the split, never the target."""
    if count < 0:
        raise PromptError("demonstration count must be >= 0")
    pool = [ex for ex in split.train_examples() if ex.id != target.id]
    if count > len(pool):
        raise PromptError(
            f"requested {count} demonstrations but only {len(pool)} candidates "
            f"remain after excluding target {target.id!r}"
        )
    return rng.sample(pool, count)


def assemble_prompt(
    target: RenderedSentence,
    demos: Sequence[RenderedSentence],
    separator: str = DEFAULT_SEPARATOR,
    view_kind: str = "original",
) -> PromptView:
    """Concatenate target then demonstrations, in order, with ``separator``."""
    if not target.mask_present or target.render_mode != "masked":
        raise PromptError("assembly target must be a masked render")
    for demo in demos:
        if demo.render_mode != "verbalized" or MASK_TOKEN in demo.text:
            raise PromptError(
                f"demonstration {demo.source_id!r} must be verbalized (no mask)"
            )
    parts = [target.text] + [demo.text for demo in demos]
    text = separator.join(parts)
    start = target.text.index(MASK_TOKEN)
    return PromptView(
        text=text,
        mask_char_span=(start, start + len(MASK_TOKEN)),
        target_id=target.source_id,
        demo_ids=tuple(demo.source_id for demo in demos),
        view_kind=view_kind,
        label=target.label,
        target_char_end=len(target.text),
    )


def build_views(
    target: LabeledExample,
    paraphrased_text: str,
    split: FewShotSplit,
    spec: TaskSpec,
    rng: random.Random,
    demo_count: int = DEFAULT_DEMO_COUNT,
    separator: str = DEFAULT_SEPARATOR,
) -> tuple[PromptView, PromptView]:
    """Build the original view and its paraphrase view.

    Demonstrations for the first view are drawn before the second view's,
    independently and without excluding each other (overlap permitted).
    For pair tasks the paraphrase replaces sentence1 and keeps sentence2.
    """
    if not paraphrased_text:
        raise PromptError(f"empty paraphrase for target {target.id!r}")
    demos_1 = sample_demonstrations(split, target, demo_count, rng)
    demos_2 = sample_demonstrations(split, target, demo_count, rng)

    view_1 = assemble_prompt(
        render_template(spec, target, "masked"),
        [render_template(spec, d, "verbalized") for d in demos_1],
        separator=separator,
        view_kind="original",
    )
    paraphrased = replace(target, sentence1=paraphrased_text)
    view_2 = assemble_prompt(
        render_template(spec, paraphrased, "masked"),
        [render_template(spec, d, "verbalized") for d in demos_2],
        separator=separator,
        view_kind="paraphrase",
    )
    return view_1, view_2


def reassemble(
    view: PromptView,
    split: FewShotSplit,
    spec: TaskSpec,
    target: LabeledExample,
    separator: str = DEFAULT_SEPARATOR,
) -> PromptView:
    """Rebuild a view from its recorded demo ids; must reproduce the text."""
    by_id = {ex.id: ex for ex in split.train_examples()}
    try:
        demos = [by_id[demo_id] for demo_id in view.demo_ids]
    except KeyError as exc:
        raise PromptError(f"demo id {exc} not found in split") from exc
    rendered_target = render_template(spec, target, "masked")
    return assemble_prompt(
        rendered_target,
        [render_template(spec, d, "verbalized") for d in demos],
        separator=separator,
        view_kind=view.view_kind,
    )
