"""Two-phase fine-tuning loop: an MLM update, then a contrastive update.

Every step first forwards the original-view batch and applies the MLM
loss, then forwards the second views and applies the supervised
contrastive loss over the mask features of both view sets. The first
views' features are reused from the MLM forward (as constants, snapshotted
before its update) rather than recomputed, so the contrastive phase costs
exactly one extra forward and backward. One Adam optimizer serves both
phases with its learning rate swapped per phase; each completed step
applies exactly two parameter updates, MLM first.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import torch

from cppf.clients import AugmentationRecord
from cppf.losses import (
    DEFAULT_TEMPERATURE,
    ContrastiveBatch,
    l2_normalize,
    mlm_loss,
    supcon_loss,
)
from cppf.model import ModelOutput, ReferenceEncoder, parameter_digest, save_checkpoint
from cppf.prompts import (
    DEFAULT_DEMO_COUNT,
    PromptView,
    assemble_prompt,
    build_views,
    render_template,
    sample_demonstrations,
)
from cppf.tasks import FewShotSplit, LabeledExample, TaskSpec
from cppf.tokenizer import Tokenizer

logger = logging.getLogger(__name__)

# Hard ceiling on optimization steps, independent of configuration.
HARD_STEP_CAP = 1000

# Contrastive-phase learning rates are scaled down by sqrt(0.5) ~ 0.7
# relative to their full-batch baselines; named defaults below are already
# scaled.
DEFAULT_LR_SCALE = 0.7
DEFAULT_LR_MLM = 1e-5

PAIR_KINDS = ("paraphrase", "same-class", "mixed")

# Per-task contrastive batch size and learning rate (pre-scaled).
_TASK_DEFAULTS: dict[str, tuple[int, float]] = {
    "SST-2": (8, 7e-7),
    "SST-5": (20, 7e-6),
    "MNLI": (12, 7e-6),
    "CoLA": (8, 7e-6),
    "QNLI": (8, 7e-6),
    "CR": (16, 7e-6),
}


class TrainingError(RuntimeError):
    pass


class PairingError(TrainingError):
    """No usable comparison sample for the requested pair strategy."""


class TrainingDivergedError(TrainingError):
    def __init__(self, step: int, what: str):
        super().__init__(f"non-finite loss at step {step} ({what})")
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    task: str
    batch_size_supcon: int
    lr_supcon: float
    lr_mlm: float = DEFAULT_LR_MLM
    lr_scale: float = DEFAULT_LR_SCALE
    max_steps: int = HARD_STEP_CAP
    seed: int = 0
    pair_strategy: str = "paraphrase"
    strategy_weights: Mapping[str, float] | None = None
    augmenter: str = "paraphrase-llm"
    demo_count: int = DEFAULT_DEMO_COUNT
    temperature: float = DEFAULT_TEMPERATURE
    batch_size_mlm: int | None = None  # defaults to batch_size_supcon
    contrastive: bool = True
    on_augment_failure: str = "fallback"  # or "error"
    supcon_weight: float = 1.0  # reporting-only scale for the summed total

    def __post_init__(self) -> None:
        if not 0 < self.lr_scale <= 1:
            raise ValueError("lr_scale must be in (0, 1]")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.batch_size_supcon < 1:
            raise ValueError("batch_size_supcon must be >= 1")
        if self.pair_strategy not in PAIR_KINDS:
            raise ValueError(
                f"unknown pair strategy {self.pair_strategy!r}; use {PAIR_KINDS}"
            )
        if self.on_augment_failure not in ("fallback", "error"):
            raise ValueError("on_augment_failure must be 'fallback' or 'error'")
        if self.strategy_weights is not None:
            weights = dict(self.strategy_weights)
            unknown = set(weights) - set(PAIR_KINDS)
            if unknown:
                raise ValueError(f"unknown strategy weights: {sorted(unknown)}")
            if any(w < 0 for w in weights.values()):
                raise ValueError("strategy weights must be non-negative")
            if abs(sum(weights.values()) - 1.0) > 1e-9:
                raise ValueError("strategy weights must sum to 1")
            object.__setattr__(self, "strategy_weights", weights)

    @property
    def mlm_batch_size(self) -> int:
        return self.batch_size_mlm or self.batch_size_supcon


def scale_contrastive_lr(base_lr: float, scale: float = DEFAULT_LR_SCALE) -> float:
    """Derive the contrastive-phase learning rate from an unscaled baseline."""
    return base_lr * scale


def task_defaults(task: str, **overrides) -> TrainConfig:
    """Named per-task defaults for contrastive batch size and learning rate."""
    if task not in _TASK_DEFAULTS:
        raise ValueError(
            f"no named defaults for task {task!r}; known: {sorted(_TASK_DEFAULTS)}"
        )
    batch, lr = _TASK_DEFAULTS[task]
    config = TrainConfig(task=task, batch_size_supcon=batch, lr_supcon=lr)
    return replace(config, **overrides) if overrides else config


@dataclass(frozen=True)
class StepRecord:
    step: int
    mlm_loss: float
    supcon_loss: float | None
    total_loss: float
    pair_kinds: tuple[str, ...]
    demo_ids: tuple[tuple[tuple[str, ...], ...], ...]  # per pair: (view1 ids, view2 ids)
    paraphrase_digests: tuple[str | None, ...]
    parameter_version: int
    mlm_param_digest: str
    supcon_param_digest: str | None

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "mlm_loss": self.mlm_loss,
            "supcon_loss": self.supcon_loss,
            "total_loss": self.total_loss,
            "pair_kinds": list(self.pair_kinds),
            "demo_ids": [[list(v) for v in pair] for pair in self.demo_ids],
            "paraphrase_digests": list(self.paraphrase_digests),
            "parameter_version": self.parameter_version,
            "mlm_param_digest": self.mlm_param_digest,
            "supcon_param_digest": self.supcon_param_digest,
        }


def _text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def build_single_view(
    target: LabeledExample,
    split: FewShotSplit,
    spec: TaskSpec,
    rng: random.Random,
    demo_count: int = DEFAULT_DEMO_COUNT,
) -> PromptView:
    demos = sample_demonstrations(split, target, demo_count, rng)
    return assemble_prompt(
        render_template(spec, target, "masked"),
        [render_template(spec, d, "verbalized") for d in demos],
    )


def make_pair(
    target: LabeledExample,
    split: FewShotSplit,
    spec: TaskSpec,
    strategy: str,
    paraphrase_for: Callable[[LabeledExample], AugmentationRecord | None] | None,
    rng: random.Random,
    demo_count: int = DEFAULT_DEMO_COUNT,
    on_augment_failure: str = "fallback",
) -> tuple[PromptView, PromptView, tuple[str, str], str, str | None]:
    """Build the two views for one target under a pair strategy.

    Returns (view1, view2, (label1, label2), kind, paraphrase_digest).
    Draw order is fixed: view1's demonstrations, then any comparison
    sample, then view2's demonstrations.
    """
    if strategy not in PAIR_KINDS:
        raise PairingError(f"unknown pair strategy {strategy!r}")

    if strategy == "paraphrase":
        record = paraphrase_for(target) if paraphrase_for is not None else None
        if record is None:
            if on_augment_failure == "error":
                raise PairingError(f"no paraphrase available for target {target.id!r}")
            logger.warning(
                "no paraphrase for %s; falling back to same-class pairing", target.id
            )
            return make_pair(
                target, split, spec, "same-class", None, rng, demo_count,
                on_augment_failure="error",
            )
        view_1, view_2 = build_views(
            target, record.augmented_text, split, spec, rng, demo_count=demo_count
        )
        return (
            view_1,
            view_2,
            (target.label, target.label),
            "paraphrase",
            _text_digest(record.augmented_text),
        )

    view_1 = build_single_view(target, split, spec, rng, demo_count)
    kind = strategy
    if strategy == "same-class":
        pool = [
            ex
            for ex in split.train.get(target.label, ())
            if ex.id != target.id
        ]
        if not pool:
            if on_augment_failure == "error":
                raise PairingError(
                    f"no same-class comparison available for {target.id!r} "
                    f"(label {target.label!r} has a single example)"
                )
            logger.warning(
                "no same-class comparison for %s; falling back to mixed", target.id
            )
            kind = "mixed"
    if kind == "mixed":  # a negative comparison from any other class, own label kept
        pool = [
            ex
            for label, exs in split.train.items()
            if label != target.label
            for ex in exs
        ]
        if not pool:
            raise PairingError("mixed pairing needs at least two classes")
    comparison = rng.choice(pool)
    demos_2 = sample_demonstrations(split, comparison, demo_count, rng)
    view_2 = assemble_prompt(
        render_template(spec, comparison, "masked"),
        [render_template(spec, d, "verbalized") for d in demos_2],
    )
    return view_1, view_2, (target.label, comparison.label), kind, None


class Trainer:
    """Owns the model, the optimizer, and the step/record bookkeeping."""

    def __init__(
        self,
        model: ReferenceEncoder,
        split: FewShotSplit,
        spec: TaskSpec,
        tokenizer: Tokenizer,
        config: TrainConfig,
        paraphrases: Mapping[str, AugmentationRecord] | None = None,
    ):
        self.model = model
        self.split = split
        self.spec = spec
        self.tokenizer = tokenizer
        self.config = config
        self.paraphrases = dict(paraphrases or {})
        self.rng = random.Random(config.seed)
        self.optimizer = torch.optim.Adam(model.parameters(), lr=config.lr_mlm)
        self.parameter_version = 0
        self._queue: list[LabeledExample] = []

    def _paraphrase_for(self, example: LabeledExample) -> AugmentationRecord | None:
        return self.paraphrases.get(example.id)

    def _pick_strategy(self) -> str:
        weights = self.config.strategy_weights
        if weights is None:
            return self.config.pair_strategy
        kinds = [k for k in PAIR_KINDS if weights.get(k, 0.0) > 0]
        values = [weights[k] for k in kinds]
        return self.rng.choices(kinds, weights=values, k=1)[0]

    def next_batch(self) -> list[LabeledExample]:
        """Cycle the K-shot split, reshuffling on every epoch boundary."""
        size = self.config.mlm_batch_size
        batch: list[LabeledExample] = []
        while len(batch) < size:
            if not self._queue:
                self._queue = self.split.train_examples()
                self.rng.shuffle(self._queue)
            batch.append(self._queue.pop(0))
        return batch

    def _forward_view(self, view: PromptView) -> ModelOutput:
        prompt = self.tokenizer.encode_prompt(view.text, target_end=view.target_char_end)
        return self.model(prompt)

    def _apply(self, loss: torch.Tensor, lr: float) -> None:
        self.optimizer.param_groups[0]["lr"] = lr
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        self.parameter_version += 1

    def train_step(self, step: int, targets: Sequence[LabeledExample]) -> StepRecord:
        config = self.config
        pairs = []
        if config.contrastive:
            for target in targets:
                strategy = self._pick_strategy()
                pairs.append(
                    make_pair(
                        target,
                        self.split,
                        self.spec,
                        strategy,
                        self._paraphrase_for,
                        self.rng,
                        demo_count=config.demo_count,
                        on_augment_failure=config.on_augment_failure,
                    )
                )
        else:
            for target in targets:
                view = build_single_view(
                    target, self.split, self.spec, self.rng, config.demo_count
                )
                pairs.append((view, None, (target.label, None), "mlm-only", None))

        views_1 = [pair[0] for pair in pairs]
        labels_1 = [pair[2][0] for pair in pairs]

        outputs_1 = [self._forward_view(view) for view in views_1]
        # First-view features are snapshotted before the MLM update and enter
        # the contrastive loss as constants; gradients flow through the
        # second views' fresh forward only, keeping the phase at exactly one
        # extra forward + backward.
        features_1 = (
            torch.stack(
                [self.model.contrastive_feature(o) for o in outputs_1]
            ).detach()
            if config.contrastive
            else None
        )
        loss_mlm = mlm_loss(outputs_1, labels_1, self.spec, self.tokenizer.vocab)
        if not torch.isfinite(loss_mlm):
            raise TrainingDivergedError(step, "mlm loss")
        self._apply(loss_mlm, config.lr_mlm)
        mlm_digest = parameter_digest(self.model)

        supcon_value: float | None = None
        supcon_digest: str | None = None
        if config.contrastive:
            views_2 = [pair[1] for pair in pairs]
            labels_2 = [pair[2][1] for pair in pairs]
            outputs_2 = [self._forward_view(view) for view in views_2]
            features_2 = torch.stack(
                [self.model.contrastive_feature(o) for o in outputs_2]
            )
            batch = ContrastiveBatch(
                features=l2_normalize(torch.cat([features_1, features_2])),
                labels=tuple(labels_1 + labels_2),
                temperature=config.temperature,
            )
            loss_supcon = supcon_loss(batch)
            if not torch.isfinite(loss_supcon):
                raise TrainingDivergedError(step, "contrastive loss")
            self._apply(loss_supcon, config.lr_supcon)
            supcon_value = loss_supcon.item()
            supcon_digest = parameter_digest(self.model)

        mlm_value = loss_mlm.item()
        return StepRecord(
            step=step,
            mlm_loss=mlm_value,
            supcon_loss=supcon_value,
            total_loss=mlm_value + config.supcon_weight * (supcon_value or 0.0),
            pair_kinds=tuple(pair[3] for pair in pairs),
            demo_ids=tuple(
                (
                    pair[0].demo_ids,
                    pair[1].demo_ids if pair[1] is not None else (),
                )
                for pair in pairs
            ),
            paraphrase_digests=tuple(pair[4] for pair in pairs),
            parameter_version=self.parameter_version,
            mlm_param_digest=mlm_digest,
            supcon_param_digest=supcon_digest,
        )

    def run(self) -> list[StepRecord]:
        steps = min(self.config.max_steps, HARD_STEP_CAP)
        records: list[StepRecord] = []
        self.model.train()
        for step in range(steps):
            targets = self.next_batch()
            records.append(self.train_step(step, targets))
        return records


def run_training(
    model: ReferenceEncoder,
    split: FewShotSplit,
    spec: TaskSpec,
    tokenizer: Tokenizer,
    config: TrainConfig,
    paraphrases: Mapping[str, AugmentationRecord] | None = None,
    checkpoint_path: str | Path | None = None,
) -> list[StepRecord]:
    """Run the configured number of steps (capped) and optionally persist."""
    trainer = Trainer(model, split, spec, tokenizer, config, paraphrases)
    records = trainer.run()
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path)
    return records


def save_step_records(records: Sequence[StepRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
