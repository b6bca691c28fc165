"""Training objectives: restricted-verbalizer MLM loss and SupCon loss.

Classification happens at the mask position: the full-vocabulary MLM
logits are restricted to the verbalizer token of each label and
softmax-normalized over the label space only. The contrastive loss pulls
same-label mask features together against all other batch members, scaled
by a temperature.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import torch

from cppf.model import ModelOutput
from cppf.tasks import TaskSpec
from cppf.tokenizer import Vocabulary

logger = logging.getLogger(__name__)

# The adopted contrastive formulation needs a temperature; nothing upstream
# fixes one, so this default is a house choice.
DEFAULT_TEMPERATURE = 0.3

UNIT_NORM_TOLERANCE = 1e-6


class VerbalizerVocabError(ValueError):
    """A verbalizer word is missing from the model vocabulary."""


class DegenerateBatchError(ValueError):
    """No anchor in the contrastive batch has any positive."""


def verbalizer_token_ids(spec: TaskSpec, vocab: Vocabulary) -> dict[str, int]:
    """Map each label to its verbalizer's vocabulary id; reject OOV words."""
    ids: dict[str, int] = {}
    for label in spec.label_space:
        word = spec.verbalizers[label]
        if word not in vocab:
            raise VerbalizerVocabError(
                f"verbalizer {word!r} for label {label!r} is not in the vocabulary"
            )
        ids[label] = vocab.id_of(word)
    return ids


@dataclass(frozen=True)
class VerbalizerLogits:
    """Per-label logits extracted from a full-vocabulary logit vector."""

    per_label: Mapping[str, float]
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if set(self.per_label) != set(self.labels):
            raise ValueError("one logit per label required")
        if not all(math.isfinite(v) for v in self.per_label.values()):
            raise ValueError("verbalizer logits must be finite")
        object.__setattr__(self, "per_label", dict(self.per_label))

    @classmethod
    def from_mask_logits(
        cls, logits: torch.Tensor, spec: TaskSpec, vocab: Vocabulary
    ) -> "VerbalizerLogits":
        ids = verbalizer_token_ids(spec, vocab)
        return cls(
            per_label={label: float(logits[ids[label]]) for label in spec.label_space},
            labels=spec.label_space,
        )

    def probabilities(self) -> dict[str, float]:
        values = torch.tensor([self.per_label[l] for l in self.labels], dtype=torch.float64)
        probs = torch.softmax(values, dim=0)
        return {label: float(p) for label, p in zip(self.labels, probs)}


def class_probabilities(
    mask_logits: torch.Tensor, spec: TaskSpec, vocab: Vocabulary
) -> dict[str, float]:
    """Softmax over the label space using each label's verbalizer logit."""
    return VerbalizerLogits.from_mask_logits(mask_logits, spec, vocab).probabilities()


def predict_label(
    mask_logits: torch.Tensor, spec: TaskSpec, vocab: Vocabulary
) -> str:
    probs = class_probabilities(mask_logits, spec, vocab)
    return max(spec.label_space, key=lambda label: probs[label])


def mlm_loss_from_logits(
    mask_logits: torch.Tensor, label: str, spec: TaskSpec, vocab: Vocabulary
) -> torch.Tensor:
    """-log p(label) under the restricted softmax; keeps the autograd graph."""
    ids = verbalizer_token_ids(spec, vocab)
    restricted = torch.stack([mask_logits[ids[l]] for l in spec.label_space])
    target = spec.label_space.index(label)
    return -torch.log_softmax(restricted, dim=0)[target]


def mlm_loss(
    outputs: Sequence[ModelOutput],
    labels: Sequence[str],
    spec: TaskSpec,
    vocab: Vocabulary,
) -> torch.Tensor:
    """Summed cross-entropy over the batch (a sum, not a mean)."""
    if len(outputs) != len(labels):
        raise ValueError("outputs and labels must align")
    if not outputs:
        raise ValueError("empty batch")
    terms = [
        mlm_loss_from_logits(output.mlm_logits, label, spec, vocab)
        for output, label in zip(outputs, labels)
    ]
    return torch.stack(terms).sum()


def l2_normalize(features: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    return features / features.norm(dim=-1, keepdim=True).clamp_min(eps)


@dataclass
class ContrastiveBatch:
    """Unit-norm feature rows with labels and a positive temperature."""

    features: torch.Tensor  # (N, d), rows L2-normalized
    labels: tuple[str, ...]
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self) -> None:
        self.labels = tuple(self.labels)
        if self.features.dim() != 2:
            raise ValueError("features must be a 2-D batch")
        n = self.features.shape[0]
        if n < 2:
            raise ValueError("contrastive batch needs at least two rows")
        if len(self.labels) != n:
            raise ValueError("labels must align with feature rows")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        norms = self.features.detach().norm(dim=-1)
        if (norms - 1.0).abs().max().item() > UNIT_NORM_TOLERANCE:
            raise ValueError(
                "features must be L2-normalized (max |norm-1| = "
                f"{(norms - 1.0).abs().max().item():.3e})"
            )
        if not self._positive_mask().any():
            raise DegenerateBatchError("no anchor has a same-label positive")

    def _positive_mask(self) -> torch.Tensor:
        n = len(self.labels)
        same = torch.tensor(
            [[self.labels[i] == self.labels[j] for j in range(n)] for i in range(n)]
        )
        return same & ~torch.eye(n, dtype=torch.bool)


def supcon_loss(batch: ContrastiveBatch) -> torch.Tensor:
    """Supervised contrastive loss, summed over anchors.

    Per anchor i with positives P(i) (same label, not itself):

        -(1/|P(i)|) * sum_{p in P(i)} log( exp(z_i.z_p / t)
                                           / sum_{a != i} exp(z_i.z_a / t) )

    The denominator runs over every non-anchor row. Anchors without
    positives contribute zero (logged), matching small-batch regimes.
    """
    z = batch.features
    n = z.shape[0]
    positive = batch._positive_mask()
    not_self = ~torch.eye(n, dtype=torch.bool)

    sim = (z @ z.T) / batch.temperature
    # Row-wise stabilisation over the non-self entries only.
    masked_sim = sim.masked_fill(~not_self, float("-inf"))
    row_max = masked_sim.max(dim=1, keepdim=True).values
    log_denominator = (
        torch.exp(masked_sim - row_max).sum(dim=1, keepdim=True).log() + row_max
    )
    log_prob = sim - log_denominator  # (N, N); only non-self columns are used

    positive_counts = positive.sum(dim=1)
    anchors = positive_counts > 0
    skipped = int(n - anchors.sum().item())
    if skipped:
        logger.debug("supcon: %d of %d anchors have no positive", skipped, n)

    pos_sums = (log_prob * positive).sum(dim=1)
    counts = positive_counts.to(z.dtype).clamp_min(1.0)
    per_anchor = torch.where(
        anchors, -pos_sums / counts, torch.zeros((), dtype=z.dtype)
    )
    return per_anchor.sum()


def total_loss(mlm: float, supcon: float, supcon_weight: float = 1.0) -> float:
    """Unweighted sum by default; the weight exists only for ablations."""
    if not (math.isfinite(mlm) and math.isfinite(supcon)):
        raise ValueError(f"loss terms must be finite, got mlm={mlm}, supcon={supcon}")
    return mlm + supcon_weight * supcon
