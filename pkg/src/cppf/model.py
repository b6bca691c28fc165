"""Masked-LM backend: a small double-precision transformer encoder.

The encoder is deliberately desk-scale: token and position embeddings,
``layers`` pre-norm self-attention blocks, a final layer norm, and a
linear MLM head (optionally tied to the token embedding). Everything runs
in float64 on CPU so finite-difference gradient checks are tight and runs
are bit-reproducible under a fixed init seed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
import numpy as np
import torch
from torch import nn

from cppf.tokenizer import SPECIAL_TOKENS, TokenizedPrompt

CHECKPOINT_VERSION = 1


class ModelConfigError(ValueError):
    pass


class NonFiniteActivationError(RuntimeError):
    """An activation went inf/nan; carries the offending layer index."""

    def __init__(self, layer: int, what: str):
        super().__init__(f"non-finite activations in layer {layer} ({what})")
        self.layer = layer


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    hidden_dim: int = 32
    layers: int = 2
    heads: int = 4
    max_seq_len: int = 128
    init_seed: int = 0
    ff_dim: int | None = None  # defaults to 4 * hidden_dim
    tie_mlm_head: bool = False
    projection_head: bool = False  # linear projection before contrastive features

    def __post_init__(self) -> None:
        if self.hidden_dim % self.heads != 0:
            raise ModelConfigError(
                f"hidden_dim {self.hidden_dim} not divisible by heads {self.heads}"
            )
        if self.vocab_size < len(SPECIAL_TOKENS):
            raise ModelConfigError("vocab must at least hold the control tokens")
        if min(self.hidden_dim, self.layers, self.heads, self.max_seq_len) < 1:
            raise ModelConfigError("dimensions must be positive")

    @property
    def feed_forward_dim(self) -> int:
        return self.ff_dim if self.ff_dim is not None else 4 * self.hidden_dim


@dataclass(frozen=True)
class ModelOutput:
    """Final hidden states plus the MLM logits at the mask position."""

    hidden_states: torch.Tensor  # (L, d)
    mask_index: int
    mask_hidden: torch.Tensor  # (d,)
    mlm_logits: torch.Tensor  # (vocab,)


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = nn.Linear(dim, 3 * dim, dtype=torch.float64)
        self.out = nn.Linear(dim, dim, dtype=torch.float64)

    def forward(self, x: torch.Tensor, attention_length: int) -> torch.Tensor:
        length, dim = x.shape
        q, k, v = self.qkv(x).split(dim, dim=-1)
        # (heads, L, head_dim)
        q = q.view(length, self.heads, self.head_dim).transpose(0, 1)
        k = k.view(length, self.heads, self.head_dim).transpose(0, 1)
        v = v.view(length, self.heads, self.head_dim).transpose(0, 1)
        scores = q @ k.transpose(-2, -1) / self.head_dim**0.5
        if attention_length < length:
            scores = scores.masked_fill(
                torch.arange(length) >= attention_length, float("-inf")
            )
        weights = torch.softmax(scores, dim=-1)
        mixed = (weights @ v).transpose(0, 1).reshape(length, dim)
        return self.out(mixed)


class EncoderBlock(nn.Module):
    """Pre-norm: attention and feed-forward each read a normed residual."""

    def __init__(self, dim: int, heads: int, ff_dim: int):
        super().__init__()
        self.ln_attn = nn.LayerNorm(dim, dtype=torch.float64)
        self.attn = SelfAttention(dim, heads)
        self.ln_ff = nn.LayerNorm(dim, dtype=torch.float64)
        self.ff = nn.Sequential(
            nn.Linear(dim, ff_dim, dtype=torch.float64),
            nn.GELU(),
            nn.Linear(ff_dim, dim, dtype=torch.float64),
        )

    def forward(self, x: torch.Tensor, attention_length: int) -> torch.Tensor:
        x = x + self.attn(self.ln_attn(x), attention_length)
        return x + self.ff(self.ln_ff(x))


class ReferenceEncoder(nn.Module):
    """The trainable reference model; one prompt per forward call."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.hidden_dim
        self.token_embedding = nn.Embedding(config.vocab_size, d, dtype=torch.float64)
        self.position_embedding = nn.Embedding(
            config.max_seq_len, d, dtype=torch.float64
        )
        self.blocks = nn.ModuleList(
            EncoderBlock(d, config.heads, config.feed_forward_dim)
            for _ in range(config.layers)
        )
        self.ln_final = nn.LayerNorm(d, dtype=torch.float64)
        if config.tie_mlm_head:
            self.mlm_bias = nn.Parameter(torch.zeros(config.vocab_size, dtype=torch.float64))
            self.mlm_head = None
        else:
            self.mlm_head = nn.Linear(d, config.vocab_size, dtype=torch.float64)
            self.mlm_bias = None
        if config.projection_head:
            self.projection = nn.Linear(d, d, dtype=torch.float64)
        else:
            self.projection = None
        self.forward_calls = 0

    def head_weight(self) -> torch.Tensor:
        if self.mlm_head is not None:
            return self.mlm_head.weight
        return self.token_embedding.weight

    def head_bias(self) -> torch.Tensor:
        if self.mlm_head is not None:
            return self.mlm_head.bias
        assert self.mlm_bias is not None
        return self.mlm_bias

    def forward(self, prompt: TokenizedPrompt) -> ModelOutput:
        self.forward_calls += 1
        length = len(prompt.token_ids)
        if length > self.config.max_seq_len:
            raise ModelConfigError(
                f"prompt length {length} exceeds max_seq_len {self.config.max_seq_len}"
            )
        ids = torch.tensor(prompt.token_ids, dtype=torch.long)
        positions = torch.arange(length)
        x = self.token_embedding(ids) + self.position_embedding(positions)
        for layer, block in enumerate(self.blocks):
            x = block(x, prompt.attention_length)
            if not torch.isfinite(x).all():
                raise NonFiniteActivationError(layer, "encoder block output")
        hidden = self.ln_final(x)
        if not torch.isfinite(hidden).all():
            raise NonFiniteActivationError(len(self.blocks), "final layer norm")
        mask_hidden = hidden[prompt.mask_index]
        logits = self.head_weight() @ mask_hidden + self.head_bias()
        return ModelOutput(
            hidden_states=hidden,
            mask_index=prompt.mask_index,
            mask_hidden=mask_hidden,
            mlm_logits=logits,
        )

    def contrastive_feature(self, output: ModelOutput) -> torch.Tensor:
        """Raw (un-normalized) contrastive feature at the mask position."""
        feature = output.mask_hidden
        if self.projection is not None:
            feature = self.projection(feature)
        return feature


def init_reference_model(config: ModelConfig) -> ReferenceEncoder:
    """Build an encoder with weights drawn from the seeded generator."""
    model = ReferenceEncoder(config)
    generator = torch.Generator().manual_seed(config.init_seed)
    with torch.no_grad():
        for name, parameter in sorted(model.named_parameters()):
            if parameter.dim() >= 2 or "embedding" in name:
                parameter.normal_(0.0, 0.02, generator=generator)
            elif "weight" in name:  # layer-norm gains
                parameter.fill_(1.0)
            else:
                parameter.zero_()
    return model


def gradients(
    model: ReferenceEncoder, loss: torch.Tensor, strict: bool = False
) -> dict[str, torch.Tensor]:
    """Gradient of a scalar loss for every trainable parameter.

    In strict mode, parameters the loss does not reach are an error;
    otherwise they get zero gradients.
    """
    if loss.dim() != 0:
        raise ValueError("loss must be a scalar")
    names, params = zip(*sorted(model.named_parameters()))
    grads = torch.autograd.grad(loss, params, retain_graph=True, allow_unused=True)
    unused = [name for name, grad in zip(names, grads) if grad is None]
    if unused and strict:
        raise ValueError(f"loss does not depend on parameters: {unused}")
    return {
        name: (grad if grad is not None else torch.zeros_like(param))
        for name, param, grad in zip(names, params, grads)
    }


def parameter_digest(model: nn.Module) -> str:
    """SHA-256 over (name, shape, raw bytes) of all parameters, name order."""
    hasher = hashlib.sha256()
    for name, parameter in sorted(model.named_parameters()):
        hasher.update(name.encode("utf-8"))
        hasher.update(str(tuple(parameter.shape)).encode("utf-8"))
        hasher.update(parameter.detach().numpy().tobytes())
    return hasher.hexdigest()


def save_checkpoint(model: ReferenceEncoder, path: str | Path) -> None:
    """Flat archive of named parameter arrays plus the model config."""
    meta = {"version": CHECKPOINT_VERSION, "config": asdict(model.config)}
    arrays = {
        name: parameter.detach().numpy()
        for name, parameter in model.named_parameters()
    }
    meta_bytes = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    np.savez(path, __meta__=meta_bytes, **arrays)


def load_checkpoint(path: str | Path) -> ReferenceEncoder:
    with np.load(path) as archive:
        meta = json.loads(bytes(archive["__meta__"]).decode("utf-8"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ModelConfigError(
                f"unsupported checkpoint version {meta.get('version')!r}"
            )
        config = ModelConfig(**meta["config"])
        model = ReferenceEncoder(config)
        state = {
            name: torch.from_numpy(archive[name]) for name in archive.files
            if name != "__meta__"
        }
    missing = set(dict(model.named_parameters())) - set(state)
    if missing:
        raise ModelConfigError(f"checkpoint missing parameters: {sorted(missing)}")
    model.load_state_dict(state)
    return model
