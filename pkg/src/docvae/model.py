"""Variational auto-encoder over vector graphic documents.

The encoder embeds every canvas attribute into a shared hidden width, embeds
every element attribute plus a learned positional embedding per step, runs a
sequence processor with the canvas summary as a side input, pools the valid
steps, and maps the pooled vector to the mean and scale of a diagonal
Gaussian posterior. The decoder maps a latent code back to per-attribute
predictions; canvas attributes (element count included) are predicted from
the latent code directly and element attributes from per-step features.

Four variants share the embedding and head machinery and differ in the
sequence processor:

  * oneshot-transformer: parallel decoding from positional queries through
    transformer blocks that inject the side input between self-attention and
    the feed-forward layer
  * oneshot-lstm: parallel decoding from positional queries through a
    bidirectional LSTM with the side input concatenated to every step
  * autoreg-transformer: causal decoding conditioned on previous elements,
    starting from a learned begin token
  * autoreg-lstm: same, with a unidirectional LSTM whose initial hidden
    state carries the side input
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
from torch import Tensor, nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .data import Batch, batchify
from .document import Document, DocumentSchema, length_to_bin

VARIANTS = (
    "oneshot-transformer",
    "autoreg-transformer",
    "oneshot-lstm",
    "autoreg-lstm",
)

CHECKPOINT_FILE_VERSION = 1


@dataclass
class ModelConfig:
    variant: str = "oneshot-transformer"
    num_blocks: int = 1
    hidden_dim: int = 256
    latent_dim: int = 512
    heads: int = 8
    ffn_expansion: int = 4
    dropout: float = 0.1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.num_blocks < 1 or self.hidden_dim < 1 or self.latent_dim < 1 or self.heads < 1:
            raise ValueError("num_blocks, hidden_dim, latent_dim, and heads must be positive")
        if self.hidden_dim % self.heads != 0:
            raise ValueError(f"hidden_dim {self.hidden_dim} must be divisible by heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def is_oneshot(self) -> bool:
        return self.variant.startswith("oneshot")

    @property
    def is_transformer(self) -> bool:
        return self.variant.endswith("transformer")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "num_blocks": self.num_blocks,
            "hidden_dim": self.hidden_dim,
            "latent_dim": self.latent_dim,
            "heads": self.heads,
            "ffn_expansion": self.ffn_expansion,
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelConfig":
        return cls(**dict(data))


def default_config_for(schema: DocumentSchema, **overrides) -> ModelConfig:
    """Default configuration with the latent width matched to the family."""
    latent = 512 if schema.name == "crello-like" else 256
    params = {"latent_dim": latent}
    params.update(overrides)
    return ModelConfig(**params)


@dataclass
class LatentDistribution:
    """Diagonal Gaussian posterior parameters, one row per document."""

    mu: Tensor
    sigma: Tensor

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape:
            raise ValueError("mu and sigma must have identical shapes")
        if not bool(torch.isfinite(self.mu).all()) or not bool(torch.isfinite(self.sigma).all()):
            raise ValueError("latent distribution parameters must be finite")
        if not bool((self.sigma > 0).all()):
            raise ValueError("sigma must be positive elementwise")

    @property
    def dim(self) -> int:
        return int(self.mu.shape[-1])


def sample_latent(
    dist: LatentDistribution,
    mode: str = "stochastic",
    seed: int | None = None,
    generator: torch.Generator | None = None,
) -> Tensor:
    """Draw a latent code, reparameterized so gradients reach mu and sigma."""
    if mode == "mean":
        return dist.mu
    if mode != "stochastic":
        raise ValueError(f"unknown sampling mode {mode!r}")
    if generator is None and seed is not None:
        generator = torch.Generator().manual_seed(seed)
    eps = torch.randn(dist.mu.shape, generator=generator, dtype=dist.mu.dtype, device=dist.mu.device)
    return dist.mu + dist.sigma * eps


@dataclass
class TensorBatch:
    canvas: dict[str, Tensor]
    elements: dict[str, Tensor]
    presence: dict[str, Tensor]
    mask: Tensor
    lengths: Tensor

    @classmethod
    def from_batch(cls, batch: Batch, schema: DocumentSchema, dtype: torch.dtype) -> "TensorBatch":
        def convert(arr, categorical):
            t = torch.from_numpy(np.ascontiguousarray(arr))
            return t if categorical else t.to(dtype)

        canvas = {
            spec.name: convert(batch.canvas_values[spec.name], spec.is_categorical)
            for spec in schema.canvas_attrs
        }
        elements = {
            spec.name: convert(batch.element_values[spec.name], spec.is_categorical)
            for spec in schema.element_attrs
        }
        presence = {name: torch.from_numpy(p) for name, p in batch.element_presence.items()}
        return cls(
            canvas=canvas,
            elements=elements,
            presence=presence,
            mask=torch.from_numpy(batch.mask),
            lengths=torch.from_numpy(batch.lengths),
        )


class CategoricalEmbedder(nn.Module):
    """Slot-wise embedding table; the reserved pad index contributes nothing."""

    def __init__(self, cardinality: int, dims: int, out_dim: int):
        super().__init__()
        self.table = nn.Embedding((cardinality + 1) * dims, out_dim)
        self.register_buffer("offsets", torch.arange(dims, dtype=torch.long) * (cardinality + 1))

    def forward(self, values: Tensor, present: Tensor | None = None) -> Tensor:
        emb = self.table(values + self.offsets).sum(dim=-2)
        if present is not None:
            emb = emb * present.unsqueeze(-1).to(emb.dtype)
        return emb


class NumericalEmbedder(nn.Module):
    def __init__(self, dims: int, out_dim: int):
        super().__init__()
        self.proj = nn.Linear(dims, out_dim)

    def forward(self, values: Tensor, present: Tensor | None = None) -> Tensor:
        emb = self.proj(values)
        if present is not None:
            emb = emb * present.unsqueeze(-1).to(emb.dtype)
        return emb


def _module_key(name: str) -> str:
    # ModuleDict keys live in the module attribute namespace; prefix to avoid
    # collisions with nn.Module methods like "type"
    return f"attr_{name}"


class DocumentEmbedder(nn.Module):
    """Per-attribute projections into the hidden width, summed per token."""

    def __init__(self, schema: DocumentSchema, out_dim: int):
        super().__init__()

        def build(spec):
            if spec.is_categorical:
                return CategoricalEmbedder(spec.cardinality, spec.dims, out_dim)
            return NumericalEmbedder(spec.dims, out_dim)

        self.canvas_names = tuple(spec.name for spec in schema.canvas_attrs)
        self.element_names = tuple(spec.name for spec in schema.element_attrs)
        self.canvas = nn.ModuleDict({_module_key(spec.name): build(spec) for spec in schema.canvas_attrs})
        self.element = nn.ModuleDict({_module_key(spec.name): build(spec) for spec in schema.element_attrs})

    def canvas_hidden(self, canvas_values: Mapping[str, Tensor]) -> Tensor:
        parts = [self.canvas[_module_key(name)](canvas_values[name]) for name in self.canvas_names]
        return torch.stack(parts).sum(dim=0)

    def element_hidden(self, element_values: Mapping[str, Tensor], presence: Mapping[str, Tensor]) -> Tensor:
        parts = [
            self.element[_module_key(name)](element_values[name], presence[name])
            for name in self.element_names
        ]
        return torch.stack(parts).sum(dim=0)


class SideInputBlock(nn.Module):
    """Pre-norm transformer block with an additive side input.

    The side vector is projected and added between the self-attention and the
    feed-forward sublayers.
    """

    def __init__(self, hidden: int, heads: int, side_dim: int, ffn_expansion: int, dropout: float):
        super().__init__()
        self.norm_attn = nn.LayerNorm(hidden)
        self.attn = nn.MultiheadAttention(hidden, heads, dropout=dropout, batch_first=True)
        self.side_proj = nn.Linear(side_dim, hidden)
        self.norm_ffn = nn.LayerNorm(hidden)
        self.ffn = nn.Sequential(
            nn.Linear(hidden, ffn_expansion * hidden),
            nn.ReLU(),
            nn.Linear(ffn_expansion * hidden, hidden),
        )
        self.dropout = nn.Dropout(dropout)

    def forward(
        self,
        h: Tensor,
        side: Tensor,
        key_padding_mask: Tensor | None = None,
        attn_mask: Tensor | None = None,
    ) -> Tensor:
        q = self.norm_attn(h)
        attn_out, _ = self.attn(
            q, q, q, key_padding_mask=key_padding_mask, attn_mask=attn_mask, need_weights=False
        )
        h = h + self.dropout(attn_out)
        h = h + self.side_proj(side).unsqueeze(1)
        h = h + self.dropout(self.ffn(self.norm_ffn(h)))
        return h


def _masked_mean(features: Tensor, mask: Tensor, lengths: Tensor) -> Tensor:
    weights = mask.unsqueeze(-1).to(features.dtype)
    return (features * weights).sum(dim=1) / lengths.clamp(min=1).to(features.dtype).unsqueeze(-1)


class Encoder(nn.Module):
    def __init__(self, schema: DocumentSchema, config: ModelConfig):
        super().__init__()
        hidden = config.hidden_dim
        self.config = config
        self.embedder = DocumentEmbedder(schema, hidden)
        self.pos = nn.Embedding(schema.max_length, hidden)
        if config.is_transformer:
            self.blocks = nn.ModuleList(
                SideInputBlock(hidden, config.heads, hidden, config.ffn_expansion, config.dropout)
                for _ in range(config.num_blocks)
            )
        elif config.is_oneshot:
            self.lstm = nn.LSTM(
                2 * hidden,
                hidden,
                num_layers=config.num_blocks,
                bidirectional=True,
                batch_first=True,
                dropout=config.dropout if config.num_blocks > 1 else 0.0,
            )
            self.pool_proj = nn.Linear(2 * hidden, hidden)
        else:
            self.lstm = nn.LSTM(
                hidden,
                hidden,
                num_layers=config.num_blocks,
                batch_first=True,
                dropout=config.dropout if config.num_blocks > 1 else 0.0,
            )
            self.init_proj = nn.Linear(hidden, hidden)
        self.mu_head = nn.Linear(hidden, config.latent_dim)
        self.logvar_head = nn.Linear(hidden, config.latent_dim)

    def forward(self, tb: TensorBatch) -> tuple[Tensor, Tensor]:
        side = self.embedder.canvas_hidden(tb.canvas)
        steps = self.embedder.element_hidden(tb.elements, tb.presence)
        seq_len = steps.shape[1]
        steps = steps + self.pos.weight[:seq_len].unsqueeze(0)
        if self.config.is_transformer:
            padding = ~tb.mask
            for block in self.blocks:
                steps = block(steps, side, key_padding_mask=padding)
            pooled = _masked_mean(steps, tb.mask, tb.lengths)
        elif self.config.is_oneshot:
            inputs = torch.cat([steps, side.unsqueeze(1).expand(-1, seq_len, -1)], dim=-1)
            packed = pack_padded_sequence(inputs, tb.lengths.cpu(), batch_first=True, enforce_sorted=False)
            _, (h_n, _) = self.lstm(packed)
            pooled = self.pool_proj(torch.cat([h_n[-2], h_n[-1]], dim=-1))
        else:
            layers = self.lstm.num_layers
            h0 = torch.tanh(self.init_proj(side)).unsqueeze(0).expand(layers, -1, -1).contiguous()
            c0 = torch.zeros_like(h0)
            packed = pack_padded_sequence(steps, tb.lengths.cpu(), batch_first=True, enforce_sorted=False)
            _, (h_n, _) = self.lstm(packed, (h0, c0))
            pooled = h_n[-1]
        return self.mu_head(pooled), self.logvar_head(pooled)


class OneshotTransformerDecoder(nn.Module):
    def __init__(self, schema: DocumentSchema, config: ModelConfig):
        super().__init__()
        self.pos = nn.Embedding(schema.max_length, config.hidden_dim)
        self.blocks = nn.ModuleList(
            SideInputBlock(config.hidden_dim, config.heads, config.latent_dim, config.ffn_expansion, config.dropout)
            for _ in range(config.num_blocks)
        )

    def forward(self, z: Tensor, lengths: Tensor) -> Tensor:
        batch, seq_len = z.shape[0], int(lengths.max())
        h = self.pos.weight[:seq_len].unsqueeze(0).expand(batch, -1, -1)
        padding = torch.arange(seq_len, device=z.device).unsqueeze(0) >= lengths.unsqueeze(1)
        for block in self.blocks:
            h = block(h, z, key_padding_mask=padding)
        return h


class OneshotLSTMDecoder(nn.Module):
    def __init__(self, schema: DocumentSchema, config: ModelConfig):
        super().__init__()
        hidden = config.hidden_dim
        self.pos = nn.Embedding(schema.max_length, hidden)
        self.lstm = nn.LSTM(
            hidden + config.latent_dim,
            hidden,
            num_layers=config.num_blocks,
            bidirectional=True,
            batch_first=True,
            dropout=config.dropout if config.num_blocks > 1 else 0.0,
        )
        self.out_proj = nn.Linear(2 * hidden, hidden)

    def forward(self, z: Tensor, lengths: Tensor) -> Tensor:
        batch, seq_len = z.shape[0], int(lengths.max())
        queries = self.pos.weight[:seq_len].unsqueeze(0).expand(batch, -1, -1)
        inputs = torch.cat([queries, z.unsqueeze(1).expand(-1, seq_len, -1)], dim=-1)
        packed = pack_padded_sequence(inputs, lengths.cpu(), batch_first=True, enforce_sorted=False)
        out, _ = self.lstm(packed)
        out, _ = pad_packed_sequence(out, batch_first=True, total_length=seq_len)
        return self.out_proj(out)


class ARTransformerDecoder(nn.Module):
    """Causal decoder over embedded previous elements."""

    def __init__(self, schema: DocumentSchema, config: ModelConfig):
        super().__init__()
        hidden = config.hidden_dim
        self.embedder = DocumentEmbedder(schema, hidden)
        self.bos = nn.Parameter(torch.randn(hidden) * 0.02)
        self.pos = nn.Embedding(schema.max_length, hidden)
        self.blocks = nn.ModuleList(
            SideInputBlock(hidden, config.heads, config.latent_dim, config.ffn_expansion, config.dropout)
            for _ in range(config.num_blocks)
        )

    def features_from_inputs(self, z: Tensor, inputs: Tensor, lengths: Tensor) -> Tensor:
        seq_len = inputs.shape[1]
        h = inputs + self.pos.weight[:seq_len].unsqueeze(0)
        causal = torch.triu(torch.ones(seq_len, seq_len, dtype=torch.bool, device=z.device), diagonal=1)
        padding = torch.arange(seq_len, device=z.device).unsqueeze(0) >= lengths.unsqueeze(1)
        for block in self.blocks:
            h = block(h, z, key_padding_mask=padding, attn_mask=causal)
        return h

    def forward_teacher(self, z: Tensor, teacher: TensorBatch) -> Tensor:
        emb = self.embedder.element_hidden(teacher.elements, teacher.presence)
        inputs = torch.cat([self.bos.expand(z.shape[0], 1, -1), emb[:, :-1]], dim=1)
        return self.features_from_inputs(z, inputs, teacher.lengths)


class ARLSTMDecoder(nn.Module):
    def __init__(self, schema: DocumentSchema, config: ModelConfig):
        super().__init__()
        hidden = config.hidden_dim
        self.embedder = DocumentEmbedder(schema, hidden)
        self.bos = nn.Parameter(torch.randn(hidden) * 0.02)
        self.init_proj = nn.Linear(config.latent_dim, hidden)
        self.lstm = nn.LSTM(
            hidden,
            hidden,
            num_layers=config.num_blocks,
            batch_first=True,
            dropout=config.dropout if config.num_blocks > 1 else 0.0,
        )

    def initial_state(self, z: Tensor) -> tuple[Tensor, Tensor]:
        layers = self.lstm.num_layers
        h0 = torch.tanh(self.init_proj(z)).unsqueeze(0).expand(layers, -1, -1).contiguous()
        return h0, torch.zeros_like(h0)

    def forward_teacher(self, z: Tensor, teacher: TensorBatch) -> Tensor:
        emb = self.embedder.element_hidden(teacher.elements, teacher.presence)
        inputs = torch.cat([self.bos.expand(z.shape[0], 1, -1), emb[:, :-1]], dim=1)
        out, _ = self.lstm(inputs, self.initial_state(z))
        return out


class AttributeHeads(nn.Module):
    """Final per-attribute prediction layers.

    Canvas heads read the latent code; element heads read per-step decoder
    features. Multi-slot categorical attributes get one group of logits per
    slot from a shared trunk feature.
    """

    def __init__(self, schema: DocumentSchema, config: ModelConfig):
        super().__init__()
        self.schema = schema

        def build(spec, in_dim):
            out = spec.dims * spec.cardinality if spec.is_categorical else spec.dims
            return nn.Linear(in_dim, out)

        self.canvas = nn.ModuleDict({_module_key(s.name): build(s, config.latent_dim) for s in schema.canvas_attrs})
        self.element = nn.ModuleDict({_module_key(s.name): build(s, config.hidden_dim) for s in schema.element_attrs})

    def canvas_outputs(self, z: Tensor) -> tuple[dict[str, Tensor], dict[str, Tensor]]:
        logits, values = {}, {}
        for spec in self.schema.canvas_attrs:
            out = self.canvas[_module_key(spec.name)](z)
            if spec.is_categorical:
                logits[spec.name] = out.view(*out.shape[:-1], spec.dims, spec.cardinality)
            else:
                values[spec.name] = out
        return logits, values

    def element_outputs(self, features: Tensor) -> tuple[dict[str, Tensor], dict[str, Tensor]]:
        logits, values = {}, {}
        for spec in self.schema.element_attrs:
            out = self.element[_module_key(spec.name)](features)
            if spec.is_categorical:
                logits[spec.name] = out.view(*out.shape[:-1], spec.dims, spec.cardinality)
            else:
                values[spec.name] = out
        return logits, values


@dataclass
class DecodedBatch:
    """Batched decoder outputs with gradients attached (training path)."""

    canvas_logits: dict[str, Tensor]
    canvas_values: dict[str, Tensor]
    element_logits: dict[str, Tensor]
    element_values: dict[str, Tensor]
    length_logits: Tensor
    lengths: Tensor


@dataclass
class DecodedDocument:
    """Decoder outputs for a single document, truncated to the used length."""

    canvas_logits: dict[str, np.ndarray]
    canvas_values: dict[str, np.ndarray]
    element_logits: dict[str, np.ndarray]
    element_values: dict[str, np.ndarray]
    length_logits: np.ndarray
    length: int


def to_document(decoded: DecodedDocument, schema: DocumentSchema) -> Document:
    """Maximum likelihood document: argmax per categorical slot (first index
    wins ties), regression outputs verbatim, inapplicable attributes dropped
    based on the decoded element label."""
    canvas = {}
    for spec in schema.canvas_attrs:
        if spec.name == "length":
            canvas["length"] = (length_to_bin(decoded.length),)
        elif spec.is_categorical:
            canvas[spec.name] = tuple(int(v) for v in decoded.canvas_logits[spec.name].argmax(axis=-1))
        else:
            canvas[spec.name] = tuple(float(v) for v in decoded.canvas_values[spec.name])
    elements = []
    label_attr = schema.label_attr
    for t in range(decoded.length):
        label = int(decoded.element_logits[label_attr][t].argmax(axis=-1)[0])
        element = {}
        for spec in schema.element_attrs:
            if not spec.applies_to(label):
                continue
            if spec.is_categorical:
                element[spec.name] = tuple(int(v) for v in decoded.element_logits[spec.name][t].argmax(axis=-1))
            else:
                element[spec.name] = tuple(float(v) for v in decoded.element_values[spec.name][t])
        elements.append(element)
    return Document(canvas=canvas, elements=tuple(elements))


class DocumentVAE(nn.Module):
    def __init__(self, config: ModelConfig, schema: DocumentSchema):
        super().__init__()
        self.config = config
        self.schema = schema
        self.encoder = Encoder(schema, config)
        if config.variant == "oneshot-transformer":
            self.decoder = OneshotTransformerDecoder(schema, config)
        elif config.variant == "oneshot-lstm":
            self.decoder = OneshotLSTMDecoder(schema, config)
        elif config.variant == "autoreg-transformer":
            self.decoder = ARTransformerDecoder(schema, config)
        else:
            self.decoder = ARLSTMDecoder(schema, config)
        self.heads = AttributeHeads(schema, config)

    @property
    def dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype

    def tensorize(self, batch: Batch) -> TensorBatch:
        return TensorBatch.from_batch(batch, self.schema, self.dtype)

    # ---------------------------------------------------------------- encode

    def encode_tensors(self, tb: TensorBatch) -> LatentDistribution:
        mu, logvar = self.encoder(tb)
        return LatentDistribution(mu=mu, sigma=torch.exp(0.5 * logvar))

    def encode(self, batch: Batch) -> LatentDistribution:
        return self.encode_tensors(self.tensorize(batch))

    # ---------------------------------------------------------------- decode

    def predict_lengths(self, z: Tensor) -> Tensor:
        logits, _ = self.heads.canvas_outputs(z)
        length_logits = logits["length"][..., 0, :]
        best = length_logits.detach().cpu().numpy().argmax(axis=-1)
        return torch.from_numpy(best + 1).to(torch.long)

    def decode_batch(self, z: Tensor, lengths: Tensor, teacher: TensorBatch | None = None) -> DecodedBatch:
        """Decode latent codes with known lengths.

        Autoregressive variants require ``teacher`` when training (ground
        truth previous elements); without it they unroll greedily on their own
        predictions.
        """
        canvas_logits, canvas_values = self.heads.canvas_outputs(z)
        if self.config.is_oneshot:
            features = self.decoder(z, lengths)
            element_logits, element_values = self.heads.element_outputs(features)
        elif teacher is not None:
            features = self.decoder.forward_teacher(z, teacher)
            element_logits, element_values = self.heads.element_outputs(features)
        else:
            element_logits, element_values = self._decode_autoregressive(z, lengths)
        return DecodedBatch(
            canvas_logits=canvas_logits,
            canvas_values=canvas_values,
            element_logits=element_logits,
            element_values=element_values,
            length_logits=canvas_logits["length"][..., 0, :],
            lengths=lengths,
        )

    def _embed_step(self, logits: dict[str, Tensor], values: dict[str, Tensor]) -> Tensor:
        """Greedy-decode one step's outputs and embed them as the next input."""
        labels = logits[self.schema.label_attr].argmax(dim=-1)[:, 0]
        step_values, step_presence = {}, {}
        for spec in self.schema.element_attrs:
            if spec.is_categorical:
                step_values[spec.name] = logits[spec.name].argmax(dim=-1).unsqueeze(1)
            else:
                step_values[spec.name] = values[spec.name].unsqueeze(1)
            if spec.applicable_types is None:
                present = torch.ones_like(labels, dtype=torch.bool)
            else:
                allowed = torch.tensor(sorted(spec.applicable_types), dtype=torch.long)
                present = (labels.unsqueeze(-1) == allowed).any(dim=-1)
            step_presence[spec.name] = present.unsqueeze(1)
        return self.decoder.embedder.element_hidden(step_values, step_presence)

    def _decode_autoregressive(self, z: Tensor, lengths: Tensor) -> tuple[dict, dict]:
        batch, seq_len = z.shape[0], int(lengths.max())
        step_logits: list[dict[str, Tensor]] = []
        step_values: list[dict[str, Tensor]] = []
        if isinstance(self.decoder, ARLSTMDecoder):
            state = self.decoder.initial_state(z)
            inp = self.decoder.bos.expand(batch, 1, -1)
            for _ in range(seq_len):
                out, state = self.decoder.lstm(inp, state)
                logits, values = self.heads.element_outputs(out[:, 0])
                step_logits.append(logits)
                step_values.append(values)
                inp = self._embed_step(logits, values)
        else:
            inputs = self.decoder.bos.expand(batch, 1, -1)
            for t in range(seq_len):
                clipped = lengths.clamp(max=t + 1)
                features = self.decoder.features_from_inputs(z, inputs, clipped)
                logits, values = self.heads.element_outputs(features[:, t])
                step_logits.append(logits)
                step_values.append(values)
                if t + 1 < seq_len:
                    inputs = torch.cat([inputs, self._embed_step(logits, values)], dim=1)
        element_logits = {
            name: torch.stack([s[name] for s in step_logits], dim=1) for name in step_logits[0]
        }
        element_values = {
            name: torch.stack([s[name] for s in step_values], dim=1) for name in step_values[0]
        }
        return element_logits, element_values

    def _slice_decoded(self, decoded: DecodedBatch, row: int) -> DecodedDocument:
        length = int(decoded.lengths[row])

        def to_np(t: Tensor) -> np.ndarray:
            return t.detach().cpu().to(torch.float64).numpy()

        return DecodedDocument(
            canvas_logits={k: to_np(v[row]) for k, v in decoded.canvas_logits.items()},
            canvas_values={k: to_np(v[row]) for k, v in decoded.canvas_values.items()},
            element_logits={k: to_np(v[row, :length]) for k, v in decoded.element_logits.items()},
            element_values={k: to_np(v[row, :length]) for k, v in decoded.element_values.items()},
            length_logits=to_np(decoded.length_logits[row]),
            length=length,
        )

    def decode(self, z: Tensor, forced_length: int | None = None) -> DecodedDocument:
        """Decode a single latent vector, deterministically.

        Without ``forced_length`` the element count is taken from the length
        head; slots past the used length are dropped.
        """
        if forced_length is not None and not (1 <= forced_length <= self.schema.max_length):
            raise ValueError(f"forced_length {forced_length} outside [1, {self.schema.max_length}]")
        z = torch.as_tensor(z, dtype=self.dtype)
        if z.ndim != 1 or z.shape[0] != self.config.latent_dim:
            raise ValueError(f"latent vector must have shape [{self.config.latent_dim}]")
        if not bool(torch.isfinite(z).all()):
            raise ValueError("latent vector must be finite")
        self.eval()
        with torch.no_grad():
            z = z.unsqueeze(0)
            if forced_length is None:
                lengths = self.predict_lengths(z)
            else:
                lengths = torch.tensor([forced_length], dtype=torch.long)
            decoded = self.decode_batch(z, lengths)
            return self._slice_decoded(decoded, 0)

    # -------------------------------------------------------------- pipelines

    def documents_from_latents(self, z: Tensor) -> list[Document]:
        self.eval()
        with torch.no_grad():
            lengths = self.predict_lengths(z)
            decoded = self.decode_batch(z, lengths)
            return [to_document(self._slice_decoded(decoded, i), self.schema) for i in range(z.shape[0])]

    def generate(self, n: int, seed: int, chunk_size: int = 128) -> list[Document]:
        """Decode n prior samples into documents, reproducibly for a fixed seed."""
        if n < 1:
            raise ValueError("n must be >= 1")
        gen = torch.Generator().manual_seed(seed)
        docs: list[Document] = []
        remaining = n
        while remaining > 0:
            size = min(chunk_size, remaining)
            z = torch.randn(size, self.config.latent_dim, generator=gen, dtype=self.dtype)
            docs.extend(self.documents_from_latents(z))
            remaining -= size
        return docs

    def reconstruct(self, docs: Sequence[Document], mode: str = "mean", seed: int | None = None,
                    chunk_size: int = 128) -> list[Document]:
        """Encode then decode documents, by default through the mean latent code."""
        self.eval()
        out: list[Document] = []
        generator = torch.Generator().manual_seed(seed) if seed is not None else None
        with torch.no_grad():
            for start in range(0, len(docs), chunk_size):
                chunk = docs[start : start + chunk_size]
                dist = self.encode(batchify(chunk, self.schema))
                z = sample_latent(dist, mode=mode, generator=generator)
                out.extend(self.documents_from_latents(z))
        return out

    def interpolate(self, doc_a: Document, doc_b: Document, steps: int) -> list[Document]:
        """Decode evenly spaced points between the two mean latent codes.

        Steps decode one at a time so the endpoints reproduce the plain mean
        decodes bit for bit.
        """
        if steps < 2:
            raise ValueError("steps must be >= 2")
        self.eval()
        with torch.no_grad():
            mu_a = self.encode(batchify([doc_a], self.schema)).mu[0]
            mu_b = self.encode(batchify([doc_b], self.schema)).mu[0]
            docs = []
            for i in range(steps):
                alpha = i / (steps - 1)
                z = (1.0 - alpha) * mu_a + alpha * mu_b
                docs.extend(self.documents_from_latents(z.unsqueeze(0)))
            return docs


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model: DocumentVAE, path: Path | str, step: int = 0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format_version": CHECKPOINT_FILE_VERSION,
            "model_config": model.config.to_dict(),
            "schema": model.schema.to_dict(),
            "schema_hash": model.schema.hash(),
            "state_dict": model.state_dict(),
            "step": int(step),
        },
        path,
    )
    return path


def load_checkpoint(path: Path | str, schema: DocumentSchema | None = None) -> tuple[DocumentVAE, int]:
    """Rebuild a model from a checkpoint, verifying the schema hash when given."""
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("format_version") != CHECKPOINT_FILE_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {payload.get('format_version')!r}")
    stored_schema = DocumentSchema.from_dict(payload["schema"])
    if schema is not None and schema.hash() != payload["schema_hash"]:
        raise ValueError("checkpoint schema hash does not match the provided schema")
    model = DocumentVAE(ModelConfig.from_dict(payload["model_config"]), schema or stored_schema)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, int(payload["step"])
