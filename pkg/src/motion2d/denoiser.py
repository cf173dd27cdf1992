"""Dual-tower transformer that predicts the clean motion pair from a noised one.

Both characters run through the same weights: tower one processes (a, b)
while tower two processes (b, a), so swapping the characters at the input
swaps the outputs exactly. Each layer applies four residual pre-norm
sub-layers in order: self-attention over the character's own frames with
the condition vector prepended as an extra token, an optional reference
attention over [h1, f_ref] when a first-frame feature is present,
cross-attention to the local text tokens, and cross-attention to the other
character's features with the condition vector added to every key/value
row. Padded frames neither attend nor get attended to.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import torch
from torch import nn

from .checkpoint import load_checkpoint, save_checkpoint
from .text import TextFeatures, sinusoidal_codes


class DenoiserError(ValueError):
    """Invalid denoiser configuration or forward arguments."""


@dataclass
class DenoiserConfig:
    num_layers: int = 8
    model_dim: int = 256
    num_heads: int = 4
    max_len: int = 300
    input_dim: int = 34
    dropout: float = 0.1
    text_dim: int = 48
    num_train_timesteps: int = 1000

    def __post_init__(self):
        if self.num_layers < 1:
            raise DenoiserError("num_layers must be >= 1")
        if self.model_dim % self.num_heads != 0:
            raise DenoiserError(
                f"model_dim {self.model_dim} not divisible by num_heads {self.num_heads}"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DenoiserConfig":
        return cls(**data)


class TimestepEmbedding(nn.Module):
    """Sinusoidal code of the integer step passed through a 2-layer perceptron."""

    def __init__(self, model_dim: int, num_train_timesteps: int):
        super().__init__()
        self.num_train_timesteps = num_train_timesteps
        table = sinusoidal_codes(num_train_timesteps, model_dim)
        self.register_buffer("codes", torch.from_numpy(table).float())
        self.fc1 = nn.Linear(model_dim, model_dim)
        self.act = nn.SiLU()
        self.fc2 = nn.Linear(model_dim, model_dim)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        if torch.any(t < 0) or torch.any(t >= self.num_train_timesteps):
            raise DenoiserError(
                f"timestep out of range [0, {self.num_train_timesteps}): {t.tolist()}"
            )
        return self.fc2(self.act(self.fc1(self.codes[t.long()])))


class RefFrameEmbedding(nn.Module):
    """2-layer perceptron over the first-frame coordinates of one character."""

    def __init__(self, input_dim: int, model_dim: int):
        super().__init__()
        self.fc1 = nn.Linear(input_dim, model_dim)
        self.act = nn.SiLU()
        self.fc2 = nn.Linear(model_dim, model_dim)

    def forward(self, frame: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(frame)))


class InteractiveBlock(nn.Module):
    """One layer of the tower: self / reference / text / cross-character attention."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        dim, heads, p = cfg.model_dim, cfg.num_heads, cfg.dropout
        self.self_attn = nn.MultiheadAttention(dim, heads, dropout=p, batch_first=True)
        self.ref_attn = nn.MultiheadAttention(dim, heads, dropout=p, batch_first=True)
        self.text_attn = nn.MultiheadAttention(dim, heads, dropout=p, batch_first=True)
        self.cross_attn = nn.MultiheadAttention(dim, heads, dropout=p, batch_first=True)
        self.norm_self = nn.LayerNorm(dim)
        self.norm_ref = nn.LayerNorm(dim)
        self.norm_text = nn.LayerNorm(dim)
        self.norm_cross = nn.LayerNorm(dim)
        self.dropout = nn.Dropout(p)

    def forward(self, x, other, c_cond, text_kv, text_pad, f_ref, pad):
        """x, other: [N, L, dim]; c_cond: [N, dim]; text_kv: [N, T, dim];
        text_pad/pad: True where the position is padding; f_ref: [N, dim] or None."""
        # (1) self-attention with the condition prepended as one extra token
        seq = torch.cat([c_cond.unsqueeze(1), x], dim=1)
        normed = self.norm_self(seq)
        cond_pad = torch.zeros(x.shape[0], 1, dtype=torch.bool, device=x.device)
        seq_pad = torch.cat([cond_pad, pad], dim=1)
        attn, _ = self.self_attn(normed, normed, normed, key_padding_mask=seq_pad,
                                 need_weights=False)
        h = x + self.dropout(attn[:, 1:])

        # (2) reference attention over [h1, f_ref]; bypassed when absent
        if f_ref is not None:
            kv = torch.cat([h, f_ref.unsqueeze(1)], dim=1)
            normed_kv = self.norm_ref(kv)
            kv_pad = torch.cat([pad, cond_pad], dim=1)
            attn, _ = self.ref_attn(self.norm_ref(h), normed_kv, normed_kv,
                                    key_padding_mask=kv_pad, need_weights=False)
            h = h + self.dropout(attn)

        # (3) cross-attention to the local text tokens
        attn, _ = self.text_attn(self.norm_text(h), text_kv, text_kv,
                                 key_padding_mask=text_pad, need_weights=False)
        h = h + self.dropout(attn)

        # (4) cross-attention to the other character, condition added to k/v rows
        kv = other + c_cond.unsqueeze(1)
        attn, _ = self.cross_attn(self.norm_cross(h), kv, kv,
                                  key_padding_mask=pad, need_weights=False)
        h = h + self.dropout(attn)
        return h


@dataclass
class TextBatch:
    local: torch.Tensor       # [B, T, text_dim]
    pooled: torch.Tensor      # [B, text_dim]
    token_mask: torch.Tensor  # [B, T] bool, True on real tokens

    @property
    def batch_size(self) -> int:
        return int(self.local.shape[0])


def collate_text(features: list[TextFeatures], dtype=torch.float32) -> TextBatch:
    """Pad per-caption features to a common token count."""
    n_max = max(f.n_tokens for f in features)
    dim = features[0].dim
    local = torch.zeros(len(features), n_max, dim, dtype=dtype)
    pooled = torch.zeros(len(features), dim, dtype=dtype)
    token_mask = torch.zeros(len(features), n_max, dtype=torch.bool)
    for i, f in enumerate(features):
        if f.dim != dim:
            raise DenoiserError(f"caption {i} has text width {f.dim}, expected {dim}")
        local[i, :f.n_tokens] = torch.from_numpy(f.f_local).to(dtype)
        pooled[i] = torch.from_numpy(f.f_pooling).to(dtype)
        token_mask[i, :f.n_tokens] = True
    return TextBatch(local=local, pooled=pooled, token_mask=token_mask)


def null_text_batch(batch_size: int, text_dim: int, dtype=torch.float32) -> TextBatch:
    """All-zero condition used for the unconditional branch of guidance."""
    return TextBatch(
        local=torch.zeros(batch_size, 1, text_dim, dtype=dtype),
        pooled=torch.zeros(batch_size, text_dim, dtype=dtype),
        token_mask=torch.ones(batch_size, 1, dtype=torch.bool),
    )


class MotionDenoiser(nn.Module):
    """Shared-weight dual tower mapping a noised pair to clean-signal predictions."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        dim = cfg.model_dim
        self.input_proj = nn.Linear(cfg.input_dim, dim)
        frame_codes = sinusoidal_codes(cfg.max_len, dim)
        self.register_buffer("frame_codes", torch.from_numpy(frame_codes).float())
        self.time_embed = TimestepEmbedding(dim, cfg.num_train_timesteps)
        self.pool_proj = nn.Linear(cfg.text_dim, dim)
        self.text_proj = nn.Linear(cfg.text_dim, dim)
        self.ref_embed = RefFrameEmbedding(cfg.input_dim, dim)
        self.blocks = nn.ModuleList([InteractiveBlock(cfg) for _ in range(cfg.num_layers)])
        self.out_norm = nn.LayerNorm(dim)
        self.output_proj = nn.Linear(dim, cfg.input_dim)

    def forward(self, x: torch.Tensor, t: torch.Tensor, text: TextBatch,
                ref: torch.Tensor | None = None,
                mask: torch.Tensor | None = None) -> torch.Tensor:
        """x: [B, 2, L, input_dim]; t: [B] ints; ref: [B, 2, input_dim] or None;
        mask: [B, L] bool (True on valid frames). Returns x0 predictions, x-shaped."""
        if x.ndim != 4 or x.shape[1] != 2 or x.shape[3] != self.cfg.input_dim:
            raise DenoiserError(f"expected [B, 2, L, {self.cfg.input_dim}], got {tuple(x.shape)}")
        B, _, L, D = x.shape
        if L > self.cfg.max_len:
            raise DenoiserError(f"length {L} exceeds max_len {self.cfg.max_len}")
        if t.ndim == 0:
            t = t.expand(B)
        if text.batch_size != B:
            raise DenoiserError(f"text batch {text.batch_size} != motion batch {B}")
        if mask is None:
            mask = torch.ones(B, L, dtype=torch.bool, device=x.device)

        c_cond = self.pool_proj(text.pooled) + self.time_embed(t)      # [B, dim]
        text_kv = self.text_proj(text.local)                           # [B, T, dim]
        text_pad = ~text.token_mask

        # fold the two characters into the batch: rows (b0c0, b0c1, b1c0, ...)
        h = self.input_proj(x.reshape(B * 2, L, D)) + self.frame_codes[:L]
        c2 = c_cond.repeat_interleave(2, dim=0)
        text_kv2 = text_kv.repeat_interleave(2, dim=0)
        text_pad2 = text_pad.repeat_interleave(2, dim=0)
        pad2 = ~mask.repeat_interleave(2, dim=0)
        f_ref2 = None
        if ref is not None:
            if ref.shape != (B, 2, D):
                raise DenoiserError(f"ref must be [B, 2, {D}], got {tuple(ref.shape)}")
            f_ref2 = self.ref_embed(ref.reshape(B * 2, D))

        for block in self.blocks:
            other = h.reshape(B, 2, L, -1).flip(1).reshape(B * 2, L, -1)
            h = block(h, other, c2, text_kv2, text_pad2, f_ref2, pad2)

        out = self.output_proj(self.out_norm(h))
        return out.reshape(B, 2, L, D)

    def denoise_pair(self, x, t, text, ref=None, mask=None):
        return self(x, t, text, ref=ref, mask=mask)

    def save(self, path, extra: dict | None = None) -> None:
        save_checkpoint(path, {"denoiser": self.cfg.to_dict()},
                        dict(self.state_dict()), extra)


def load_denoiser(path) -> tuple[MotionDenoiser, dict, dict]:
    """Rebuild a denoiser from a checkpoint, verifying tensor shapes."""
    config, tensors, extra = load_checkpoint(path)
    cfg = DenoiserConfig.from_dict(config["denoiser"])
    model = MotionDenoiser(cfg)
    state = {name: torch.from_numpy(np.array(value)) for name, value in tensors.items()}
    expected = {name: tuple(p.shape) for name, p in model.state_dict().items()}
    for name, value in state.items():
        if name not in expected:
            raise DenoiserError(f"unexpected tensor {name!r} in checkpoint")
        if tuple(value.shape) != expected[name]:
            raise DenoiserError(
                f"tensor {name!r} has shape {tuple(value.shape)}, config implies {expected[name]}"
            )
    missing = set(expected) - set(state)
    if missing:
        raise DenoiserError(f"checkpoint missing tensors: {sorted(missing)}")
    model.load_state_dict(state)
    return model, config, extra
