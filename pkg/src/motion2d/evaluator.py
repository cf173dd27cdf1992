"""Contrastive text-motion evaluation model and the retrieval/FID metrics.

The evaluation model embeds motions with a small transformer encoder and
captions with a projection head over their pooled text features; it is
trained with a symmetric in-batch contrastive objective and a learned
temperature, then frozen for metric computation and for the second-stage
reward-style losses. All metrics are deterministic given their seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
import torch
from torch import nn

from .checkpoint import load_checkpoint, save_checkpoint
from .data import MotionDataset
from .text import sinusoidal_codes


class EvaluatorError(ValueError):
    """Invalid evaluator configuration, inputs, or metric arguments."""


@dataclass
class EvalConfig:
    d_eval: int = 32
    model_dim: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ff_size: int = 128
    max_len: int = 300
    input_dim: int = 68      # both characters' coordinates per frame
    text_dim: int = 48
    learning_rate: float = 1e-4
    batch_size: int = 8
    steps: int = 300
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EvalConfig":
        return cls(**data)


class EvalModel(nn.Module):
    """Enc_motion and Enc_text mapping into a shared embedding space."""

    def __init__(self, cfg: EvalConfig):
        super().__init__()
        self.cfg = cfg
        self.input_proj = nn.Linear(cfg.input_dim, cfg.model_dim)
        codes = sinusoidal_codes(cfg.max_len, cfg.model_dim)
        self.register_buffer("frame_codes", torch.from_numpy(codes).float())
        layer = nn.TransformerEncoderLayer(
            d_model=cfg.model_dim, nhead=cfg.num_heads, dim_feedforward=cfg.ff_size,
            dropout=0.0, batch_first=True, norm_first=True)
        self.encoder = nn.TransformerEncoder(layer, num_layers=cfg.num_layers)
        self.motion_head = nn.Linear(cfg.model_dim, cfg.d_eval)
        self.text_head = nn.Sequential(
            nn.Linear(cfg.text_dim, cfg.model_dim),
            nn.SiLU(),
            nn.Linear(cfg.model_dim, cfg.d_eval),
        )
        self.logit_scale = nn.Parameter(torch.tensor(math.log(1 / 0.07)))

    def embed_motion(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        """x: [B, 2, L, 34] -> [B, d_eval]; masked mean pooling over valid frames."""
        if x.ndim != 4 or x.shape[1] != 2:
            raise EvaluatorError(f"expected [B, 2, L, 34], got {tuple(x.shape)}")
        B, _, L, D = x.shape
        frames = x.permute(0, 2, 1, 3).reshape(B, L, 2 * D)
        if mask is None:
            mask = torch.ones(B, L, dtype=torch.bool, device=x.device)
        h = self.input_proj(frames) + self.frame_codes[:L]
        h = self.encoder(h, src_key_padding_mask=~mask)
        w = mask.to(h.dtype).unsqueeze(-1)
        pooled = (h * w).sum(dim=1) / w.sum(dim=1).clamp_min(1.0)
        return self.motion_head(pooled)

    def embed_text(self, pooled_text: torch.Tensor) -> torch.Tensor:
        """pooled_text: [B, text_dim] encoder-contract pooled features -> [B, d_eval]."""
        return self.text_head(pooled_text)

    def save(self, path, extra: dict | None = None) -> None:
        save_checkpoint(path, {"evaluator": self.cfg.to_dict()},
                        dict(self.state_dict()), extra)


def load_eval_model(path) -> EvalModel:
    config, tensors, _ = load_checkpoint(path)
    cfg = EvalConfig.from_dict(config["evaluator"])
    model = EvalModel(cfg)
    state = {name: torch.from_numpy(np.array(value)) for name, value in tensors.items()}
    model.load_state_dict(state)
    model.eval()
    return model


def _step_seed(seed: int, step: int) -> int:
    import hashlib

    digest = hashlib.blake2b(f"eval:{seed}:{step}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") % (2 ** 63)


def train_eval_model(dataset: MotionDataset, cfg: EvalConfig) -> EvalModel:
    """Symmetric contrastive training over matched (caption, motion) pairs."""
    if len(dataset) < cfg.batch_size:
        raise EvaluatorError(
            f"dataset of {len(dataset)} samples is smaller than batch size {cfg.batch_size}"
        )
    torch.manual_seed(_step_seed(cfg.seed, -1))
    model = EvalModel(cfg)
    model.train()
    optim = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate)
    n = len(dataset)
    for step in range(cfg.steps):
        torch.manual_seed(_step_seed(cfg.seed, step))
        indices = torch.randperm(n)[:cfg.batch_size]
        x, mask, text, _ = dataset.batch(indices)
        me = model.embed_motion(x, mask)
        te = model.embed_text(text.pooled)
        me = me / me.norm(dim=-1, keepdim=True).clamp_min(1e-12)
        te = te / te.norm(dim=-1, keepdim=True).clamp_min(1e-12)
        logits = model.logit_scale.exp() * te @ me.T
        labels = torch.arange(len(indices))
        loss = 0.5 * (nn.functional.cross_entropy(logits, labels)
                      + nn.functional.cross_entropy(logits.T, labels))
        optim.zero_grad()
        loss.backward()
        optim.step()
    model.eval()
    return model


def embed_dataset(model: EvalModel, dataset: MotionDataset,
                  batch_size: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Frozen embeddings for every (caption, motion) pair in the dataset."""
    model.eval()
    text_out, motion_out = [], []
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            idx = range(start, min(start + batch_size, len(dataset)))
            x, mask, text, _ = dataset.batch(idx)
            motion_out.append(model.embed_motion(x, mask).numpy())
            text_out.append(model.embed_text(text.pooled).numpy())
    return np.concatenate(text_out), np.concatenate(motion_out)


@dataclass
class GaussianStats:
    mu: np.ndarray
    sigma: np.ndarray
    n: int

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=np.float64))
        if self.n < 2:
            raise EvaluatorError(f"GaussianStats needs n >= 2, got {self.n}")
        if self.sigma.shape != (self.mu.shape[0], self.mu.shape[0]):
            raise EvaluatorError(
                f"sigma shape {self.sigma.shape} incompatible with mu {self.mu.shape}"
            )
        if not np.allclose(self.sigma, self.sigma.T, atol=1e-8):
            raise EvaluatorError("sigma must be symmetric")


def fit_gaussian(features: np.ndarray) -> GaussianStats:
    """Sample mean and unbiased covariance of a feature population."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise EvaluatorError(f"need at least 2 feature rows, got shape {features.shape}")
    mu = features.mean(axis=0)
    sigma = np.atleast_2d(np.cov(features, rowvar=False))
    return GaussianStats(mu=mu, sigma=sigma, n=features.shape[0])


def _sqrt_trace_of_product(sigma_a: np.ndarray, sigma_b: np.ndarray) -> float:
    """tr((Sa Sb)^(1/2)) via eigendecomposition of the symmetrized product.

    Uses sqrt(Sa) Sb sqrt(Sa), which shares eigenvalues with Sa Sb but is
    symmetric PSD; finite-sample negativity is clamped to zero.
    """
    evals_a, evecs_a = np.linalg.eigh(sigma_a)
    root_a = (evecs_a * np.sqrt(np.clip(evals_a, 0.0, None))) @ evecs_a.T
    inner = root_a @ sigma_b @ root_a
    inner = (inner + inner.T) / 2.0
    evals = np.linalg.eigvalsh(inner)
    return float(np.sqrt(np.clip(evals, 0.0, None)).sum())


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """Squared Fréchet distance between two Gaussian fits."""
    if a.mu.shape != b.mu.shape:
        raise EvaluatorError(
            f"dimension mismatch: {a.mu.shape[0]} vs {b.mu.shape[0]}"
        )
    diff = a.mu - b.mu
    value = float(diff @ diff + np.trace(a.sigma) + np.trace(b.sigma)
                  - 2.0 * _sqrt_trace_of_product(a.sigma, b.sigma))
    return max(value, 0.0)


def r_precision_from_embeddings(text_emb: np.ndarray, motion_emb: np.ndarray,
                                batch_size: int = 32, trials: int = 1000,
                                seed: int = 0, ks=(1, 2, 3)) -> dict:
    """Retrieval calibration: rank the true caption among batch_size candidates.

    Each trial draws one matched pair plus batch_size - 1 distractor captions
    and ranks candidates by Euclidean distance to the motion embedding.
    Returns top-k percentages.
    """
    text_emb = np.asarray(text_emb, dtype=np.float64)
    motion_emb = np.asarray(motion_emb, dtype=np.float64)
    n = text_emb.shape[0]
    if motion_emb.shape[0] != n:
        raise EvaluatorError("text and motion embedding counts differ")
    if n < batch_size:
        raise EvaluatorError(f"need at least batch_size={batch_size} pairs, got {n}")
    rng = np.random.default_rng(seed)
    hits = {k: 0 for k in ks}
    for _ in range(trials):
        i = int(rng.integers(n))
        distractors = rng.choice(n - 1, size=batch_size - 1, replace=False)
        distractors = np.where(distractors >= i, distractors + 1, distractors)
        candidates = np.concatenate([[i], distractors])
        dists = np.linalg.norm(text_emb[candidates] - motion_emb[i], axis=1)
        rank = int((dists < dists[0]).sum())
        for k in ks:
            if rank < k:
                hits[k] += 1
    return {k: 100.0 * hits[k] / trials for k in ks}


def mm_distance(text_emb: np.ndarray, motion_emb: np.ndarray) -> float:
    """Mean Euclidean distance between matched caption and motion embeddings."""
    text_emb = np.asarray(text_emb, dtype=np.float64)
    motion_emb = np.asarray(motion_emb, dtype=np.float64)
    if text_emb.shape != motion_emb.shape or text_emb.shape[0] == 0:
        raise EvaluatorError("matched embedding arrays must be equal-shaped and nonempty")
    return float(np.linalg.norm(text_emb - motion_emb, axis=1).mean())


def diversity(motion_emb: np.ndarray, num_pairs: int = 300, seed: int = 0) -> float:
    """Mean embedding distance over seeded random pairs of distinct motions."""
    motion_emb = np.asarray(motion_emb, dtype=np.float64)
    n = motion_emb.shape[0]
    if n < 2:
        raise EvaluatorError(f"diversity needs at least 2 motions, got {n}")
    rng = np.random.default_rng(seed)
    first = rng.integers(n, size=num_pairs)
    shift = rng.integers(1, n, size=num_pairs)
    second = (first + shift) % n  # distinct from first by construction
    return float(np.linalg.norm(motion_emb[first] - motion_emb[second], axis=1).mean())
