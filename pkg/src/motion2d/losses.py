"""First- and second-stage loss terms, all pure differentiable functions.

Shape convention: a motion pair is a tensor of shape [..., 2, L, 34]
(two characters, L frames, 17 joints x 2 coordinates). Masks mark valid
frames with shape [..., L]; all losses average over the count of valid
(mask-on) elements so padded frames never contribute value or gradient.
The FID-flavoured terms operate on embeddings; the caller embeds motions
with the frozen evaluation model (the ground-truth branch under no_grad).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .motion import SkeletonTopology

_EPS_SQ = 1e-24


class LossError(ValueError):
    """Invalid loss inputs or configuration."""


@dataclass
class LossWeights:
    recon: float = 1.0
    bone: float = 0.5
    velocity: float = 0.5
    distance_map: float = 0.5
    joint_awareness: float = 0.5
    text_fid: float = 0.0
    motion_fid: float = 0.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise LossError(f"loss weight {name} must be nonnegative, got {value}")

    @classmethod
    def stage1(cls) -> "LossWeights":
        return cls()

    @classmethod
    def stage2(cls, fid_weight: float = 0.01) -> "LossWeights":
        # the reward-style terms are deliberately tiny relative to the rest
        return cls(text_fid=fid_weight, motion_fid=fid_weight)


def _frame_mask(x: torch.Tensor, mask: torch.Tensor | None) -> torch.Tensor:
    """Normalize a frame mask to x's [...,"L"] layout; None means all valid."""
    length = x.shape[-2]
    if mask is None:
        shape = x.shape[:-3] + (length,)
        return torch.ones(shape, dtype=torch.bool, device=x.device)
    if mask.shape[-1] != length:
        raise LossError(f"mask length {mask.shape[-1]} != frame count {length}")
    return mask.bool()


def _masked_mean(sq_err: torch.Tensor, weight: torch.Tensor) -> torch.Tensor:
    """Mean of sq_err over weight-on elements; weight is pre-expanded to sq_err."""
    weight = weight.to(sq_err.dtype)
    count = weight.sum()
    if count == 0:
        return sq_err.sum() * 0.0
    return (sq_err * weight).sum() / count


def masked_mse(pred: torch.Tensor, target: torch.Tensor,
               mask: torch.Tensor | None = None) -> torch.Tensor:
    """Mean squared error over valid frames; the normalizer counts valid elements."""
    if pred.shape != target.shape:
        raise LossError(f"shape mismatch {tuple(pred.shape)} vs {tuple(target.shape)}")
    mask = _frame_mask(pred, mask)
    sq = (pred - target) ** 2
    # expand mask [..., L] over the char and coord axes of [..., C, L, D]
    w = mask.unsqueeze(-2).unsqueeze(-1).expand_as(sq)
    return _masked_mean(sq, w)


def safe_norm(v: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """Euclidean norm with a zero (not NaN) gradient at coincident points."""
    sq = (v * v).sum(dim=dim)
    return torch.where(sq > 0, torch.sqrt(sq.clamp_min(_EPS_SQ)), torch.zeros_like(sq))


def _as_joints(x: torch.Tensor) -> torch.Tensor:
    """[..., 2, L, 34] -> [..., 2, L, 17, 2]."""
    if x.shape[-1] != 34:
        raise LossError(f"expected coordinate dim 34, got {x.shape[-1]}")
    return x.reshape(*x.shape[:-1], 17, 2)


def recon_loss(pred: torch.Tensor, gt: torch.Tensor,
               mask: torch.Tensor | None = None) -> torch.Tensor:
    """Masked MSE on raw coordinates; identical to the diffusion training target."""
    return masked_mse(pred, gt, mask)


def bone_length_loss(pred: torch.Tensor, gt: torch.Tensor,
                     topology: SkeletonTopology | None = None,
                     mask: torch.Tensor | None = None) -> torch.Tensor:
    """Squared difference of per-edge bone lengths, averaged over valid frames."""
    topology = topology or SkeletonTopology()
    edges = torch.from_numpy(topology.edge_array())
    pj, gj = _as_joints(pred), _as_joints(gt)
    pv = pj[..., edges[:, 0], :] - pj[..., edges[:, 1], :]
    gv = gj[..., edges[:, 0], :] - gj[..., edges[:, 1], :]
    sq = (safe_norm(pv) - safe_norm(gv)) ** 2  # [..., 2, L, E]
    mask = _frame_mask(pred, mask)
    w = mask.unsqueeze(-2).unsqueeze(-1).expand_as(sq)
    return _masked_mean(sq, w)


def velocity_loss(pred: torch.Tensor, gt: torch.Tensor,
                  mask: torch.Tensor | None = None) -> torch.Tensor:
    """Masked MSE between first-order frame differences; 0 for single frames."""
    if pred.shape != gt.shape:
        raise LossError(f"shape mismatch {tuple(pred.shape)} vs {tuple(gt.shape)}")
    if pred.shape[-2] < 2:
        return pred.sum() * 0.0
    pv = pred[..., 1:, :] - pred[..., :-1, :]
    gv = gt[..., 1:, :] - gt[..., :-1, :]
    mask = _frame_mask(pred, mask)
    vmask = mask[..., 1:] & mask[..., :-1]
    sq = (pv - gv) ** 2
    w = vmask.unsqueeze(-2).unsqueeze(-1).expand_as(sq)
    return _masked_mean(sq, w)


def _pairwise_distances(x: torch.Tensor) -> torch.Tensor:
    """[..., L, J, 2] -> [..., L, J, J] Euclidean distances."""
    diffs = x.unsqueeze(-2) - x.unsqueeze(-3)
    return safe_norm(diffs)


def _joint_union(x: torch.Tensor) -> torch.Tensor:
    """[..., 2, L, 34] -> [..., L, 34, 2]: both characters' joints per frame."""
    joints = _as_joints(x)  # [..., 2, L, 17, 2]
    joints = joints.movedim(-4, -3)  # [..., L, 2, 17, 2]
    return joints.reshape(*joints.shape[:-3], 34, 2)


def distance_map_loss(pred: torch.Tensor, gt: torch.Tensor,
                      mask: torch.Tensor | None = None) -> torch.Tensor:
    """MSE between the 34x34 pairwise distance maps over both characters."""
    dp = _pairwise_distances(_joint_union(pred))
    dg = _pairwise_distances(_joint_union(gt))
    sq = (dp - dg) ** 2  # [..., L, 34, 34]
    mask = _frame_mask(pred, mask)
    w = mask.unsqueeze(-1).unsqueeze(-1).expand_as(sq)
    return _masked_mean(sq, w)


def joint_awareness_loss(pred: torch.Tensor, gt: torch.Tensor,
                         mask: torch.Tensor | None = None,
                         contact_threshold: float = 0.1) -> torch.Tensor:
    """Cross-character distance error restricted to ground-truth contacts.

    A contact is a (char-0 joint, char-1 joint) pair whose ground-truth
    distance falls below the threshold in a valid frame; with no contacts
    anywhere the loss is exactly zero.
    """
    pj, gj = _as_joints(pred), _as_joints(gt)
    # cross block: distances between char 0 and char 1, shape [..., L, 17, 17]
    pd = safe_norm(pj[..., 0, :, :, None, :] - pj[..., 1, :, None, :, :])
    gd = safe_norm(gj[..., 0, :, :, None, :] - gj[..., 1, :, None, :, :])
    mask = _frame_mask(pred, mask)
    contact = (gd < contact_threshold) & mask.unsqueeze(-1).unsqueeze(-1)
    sq = (pd - gd) ** 2
    total = (sq * contact.to(sq.dtype)).sum()
    count = contact.sum()
    if count == 0:
        return pred.sum() * 0.0
    return total / count


def _checked_cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape != b.shape:
        raise LossError(f"embedding shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    na = torch.linalg.vector_norm(a, dim=-1)
    nb = torch.linalg.vector_norm(b, dim=-1)
    if torch.any(na == 0) or torch.any(nb == 0):
        raise LossError("zero-norm embedding; cosine similarity undefined")
    return (a * b).sum(-1) / (na * nb)


def text_fid_loss(caption_emb: torch.Tensor, pred_motion_emb: torch.Tensor) -> torch.Tensor:
    """1 - cos(caption embedding, predicted-motion embedding); range [0, 2]."""
    return (1.0 - _checked_cosine(caption_emb, pred_motion_emb)).mean()


def motion_fid_loss(gt_motion_emb: torch.Tensor, pred_motion_emb: torch.Tensor) -> torch.Tensor:
    """1 - cos(ground-truth embedding, predicted embedding); gt side is data."""
    return (1.0 - _checked_cosine(gt_motion_emb, pred_motion_emb)).mean()


FIRST_STAGE_TERMS = ("recon", "bone", "velocity", "distance_map", "joint_awareness")
SECOND_STAGE_TERMS = FIRST_STAGE_TERMS + ("text_fid", "motion_fid")


def total_loss(stage: int, terms: dict, weights: LossWeights) -> torch.Tensor:
    """Weighted sum of the per-term losses for the given training stage."""
    if stage not in (1, 2):
        raise LossError(f"stage must be 1 or 2, got {stage}")
    names = FIRST_STAGE_TERMS if stage == 1 else SECOND_STAGE_TERMS
    total = None
    for name in names:
        weight = getattr(weights, name)
        if name not in terms:
            if weight == 0:
                continue
            raise LossError(f"missing loss term {name!r} with nonzero weight")
        contribution = weight * terms[name]
        total = contribution if total is None else total + contribution
    if total is None:
        raise LossError("no loss terms contributed")
    return total
