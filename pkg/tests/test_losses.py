import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from motion2d.losses import (
    LossError,
    LossWeights,
    bone_length_loss,
    distance_map_loss,
    joint_awareness_loss,
    masked_mse,
    motion_fid_loss,
    recon_loss,
    text_fid_loss,
    total_loss,
    velocity_loss,
)
from motion2d.motion import SkeletonTopology, bone_lengths
from tests.oracles import relative_grad_error


def rand_pair(L=4, seed=0, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(2, L, 34, generator=g, dtype=dtype)


def close_pair(L=3, seed=0):
    """Pair whose characters sit near each other so cross contacts exist."""
    g = torch.Generator().manual_seed(seed)
    base = 0.05 * torch.randn(1, 1, 34, generator=g, dtype=torch.float64)
    return base.expand(2, L, 34) + 0.02 * torch.randn(2, L, 34, generator=g, dtype=torch.float64)


def rotate_pair(x, angle, center=(0.1, -0.2)):
    joints = x.reshape(2, -1, 17, 2).clone()
    c, s = np.cos(angle), np.sin(angle)
    rot = torch.tensor([[c, -s], [s, c]], dtype=x.dtype)
    cx = torch.tensor(center, dtype=x.dtype)
    rotated = (joints - cx) @ rot.T + cx
    return rotated.reshape(2, -1, 34)


def test_recon_zero_and_offset():
    gt = rand_pair(seed=1)
    assert recon_loss(gt, gt).item() == 0.0
    delta = 0.25
    assert recon_loss(gt + delta, gt).item() == pytest.approx(delta ** 2, rel=1e-9)


def test_recon_equals_training_target():
    from motion2d.diffusion import training_target

    gt, pred = rand_pair(seed=2), rand_pair(seed=3)
    mask = torch.tensor([True, True, False, False])
    assert recon_loss(pred, gt, mask).item() == training_target(gt, pred, mask).item()


def test_masked_mse_ignores_padding():
    gt, pred = rand_pair(seed=4), rand_pair(seed=5)
    mask = torch.tensor([True, True, True, False])
    garbled = pred.clone()
    garbled[:, 3] = 1e6
    assert masked_mse(pred, gt, mask).item() == masked_mse(garbled, gt, mask).item()


def test_masked_mse_batched_matches_loop():
    g = torch.Generator().manual_seed(6)
    pred = torch.randn(3, 2, 4, 34, generator=g, dtype=torch.float64)
    gt = torch.randn(3, 2, 4, 34, generator=g, dtype=torch.float64)
    mask = torch.ones(3, 4, dtype=torch.bool)
    batched = masked_mse(pred, gt, mask).item()
    looped = np.mean([masked_mse(pred[i], gt[i], mask[i]).item() for i in range(3)])
    assert batched == pytest.approx(looped, rel=1e-12)


def test_bone_loss_zero_and_translation():
    gt = rand_pair(seed=7)
    assert bone_length_loss(gt, gt).item() == 0.0
    shifted = gt.clone().reshape(2, 4, 17, 2)
    shifted[..., 0] += 0.4
    shifted[..., 1] -= 0.2
    assert bone_length_loss(shifted.reshape(2, 4, 34), gt).item() < 1e-20


def test_bone_loss_uniform_scaling_value():
    # Doubling about the origin: ||2b|| - ||b|| = ||b||, so the loss equals
    # the mean of the squared ground-truth bone lengths.
    gt = rand_pair(L=3, seed=8)
    pred = 2.0 * gt
    topo = SkeletonTopology()
    per_frame = []
    for c in range(2):
        for f in range(3):
            pose = np.zeros((17, 3))
            pose[:, :2] = gt[c, f].reshape(17, 2).numpy()
            per_frame.append(bone_lengths(pose, topo) ** 2)
    expected = float(np.mean(per_frame))
    assert bone_length_loss(pred, gt, topo).item() == pytest.approx(expected, rel=1e-9)


def test_velocity_zero_cases():
    gt = rand_pair(seed=9)
    assert velocity_loss(gt, gt).item() == 0.0
    # constant per-frame offset has zero velocity error
    assert velocity_loss(gt + 0.7, gt).item() < 1e-20
    single = rand_pair(L=1, seed=10)
    assert velocity_loss(single, single * 2).item() == 0.0


def test_velocity_drifting_joint_value():
    # One coordinate drifting +0.1/frame over 3 frames: two velocity steps of
    # squared error 0.01 each, averaged over 2 steps x 2 chars x 34 coords.
    gt = torch.zeros(2, 3, 34, dtype=torch.float64)
    pred = gt.clone()
    pred[0, :, 0] = torch.tensor([0.0, 0.1, 0.2], dtype=torch.float64)
    expected = 2 * 0.1 ** 2 / (2 * 2 * 34)
    assert velocity_loss(pred, gt).item() == pytest.approx(expected, rel=1e-12)


def test_distance_map_zero_and_rigid_invariance():
    gt = rand_pair(seed=11)
    assert distance_map_loss(gt, gt).item() == 0.0
    rotated = rotate_pair(gt, angle=0.83)
    assert distance_map_loss(rotated, gt).item() < 1e-20


def test_distance_map_detects_separation():
    gt = close_pair(seed=12)
    pred = gt.clone().reshape(2, 3, 17, 2)
    pred[1, :, :, 0] += 0.5  # pull character 2 away
    assert distance_map_loss(pred.reshape(2, 3, 34), gt).item() > 1e-4


def test_joint_awareness_empty_contact_set():
    gt = torch.zeros(2, 2, 34, dtype=torch.float64)
    gt[1] += 10.0  # characters far apart everywhere
    pred = gt + 0.3
    assert joint_awareness_loss(pred, gt, contact_threshold=0.1).item() == 0.0


def test_joint_awareness_handshake_value():
    # Exactly one ground-truth contact: char-0 joint 9 at the origin and
    # char-1 joint 10 at distance 0.05. Prediction separates them to 0.25,
    # so the loss is (0.25 - 0.05)^2 over a single contact element.
    gt = torch.zeros(2, 1, 17, 2, dtype=torch.float64)
    gt[0, 0, :, 1] = torch.linspace(0, 8, 17, dtype=torch.float64)
    gt[1, 0, :, 1] = torch.linspace(0, 8, 17, dtype=torch.float64) + 20.0
    gt[0, 0, 9] = torch.tensor([0.0, 0.0], dtype=torch.float64)
    gt[1, 0, 10] = torch.tensor([0.05, 0.0], dtype=torch.float64)
    pred = gt.clone()
    pred[1, 0, 10, 0] = 0.25
    loss = joint_awareness_loss(pred.reshape(2, 1, 34), gt.reshape(2, 1, 34),
                                contact_threshold=0.1)
    assert loss.item() == pytest.approx(0.2 ** 2, rel=1e-12)
    same = joint_awareness_loss(gt.reshape(2, 1, 34), gt.reshape(2, 1, 34),
                                contact_threshold=0.1)
    assert same.item() == 0.0


def test_joint_awareness_rigid_invariance():
    gt = close_pair(seed=13)
    assert joint_awareness_loss(gt, gt).item() == 0.0
    rotated = rotate_pair(gt, angle=-0.41)
    rotated_gt = rotate_pair(gt, angle=-0.41)
    assert joint_awareness_loss(rotated, rotated_gt).item() < 1e-20


def test_fid_losses_cosine_anchors():
    a = torch.tensor([1.0, 0.0], dtype=torch.float64)
    b = torch.tensor([0.0, 1.0], dtype=torch.float64)
    assert text_fid_loss(a, a).item() == pytest.approx(0.0, abs=1e-12)
    assert text_fid_loss(a, b).item() == pytest.approx(1.0, abs=1e-12)
    assert text_fid_loss(a, -a).item() == pytest.approx(2.0, abs=1e-12)
    assert motion_fid_loss(a, a).item() == pytest.approx(0.0, abs=1e-12)


def test_fid_losses_reject_zero_norm():
    a = torch.tensor([1.0, 0.0], dtype=torch.float64)
    z = torch.zeros(2, dtype=torch.float64)
    with pytest.raises(LossError):
        text_fid_loss(a, z)
    with pytest.raises(LossError):
        motion_fid_loss(z, a)


def test_total_loss_stages():
    terms = {name: torch.tensor(0.0) for name in
             ("recon", "bone", "velocity", "distance_map", "joint_awareness",
              "text_fid", "motion_fid")}
    w = LossWeights()
    assert total_loss(1, terms, w).item() == 0.0
    only_recon = LossWeights(recon=1.0, bone=0, velocity=0, distance_map=0,
                             joint_awareness=0)
    terms["recon"] = torch.tensor(0.42)
    assert total_loss(1, terms, only_recon).item() == pytest.approx(0.42)
    # stage 2 with zero FID weights reduces to stage 1
    terms = {k: torch.tensor(float(i + 1)) for i, k in enumerate(
        ("recon", "bone", "velocity", "distance_map", "joint_awareness",
         "text_fid", "motion_fid"))}
    w0 = LossWeights(text_fid=0.0, motion_fid=0.0)
    assert total_loss(2, terms, w0).item() == total_loss(1, terms, w0).item()
    w2 = LossWeights.stage2()
    assert total_loss(2, terms, w2).item() == pytest.approx(
        total_loss(1, terms, w2).item() + 0.01 * terms["text_fid"].item()
        + 0.01 * terms["motion_fid"].item())


@given(scale=st.floats(min_value=0.0, max_value=5.0, allow_nan=False))
@settings(max_examples=20, deadline=None)
def test_total_loss_linear_in_weights(scale):
    terms = {k: torch.tensor(float(i + 1), dtype=torch.float64) for i, k in enumerate(
        ("recon", "bone", "velocity", "distance_map", "joint_awareness"))}
    base = LossWeights(recon=0.3, bone=0.2, velocity=0.1, distance_map=0.25,
                       joint_awareness=0.15)
    scaled = LossWeights(recon=0.3 * scale, bone=0.2 * scale, velocity=0.1 * scale,
                         distance_map=0.25 * scale, joint_awareness=0.15 * scale)
    assert total_loss(1, terms, scaled).item() == pytest.approx(
        scale * total_loss(1, terms, base).item(), abs=1e-9)


def test_weights_reject_negative():
    with pytest.raises(LossError):
        LossWeights(recon=-0.1)
    with pytest.raises(LossError):
        total_loss(3, {}, LossWeights())


def _loss_cases():
    mask = torch.tensor([True, True, True, False])
    gt_far = rand_pair(seed=20)
    gt_close = close_pair(L=4, seed=21)
    return [
        ("recon", lambda p: recon_loss(p, gt_far, mask), gt_far),
        ("bone", lambda p: bone_length_loss(p, gt_far, mask=mask), gt_far),
        ("velocity", lambda p: velocity_loss(p, gt_far, mask), gt_far),
        ("distance_map", lambda p: distance_map_loss(p, gt_far, mask), gt_far),
        ("joint_awareness",
         lambda p: joint_awareness_loss(p, gt_close, mask, contact_threshold=0.2),
         gt_close),
    ]


@pytest.mark.parametrize("name,fn,gt", _loss_cases(), ids=lambda v: v if isinstance(v, str) else "")
def test_gradients_match_finite_differences(name, fn, gt):
    for seed in range(3):
        g = torch.Generator().manual_seed(100 + seed)
        pred = gt + 0.1 * torch.randn(*gt.shape, generator=g, dtype=torch.float64)
        err = relative_grad_error(fn, pred)
        assert err < 1e-4, (name, seed, err)


def test_fid_loss_gradient_through_embedding():
    # Gradient flows to the prediction only; the gt branch is plain data.
    g = torch.Generator().manual_seed(31)
    proj = torch.randn(8, 2 * 4 * 34, generator=g, dtype=torch.float64)

    def embed(motion):
        return proj @ motion.reshape(-1)

    gt = rand_pair(L=4, seed=32)
    gt_emb = embed(gt).detach()

    def fn(pred):
        return motion_fid_loss(gt_emb, embed(pred))

    pred0 = gt + 0.2 * torch.randn(*gt.shape, generator=g, dtype=torch.float64)
    err = relative_grad_error(fn, pred0)
    assert err < 1e-4
