"""Noise schedule, forward noising, and the DDIM sampler (x0 parameterization).

The forward process multiplies the signal by sqrt(alpha_t) per step and adds
(1 - alpha_t) variance of Gaussian noise; its closed-form marginal is
``s_t = sqrt(alpha_bar_t) s_0 + sqrt(1 - alpha_bar_t) eps``. The network
predicts the clean signal, so the DDIM update first recovers the implied
noise from the x0 estimate and then re-noises to the target step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


class ScheduleError(ValueError):
    """Rejected noise-schedule construction or step arguments."""


@dataclass
class NoiseSchedule:
    """Per-step retention factors and their cumulative products.

    ``alpha_bar[t]`` is the product of ``alpha[0..t]``; index -1 denotes the
    clean boundary where alpha_bar is exactly 1. Direct construction is a
    trusted path for test rigs; use :meth:`from_alphas` or
    :func:`build_schedule` for validated schedules.
    """

    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T(self) -> int:
        return int(self.alpha.shape[0])

    @classmethod
    def from_alphas(cls, alphas) -> "NoiseSchedule":
        alpha = np.asarray(alphas, dtype=np.float64)
        if alpha.ndim != 1 or alpha.shape[0] < 1:
            raise ScheduleError("alphas must be a non-empty 1-D array")
        if np.any(alpha <= 0) or np.any(alpha > 1):
            raise ScheduleError("alphas must lie in (0, 1]")
        alpha_bar = np.cumprod(alpha)
        if alpha.shape[0] > 1 and not np.all(np.diff(alpha_bar) < 0):
            raise ScheduleError("alpha_bar must be strictly decreasing")
        return cls(alpha=alpha, alpha_bar=alpha_bar)

    def alpha_bar_at(self, t: int) -> float:
        if t == -1:
            return 1.0
        if not 0 <= t < self.T:
            raise ScheduleError(f"timestep {t} out of range [0, {self.T})")
        return float(self.alpha_bar[t])

    def gather_alpha_bar(self, t: torch.Tensor, ndim: int) -> torch.Tensor:
        """alpha_bar[t] shaped [B, 1, 1, ...] for broadcasting against data."""
        table = torch.from_numpy(self.alpha_bar).to(dtype=torch.float64)
        ab = table[t.long()]
        return ab.view(t.shape[0], *([1] * (ndim - 1)))


def cosine_alpha_bar(T: int, offset: float = 0.008) -> np.ndarray:
    """Closed-form squared-cosine cumulative schedule for steps 1..T."""
    steps = np.arange(1, T + 1, dtype=np.float64)
    f = np.cos(((steps / T) + offset) / (1 + offset) * np.pi / 2) ** 2
    f0 = np.cos(offset / (1 + offset) * np.pi / 2) ** 2
    return f / f0


def build_schedule(T: int, kind: str = "cosine") -> NoiseSchedule:
    """Construct a validated schedule; endpoint invariants are enforced here."""
    if T < 1:
        raise ScheduleError(f"T must be >= 1, got {T}")
    if kind == "cosine":
        alpha_bar = cosine_alpha_bar(T)
        prev = np.concatenate([[1.0], alpha_bar[:-1]])
        betas = np.clip(1.0 - alpha_bar / prev, 0.0, 0.999)
        alpha = 1.0 - betas
    elif kind == "linear":
        scale = 1000.0 / T
        betas = np.clip(np.linspace(1e-4 * scale, 0.02 * scale, T), 1e-8, 0.999)
        alpha = 1.0 - betas
    else:
        raise ScheduleError(f"unknown schedule kind {kind!r}")
    schedule = NoiseSchedule.from_alphas(alpha)
    if schedule.alpha_bar[0] < 0.99:
        raise ScheduleError(
            f"alpha_bar[0] = {schedule.alpha_bar[0]:.4f} < 0.99; schedule too coarse"
        )
    if schedule.alpha_bar[-1] > 0.01:
        raise ScheduleError(
            f"alpha_bar[T-1] = {schedule.alpha_bar[-1]:.4f} > 0.01; schedule too short"
        )
    return schedule


@dataclass
class SamplerConfig:
    num_inference_steps: int = 50
    eta: float = 0.0
    guidance: float | None = None  # classifier-free guidance scale; None = off

    def __post_init__(self):
        if self.num_inference_steps < 1:
            raise ScheduleError("num_inference_steps must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise ScheduleError(f"eta must be in [0, 1], got {self.eta}")


def q_sample(s0: torch.Tensor, t, epsilon: torch.Tensor,
             schedule: NoiseSchedule) -> torch.Tensor:
    """Closed-form forward marginal; epsilon must be standard normal, s0-shaped."""
    if epsilon.shape != s0.shape:
        raise ScheduleError(f"epsilon shape {tuple(epsilon.shape)} != s0 {tuple(s0.shape)}")
    if isinstance(t, torch.Tensor):
        ab = schedule.gather_alpha_bar(t, s0.ndim).to(s0.dtype)
    else:
        ab = torch.tensor(schedule.alpha_bar_at(int(t)), dtype=s0.dtype)
    return torch.sqrt(ab) * s0 + torch.sqrt(1.0 - ab) * epsilon


def training_target(s0: torch.Tensor, prediction: torch.Tensor,
                    mask: torch.Tensor | None = None) -> torch.Tensor:
    """Masked mean squared error between the clean signal and its prediction."""
    from .losses import masked_mse

    return masked_mse(prediction, s0, mask)


def ddim_step(s_t: torch.Tensor, x0_hat: torch.Tensor, t: int, t_prev: int,
              schedule: NoiseSchedule, eta: float = 0.0,
              generator: torch.Generator | None = None) -> torch.Tensor:
    """One DDIM update from step t to t_prev (t_prev = -1 is the clean boundary)."""
    if t_prev >= t:
        raise ScheduleError(f"t_prev ({t_prev}) must be < t ({t})")
    ab_t = schedule.alpha_bar_at(t)
    ab_prev = schedule.alpha_bar_at(t_prev)
    if ab_t >= 1.0:
        raise ScheduleError("alpha_bar at t must be < 1 to recover the implied noise")
    eps_hat = (s_t - np.sqrt(ab_t) * x0_hat) / np.sqrt(1.0 - ab_t)
    sigma = eta * np.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * np.sqrt(1.0 - ab_t / ab_prev)
    dir_coeff = np.sqrt(max(1.0 - ab_prev - sigma ** 2, 0.0))
    out = np.sqrt(ab_prev) * x0_hat + dir_coeff * eps_hat
    if sigma > 0:
        noise = torch.randn(s_t.shape, generator=generator, dtype=s_t.dtype)
        out = out + sigma * noise
    return out


def ddim_timesteps(T: int, num_inference_steps: int) -> list[int]:
    """Uniformly spaced descending timesteps covering [0, T-1]."""
    if not 1 <= num_inference_steps <= T:
        raise ScheduleError(
            f"num_inference_steps must be in [1, {T}], got {num_inference_steps}"
        )
    ts = np.unique(np.round(np.linspace(0, T - 1, num_inference_steps)).astype(int))
    return [int(t) for t in ts[::-1]]


def ddim_sample(predictor, schedule: NoiseSchedule, shape: tuple[int, ...],
                cfg: SamplerConfig, generator: torch.Generator | None = None,
                dtype=torch.float32) -> torch.Tensor:
    """Iterate DDIM from seeded Gaussian noise using an x0 predictor callable."""
    steps = ddim_timesteps(schedule.T, cfg.num_inference_steps)
    x = torch.randn(shape, generator=generator, dtype=dtype)
    for i, t in enumerate(steps):
        t_prev = steps[i + 1] if i + 1 < len(steps) else -1
        x0_hat = predictor(x, t)
        x = ddim_step(x, x0_hat, t, t_prev, schedule, eta=cfg.eta, generator=generator)
    return x
