"""Noise schedule and forward diffusion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_TIMESTEPS = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Cumulative signal coefficients alpha_bar[0..T], with alpha_bar[0] = 1."""

    betas: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.ndim != 1 or len(ab) != len(betas) + 1:
            raise ValueError("alpha_bar must have T+1 entries for T betas")
        if ab[0] != 1.0:
            raise ValueError("alpha_bar[0] must be 1")
        if np.any(ab <= 0.0) or np.any(ab > 1.0):
            raise ValueError("alpha_bar values must lie in (0, 1]")
        if np.any(np.diff(ab) > 0.0):
            raise ValueError("alpha_bar must be non-increasing")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bar", ab)

    @property
    def num_steps(self) -> int:
        return len(self.betas)

    @classmethod
    def from_betas(cls, betas: np.ndarray) -> "NoiseSchedule":
        betas = np.asarray(betas, dtype=np.float64)
        if np.any(betas < 0.0) or np.any(betas >= 1.0):
            raise ValueError("betas must lie in [0, 1)")
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        return cls(betas=betas, alpha_bar=alpha_bar)

    @classmethod
    def linear(
        cls,
        num_steps: int = DEFAULT_TIMESTEPS,
        beta_start: float = DEFAULT_BETA_START,
        beta_end: float = DEFAULT_BETA_END,
    ) -> "NoiseSchedule":
        return cls.from_betas(np.linspace(beta_start, beta_end, num_steps))


def forward_diffuse(z0, t: int, eps, schedule: NoiseSchedule):
    """z_t = sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps.

    Works on numpy arrays and torch tensors alike; shapes of z0 and eps must
    match.
    """
    if not 1 <= t <= schedule.num_steps:
        raise ValueError(f"t must be in [1, {schedule.num_steps}], got {t}")
    if tuple(z0.shape) != tuple(eps.shape):
        raise ValueError(f"z0 shape {tuple(z0.shape)} != eps shape {tuple(eps.shape)}")
    ab = schedule.alpha_bar[t]
    return _coeff(z0, np.sqrt(ab)) * z0 + _coeff(z0, np.sqrt(1.0 - ab)) * eps


def _coeff(like, value: float):
    """Scalar coefficient with the dtype family of `like` (numpy or torch)."""
    if hasattr(like, "new_tensor"):  # torch tensor
        return like.new_tensor(value)
    return np.asarray(value, dtype=like.dtype if hasattr(like, "dtype") else np.float64)
