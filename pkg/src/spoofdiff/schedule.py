"""Diffusion process constants and the forward perturbation.

The schedule stores per-step noise rates beta_t (t = 1..T), their complements
alpha_t = 1 - beta_t, and the cumulative products alpha_bar_t. Index 0 is the
clean-data boundary with alpha_bar = 1 exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import Tensor

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable diffusion constants; freely shared across threads."""

    T: int
    beta_start: float
    beta_end: float
    betas: np.ndarray = field(repr=False)      # [T], betas[t-1] is beta_t
    alphas: np.ndarray = field(repr=False)     # [T]
    alpha_bars: np.ndarray = field(repr=False)  # [T]

    def alpha_bar(self, t) -> np.ndarray:
        """alpha_bar at integer time(s) t in [0, T]; alpha_bar(0) = 1."""
        ts = np.asarray(t)
        if np.any(ts < 0) or np.any(ts > self.T):
            raise ValueError(f"t must be in [0, {self.T}]")
        padded = np.concatenate(([1.0], self.alpha_bars))
        return padded[ts]


def build_linear_schedule(T: int = DEFAULT_T,
                          beta_start: float = DEFAULT_BETA_START,
                          beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    """Linearly interpolated betas from beta_start to beta_end over T steps."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(T=T, beta_start=float(beta_start), beta_end=float(beta_end),
                         betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def perturb(x0: Tensor, t, eps: Tensor, schedule: NoiseSchedule) -> Tensor:
    """Mix signal and noise: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.

    ``t`` is an integer in [1, T], or an integer array of per-sample times when
    ``x0`` is a batch [B, C, H, W].
    """
    ts = np.asarray(t)
    if np.any(ts < 1) or np.any(ts > schedule.T):
        raise ValueError(f"t must be in [1, {schedule.T}], got {t}")
    if eps.shape != x0.shape:
        raise ValueError(f"eps shape {eps.shape} does not match x0 shape {x0.shape}")
    ab = schedule.alpha_bar(ts)
    if ab.ndim == 1:
        if x0.ndim != 4 or x0.shape[0] != ab.shape[0]:
            raise ValueError("per-sample t requires a matching batch dimension")
        ab = ab.reshape(-1, 1, 1, 1)
    ab = ab.astype(x0.dtype, copy=False)
    return x0 * np.sqrt(ab) + eps * np.sqrt(1.0 - ab)
