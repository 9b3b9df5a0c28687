"""DDPM training objective, the deterministic DDIM map, and the two-model
de-spoofing bridge.

The bridge encodes a suspect image to the shared latent under the model
trained on genuine-plus-attack data, decodes it under the genuine-only model,
and keeps the elementwise absolute residual as the spoof noise pattern.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .denoiser import DenoiserParams, DOMAIN_GENUINE_ONLY, DOMAIN_SPOOF_UNION, predict_eps
from .numerics import Adam, Tensor, no_grad
from .schedule import NoiseSchedule, perturb
from .seeding import derive_rng

DEFAULT_BRIDGE_STEPS = 50


@dataclass
class NoisePattern:
    """Image-shaped nonnegative residual |x_s - x_g|; second detector input."""

    map: Tensor

    def __post_init__(self):
        if np.any(self.map.data < 0):
            raise ValueError("noise pattern must be elementwise nonnegative")

    def energy(self) -> float:
        """Mean absolute residual (scalar view of the pattern)."""
        return float(self.map.data.mean())


def _as_eps_fn(model):
    if isinstance(model, DenoiserParams):
        return lambda x, t: predict_eps(model, x, t)
    if callable(model):
        return model
    raise TypeError(f"model must be DenoiserParams or callable, got {type(model)}")


def ddpm_loss(model, batch: Tensor, schedule: NoiseSchedule, rng_seed: int) -> Tensor:
    """Noise-prediction objective: mean of (eps_hat - eps)^2 over the batch.

    Per sample, a timestep t ~ Uniform{1..T} and eps ~ N(0, I) are drawn from
    ``rng_seed`` (timesteps first, then noise, so tests can replay the draws),
    the sample is perturbed to x_t, and the model predicts eps from (x_t, t).
    """
    if batch.ndim != 4 or batch.shape[0] == 0:
        raise ValueError(f"batch must be nonempty [B,C,H,W], got shape {batch.shape}")
    if batch.data.min() < -1.0 - 1e-6 or batch.data.max() > 1.0 + 1e-6:
        raise ValueError("batch values must lie in [-1, 1]")
    eps_fn = _as_eps_fn(model)
    rng = np.random.default_rng(rng_seed)
    t = rng.integers(1, schedule.T + 1, size=batch.shape[0])
    eps = rng.standard_normal(batch.shape).astype(batch.dtype, copy=False)
    eps_t = Tensor(eps)
    x_t = perturb(batch, t, eps_t, schedule)
    eps_hat = eps_fn(x_t, t)
    return ((eps_hat - eps_t) ** 2).mean()


def ode_map(x: Tensor, model, schedule: NoiseSchedule, u0: float, u1: float,
            steps: int, clamp_x0: float | None = None) -> Tensor:
    """Deterministic DDIM transport from normalized time u0 to u1.

    Integrates across ``steps`` evenly spaced discrete times between
    round(u0*T) and round(u1*T): each hop predicts eps at the current point,
    reconstructs x0_hat, and re-noises to the next time. u0 < u1 runs the
    noising direction, u0 > u1 the denoising direction. Not differentiated.

    ``clamp_x0`` enables the standard clipped-denoised stabilization: x0_hat
    is clipped to [-clamp_x0, clamp_x0] and eps is re-derived from the clipped
    estimate before each hop. Off by default, which keeps the map the exact
    textbook DDIM update.
    """
    for name, u in (("u0", u0), ("u1", u1)):
        if not 0.0 <= u <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {u}")
    if u0 == u1:
        raise ValueError("u0 and u1 must differ")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    eps_fn = _as_eps_fn(model)
    t0 = int(round(u0 * schedule.T))
    t1 = int(round(u1 * schedule.T))
    span = abs(t1 - t0)
    if span == 0:
        warnings.warn("u0 and u1 round to the same discrete time; returning input")
        return Tensor(x.data.copy())
    if steps > span:
        warnings.warn(f"steps={steps} exceeds |t1-t0|={span}; clamping to {span}")
        steps = span
    grid = np.rint(np.linspace(t0, t1, steps + 1)).astype(int)

    with no_grad():
        cur = Tensor(x.data.copy())
        for t_cur, t_nxt in zip(grid[:-1], grid[1:]):
            if t_cur == t_nxt:
                continue
            ab_cur = float(schedule.alpha_bar(int(t_cur)))
            ab_nxt = float(schedule.alpha_bar(int(t_nxt)))
            eps_hat = eps_fn(cur, int(t_cur))
            x0_hat = (cur - np.sqrt(1.0 - ab_cur) * eps_hat) * (1.0 / np.sqrt(ab_cur))
            if clamp_x0 is not None:
                x0_hat = Tensor(np.clip(x0_hat.data, -clamp_x0, clamp_x0))
                if ab_cur < 1.0:
                    eps_hat = (cur - np.sqrt(ab_cur) * x0_hat) \
                        * (1.0 / np.sqrt(1.0 - ab_cur))
            cur = np.sqrt(ab_nxt) * x0_hat + np.sqrt(1.0 - ab_nxt) * eps_hat
    return Tensor(cur.data)


def despoof(x_s: Tensor, params_s: DenoiserParams, params_g: DenoiserParams,
            schedule: NoiseSchedule, steps: int = DEFAULT_BRIDGE_STEPS,
            stabilize: bool = True) -> tuple[Tensor, NoisePattern]:
    """Bridge a suspect image into the genuine domain and extract the residual.

    Forward ODE under the union-domain model to the latent at u = 1, reverse
    ODE under the genuine-only model back to u = 0. The denoising leg uses the
    clipped-denoised stabilization (``stabilize=False`` for the raw update).
    The reconstruction is clamped to [-1, 1]; the noise pattern is the
    elementwise |x_s - x_g| kept image-shaped.
    """
    if params_s.domain_tag != DOMAIN_SPOOF_UNION:
        raise ValueError(
            f"params_s must be tagged {DOMAIN_SPOOF_UNION!r}, got {params_s.domain_tag!r}")
    if params_g.domain_tag != DOMAIN_GENUINE_ONLY:
        raise ValueError(
            f"params_g must be tagged {DOMAIN_GENUINE_ONLY!r}, got {params_g.domain_tag!r}")
    clamp = 1.0 if stabilize else None
    x_l = ode_map(x_s, params_s, schedule, 0.0, 1.0, steps)
    x_g = ode_map(x_l, params_g, schedule, 1.0, 0.0, steps, clamp_x0=clamp)
    x_g = Tensor(np.clip(x_g.data, -1.0, 1.0))
    noise = NoisePattern(Tensor(np.abs(x_s.data - x_g.data)))
    return x_g, noise


def roundtrip(x: Tensor, model, schedule: NoiseSchedule, steps: int) -> Tensor:
    """Forward-then-reverse ODE under one model (fidelity probe)."""
    latent = ode_map(x, model, schedule, 0.0, 1.0, steps)
    return ode_map(latent, model, schedule, 1.0, 0.0, steps)


@dataclass
class DiffusionTrainConfig:
    batch_size: int = 24
    max_steps: int = 700
    learning_rate: float = 1e-4
    eval_every: int = 50
    early_stop_mse: float = 0.0035
    eval_steps: int = DEFAULT_BRIDGE_STEPS
    eval_samples: int = 12


def train_diffusion(params: DenoiserParams, images: np.ndarray,
                    schedule: NoiseSchedule, tcfg: DiffusionTrainConfig,
                    seed: int, holdout: np.ndarray | None = None,
                    ) -> list[tuple[int, float, float]]:
    """Fixed-step-budget DDPM training with round-trip early stopping.

    ``images`` is [N, C, H, W] in [-1, 1]. Every ``eval_every`` steps the
    forward-then-reverse reconstruction MSE on ``holdout`` (or a training
    slice) is measured; training stops early once it drops below
    ``early_stop_mse``. Returns log rows (step, loss, roundtrip_mse) where
    roundtrip_mse is NaN on steps without an evaluation.
    """
    if images.ndim != 4 or images.shape[0] == 0:
        raise ValueError("images must be a nonempty [N,C,H,W] array")
    probe = holdout if holdout is not None and len(holdout) else images
    probe = probe[:tcfg.eval_samples]
    opt = Adam(params.layers, learning_rate=tcfg.learning_rate)
    rng = derive_rng(seed, "diffusion-train", params.domain_tag)
    rows: list[tuple[int, float, float]] = []
    n = images.shape[0]
    for step in range(1, tcfg.max_steps + 1):
        idx = rng.integers(0, n, size=tcfg.batch_size)
        batch = Tensor(images[idx])
        loss = ddpm_loss(params, batch, schedule, rng_seed=int(rng.integers(2 ** 63)))
        opt.zero_grad()
        loss.backward()
        opt.step()
        rt = float("nan")
        if step % tcfg.eval_every == 0 or step == tcfg.max_steps:
            rt = roundtrip_mse(params, probe, schedule, tcfg.eval_steps)
        rows.append((step, float(loss.data), rt))
        if np.isfinite(rt) and rt < tcfg.early_stop_mse:
            break
    return rows


def roundtrip_mse(params: DenoiserParams, images: np.ndarray,
                  schedule: NoiseSchedule, steps: int) -> float:
    x = Tensor(np.asarray(images, dtype=params.layers["stem.w"].dtype))
    rec = roundtrip(x, params, schedule, steps)
    return float(np.mean((rec.data - x.data) ** 2))
