"""Noise-prediction UNet.

A small encoder/decoder with skip connections, sized for 32x32 inputs:
residual conv blocks (no normalization layers), sinusoidal time embedding
passed through a learned trunk and added per-block via a learned projection.
Parameters live in a flat name -> Tensor dict so the optimizer, checkpoints,
and gradient checks can treat the network generically.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import Tensor, concat, conv2d, upsample_nearest2d
from .seeding import derive_rng

DOMAIN_SPOOF_UNION = "spoof_union"
DOMAIN_GENUINE_ONLY = "genuine_only"
DOMAIN_TAGS = (DOMAIN_SPOOF_UNION, DOMAIN_GENUINE_ONLY)


@dataclass(frozen=True)
class DenoiserConfig:
    image_size: int = 32
    channels: int = 3
    base_width: int = 32
    depth_levels: int = 2
    time_embed_dim: int = 64
    seed: int = 0

    def __post_init__(self):
        for name in ("image_size", "channels", "base_width", "depth_levels",
                     "time_embed_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.image_size % (2 ** self.depth_levels) != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by 2^depth_levels")
        if self.time_embed_dim % 2 != 0:
            raise ValueError("time_embed_dim must be even")

    @property
    def level_widths(self) -> list[int]:
        """Channel widths per resolution level, doubling downward."""
        return [self.base_width * (2 ** i) for i in range(self.depth_levels + 1)]


@dataclass
class DenoiserParams:
    config: DenoiserConfig
    layers: dict[str, Tensor]
    domain_tag: str = DOMAIN_SPOOF_UNION

    def parameter_count(self) -> int:
        return sum(t.size for t in self.layers.values())

    def astype(self, dtype) -> "DenoiserParams":
        layers = {k: Tensor(v.data.astype(dtype), requires_grad=v.requires_grad)
                  for k, v in self.layers.items()}
        return DenoiserParams(self.config, layers, self.domain_tag)

    def copy(self) -> "DenoiserParams":
        layers = {k: Tensor(v.data.copy(), requires_grad=v.requires_grad)
                  for k, v in self.layers.items()}
        return DenoiserParams(self.config, layers, self.domain_tag)


def _layer_specs(config: DenoiserConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) pairs; the single source of truth for the layout."""
    ch = config.level_widths
    td = config.time_embed_dim
    specs: list[tuple[str, tuple[int, ...]]] = [
        ("time_trunk.w", (td, td)),
        ("time_trunk.b", (td,)),
        ("stem.w", (ch[0], config.channels, 3, 3)),
        ("stem.b", (ch[0],)),
    ]

    def res_block(prefix: str, cin: int, cout: int):
        specs.append((f"{prefix}.conv1.w", (cout, cin, 3, 3)))
        specs.append((f"{prefix}.conv1.b", (cout,)))
        specs.append((f"{prefix}.temb.w", (cout, td)))
        specs.append((f"{prefix}.temb.b", (cout,)))
        specs.append((f"{prefix}.conv2.w", (cout, cout, 3, 3)))
        specs.append((f"{prefix}.conv2.b", (cout,)))
        if cin != cout:
            specs.append((f"{prefix}.skip.w", (cout, cin, 1, 1)))

    for i in range(config.depth_levels):
        res_block(f"enc{i}", ch[i], ch[i])
        specs.append((f"down{i}.w", (ch[i + 1], ch[i], 3, 3)))
        specs.append((f"down{i}.b", (ch[i + 1],)))
    res_block("mid", ch[-1], ch[-1])
    for i in reversed(range(config.depth_levels)):
        specs.append((f"up{i}.w", (ch[i], ch[i + 1], 3, 3)))
        specs.append((f"up{i}.b", (ch[i],)))
        res_block(f"dec{i}", 2 * ch[i], ch[i])
    specs.append(("head.w", (config.channels, ch[0], 3, 3)))
    specs.append(("head.b", (config.channels,)))
    return specs


def init_denoiser(config: DenoiserConfig, domain_tag: str = DOMAIN_SPOOF_UNION,
                  dtype=np.float32) -> DenoiserParams:
    """Fan-in-scaled uniform initialization, deterministic in config.seed."""
    if domain_tag not in DOMAIN_TAGS:
        raise ValueError(f"domain_tag must be one of {DOMAIN_TAGS}, got {domain_tag!r}")
    rng = derive_rng(config.seed, "denoiser-init")
    layers: dict[str, Tensor] = {}
    for name, shape in _layer_specs(config):
        if name.endswith(".b"):
            data = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            data = rng.uniform(-bound, bound, size=shape).astype(dtype)
        layers[name] = Tensor(data, requires_grad=True)
    return DenoiserParams(config=config, layers=layers, domain_tag=domain_tag)


def time_embedding(t, dim: int, dtype=np.float64) -> Tensor:
    """Sinusoidal embedding: interleaved (sin, cos) pairs over log-spaced rates.

    Pair i uses rate 1 / 10000^(2i/dim); t may be a scalar or a vector, giving
    [dim] or [len(t), dim].
    """
    if dim % 2 != 0:
        raise ValueError(f"embedding dim must be even, got {dim}")
    ts = np.asarray(t, dtype=np.float64)
    if np.any(ts < 0):
        raise ValueError("t must be nonnegative")
    scalar = ts.ndim == 0
    ts = np.atleast_1d(ts).astype(np.float64)
    i = np.arange(dim // 2, dtype=np.float64)
    rates = 1.0 / np.power(10000.0, 2.0 * i / dim)
    angles = ts[:, None] * rates[None, :]
    out = np.empty((ts.shape[0], dim), dtype=np.float64)
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    out = out.astype(dtype, copy=False)
    return Tensor(out[0] if scalar else out)


def _conv(p: dict[str, Tensor], name: str, x: Tensor, stride: int = 1,
          padding: int = 1) -> Tensor:
    w = p[f"{name}.w"]
    b = p[f"{name}.b"]
    y = conv2d(x, w, stride=stride, padding=padding)
    return y + b.reshape(1, -1, 1, 1)


def _res_block(p: dict[str, Tensor], prefix: str, x: Tensor, temb: Tensor) -> Tensor:
    h = _conv(p, f"{prefix}.conv1", x)
    proj = temb @ p[f"{prefix}.temb.w"].transpose((1, 0)) + p[f"{prefix}.temb.b"]
    h = h + proj.reshape(proj.shape[0], -1, 1, 1)
    h = h.silu()
    h = _conv(p, f"{prefix}.conv2", h)
    skip_w = p.get(f"{prefix}.skip.w")
    if skip_w is not None:
        x = conv2d(x, skip_w, stride=1, padding=0)
    return h + x


def predict_eps(params: DenoiserParams, x_t: Tensor, t,
                disable_skips: bool = False) -> Tensor:
    """Predicted noise component of ``x_t`` at time(s) ``t``; same shape as input.

    Accepts a single image [C,H,W] with scalar t or a batch [B,C,H,W] with a
    scalar or per-sample integer vector t. ``disable_skips`` zeroes the encoder
    skip features (test hook for dead-wiring detection).
    """
    cfg = params.config
    single = x_t.ndim == 3
    if single:
        x = x_t.reshape(1, *x_t.shape)
    elif x_t.ndim == 4:
        x = x_t
    else:
        raise ValueError(f"x_t must be [C,H,W] or [B,C,H,W], got {x_t.shape}")
    if x.shape[1] != cfg.channels or x.shape[2] != cfg.image_size \
            or x.shape[3] != cfg.image_size:
        raise ValueError(
            f"input shape {x.shape[1:]} does not match config "
            f"({cfg.channels},{cfg.image_size},{cfg.image_size})")

    ts = np.atleast_1d(np.asarray(t))
    if ts.shape[0] == 1 and x.shape[0] > 1:
        ts = np.repeat(ts, x.shape[0])
    if ts.shape[0] != x.shape[0]:
        raise ValueError("t must be scalar or match the batch size")

    p = params.layers
    dtype = p["stem.w"].dtype
    if x.dtype != dtype:
        x = Tensor(x.data.astype(dtype), requires_grad=x.requires_grad) \
            if not x.requires_grad else x
    temb = time_embedding(ts, cfg.time_embed_dim, dtype=dtype)
    temb = (temb @ p["time_trunk.w"].transpose((1, 0)) + p["time_trunk.b"]).silu()

    h = _conv(p, "stem", x)
    skips = []
    for i in range(cfg.depth_levels):
        h = _res_block(p, f"enc{i}", h, temb)
        skips.append(h)
        h = _conv(p, f"down{i}", h, stride=2, padding=1).silu()
    h = _res_block(p, "mid", h, temb)
    for i in reversed(range(cfg.depth_levels)):
        h = _conv(p, f"up{i}", upsample_nearest2d(h, 2)).silu()
        skip = skips[i]
        if disable_skips:
            skip = skip * 0.0
        h = _res_block(p, f"dec{i}", concat([h, skip], axis=1), temb)
    out = _conv(p, "head", h)
    return out.reshape(*x_t.shape) if single else out


def make_eps_fn(params: DenoiserParams):
    """Adapter: DenoiserParams -> callable(x, t) for samplers and losses."""
    return lambda x, t: predict_eps(params, x, t)
