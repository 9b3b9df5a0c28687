"""Two-stream depth-supervised detector.

The RGB branch sees a center-cropped view, the noise branch the full noise
pattern; mid-level features are channel-concatenated (halfway fusion) and a
fused head regresses a 32x32 depth map squashed to [0, 1]. Every convolution
is a central-difference convolution with a shared mixing factor. Single-stream
and RGB+RGB variants of the same backbone cover the ablation grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import (Adam, Tensor, bilinear_weights, cdc2d, concat, conv2d,
                       max_pool2d, no_grad, resize2d, resize_bilinear)
from .seeding import derive_rng

INPUT_MODES = ("rgb", "noise", "rgb_rgb", "rgb_noise")
BRANCH_WIDTHS = (32, 64, 64)   # three DepthNet-style blocks
DEPTH_SIZE = 32


@dataclass(frozen=True)
class DetectorConfig:
    image_size: int = 32
    input_mode: str = "rgb_noise"
    cdc_theta: float = 0.7
    crop_fraction: float = 0.8
    aux_heads: bool = False     # per-branch score heads enabling score fusion
    seed: int = 0

    def __post_init__(self):
        if self.input_mode not in INPUT_MODES:
            raise ValueError(f"input_mode must be one of {INPUT_MODES}")
        if not 0.0 <= self.cdc_theta <= 1.0:
            raise ValueError("cdc_theta must be in [0, 1]")
        if not 0.0 < self.crop_fraction <= 1.0:
            raise ValueError("crop_fraction must be in (0, 1]")
        if self.image_size % 8 != 0:
            raise ValueError("image_size must be divisible by 8 (three pooling stages)")
        if self.aux_heads and not self.two_stream:
            raise ValueError("aux_heads require a two-stream input_mode")

    @property
    def two_stream(self) -> bool:
        return self.input_mode in ("rgb_rgb", "rgb_noise")

    @property
    def branch_names(self) -> tuple[str, ...]:
        if self.input_mode == "rgb":
            return ("rgb",)
        if self.input_mode == "noise":
            return ("noise",)
        if self.input_mode == "rgb_rgb":
            return ("rgb", "rgb_full")
        return ("rgb", "noise")


@dataclass
class DetectorParams:
    config: DetectorConfig
    layers: dict[str, Tensor]

    def parameter_count(self) -> int:
        return sum(t.size for t in self.layers.values())

    def copy(self) -> "DetectorParams":
        layers = {k: Tensor(v.data.copy(), requires_grad=v.requires_grad)
                  for k, v in self.layers.items()}
        return DetectorParams(self.config, layers)


def _layer_specs(config: DetectorConfig) -> list[tuple[str, tuple[int, ...]]]:
    w1, w2, w3 = BRANCH_WIDTHS
    specs: list[tuple[str, tuple[int, ...]]] = []
    for branch in config.branch_names:
        specs.append((f"{branch}.b1.w", (w1, 3, 3, 3)))
        specs.append((f"{branch}.b1.b", (w1,)))
        specs.append((f"{branch}.b2.w", (w2, w1, 3, 3)))
        specs.append((f"{branch}.b2.b", (w2,)))
        if config.aux_heads:
            specs.append((f"{branch}.aux.w", (1, w2, 1, 1)))
            specs.append((f"{branch}.aux.b", (1,)))
    fused_in = w2 * len(config.branch_names)
    specs.append(("fused.b3.w", (w3, fused_in, 3, 3)))
    specs.append(("fused.b3.b", (w3,)))
    specs.append(("fused.head.w", (1, w3, 3, 3)))
    specs.append(("fused.head.b", (1,)))
    return specs


def init_detector(config: DetectorConfig, dtype=np.float32) -> DetectorParams:
    rng = derive_rng(config.seed, "detector-init", config.input_mode)
    layers: dict[str, Tensor] = {}
    for name, shape in _layer_specs(config):
        if name.endswith(".b"):
            data = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            data = rng.uniform(-bound, bound, size=shape).astype(dtype)
        layers[name] = Tensor(data, requires_grad=True)
    return DetectorParams(config=config, layers=layers)


def center_crop(image: Tensor, fraction: float) -> Tensor:
    """Extract the central fraction of the image and resize back bilinearly.

    Output pixel i samples source coordinate (i + 0.5) * fraction +
    n * (1 - fraction) / 2 - 0.5 per axis; fraction = 1 is the identity.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    h, w = image.shape[-2:]
    rw = bilinear_weights(h, h, fraction, h * (1.0 - fraction) / 2.0)
    cw = bilinear_weights(w, w, fraction, w * (1.0 - fraction) / 2.0)
    return resize2d(image, rw, cw)


def _block(p: dict[str, Tensor], name: str, x: Tensor, theta: float) -> Tensor:
    y = cdc2d(x, p[f"{name}.w"], theta=theta, stride=1, padding=1)
    y = y + p[f"{name}.b"].reshape(1, -1, 1, 1)
    return max_pool2d(y.relu(), 2)


def _branch(p: dict[str, Tensor], branch: str, x: Tensor, theta: float) -> Tensor:
    f = _block(p, f"{branch}.b1", x, theta)
    return _block(p, f"{branch}.b2", f, theta)


def forward_detector(params: DetectorParams, rgb: Tensor | None = None,
                     noise: Tensor | None = None,
                     zero_noise_features: bool = False,
                     with_aux: bool = False):
    """Depth map in [0, 1] of shape [B,1,32,32] (or [1,32,32] for one sample).

    Branch wiring follows config.input_mode: the primary RGB branch always
    consumes the center-cropped image, a second branch (when present) consumes
    the full noise pattern or the full uncropped RGB. ``zero_noise_features``
    zeroes the second branch's pre-fusion features (liveness probe for tests);
    ``with_aux`` additionally returns per-branch auxiliary depth maps.
    """
    cfg = params.config
    p = params.layers
    inputs: dict[str, Tensor] = {}
    if "rgb" in cfg.branch_names or "rgb_full" in cfg.branch_names:
        if rgb is None:
            raise ValueError(f"input_mode {cfg.input_mode!r} requires an rgb input")
    if "noise" in cfg.branch_names:
        if noise is None:
            raise ValueError(f"input_mode {cfg.input_mode!r} requires a noise input")
        if np.any(noise.data < 0):
            raise ValueError("noise input must be nonnegative")
    single = (rgb if rgb is not None else noise).ndim == 3

    def batched(t: Tensor | None) -> Tensor | None:
        if t is None:
            return None
        return t.reshape(1, *t.shape) if t.ndim == 3 else t

    rgb_b = batched(rgb)
    noise_b = batched(noise)
    if rgb_b is not None and noise_b is not None and rgb_b.shape != noise_b.shape:
        raise ValueError(f"rgb shape {rgb_b.shape} != noise shape {noise_b.shape}")

    for branch in cfg.branch_names:
        if branch == "rgb":
            inputs[branch] = center_crop(rgb_b, cfg.crop_fraction)
        elif branch == "rgb_full":
            inputs[branch] = rgb_b
        else:
            inputs[branch] = noise_b

    feats = []
    aux_maps = {}
    for i, branch in enumerate(cfg.branch_names):
        f = _branch(p, branch, inputs[branch], cfg.cdc_theta)
        if zero_noise_features and i == 1:
            f = f * 0.0
        if cfg.aux_heads:
            a = conv2d(f, p[f"{branch}.aux.w"]) + p[f"{branch}.aux.b"].reshape(1, -1, 1, 1)
            aux_maps[branch] = resize_bilinear(a, DEPTH_SIZE, DEPTH_SIZE).sigmoid()
        feats.append(f)
    fused = feats[0] if len(feats) == 1 else concat(feats, axis=1)

    h = _block(p, "fused.b3", fused, cfg.cdc_theta)
    h = resize_bilinear(h, DEPTH_SIZE, DEPTH_SIZE)
    out = conv2d(h, p["fused.head.w"], padding=1) + p["fused.head.b"].reshape(1, -1, 1, 1)
    out = out.sigmoid()
    if single:
        out = out.reshape(*out.shape[1:])
        aux_maps = {k: v.reshape(*v.shape[1:]) for k, v in aux_maps.items()}
    if with_aux:
        return out, aux_maps
    return out


def forward_two_stream(params: DetectorParams, rgb: Tensor, noise: Tensor) -> Tensor:
    """The halfway-fusion RGB + noise forward pass (config must be rgb_noise)."""
    if params.config.input_mode != "rgb_noise":
        raise ValueError("forward_two_stream requires an rgb_noise detector")
    return forward_detector(params, rgb=rgb, noise=noise)


# --------------------------------------------------------------------------
# losses and scoring
# --------------------------------------------------------------------------

_CONTRAST_KERNELS = None


def contrast_kernels(dtype=np.float64) -> np.ndarray:
    """Eight 3x3 neighbor-contrast kernels: +1 center, -1 one neighbor."""
    global _CONTRAST_KERNELS
    if _CONTRAST_KERNELS is None:
        ks = []
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                k = np.zeros((3, 3))
                k[1, 1] = 1.0
                k[1 + dy, 1 + dx] = -1.0
                ks.append(k)
        _CONTRAST_KERNELS = np.stack(ks)[:, None]   # [8,1,3,3]
    return _CONTRAST_KERNELS.astype(dtype, copy=False)


def mse_loss(pred: Tensor, label: Tensor) -> Tensor:
    if pred.shape != label.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {label.shape}")
    return ((pred - label) ** 2).mean()


def cdl_loss(pred: Tensor, label: Tensor) -> Tensor:
    """Contrastive depth loss: sum over the eight contrast kernels of the MSE
    between the kernels' responses on pred and label.

    Valid (unpadded) convolution keeps the constant-offset invariance exact:
    adding any constant to either map leaves the loss unchanged.
    """
    if pred.shape != label.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {label.shape}")
    k = Tensor(contrast_kernels(pred.dtype))
    diff = conv2d(pred, k) - conv2d(label, k)
    sq = diff ** 2
    ch_axis = sq.ndim - 3
    other = tuple(i for i in range(sq.ndim) if i != ch_axis)
    return sq.mean(axis=other).sum()


def depth_losses(pred: Tensor, label: Tensor) -> Tensor:
    """L_overall: unweighted sum of pixel-wise MSE and contrastive depth loss."""
    return mse_loss(pred, label) + cdl_loss(pred, label)


def score(depth_map: Tensor) -> float:
    """Liveness score: mean of the depth map; higher = more genuine."""
    return float(depth_map.data.mean())


def fuse_scores(s1: float, s2: float) -> float:
    """Arithmetic mean of two scores in [0, 1]."""
    for s in (s1, s2):
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"scores must be in [0, 1], got {s}")
    return (s1 + s2) / 2.0


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

@dataclass
class DetectorDataset:
    """Arrays ready for training; noise may be None for RGB-only modes."""

    rgb: np.ndarray                 # [N,3,H,W] in [-1,1]
    depth: np.ndarray               # [N,1,32,32] in [0,1]
    labels: list[str]
    noise: np.ndarray | None = None

    def __post_init__(self):
        n = self.rgb.shape[0]
        if self.depth.shape[0] != n or len(self.labels) != n:
            raise ValueError("rgb / depth / labels lengths differ")
        if self.noise is not None and self.noise.shape[0] != n:
            raise ValueError("noise length differs from rgb")
        for i, label in enumerate(self.labels):
            flat = self.depth[i]
            if label == "spoof" and flat.max() != 0.0:
                raise ValueError(f"spoof sample {i} must carry an all-zero depth label")
            if label == "genuine" and flat.max() <= 0.0:
                raise ValueError(f"genuine sample {i} must carry a nonzero depth label")

    def __len__(self) -> int:
        return self.rgb.shape[0]


@dataclass
class DetectorTrainConfig:
    batch_size: int = 64
    max_steps: int = 1500
    learning_rate: float = 1e-4
    weight_decay: float = 5e-5
    lr_decay_every: int = 500
    lr_decay_factor: float = 0.1
    eval_every: int = 50


def _forward_batch(params: DetectorParams, ds: DetectorDataset,
                   idx: np.ndarray, with_aux: bool):
    rgb = Tensor(ds.rgb[idx])
    noise = Tensor(ds.noise[idx]) if ds.noise is not None else None
    if params.config.input_mode == "noise":
        return forward_detector(params, noise=noise, with_aux=with_aux)
    return forward_detector(params, rgb=rgb, noise=noise, with_aux=with_aux)


def _dataset_loss(params: DetectorParams, ds: DetectorDataset,
                  batch_size: int = 256) -> float:
    total = 0.0
    with no_grad():
        for lo in range(0, len(ds), batch_size):
            idx = np.arange(lo, min(lo + batch_size, len(ds)))
            pred = _forward_batch(params, ds, idx, with_aux=False)
            loss = depth_losses(pred, Tensor(ds.depth[idx]))
            total += float(loss.data) * len(idx)
    return total / len(ds)


def train_detector(params: DetectorParams, train_set: DetectorDataset,
                   tcfg: DetectorTrainConfig, seed: int,
                   dev_set: DetectorDataset | None = None,
                   ) -> list[tuple[int, float, float, float]]:
    """Minimize L_overall with Adam and step-decayed learning rate.

    Fully seeded; returns log rows (step, train_loss, lr, dev_loss) with
    dev_loss = NaN between evaluations. When a dev set is given, the best
    parameters by dev loss are restored into ``params`` at the end.
    """
    if len(train_set) == 0:
        raise ValueError("training dataset is empty")
    needs_noise = params.config.input_mode in ("noise", "rgb_noise")
    if needs_noise and train_set.noise is None:
        raise ValueError(f"input_mode {params.config.input_mode!r} needs noise maps")
    opt = Adam(params.layers, learning_rate=tcfg.learning_rate,
               weight_decay=tcfg.weight_decay)
    rng = derive_rng(seed, "detector-train", params.config.input_mode)
    rows: list[tuple[int, float, float, float]] = []
    best: tuple[float, dict[str, np.ndarray]] | None = None
    label_t = None
    for step in range(1, tcfg.max_steps + 1):
        lr = tcfg.learning_rate * (tcfg.lr_decay_factor ** ((step - 1) // tcfg.lr_decay_every))
        opt.learning_rate = lr
        idx = rng.integers(0, len(train_set), size=tcfg.batch_size)
        out = _forward_batch(params, train_set, idx, with_aux=params.config.aux_heads)
        label_t = Tensor(train_set.depth[idx])
        if params.config.aux_heads:
            pred, aux = out
            loss = depth_losses(pred, label_t)
            for m in aux.values():
                loss = loss + depth_losses(m, label_t)
        else:
            loss = depth_losses(out, label_t)
        opt.zero_grad()
        loss.backward()
        opt.step()
        dev_loss = float("nan")
        if dev_set is not None and (step % tcfg.eval_every == 0 or step == tcfg.max_steps):
            dev_loss = _dataset_loss(params, dev_set)
            if best is None or dev_loss < best[0]:
                best = (dev_loss, {k: v.data.copy() for k, v in params.layers.items()})
        rows.append((step, float(loss.data), lr, dev_loss))
    if best is not None:
        for k, v in params.layers.items():
            v.data = best[1][k]
    return rows


def score_dataset(params: DetectorParams, ds: DetectorDataset,
                  batch_size: int = 256, score_fusion: bool = False) -> np.ndarray:
    """Per-sample liveness scores (mean predicted depth)."""
    if score_fusion and not params.config.aux_heads:
        raise ValueError("score fusion requires a checkpoint trained with aux heads")
    out = np.zeros(len(ds))
    with no_grad():
        for lo in range(0, len(ds), batch_size):
            idx = np.arange(lo, min(lo + batch_size, len(ds)))
            if score_fusion:
                _, aux = _forward_batch(params, ds, idx, with_aux=True)
                maps = list(aux.values())
                a = maps[0].data.mean(axis=(1, 2, 3))
                b = maps[1].data.mean(axis=(1, 2, 3))
                out[idx] = np.array([fuse_scores(float(x), float(y))
                                     for x, y in zip(a, b)])
            else:
                pred = _forward_batch(params, ds, idx, with_aux=False)
                out[idx] = pred.data.mean(axis=(1, 2, 3))
    return out
