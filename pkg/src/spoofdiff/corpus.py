"""Deterministic synthetic corpus standing in for restricted FAS datasets.

Two synthetic "domains" (a and b) differ in background statistics, color
temperature, and attack strength ranges, giving the cross-domain protocols a
real generalization gap at desk scale. Genuine samples are procedural
face-like composites with smooth pseudo-depth labels; spoof samples are
genuine renders degraded by one of five parametric attacks. Everything is a
pure function of (root seed, config): regeneration is bitwise stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .seeding import derive_rng, derive_u64

LABEL_GENUINE = "genuine"
LABEL_SPOOF = "spoof"
ATTACK_NONE = "none"
ATTACK_TYPES = ("print_blur", "replay_moire", "color_cast", "glare_band", "medium_border")
SPLITS = ("train", "dev", "test")
DOMAINS = ("a", "b")
DEPTH_SIZE = 32


@dataclass(frozen=True)
class DomainSpec:
    """Knobs that separate the two synthetic data domains."""

    name: str
    bg_cells: int            # coarse background texture grid
    bg_level: float          # mean background luminance in [-1, 1]
    bg_contrast: float
    temp_shift: tuple[float, float, float]  # per-channel color temperature
    strength_range: tuple[float, float]     # attack strength draw range


DOMAIN_SPECS = {
    "a": DomainSpec(name="a", bg_cells=4, bg_level=-0.30, bg_contrast=0.22,
                    temp_shift=(-0.04, 0.0, 0.05), strength_range=(0.35, 0.75)),
    "b": DomainSpec(name="b", bg_cells=8, bg_level=-0.18, bg_contrast=0.32,
                    temp_shift=(0.06, 0.01, -0.05), strength_range=(0.55, 1.0)),
}


@dataclass
class SampleRecord:
    id: str
    image_path: str
    label: str
    attack_type: str
    split: str
    seed: int

    def __post_init__(self):
        if self.label not in (LABEL_GENUINE, LABEL_SPOOF):
            raise ValueError(f"bad label {self.label!r}")
        if self.attack_type != ATTACK_NONE and self.attack_type not in ATTACK_TYPES:
            raise ValueError(f"bad attack_type {self.attack_type!r}")
        if (self.label == LABEL_GENUINE) != (self.attack_type == ATTACK_NONE):
            raise ValueError("label=genuine iff attack_type=none")
        if self.split not in SPLITS:
            raise ValueError(f"bad split {self.split!r}")

    @property
    def domain(self) -> str:
        return self.id.split("-", 1)[0]

    @property
    def depth_path(self) -> str:
        return self.image_path.replace("images/", "depths/", 1)


# --------------------------------------------------------------------------
# genuine face rendering
# --------------------------------------------------------------------------

def _coarse_texture(rng: np.random.Generator, cells: int, size: int,
                    contrast: float) -> np.ndarray:
    """Smooth background texture: a coarse noise grid upsampled bilinearly."""
    grid = rng.normal(0.0, contrast, size=(cells, cells))
    src = np.linspace(0, cells - 1, size)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, cells - 1)
    frac = src - lo
    rows = grid[lo][:, lo] * np.outer(1 - frac, 1 - frac) \
        + grid[lo][:, hi] * np.outer(1 - frac, frac) \
        + grid[hi][:, lo] * np.outer(frac, 1 - frac) \
        + grid[hi][:, hi] * np.outer(frac, frac)
    return rows


def render_genuine(rng: np.random.Generator, image_size: int,
                   spec: DomainSpec) -> tuple[np.ndarray, np.ndarray]:
    """One procedural face image in [-1, 1] and its pseudo-depth label.

    Composites an elliptical head with per-sample hue, a directional shading
    gradient, two eye blobs and a mouth bar over a textured background. The
    pseudo-depth is a smooth bump aligned with the ellipse, peaking in
    (0.5, 1] and exactly zero toward the corners.
    """
    s = image_size
    ys, xs = np.mgrid[0:s, 0:s]
    y = (ys + 0.5) / s * 2.0 - 1.0
    x = (xs + 0.5) / s * 2.0 - 1.0

    # head ellipse with a small pose jitter
    cx = rng.uniform(-0.07, 0.07)
    cy = rng.uniform(-0.07, 0.07)
    ax = rng.uniform(0.50, 0.60)
    ay = rng.uniform(0.62, 0.72)
    rot = rng.uniform(-0.15, 0.15)
    xr = (x - cx) * math.cos(rot) + (y - cy) * math.sin(rot)
    yr = -(x - cx) * math.sin(rot) + (y - cy) * math.cos(rot)
    d = (xr / ax) ** 2 + (yr / ay) ** 2
    mask = 1.0 / (1.0 + np.exp((d - 1.0) / 0.05))

    # skin tone and lambertian-ish shading
    base_r = rng.uniform(0.15, 0.55)
    base_g = base_r * rng.uniform(0.72, 0.88)
    base_b = base_g * rng.uniform(0.70, 0.90)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    shade = 1.0 - rng.uniform(0.2, 0.45) * ((xr * math.cos(phi) + yr * math.sin(phi)) / 2.0 + 0.5)
    face = np.stack([base_r * shade, base_g * shade, base_b * shade])

    # eyes: two dark blobs above center (in rotated face coordinates)
    ex = 0.38 * ax
    ey = -0.22 * ay + rng.uniform(-0.03, 0.03)
    er = rng.uniform(0.055, 0.085)
    eyes = np.exp(-(((xr - ex) ** 2 + (yr - ey) ** 2) / er ** 2)) \
        + np.exp(-(((xr + ex) ** 2 + (yr - ey) ** 2) / er ** 2))
    face -= rng.uniform(0.5, 0.8) * eyes[None]

    # mouth bar below center
    my = 0.45 * ay + rng.uniform(-0.03, 0.03)
    mouth = np.exp(-((yr - my) / 0.06) ** 2) * np.exp(-(xr / (0.35 * ax)) ** 4)
    face[0] -= 0.1 * mouth
    face[1] -= rng.uniform(0.35, 0.55) * mouth
    face[2] -= rng.uniform(0.35, 0.55) * mouth

    bg = spec.bg_level + _coarse_texture(rng, spec.bg_cells, s, spec.bg_contrast)
    img = bg[None] * (1.0 - mask[None]) + face * mask[None]
    img += rng.normal(0.0, 0.02, size=img.shape)   # sensor grain
    img += np.asarray(spec.temp_shift)[:, None, None]
    img = np.clip(img, -1.0, 1.0)

    peak = rng.uniform(0.75, 1.0)
    if s == DEPTH_SIZE:
        d32 = d
    else:
        ys32, xs32 = np.mgrid[0:DEPTH_SIZE, 0:DEPTH_SIZE]
        y32 = (ys32 + 0.5) / DEPTH_SIZE * 2.0 - 1.0
        x32 = (xs32 + 0.5) / DEPTH_SIZE * 2.0 - 1.0
        xr32 = (x32 - cx) * math.cos(rot) + (y32 - cy) * math.sin(rot)
        yr32 = -(x32 - cx) * math.sin(rot) + (y32 - cy) * math.cos(rot)
        d32 = (xr32 / ax) ** 2 + (yr32 / ay) ** 2
    depth = peak * np.clip(1.0 - d32, 0.0, 1.0)[None]
    return img, depth


# --------------------------------------------------------------------------
# spoof degradations
# --------------------------------------------------------------------------

def _axis_blur(img: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """Separable 1-D blur along H or W with edge replication."""
    r = len(kernel) // 2
    n = img.shape[axis]
    out = np.zeros_like(img)
    for off, w in zip(range(-r, r + 1), kernel):
        idx = np.clip(np.arange(n) + off, 0, n - 1)
        out += w * np.take(img, idx, axis=axis)
    return out


def _gaussian_kernel(sigma: float) -> np.ndarray:
    r = max(1, int(math.ceil(3.0 * sigma)))
    xs = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / max(sigma, 1e-12)) ** 2)
    return k / k.sum()


def _gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    k = _gaussian_kernel(sigma)
    return _axis_blur(_axis_blur(img, k, 1), k, 2)


def apply_spoof(image: np.ndarray, attack_type: str, strength: float,
                seed: int) -> np.ndarray:
    """Degrade an image with one parametric recapture artifact.

    Deterministic given (attack_type, strength, seed); output clamped to
    [-1, 1]. Every attack vanishes continuously as strength -> 0.
    """
    if attack_type == ATTACK_NONE or attack_type not in ATTACK_TYPES:
        raise ValueError(f"attack_type must be one of {ATTACK_TYPES}, got {attack_type!r}")
    if not 0.0 < strength <= 1.0:
        raise ValueError(f"strength must be in (0, 1], got {strength}")
    rng = np.random.default_rng(seed)
    img = np.asarray(image, dtype=np.float64)
    _, h, w = img.shape
    ys, xs = np.mgrid[0:h, 0:w]
    yn = (ys + 0.5) / h    # [0, 1]
    xn = (xs + 0.5) / w

    if attack_type == "color_cast":
        gains = 1.0 + strength * 0.25 * rng.uniform(-1.0, 1.0, size=3)
        offsets = strength * 0.15 * rng.uniform(-1.0, 1.0, size=3)
        out = img * gains[:, None, None] + offsets[:, None, None]

    elif attack_type == "replay_moire":
        fx = rng.uniform(3.0, 8.0)
        fy = rng.uniform(3.0, 8.0)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        pattern = np.sin(2.0 * math.pi * (fx * xn + fy * yn) + phase)
        out = img * (1.0 + strength * 0.2 * pattern)[None]

    elif attack_type == "print_blur":
        sigma = 1.4 * strength
        blurred = _gaussian_blur(img, sigma)
        halo = blurred - _gaussian_blur(blurred, 2.0 * sigma)
        out = blurred + 0.5 * strength * halo

    elif attack_type == "glare_band":
        alpha = rng.uniform(0.0, math.pi)
        # band center biased toward the image periphery
        c = rng.choice([-1.0, 1.0]) * rng.uniform(0.45, 0.85)
        width = rng.uniform(0.12, 0.22)
        d = (2.0 * xn - 1.0) * math.cos(alpha) + (2.0 * yn - 1.0) * math.sin(alpha) - c
        band = np.exp(-(d / width) ** 2)
        out = img + strength * 0.7 * band[None]

    else:  # medium_border
        border_w = rng.uniform(1.5, 3.0)
        m = np.minimum(np.minimum(ys, xs), np.minimum(h - 1 - ys, w - 1 - xs))
        frame = np.clip(1.0 - m / border_w, 0.0, 1.0)
        blend = strength * 0.9 * frame
        dark = rng.uniform(-0.85, -0.55)
        out = img * (1.0 - blend)[None] + dark * blend[None]

    return np.clip(out, -1.0, 1.0)


# --------------------------------------------------------------------------
# corpus assembly
# --------------------------------------------------------------------------

def _split_of(index: int, total: int) -> str:
    n_train = int(total * 0.7 + 0.5)
    n_dev = int(total * 0.1 + 0.5)
    if index < n_train:
        return "train"
    if index < n_train + n_dev:
        return "dev"
    return "test"


def generate_domain(root_seed: int, domain: str, n_genuine: int, n_spoof: int,
                    image_size: int = 32):
    """Build one domain in memory.

    Returns (records, images, depths) where images / depths map sample id to
    float64 arrays ([3,S,S] in [-1,1] and [1,32,32] in [0,1]).
    """
    if domain not in DOMAIN_SPECS:
        raise ValueError(f"domain must be one of {sorted(DOMAIN_SPECS)}, got {domain!r}")
    if n_genuine < 1 or n_spoof < 0:
        raise ValueError("need at least one genuine sample and nonnegative spoof count")
    spec = DOMAIN_SPECS[domain]
    records: list[SampleRecord] = []
    images: dict[str, np.ndarray] = {}
    depths: dict[str, np.ndarray] = {}

    for i in range(n_genuine):
        sid = f"{domain}-gen-{i:05d}"
        seed = derive_u64(root_seed, "corpus", domain, "genuine", i)
        img, depth = render_genuine(derive_rng(seed), image_size, spec)
        records.append(SampleRecord(sid, f"images/{sid}.png", LABEL_GENUINE,
                                    ATTACK_NONE, _split_of(i, n_genuine), seed))
        images[sid] = img
        depths[sid] = depth

    for i in range(n_spoof):
        sid = f"{domain}-spf-{i:05d}"
        seed = derive_u64(root_seed, "corpus", domain, "spoof", i)
        rng = derive_rng(seed)
        base, _ = render_genuine(rng, image_size, spec)
        attack = ATTACK_TYPES[i % len(ATTACK_TYPES)]
        strength = rng.uniform(*spec.strength_range)
        img = apply_spoof(base, attack, strength, derive_u64(seed, "attack"))
        records.append(SampleRecord(sid, f"images/{sid}.png", LABEL_SPOOF,
                                    attack, _split_of(i, n_spoof), seed))
        images[sid] = img
        depths[sid] = np.zeros((1, DEPTH_SIZE, DEPTH_SIZE))
    return records, images, depths


# --------------------------------------------------------------------------
# image and manifest I/O
# --------------------------------------------------------------------------

def to_u8(img: np.ndarray) -> np.ndarray:
    """[-1,1] float -> u8, round half away from zero (values are nonnegative
    after the affine map, so floor(v + 0.5) implements it)."""
    v = (np.clip(img, -1.0, 1.0) + 1.0) / 2.0 * 255.0
    return np.floor(v + 0.5).astype(np.uint8)


def from_u8(u8: np.ndarray, dtype=np.float64) -> np.ndarray:
    return (u8.astype(dtype) / 255.0) * 2.0 - 1.0


def unit_to_u8(d: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(d, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def u8_to_unit(u8: np.ndarray, dtype=np.float64) -> np.ndarray:
    return u8.astype(dtype) / 255.0


def save_image(path: Path, img: np.ndarray) -> None:
    arr = to_u8(img)
    Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(path)


def load_image(path: Path, dtype=np.float64) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"))
    return from_u8(arr.transpose(2, 0, 1), dtype)


def save_noise_map(path: Path, noise: np.ndarray) -> None:
    """Noise patterns live in [0, 2]; stored as u8 with the same rounding."""
    u8 = np.floor(np.clip(noise, 0.0, 2.0) / 2.0 * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(u8.transpose(1, 2, 0), mode="RGB").save(path)


def load_noise_map(path: Path, dtype=np.float64) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"))
    return (arr.transpose(2, 0, 1).astype(dtype) / 255.0) * 2.0


def save_depth(path: Path, depth: np.ndarray) -> None:
    Image.fromarray(unit_to_u8(depth[0]), mode="L").save(path)


def load_depth(path: Path, dtype=np.float64) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("L"))
    return u8_to_unit(arr, dtype)[None]


def write_manifest(path: Path, records: list[SampleRecord]) -> None:
    seen = set()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            if r.id in seen:
                raise ValueError(f"duplicate sample id {r.id!r}")
            seen.add(r.id)
            fh.write(f"{r.id}\t{r.image_path}\t{r.label}\t{r.attack_type}\t{r.split}\t{r.seed}\n")


def read_manifest(path: Path) -> list[SampleRecord]:
    records = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 tab-separated fields")
            rec = SampleRecord(parts[0], parts[1], parts[2], parts[3], parts[4],
                               int(parts[5]))
            if rec.id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate sample id {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    return records


def write_domain(out_dir: Path, records: list[SampleRecord],
                 images: dict[str, np.ndarray], depths: dict[str, np.ndarray]) -> None:
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "depths").mkdir(parents=True, exist_ok=True)
    for r in records:
        save_image(out_dir / r.image_path, images[r.id])
        save_depth(out_dir / r.depth_path, depths[r.id])
    write_manifest(out_dir / "manifest.tsv", records)


# --------------------------------------------------------------------------
# evaluation protocols
# --------------------------------------------------------------------------

@dataclass
class Protocol:
    """A train/dev/test partition; the dev part fixes operating thresholds."""

    scheme: str
    train: list[SampleRecord]
    dev: list[SampleRecord]
    test: list[SampleRecord]

    def parts(self):
        return {"train": self.train, "dev": self.dev, "test": self.test}


def _require_both_labels(records: list[SampleRecord], what: str) -> None:
    labels = {r.label for r in records}
    if labels != {LABEL_GENUINE, LABEL_SPOOF}:
        raise ValueError(f"{what} must contain both genuine and spoof samples")


def build_protocols(records: list[SampleRecord], scheme: str) -> Protocol:
    """Assemble a protocol from manifest records.

    intra: the 70/10/20 split of a single domain. cross_ab / cross_ba: train
    and dev come from the source domain (a resp. b), the test side is the
    other domain's test split.
    """
    if scheme not in ("intra", "cross_ab", "cross_ba"):
        raise ValueError(f"unknown protocol scheme {scheme!r}")
    _require_both_labels(records, "protocol input")
    by_domain: dict[str, list[SampleRecord]] = {}
    for r in records:
        by_domain.setdefault(r.domain, []).append(r)

    if scheme == "intra":
        if len(by_domain) != 1:
            raise ValueError("intra protocol expects records from exactly one domain")
        pool = records
        proto = Protocol("intra",
                         [r for r in pool if r.split == "train"],
                         [r for r in pool if r.split == "dev"],
                         [r for r in pool if r.split == "test"])
    else:
        src, dst = ("a", "b") if scheme == "cross_ab" else ("b", "a")
        if src not in by_domain or dst not in by_domain:
            raise ValueError(f"{scheme} needs records from domains {src!r} and {dst!r}")
        proto = Protocol(scheme,
                         [r for r in by_domain[src] if r.split == "train"],
                         [r for r in by_domain[src] if r.split == "dev"],
                         [r for r in by_domain[dst] if r.split == "test"])

    for name, part in proto.parts().items():
        _require_both_labels(part, f"{scheme} {name} split")
    ids = [r.id for part in proto.parts().values() for r in part]
    if len(ids) != len(set(ids)):
        raise ValueError("protocol splits overlap")
    return proto
