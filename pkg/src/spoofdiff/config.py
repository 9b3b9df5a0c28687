"""Run configuration: a flat ``key = value`` text format with sections.

Every field has a documented default; parsing is strict (unknown sections or
keys are rejected by name, as are malformed values). The same dataclasses are
used programmatically by tests and the CLI.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .diffusion import DiffusionTrainConfig
from .detector import DetectorTrainConfig


@dataclass
class CorpusSection:
    image_size: int = 32
    genuine_per_domain: int = 2000
    spoof_per_domain: int = 2000


@dataclass
class ScheduleSection:
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02


@dataclass
class DenoiserSection:
    base_width: int = 32
    depth_levels: int = 2
    time_embed_dim: int = 64


@dataclass
class DespoofSection:
    steps: int = 50
    panel_samples: int = 8


@dataclass
class DetectorSection:
    cdc_theta: float = 0.7
    crop_fraction: float = 0.8
    aux_heads: bool = False


@dataclass
class ProtocolSection:
    scheme: str = "intra"
    train_domain: str = ""   # empty = derived from scheme (a, a, b)

    def source_domain(self) -> str:
        if self.train_domain:
            return self.train_domain
        return "b" if self.scheme == "cross_ba" else "a"

    def test_domain(self) -> str:
        if self.scheme == "cross_ab":
            return "b"
        if self.scheme == "cross_ba":
            return "a"
        return self.source_domain()


@dataclass
class RunSection:
    seed: int = 0
    out_dir: str = "runs/default"


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    corpus: CorpusSection = field(default_factory=CorpusSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    denoiser: DenoiserSection = field(default_factory=DenoiserSection)
    diffusion_train: DiffusionTrainConfig = field(default_factory=DiffusionTrainConfig)
    despoof: DespoofSection = field(default_factory=DespoofSection)
    detector: DetectorSection = field(default_factory=DetectorSection)
    detector_train: DetectorTrainConfig = field(default_factory=DetectorTrainConfig)
    protocol: ProtocolSection = field(default_factory=ProtocolSection)


_SECTION_ORDER = ("run", "corpus", "schedule", "denoiser", "diffusion_train",
                  "despoof", "detector", "detector_train", "protocol")


def _parse_value(raw: str, target_type):
    raw = raw.strip()
    if target_type is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    return raw


def parse_config(text: str) -> RunConfig:
    """Parse sectioned ``key = value`` text; unknown keys are rejected by name."""
    cfg = RunConfig()
    sections = {name: getattr(cfg, name) for name in _SECTION_ORDER}
    current: str | None = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            if current not in sections:
                raise ValueError(f"line {lineno}: unknown section [{current}]")
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        if current is None:
            raise ValueError(f"line {lineno}: key outside of any [section]")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        section_obj = sections[current]
        field_types = {f.name: f.type for f in fields(section_obj)}
        if key not in field_types:
            raise ValueError(f"line {lineno}: unknown key {key!r} in section [{current}]")
        ftype = type(getattr(section_obj, key))
        try:
            setattr(section_obj, key, _parse_value(raw, ftype))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {current}.{key}: {exc}")
    return cfg


def load_config(path: Path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def format_config(cfg: RunConfig) -> str:
    lines = []
    for name in _SECTION_ORDER:
        section = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in fields(section):
            v = getattr(section, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        lines.append("")
    return "\n".join(lines)


def save_config(path: Path, cfg: RunConfig) -> None:
    Path(path).write_text(format_config(cfg), encoding="utf-8")


@dataclass
class RunPaths:
    """Canonical output layout under the run directory."""

    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    def domain_dir(self, domain: str) -> Path:
        return self.root / "corpus" / f"domain_{domain}"

    def manifest(self, domain: str) -> Path:
        return self.domain_dir(domain) / "manifest.tsv"

    @property
    def checkpoints(self) -> Path:
        return self.root / "checkpoints"

    def diffusion_ckpt(self, domain_tag: str) -> Path:
        return self.checkpoints / f"diffusion_{domain_tag}.ckpt"

    def detector_ckpt(self, inputs: str, steps: int) -> Path:
        if inputs in ("noise", "rgb_noise"):
            return self.checkpoints / f"detector_{inputs}_steps{steps}.ckpt"
        return self.checkpoints / f"detector_{inputs}.ckpt"

    @property
    def logs(self) -> Path:
        return self.root / "logs"

    def despoof_dir(self, domain: str, steps: int) -> Path:
        return self.root / "despoof" / f"domain_{domain}_steps{steps}"

    def eval_dir(self, protocol: str, inputs: str, steps: int) -> Path:
        return self.root / "eval" / f"{protocol}_{inputs}_steps{steps}"
