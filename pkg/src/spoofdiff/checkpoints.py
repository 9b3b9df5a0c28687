"""Checkpoint containers.

Both model kinds share one layout: a magic tag ("DSPD" denoiser / "DSPC"
detector), a fixed binary header carrying the config needed to rebuild the
module exactly, then named tensors in the DSPT blob format. Little-endian
throughout.
"""

from __future__ import annotations

import struct
from pathlib import Path

from .denoiser import DenoiserConfig, DenoiserParams, init_denoiser
from .detector import DetectorConfig, DetectorParams, init_detector
from .numerics import Tensor, read_tensor, write_tensor
from .schedule import NoiseSchedule, build_linear_schedule

DENOISER_MAGIC = b"DSPD"
DETECTOR_MAGIC = b"DSPC"
FORMAT_VERSION = 1


def _write_str(fh, s: str) -> None:
    raw = s.encode("utf-8")
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)


def _read_str(fh) -> str:
    n, = struct.unpack("<H", fh.read(2))
    return fh.read(n).decode("utf-8")


def _write_layers(fh, layers: dict[str, Tensor]) -> None:
    fh.write(struct.pack("<I", len(layers)))
    for name, t in layers.items():
        _write_str(fh, name)
        write_tensor(fh, t.data)


def _read_layers(fh) -> dict[str, Tensor]:
    count, = struct.unpack("<I", fh.read(4))
    layers = {}
    for _ in range(count):
        name = _read_str(fh)
        layers[name] = Tensor(read_tensor(fh), requires_grad=True)
    return layers


def _check_magic(fh, expected: bytes, path) -> None:
    magic = fh.read(4)
    if magic != expected:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {expected!r}")
    version, = struct.unpack("<I", fh.read(4))
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")


def save_denoiser(path: Path, params: DenoiserParams, schedule: NoiseSchedule) -> None:
    cfg = params.config
    with open(path, "wb") as fh:
        fh.write(DENOISER_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<IIIII", cfg.image_size, cfg.channels, cfg.base_width,
                             cfg.depth_levels, cfg.time_embed_dim))
        fh.write(struct.pack("<Q", cfg.seed))
        fh.write(struct.pack("<Idd", schedule.T, schedule.beta_start, schedule.beta_end))
        _write_str(fh, params.domain_tag)
        _write_layers(fh, params.layers)


def load_denoiser(path: Path) -> tuple[DenoiserParams, NoiseSchedule]:
    with open(path, "rb") as fh:
        _check_magic(fh, DENOISER_MAGIC, path)
        image_size, channels, base_width, depth_levels, time_embed_dim = \
            struct.unpack("<IIIII", fh.read(20))
        seed, = struct.unpack("<Q", fh.read(8))
        t_steps, beta_start, beta_end = struct.unpack("<Idd", fh.read(20))
        domain_tag = _read_str(fh)
        layers = _read_layers(fh)
    config = DenoiserConfig(image_size=image_size, channels=channels,
                            base_width=base_width, depth_levels=depth_levels,
                            time_embed_dim=time_embed_dim, seed=seed)
    reference = init_denoiser(config, domain_tag)
    if set(reference.layers) != set(layers):
        raise ValueError(f"{path}: layer names do not match the stored config")
    for name, ref in reference.layers.items():
        if layers[name].shape != ref.shape:
            raise ValueError(f"{path}: layer {name} has shape {layers[name].shape}, "
                             f"expected {ref.shape}")
    schedule = build_linear_schedule(t_steps, beta_start, beta_end)
    return DenoiserParams(config, layers, domain_tag), schedule


def save_detector(path: Path, params: DetectorParams) -> None:
    cfg = params.config
    with open(path, "wb") as fh:
        fh.write(DETECTOR_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", cfg.image_size))
        fh.write(struct.pack("<Q", cfg.seed))
        _write_str(fh, cfg.input_mode)
        fh.write(struct.pack("<dd", cfg.cdc_theta, cfg.crop_fraction))
        fh.write(struct.pack("<B", int(cfg.aux_heads)))
        _write_layers(fh, params.layers)


def load_detector(path: Path) -> DetectorParams:
    with open(path, "rb") as fh:
        _check_magic(fh, DETECTOR_MAGIC, path)
        image_size, = struct.unpack("<I", fh.read(4))
        seed, = struct.unpack("<Q", fh.read(8))
        input_mode = _read_str(fh)
        cdc_theta, crop_fraction = struct.unpack("<dd", fh.read(16))
        aux_heads, = struct.unpack("<B", fh.read(1))
        layers = _read_layers(fh)
    config = DetectorConfig(image_size=image_size, input_mode=input_mode,
                            cdc_theta=cdc_theta, crop_fraction=crop_fraction,
                            aux_heads=bool(aux_heads), seed=seed)
    reference = init_detector(config)
    if set(reference.layers) != set(layers):
        raise ValueError(f"{path}: layer names do not match the stored config")
    for name, ref in reference.layers.items():
        if layers[name].shape != ref.shape:
            raise ValueError(f"{path}: layer {name} has shape {layers[name].shape}, "
                             f"expected {ref.shape}")
    return DetectorParams(config, layers)
