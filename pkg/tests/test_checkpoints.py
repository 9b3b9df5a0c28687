"""Binary tensor blobs and checkpoint containers round-trip bitwise."""

import io

import numpy as np
import pytest

from spoofdiff.checkpoints import (load_denoiser, load_detector, save_denoiser,
                                   save_detector)
from spoofdiff.denoiser import DOMAIN_GENUINE_ONLY, DenoiserConfig, init_denoiser
from spoofdiff.detector import DetectorConfig, init_detector
from spoofdiff.numerics import read_tensor, write_tensor
from spoofdiff.schedule import build_linear_schedule


def test_tensor_blob_roundtrip():
    rng = np.random.default_rng(0)
    for shape in [(3,), (2, 4), (1, 3, 5, 5), ()]:
        arr = rng.standard_normal(shape).astype(np.float32)
        buf = io.BytesIO()
        write_tensor(buf, arr)
        buf.seek(0)
        back = read_tensor(buf)
        assert back.dtype == np.float32
        np.testing.assert_array_equal(back, arr.reshape(back.shape))


def test_tensor_blob_header_layout():
    buf = io.BytesIO()
    write_tensor(buf, np.zeros((2, 3), dtype=np.float32))
    raw = buf.getvalue()
    assert raw[:4] == b"DSPT"
    assert int.from_bytes(raw[4:8], "little") == 1      # version
    assert int.from_bytes(raw[8:12], "little") == 2     # rank
    assert int.from_bytes(raw[12:20], "little") == 2    # shape[0]
    assert int.from_bytes(raw[20:28], "little") == 3    # shape[1]
    assert len(raw) == 28 + 4 * 6


def test_tensor_blob_rejects_bad_magic_and_truncation():
    buf = io.BytesIO(b"XXXX" + b"\x00" * 16)
    with pytest.raises(ValueError):
        read_tensor(buf)
    good = io.BytesIO()
    write_tensor(good, np.ones(4, dtype=np.float32))
    truncated = io.BytesIO(good.getvalue()[:-4])
    with pytest.raises(ValueError):
        read_tensor(truncated)


def test_denoiser_checkpoint_roundtrip(tmp_path):
    cfg = DenoiserConfig(image_size=8, base_width=4, time_embed_dim=8, seed=9)
    params = init_denoiser(cfg, DOMAIN_GENUINE_ONLY)
    schedule = build_linear_schedule(128, 2e-4, 0.015)
    path = tmp_path / "model.ckpt"
    save_denoiser(path, params, schedule)
    loaded, loaded_schedule = load_denoiser(path)

    assert loaded.config == cfg
    assert loaded.domain_tag == DOMAIN_GENUINE_ONLY
    assert loaded_schedule.T == 128
    np.testing.assert_array_equal(loaded_schedule.betas, schedule.betas)
    for name, t in params.layers.items():
        np.testing.assert_array_equal(loaded.layers[name].data, t.data)

    # save -> load -> save is byte-identical
    path2 = tmp_path / "model2.ckpt"
    save_denoiser(path2, loaded, loaded_schedule)
    assert path.read_bytes() == path2.read_bytes()


def test_detector_checkpoint_roundtrip(tmp_path):
    cfg = DetectorConfig(image_size=32, input_mode="rgb_noise", cdc_theta=0.65,
                         crop_fraction=0.75, seed=4)
    params = init_detector(cfg)
    path = tmp_path / "det.ckpt"
    save_detector(path, params)
    loaded = load_detector(path)
    assert loaded.config == cfg
    for name, t in params.layers.items():
        np.testing.assert_array_equal(loaded.layers[name].data, t.data)
    path2 = tmp_path / "det2.ckpt"
    save_detector(path2, loaded)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_magic_mismatch(tmp_path):
    cfg = DenoiserConfig(image_size=8, base_width=4, time_embed_dim=8, seed=1)
    params = init_denoiser(cfg)
    path = tmp_path / "model.ckpt"
    save_denoiser(path, params, build_linear_schedule(16, 1e-4, 0.02))
    with pytest.raises(ValueError):
        load_detector(path)
    det = init_detector(DetectorConfig(seed=1))
    dpath = tmp_path / "det.ckpt"
    save_detector(dpath, det)
    with pytest.raises(ValueError):
        load_denoiser(dpath)


def test_checkpoint_rejects_corrupt_payload(tmp_path):
    cfg = DenoiserConfig(image_size=8, base_width=4, time_embed_dim=8, seed=2)
    params = init_denoiser(cfg)
    path = tmp_path / "model.ckpt"
    save_denoiser(path, params, build_linear_schedule(16, 1e-4, 0.02))
    raw = bytearray(path.read_bytes())
    truncated = tmp_path / "trunc.ckpt"
    truncated.write_bytes(bytes(raw[: len(raw) // 2]))
    with pytest.raises(ValueError):
        load_denoiser(truncated)
