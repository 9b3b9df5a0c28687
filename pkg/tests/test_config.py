"""Sectioned key = value configuration: defaults, round trips, strictness."""

import pytest

from spoofdiff.config import (RunConfig, RunPaths, format_config, parse_config,
                              save_config, load_config)


def test_defaults_document_every_field():
    cfg = RunConfig()
    assert cfg.corpus.genuine_per_domain == 2000
    assert cfg.corpus.spoof_per_domain == 2000
    assert cfg.schedule.timesteps == 1000
    assert cfg.schedule.beta_start == 1e-4
    assert cfg.schedule.beta_end == 0.02
    assert cfg.despoof.steps == 50
    assert cfg.detector.cdc_theta == 0.7
    assert cfg.detector.crop_fraction == 0.8
    assert cfg.detector_train.learning_rate == 1e-4
    assert cfg.detector_train.weight_decay == 5e-5
    assert cfg.detector_train.lr_decay_every == 500
    assert cfg.detector_train.lr_decay_factor == 0.1
    assert cfg.detector_train.batch_size == 64
    assert cfg.protocol.scheme == "intra"


def test_format_parse_roundtrip():
    cfg = RunConfig()
    cfg.run.seed = 99
    cfg.corpus.genuine_per_domain = 123
    cfg.diffusion_train.max_steps = 17
    cfg.detector.aux_heads = True
    text = format_config(cfg)
    parsed = parse_config(text)
    assert format_config(parsed) == text
    assert parsed.run.seed == 99
    assert parsed.corpus.genuine_per_domain == 123
    assert parsed.detector.aux_heads is True


def test_unknown_key_named_in_error():
    text = "[corpus]\nimage_size = 32\nfrobnicate = 1\n"
    with pytest.raises(ValueError, match="frobnicate"):
        parse_config(text)


def test_unknown_section_named_in_error():
    with pytest.raises(ValueError, match="mystery"):
        parse_config("[mystery]\nx = 1\n")


def test_malformed_lines_rejected():
    with pytest.raises(ValueError, match="outside"):
        parse_config("seed = 3\n")
    with pytest.raises(ValueError, match="key = value"):
        parse_config("[run]\njust some words\n")
    with pytest.raises(ValueError, match="bad value"):
        parse_config("[run]\nseed = pancake\n")
    with pytest.raises(ValueError, match="boolean"):
        parse_config("[detector]\naux_heads = maybe\n")


def test_comments_and_blank_lines_ignored():
    text = "# top comment\n\n[run]\nseed = 5   # trailing comment\n"
    cfg = parse_config(text)
    assert cfg.run.seed == 5


def test_file_roundtrip(tmp_path):
    cfg = RunConfig()
    cfg.run.out_dir = "somewhere/else"
    path = tmp_path / "run.cfg"
    save_config(path, cfg)
    loaded = load_config(path)
    assert loaded.run.out_dir == "somewhere/else"


def test_protocol_domain_resolution():
    cfg = RunConfig()
    cfg.protocol.scheme = "intra"
    assert cfg.protocol.source_domain() == "a"
    assert cfg.protocol.test_domain() == "a"
    cfg.protocol.scheme = "cross_ab"
    assert cfg.protocol.source_domain() == "a"
    assert cfg.protocol.test_domain() == "b"
    cfg.protocol.scheme = "cross_ba"
    assert cfg.protocol.source_domain() == "b"
    assert cfg.protocol.test_domain() == "a"
    cfg.protocol.train_domain = "b"
    cfg.protocol.scheme = "intra"
    assert cfg.protocol.source_domain() == "b"


def test_run_paths_layout(tmp_path):
    paths = RunPaths(tmp_path)
    assert paths.manifest("a").name == "manifest.tsv"
    assert "domain_a" in str(paths.domain_dir("a"))
    assert paths.diffusion_ckpt("genuine_only").name == "diffusion_genuine_only.ckpt"
    assert paths.detector_ckpt("rgb_noise", 50).name == "detector_rgb_noise_steps50.ckpt"
    assert paths.detector_ckpt("rgb", 50).name == "detector_rgb.ckpt"
    assert "steps25" in str(paths.despoof_dir("a", 25))
