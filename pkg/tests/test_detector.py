"""Two-stream detector: crop, forward wiring, depth losses, scoring, training."""

import numpy as np
import pytest

from spoofdiff.detector import (DetectorConfig, DetectorDataset,
                                DetectorTrainConfig, cdl_loss, center_crop,
                                contrast_kernels, depth_losses, forward_detector,
                                forward_two_stream, fuse_scores, init_detector,
                                mse_loss, score, score_dataset, train_detector)
from spoofdiff.numerics import Tensor, finite_diff_grad, relative_error


def rand_inputs(rng, n=2, size=32):
    rgb = Tensor(rng.uniform(-1, 1, (n, 3, size, size)).astype(np.float32))
    noise = Tensor(rng.uniform(0, 0.5, (n, 3, size, size)).astype(np.float32))
    return rgb, noise


# -- center crop ---------------------------------------------------------------

def test_center_crop_identity_at_full_fraction():
    rng = np.random.default_rng(0)
    img = Tensor(rng.uniform(-1, 1, (3, 8, 8)))
    out = center_crop(img, 1.0)
    np.testing.assert_array_equal(out.data, img.data)


def test_center_crop_preserves_constants():
    img = Tensor(np.full((3, 16, 16), 0.25))
    out = center_crop(img, 0.6)
    np.testing.assert_allclose(out.data, 0.25, rtol=1e-12)


def test_center_crop_matches_hand_bilinear():
    # 4x4 ramp, fraction 0.5: output i samples source (i+0.5)*0.5 + 1 - 0.5
    img = Tensor(np.arange(16, dtype=np.float64).reshape(1, 4, 4))
    out = center_crop(img, 0.5).data[0]
    src = [(i + 0.5) * 0.5 + 4 * 0.5 / 2 - 0.5 for i in range(4)]
    want = np.zeros((4, 4))
    for i, sy in enumerate(src):
        for j, sx in enumerate(src):
            y0, x0 = int(np.floor(sy)), int(np.floor(sx))
            fy, fx = sy - y0, sx - x0
            y1, x1 = min(y0 + 1, 3), min(x0 + 1, 3)
            ref = img.data[0]
            want[i, j] = (ref[y0, x0] * (1 - fy) * (1 - fx)
                          + ref[y0, x1] * (1 - fy) * fx
                          + ref[y1, x0] * fy * (1 - fx)
                          + ref[y1, x1] * fy * fx)
    np.testing.assert_allclose(out, want, rtol=1e-12)


def test_center_crop_rejects_bad_fraction():
    img = Tensor(np.zeros((3, 8, 8)))
    for fraction in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            center_crop(img, fraction)


# -- forward pass ----------------------------------------------------------------

def test_forward_shapes_and_range():
    rng = np.random.default_rng(1)
    rgb, noise = rand_inputs(rng)
    params = init_detector(DetectorConfig(input_mode="rgb_noise", seed=1))
    out = forward_two_stream(params, rgb, noise)
    assert out.shape == (2, 1, 32, 32)
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0

    single = forward_two_stream(params, rgb[0], noise[0])
    assert single.shape == (1, 32, 32)
    np.testing.assert_allclose(single.data, out.data[0], atol=1e-6)


def test_forward_deterministic():
    rng = np.random.default_rng(2)
    rgb, noise = rand_inputs(rng)
    params = init_detector(DetectorConfig(input_mode="rgb_noise", seed=2))
    a = forward_two_stream(params, rgb, noise)
    b = forward_two_stream(params, rgb, noise)
    np.testing.assert_array_equal(a.data, b.data)


def test_noise_branch_is_live():
    rng = np.random.default_rng(3)
    rgb, noise = rand_inputs(rng)
    params = init_detector(DetectorConfig(input_mode="rgb_noise", seed=3))
    normal = forward_detector(params, rgb=rgb, noise=noise)
    ablated = forward_detector(params, rgb=rgb, noise=noise,
                               zero_noise_features=True)
    assert np.abs(normal.data - ablated.data).max() > 1e-7


@pytest.mark.parametrize("mode", ["rgb", "noise", "rgb_rgb", "rgb_noise"])
def test_all_input_modes_run(mode):
    rng = np.random.default_rng(4)
    rgb, noise = rand_inputs(rng)
    params = init_detector(DetectorConfig(input_mode=mode, seed=4))
    kwargs = {}
    if mode != "noise":
        kwargs["rgb"] = rgb
    if mode in ("noise", "rgb_noise"):
        kwargs["noise"] = noise
    out = forward_detector(params, **kwargs)
    assert out.shape == (2, 1, 32, 32)


def test_forward_input_validation():
    rng = np.random.default_rng(5)
    rgb, noise = rand_inputs(rng)
    params = init_detector(DetectorConfig(input_mode="rgb_noise", seed=5))
    with pytest.raises(ValueError):
        forward_detector(params, rgb=rgb)            # missing noise
    with pytest.raises(ValueError):
        forward_detector(params, noise=noise)        # missing rgb
    with pytest.raises(ValueError):
        forward_two_stream(params, rgb, Tensor(-noise.data))   # negative noise
    bad = Tensor(rng.uniform(0, 1, (2, 3, 16, 16)).astype(np.float32))
    with pytest.raises(ValueError):
        forward_two_stream(params, rgb, bad)         # shape mismatch
    mono = init_detector(DetectorConfig(input_mode="rgb", seed=5))
    with pytest.raises(ValueError):
        forward_two_stream(mono, rgb, noise)


# -- losses ----------------------------------------------------------------------

def test_mse_cases():
    rng = np.random.default_rng(6)
    label = Tensor(rng.uniform(0, 1, (1, 32, 32)))
    assert float(mse_loss(label, label).data) == 0.0
    shifted = Tensor(label.data + 0.1)
    assert abs(float(mse_loss(shifted, label).data) - 0.01) < 1e-12


def test_mse_matches_naive_loops():
    rng = np.random.default_rng(7)
    a = rng.uniform(0, 1, (1, 5, 5))
    b = rng.uniform(0, 1, (1, 5, 5))
    got = float(mse_loss(Tensor(a), Tensor(b)).data)
    acc = 0.0
    for i in range(5):
        for j in range(5):
            acc += (a[0, i, j] - b[0, i, j]) ** 2
    assert abs(got - acc / 25.0) < 1e-12


def test_cdl_zero_for_equal_and_constant_offset():
    rng = np.random.default_rng(8)
    label = Tensor(rng.uniform(0, 1, (1, 8, 8)))
    assert float(cdl_loss(label, label).data) == 0.0
    base = float(cdl_loss(Tensor(label.data * 0.5), label).data)
    off = float(cdl_loss(Tensor(label.data * 0.5 + 0.37),
                         Tensor(label.data + 0.21)).data)
    assert abs(base - off) < 1e-12   # exact constant-offset invariance


def test_cdl_matches_hand_evaluation():
    # 3x3 maps: valid convolution leaves a single output element per kernel
    pred = np.array([[0.2, 0.8, 0.1], [0.5, 0.3, 0.9], [0.0, 0.4, 0.6]])
    label = np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6], [0.7, 0.8, 0.9]])
    got = float(cdl_loss(Tensor(pred[None]), Tensor(label[None])).data)
    acc = 0.0
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            rp = pred[1, 1] - pred[1 + dy, 1 + dx]
            rl = label[1, 1] - label[1 + dy, 1 + dx]
            acc += (rp - rl) ** 2   # single valid position, mean over 1 element
    assert abs(got - acc) < 1e-12


def test_contrast_kernels_shape_and_sum():
    k = contrast_kernels()
    assert k.shape == (8, 1, 3, 3)
    np.testing.assert_allclose(k.sum(axis=(2, 3)), 0.0)
    assert np.all(k[:, 0, 1, 1] == 1.0)


def test_losses_reject_shape_mismatch():
    a = Tensor(np.zeros((1, 8, 8)))
    b = Tensor(np.zeros((1, 4, 4)))
    with pytest.raises(ValueError):
        mse_loss(a, b)
    with pytest.raises(ValueError):
        cdl_loss(a, b)


def test_overall_loss_gradients():
    # tiny two-stream detector against finite differences, double precision
    cfg = DetectorConfig(image_size=8, input_mode="rgb_noise", seed=6)
    params = init_detector(cfg, dtype=np.float64)
    rng = np.random.default_rng(9)
    rgb = Tensor(rng.uniform(-1, 1, (1, 3, 8, 8)))
    noise = Tensor(rng.uniform(0, 0.5, (1, 3, 8, 8)))
    label = Tensor(rng.uniform(0, 1, (1, 1, 32, 32)))

    def loss():
        return depth_losses(forward_detector(params, rgb=rgb, noise=noise), label)

    loss().backward()
    eps = 1e-6
    for name in ("rgb.b1.w", "noise.b2.w", "fused.b3.w", "fused.head.w",
                 "fused.head.b"):
        t = params.layers[name]
        flat = t.data.reshape(-1)
        idx = int(rng.integers(0, flat.size))
        orig = flat[idx]
        flat[idx] = orig + eps
        f_pos = float(loss().data)
        flat[idx] = orig - eps
        f_neg = float(loss().data)
        flat[idx] = orig
        fd = (f_pos - f_neg) / (2 * eps)
        an = t.grad.reshape(-1)[idx]
        rel = abs(an - fd) / max(1e-12, abs(an) + abs(fd))
        assert rel < 1e-3, f"{name}[{idx}]"


# -- scoring ---------------------------------------------------------------------

def test_score_cases():
    assert score(Tensor(np.zeros((1, 32, 32)))) == 0.0
    assert score(Tensor(np.ones((1, 32, 32)))) == 1.0
    rng = np.random.default_rng(10)
    m = rng.uniform(0, 1, (1, 32, 32))
    assert abs(score(Tensor(m)) - m.mean()) < 1e-15


def test_fuse_scores_cases():
    assert fuse_scores(0.0, 0.0) == 0.0
    assert fuse_scores(0.7, 0.7) == 0.7
    assert fuse_scores(0.2, 0.6) == pytest.approx(0.4, abs=1e-15)
    with pytest.raises(ValueError):
        fuse_scores(-0.1, 0.5)
    with pytest.raises(ValueError):
        fuse_scores(0.5, 1.2)


# -- training ---------------------------------------------------------------------

def tiny_dataset(rng, n=8):
    rgb = rng.uniform(-1, 1, (n, 3, 32, 32)).astype(np.float32)
    labels = ["genuine" if i % 2 == 0 else "spoof" for i in range(n)]
    depth = np.zeros((n, 1, 32, 32), dtype=np.float32)
    for i, l in enumerate(labels):
        if l == "genuine":
            yy, xx = np.mgrid[0:32, 0:32]
            bump = np.clip(1 - (((yy - 16) / 14.0) ** 2 + ((xx - 16) / 14.0) ** 2), 0, 1)
            depth[i, 0] = 0.9 * bump
    noise = rng.uniform(0, 0.4, (n, 3, 32, 32)).astype(np.float32)
    return DetectorDataset(rgb=rgb, depth=depth, labels=labels, noise=noise)


def test_dataset_label_consistency_enforced():
    rng = np.random.default_rng(11)
    ds = tiny_dataset(rng)
    bad_depth = ds.depth.copy()
    bad_depth[1] = 0.5    # spoof with nonzero depth label
    with pytest.raises(ValueError):
        DetectorDataset(rgb=ds.rgb, depth=bad_depth, labels=ds.labels, noise=ds.noise)
    bad_depth2 = ds.depth.copy()
    bad_depth2[0] = 0.0   # genuine with all-zero depth label
    with pytest.raises(ValueError):
        DetectorDataset(rgb=ds.rgb, depth=bad_depth2, labels=ds.labels, noise=ds.noise)


def test_training_descends_and_overfits_eight_samples():
    rng = np.random.default_rng(12)
    ds = tiny_dataset(rng)
    params = init_detector(DetectorConfig(input_mode="rgb_noise", seed=7))
    tcfg = DetectorTrainConfig(batch_size=8, max_steps=220, learning_rate=3e-4,
                               weight_decay=0.0, lr_decay_every=500, eval_every=50)
    rows = train_detector(params, ds, tcfg, seed=13)
    first, last = rows[0][1], rows[-1][1]
    assert last < first
    assert last < 0.01    # overfit oracle on the 8-sample corpus


def test_training_is_seed_deterministic():
    rng = np.random.default_rng(14)
    ds = tiny_dataset(rng)
    outs = []
    for _ in range(2):
        params = init_detector(DetectorConfig(input_mode="rgb_noise", seed=8))
        tcfg = DetectorTrainConfig(batch_size=4, max_steps=12, eval_every=6)
        train_detector(params, ds, tcfg, seed=15, dev_set=ds)
        outs.append({k: v.data.copy() for k, v in params.layers.items()})
    for k in outs[0]:
        np.testing.assert_array_equal(outs[0][k], outs[1][k])


def test_training_rejects_empty_or_missing_noise():
    rng = np.random.default_rng(16)
    ds = tiny_dataset(rng)
    no_noise = DetectorDataset(rgb=ds.rgb, depth=ds.depth, labels=ds.labels)
    params = init_detector(DetectorConfig(input_mode="rgb_noise", seed=9))
    with pytest.raises(ValueError):
        train_detector(params, no_noise, DetectorTrainConfig(max_steps=1), seed=0)
    empty = DetectorDataset(rgb=ds.rgb[:0], depth=ds.depth[:0], labels=[],
                            noise=ds.noise[:0])
    with pytest.raises(ValueError):
        train_detector(params, empty, DetectorTrainConfig(max_steps=1), seed=0)


def test_score_dataset_matches_forward():
    rng = np.random.default_rng(17)
    ds = tiny_dataset(rng, n=4)
    params = init_detector(DetectorConfig(input_mode="rgb_noise", seed=10))
    scores = score_dataset(params, ds)
    out = forward_detector(params, rgb=Tensor(ds.rgb), noise=Tensor(ds.noise))
    np.testing.assert_allclose(scores, out.data.mean(axis=(1, 2, 3)), atol=1e-7)


def test_aux_heads_and_score_fusion():
    rng = np.random.default_rng(18)
    ds = tiny_dataset(rng, n=4)
    cfg = DetectorConfig(input_mode="rgb_noise", aux_heads=True, seed=11)
    params = init_detector(cfg)
    out, aux = forward_detector(params, rgb=Tensor(ds.rgb), noise=Tensor(ds.noise),
                                with_aux=True)
    assert set(aux) == {"rgb", "noise"}
    fused = score_dataset(params, ds, score_fusion=True)
    assert fused.shape == (4,)
    assert np.all((fused >= 0) & (fused <= 1))
    plain = init_detector(DetectorConfig(input_mode="rgb_noise", seed=11))
    with pytest.raises(ValueError):
        score_dataset(plain, ds, score_fusion=True)
    with pytest.raises(ValueError):
        DetectorConfig(input_mode="rgb", aux_heads=True)
