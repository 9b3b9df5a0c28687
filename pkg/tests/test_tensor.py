"""Autodiff core: every differentiable op is checked against the
central-difference oracle in double precision."""

import numpy as np
import pytest

from spoofdiff.numerics import Tensor, concat, finite_diff_grad, no_grad, relative_error

TOL = 1e-4   # elementwise-op gradient tolerance (double precision)


def check_grad(build, params, tol=TOL):
    loss = build(params)
    loss.backward()
    fd = finite_diff_grad(build, params)
    err = relative_error(params.grad, fd)
    assert err < tol, f"gradient mismatch: rel err {err}"


@pytest.mark.parametrize("name,fn", [
    ("add", lambda p: (p + 2.0 * p + 1.5).sum()),
    ("sub", lambda p: (3.0 - p - p).sum()),
    ("mul", lambda p: (p * p * 0.7).sum()),
    ("div", lambda p: (p / 3.0 + 2.0 / (p + 5.0)).sum()),
    ("pow", lambda p: (p ** 3).sum()),
    ("neg", lambda p: (-p * p).sum()),
    ("exp", lambda p: p.exp().sum()),
    ("sqrt", lambda p: (p + 5.0).sqrt().sum()),
    ("log", lambda p: (p + 5.0).log().sum()),
    ("abs", lambda p: (p + 0.3).abs().sum()),
    ("relu", lambda p: (p + 0.3).relu().sum()),
    ("sigmoid", lambda p: p.sigmoid().sum()),
    ("silu", lambda p: p.silu().sum()),
    ("clip", lambda p: p.clip(-0.5, 0.5).sum()),
    ("mean", lambda p: (p * p).mean()),
    ("mean_axis", lambda p: (p * p).mean(axis=1).sum()),
    ("sum_keepdims", lambda p: ((p.sum(axis=0, keepdims=True)) ** 2).sum()),
    ("reshape", lambda p: (p.reshape(8) ** 2).sum()),
    ("getitem", lambda p: (p[1:, ::2] ** 2).sum()),
    ("transpose", lambda p: ((p.transpose((1, 0)) * p.transpose((1, 0))).sum())),
    ("pad2d", lambda p: (p.reshape(1, 2, 4).pad2d(2) ** 2).sum()),
])
def test_elementwise_grads(name, fn):
    rng = np.random.default_rng(hash(name) % 2 ** 32)
    p = Tensor(rng.standard_normal((2, 4)), requires_grad=True)
    check_grad(fn, p)


def test_broadcast_grads():
    rng = np.random.default_rng(7)
    a = Tensor(rng.standard_normal((3, 1, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal((2, 4)), requires_grad=True)

    def build_a(p):
        return ((p + b) * (p * b)).sum()

    loss = build_a(a)
    loss.backward()
    fa = finite_diff_grad(build_a, a)
    assert relative_error(a.grad, fa) < TOL
    fb = finite_diff_grad(lambda q: ((a + q) * (a * q)).sum(), b)
    assert relative_error(b.grad, fb) < TOL


def test_matmul_grads():
    rng = np.random.default_rng(3)
    a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
    loss = (a @ b).sum()
    loss.backward()
    fa = finite_diff_grad(lambda p: (p @ b).sum(), a)
    fb = finite_diff_grad(lambda p: (a @ p).sum(), b)
    assert relative_error(a.grad, fa) < TOL
    assert relative_error(b.grad, fb) < TOL


def test_concat_grads():
    rng = np.random.default_rng(5)
    a = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
    b = Tensor(rng.standard_normal((2, 2)), requires_grad=True)
    loss = (concat([a, b], axis=1) ** 2).sum()
    loss.backward()
    fa = finite_diff_grad(lambda p: (concat([p, b], axis=1) ** 2).sum(), a)
    assert relative_error(a.grad, fa) < TOL


def test_grad_accumulates_over_shared_use():
    p = Tensor(np.array([2.0]), requires_grad=True)
    loss = (p * p + p).sum()   # d/dp = 2p + 1 = 5
    loss.backward()
    assert np.allclose(p.grad, [5.0])


def test_backward_requires_scalar():
    p = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        (p * 2).backward()


def test_no_grad_suppresses_graph():
    p = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        out = (p * 2).sum()
    assert not out.requires_grad


def test_finite_values_after_ops():
    rng = np.random.default_rng(11)
    p = Tensor(rng.standard_normal((50,)) * 100)
    for out in (p.sigmoid(), p.silu(), p.exp().clip(0, 1e300), p.relu()):
        assert np.all(np.isfinite(out.data))


def test_ops_preserve_float32():
    p = Tensor(np.ones((2, 2), dtype=np.float32))
    out = (p * 2.0 + 1.0).silu().mean()
    assert out.dtype == np.float32
