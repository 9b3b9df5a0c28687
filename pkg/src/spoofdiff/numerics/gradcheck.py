"""Central finite-difference gradient oracle."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .tensor import Tensor


def finite_diff_grad(f: Callable[[Tensor], float], params: Tensor,
                     eps: float = 1e-5) -> Tensor:
    """Estimate df/dparams by central differences, one coordinate at a time.

    ``f`` must be deterministic and return a scalar (float or 0-d Tensor).
    Raises FloatingPointError if any probe evaluates non-finite.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    grad = np.zeros_like(params.data)
    flat = params.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_pos = _scalar(f(params))
        flat[i] = orig - eps
        f_neg = _scalar(f(params))
        flat[i] = orig
        if not (math.isfinite(f_pos) and math.isfinite(f_neg)):
            raise FloatingPointError(
                f"non-finite function value while probing coordinate {i}")
        gflat[i] = (f_pos - f_neg) / (2.0 * eps)
    return Tensor(grad)


def relative_error(a: np.ndarray | Tensor, b: np.ndarray | Tensor,
                   floor: float = 1e-12) -> float:
    """max |a - b| / max(floor, |a| + |b|), the usual gradcheck metric."""
    av = a.data if isinstance(a, Tensor) else np.asarray(a)
    bv = b.data if isinstance(b, Tensor) else np.asarray(b)
    denom = np.maximum(floor, np.abs(av) + np.abs(bv))
    return float(np.max(np.abs(av - bv) / denom))


def _scalar(v) -> float:
    if isinstance(v, Tensor):
        return float(v.data)
    return float(v)
