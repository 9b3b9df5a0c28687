"""Adam optimizer with classic (coupled) weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    """Per-parameter Adam accumulator state.

    Weight decay is applied as an additive gradient term g <- g + wd * p
    before the moment updates (the classic coupled form).
    """

    learning_rate: float = 1e-4
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: np.ndarray | None = None
    second_moment: np.ndarray | None = None

    def initialized_for(self, shape: tuple[int, ...], dtype) -> "AdamState":
        if self.first_moment is None:
            self.first_moment = np.zeros(shape, dtype=dtype)
            self.second_moment = np.zeros(shape, dtype=dtype)
        return self


def adam_step(params: Tensor, grads: Tensor | np.ndarray, state: AdamState) -> tuple[Tensor, AdamState]:
    """One Adam update. Returns new parameters and the advanced state.

    Deterministic: identical (params, grads, state) produce identical outputs.
    """
    g = grads.data if isinstance(grads, Tensor) else np.asarray(grads)
    p = params.data
    if g.shape != p.shape:
        raise ValueError(f"grads shape {g.shape} does not match params shape {p.shape}")
    state.initialized_for(p.shape, p.dtype)
    if state.first_moment.shape != p.shape:
        raise ValueError("optimizer state shape does not match parameters")

    if state.weight_decay:
        g = g + state.weight_decay * p
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * g
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_p = p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)

    new_state = AdamState(
        learning_rate=state.learning_rate,
        weight_decay=state.weight_decay,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
        step_count=t,
        first_moment=m,
        second_moment=v,
    )
    out = Tensor(new_p, requires_grad=params.requires_grad)
    return out, new_state


@dataclass
class Adam:
    """Convenience wrapper updating a dict of named parameter tensors in place."""

    params: dict[str, Tensor]
    learning_rate: float = 1e-4
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    states: dict[str, AdamState] = field(default_factory=dict)

    def step(self) -> None:
        for name, p in self.params.items():
            if p.grad is None:
                continue
            st = self.states.get(name)
            if st is None:
                st = AdamState(self.learning_rate, self.weight_decay,
                               self.beta1, self.beta2, self.epsilon)
            else:
                st.learning_rate = self.learning_rate
            new_p, self.states[name] = adam_step(p, p.grad, st)
            p.data = new_p.data

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
