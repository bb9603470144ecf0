"""Adam with bias correction, functional style.

`adam_step` returns fresh parameter and state dicts so two runs from the
same inputs are bitwise comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tagcl.errors import NumericsError


@dataclass
class AdamState:
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> tuple[dict[str, np.ndarray], AdamState]:
    if set(params) != set(grads):
        raise ValueError(
            f"parameter/gradient key mismatch: {sorted(set(params) ^ set(grads))}"
        )
    t = state.step + 1
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, theta in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != theta.shape:
            raise ValueError(
                f"gradient shape {g.shape} != parameter shape {theta.shape} for {name!r}"
            )
        if not np.all(np.isfinite(g)):
            raise NumericsError(f"non-finite gradient for parameter {name!r}")
        m_prev = state.first_moment.get(name, np.zeros_like(theta))
        v_prev = state.second_moment.get(name, np.zeros_like(theta))
        m = state.beta1 * m_prev + (1.0 - state.beta1) * g
        v = state.beta2 * v_prev + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        new_params[name] = theta - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        new_m[name] = m
        new_v[name] = v
    new_state = AdamState(
        step=t,
        first_moment=new_m,
        second_moment=new_v,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
    )
    return new_params, new_state
