"""Adam optimiser over named parameter dicts, with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamSet


@dataclass
class AdamState:
    """First/second moment estimates keyed like the parameters they track."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: ParamSet) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in params.arrays.items()},
            v={k: np.zeros_like(a) for k, a in params.arrays.items()},
            step=0,
        )


def adam_step(
    params: ParamSet,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> bool:
    """Apply one Adam update in place; returns False (no-op) on non-finite grads.

    A rejected update leaves parameters, moments, the step counter and the
    parameter version untouched so a flagged step can simply be retried
    with the next batch.
    """
    if set(grads) != set(params.arrays):
        raise KeyError("gradient keys do not match parameter keys")
    for name, g in grads.items():
        if g.shape != params.arrays[name].shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        if not np.all(np.isfinite(g)):
            return False
    beta1, beta2 = betas
    state.step += 1
    bias1 = 1.0 - beta1**state.step
    bias2 = 1.0 - beta2**state.step
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params.arrays[name] -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)
    params.bump_version()
    return True
