"""Plain SGD and Adam over dicts of named arrays."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"  # "sgd" or "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None


@dataclass
class OptState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def optimizer_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptState | None,
    config: OptimizerConfig,
) -> tuple[dict[str, np.ndarray], OptState]:
    """Return updated copies of ``params`` and the advanced optimizer state."""
    state = OptState() if state is None else state
    for k, g in grads.items():
        if k not in params or params[k].shape != g.shape:
            raise ShapeMismatch(f"gradient {k} does not match parameters")
    scale = 1.0
    if config.clip_norm is not None:
        norm = global_norm(grads)
        if norm > config.clip_norm:
            scale = config.clip_norm / (norm + 1e-12)
    step = state.step + 1
    new_params = dict(params)
    if config.kind == "sgd":
        for k, g in grads.items():
            new_params[k] = params[k] - config.lr * scale * g
        return new_params, OptState(step, state.m, state.v)
    if config.kind != "adam":
        raise ValueError(f"unknown optimizer {config.kind!r}")
    m, v = dict(state.m), dict(state.v)
    c1 = 1.0 - config.beta1 ** step
    c2 = 1.0 - config.beta2 ** step
    for k, g in grads.items():
        g = g * scale
        m[k] = config.beta1 * m.get(k, 0.0) + (1.0 - config.beta1) * g
        v[k] = config.beta2 * v.get(k, 0.0) + (1.0 - config.beta2) * g * g
        new_params[k] = params[k] - config.lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + config.eps)
    return new_params, OptState(step, m, v)
