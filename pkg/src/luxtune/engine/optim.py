"""Bias-corrected Adam over named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from ..errors import GradientError, ShapeError
from .tensor import Tensor


@dataclass
class AdamState:
    """Optimizer state: step count plus per-parameter moment buffers."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def buffers_for(self, name: str, like: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if name not in self.m:
            self.m[name] = np.zeros_like(like)
            self.v[name] = np.zeros_like(like)
        elif self.m[name].shape != like.shape:
            raise ShapeError(
                f"adam moment buffer for '{name}' has shape {self.m[name].shape}, "
                f"parameter has {like.shape}"
            )
        return self.m[name], self.v[name]


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> Dict[str, Tensor]:
    """One Adam update. Returns fresh parameter tensors; state advances by one.

    Parameters without an entry in ``grads`` are passed through untouched.
    A non-finite gradient aborts the whole update before any parameter or
    moment buffer changes.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise GradientError(f"non-finite gradient for parameter '{name}'")
        if name not in params:
            raise ShapeError(f"gradient provided for unknown parameter '{name}'")
        if g.shape != params[name].data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match parameter "
                f"'{name}' shape {params[name].data.shape}"
            )

    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step

    out: Dict[str, Tensor] = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            out[name] = p
            continue
        m, v = state.buffers_for(name, p.data)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        update = (state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(p.data.dtype)
        t = Tensor(p.data - update, requires_grad=p.requires_grad, name=p.name)
        out[name] = t
    return out
