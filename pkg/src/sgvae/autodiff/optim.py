from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from ..errors import ConfigError, ShapeError
from .ops import DTYPE


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


@torch.no_grad()
def adam_step(params, grads, state: AdamState, lr: float):
    """In-place bias-corrected Adam update of ``params``."""
    params, grads = list(params), list(grads)
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [torch.zeros_like(p) for p in params]
        state.v = [torch.zeros_like(p) for p in params]
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeError(f"gradient shape {tuple(g.shape)} does not match parameter {tuple(p.shape)}")
        m.mul_(state.beta1).add_(g, alpha=1.0 - state.beta1)
        v.mul_(state.beta2).addcmul_(g, g, value=1.0 - state.beta2)
        p.sub_(lr * (m / c1) / ((v / c2).sqrt() + state.eps))
    return params, state


def one_cycle_lr(step, total_steps, max_lr, div=25.0, final_div=1e4, pct_start=0.25):
    """Cosine warm-up from max_lr/div to max_lr, then cosine decay to max_lr/(div*final_div)."""
    if not (0 <= step < total_steps):
        raise ConfigError(f"step {step} outside schedule of {total_steps} steps")
    start, final = max_lr / div, max_lr / (div * final_div)
    warm = max(1, int(round(pct_start * total_steps)))
    if step < warm:
        t, lo, hi = step / warm, start, max_lr
    else:
        rest = max(1, total_steps - 1 - warm)
        t, lo, hi = (step - warm) / rest, max_lr, final
    return hi + (lo - hi) * (1.0 + math.cos(math.pi * t)) / 2.0


def fan_out(shape, transposed=False):
    """Fan-out of a weight: C_out * k for conv kernels, out_features for linear."""
    if len(shape) == 2:
        return shape[0]
    if len(shape) == 3:
        c_out = shape[1] if transposed else shape[0]
        return c_out * shape[2]
    raise ShapeError(f"no fan-out convention for shape {tuple(shape)}")


def kaiming_init(shape, rng: np.random.Generator, transposed=False):
    """Normal(0, sqrt(2 / fan_out)) tensor drawn from ``rng``."""
    std = math.sqrt(2.0 / fan_out(shape, transposed))
    return torch.from_numpy(rng.standard_normal(shape) * std).to(DTYPE)
