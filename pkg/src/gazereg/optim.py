"""
AdamW with decoupled weight decay, and the one-cycle learning-rate schedule
(cosine warmup to the peak rate, cosine anneal down to the floor).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor


@dataclass
class OneCycleSchedule:
    max_rate: float
    total_steps: int
    warmup_frac: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4

    def __post_init__(self):
        if self.max_rate <= 0:
            raise ValueError(f"max_rate must be positive, got {self.max_rate}")
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be positive, got {self.total_steps}")
        if not 0.0 < self.warmup_frac < 1.0:
            raise ValueError(f"warmup_frac must lie in (0,1), got {self.warmup_frac}")
        if self.div_factor <= 1 or self.final_div_factor <= 1:
            raise ValueError("div factors must exceed 1")
        self.warmup_steps = round(self.warmup_frac * self.total_steps)
        if not 0 < self.warmup_steps < self.total_steps:
            raise ValueError(
                f"schedule too short: warmup {self.warmup_steps} of {self.total_steps} steps")

    def rate(self, step: int) -> float:
        if not 0 <= step <= self.total_steps:
            raise ValueError(f"step {step} outside [0, {self.total_steps}]")
        start = self.max_rate / self.div_factor
        floor = self.max_rate / self.final_div_factor
        if step <= self.warmup_steps:
            frac = step / self.warmup_steps
            return start + (self.max_rate - start) * (1.0 - math.cos(math.pi * frac)) / 2.0
        frac = (step - self.warmup_steps) / (self.total_steps - self.warmup_steps)
        return floor + (self.max_rate - floor) * (1.0 + math.cos(math.pi * frac)) / 2.0


def one_cycle_rate(schedule: OneCycleSchedule, step: int) -> float:
    return schedule.rate(step)


class AdamW:
    """Decoupled-weight-decay Adam over named parameters.

    The decay step p -= lr*wd*p is applied independently of the adaptive
    update. Parameters with requires_grad=False are never touched.
    """

    def __init__(self, params: dict, lr: float = 7e-5, weight_decay: float = 0.01,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.moments = {
            name: (np.zeros_like(p.data), np.zeros_like(p.data))
            for name, p in self.params.items()
        }

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float | None = None):
        if lr is not None:
            self.lr = lr
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name, p in self.params.items():
            if not p.requires_grad:
                continue
            g = p.grad
            if g is None:
                raise ValueError(f"adamw: missing gradient for parameter {name!r}")
            if g.shape != p.data.shape:
                raise ShapeError(
                    f"adamw: gradient shape {g.shape} does not match parameter "
                    f"{name!r} shape {p.data.shape}")
            if self.weight_decay:
                p.data -= self.lr * self.weight_decay * p.data
            m, v = self.moments[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_arrays(self) -> dict:
        """Moment buffers keyed by parameter name, for checkpointing."""
        out = {}
        for name, (m, v) in self.moments.items():
            out[f"{name}.m"] = m
            out[f"{name}.v"] = v
        return out

    def load_state_arrays(self, arrays: dict, step_count: int):
        for name in self.moments:
            m, v = arrays[f"{name}.m"], arrays[f"{name}.v"]
            if m.shape != self.moments[name][0].shape:
                raise ShapeError(f"adamw: restored moment shape mismatch for {name!r}")
            self.moments[name] = (m.copy(), v.copy())
        self.step_count = step_count
