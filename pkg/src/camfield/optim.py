"""Adam with per-group learning rates, a step-decay schedule, and
post-training min-max weight quantization."""

from __future__ import annotations

import numpy as np


class LrSchedule:
    """Per-group base rate, multiplied by ``factor`` at each milestone."""

    def __init__(self, base_rates, milestones=(), factor=0.1):
        for name, rate in base_rates.items():
            if rate <= 0:
                raise ValueError(f"learning rate for group {name!r} must be > 0")
        milestones = tuple(int(m) for m in milestones)
        if any(b <= a for a, b in zip(milestones, milestones[1:])):
            raise ValueError(f"milestones must be strictly increasing, got {milestones}")
        self.base_rates = dict(base_rates)
        self.milestones = milestones
        self.factor = float(factor)

    def lr_at(self, iteration):
        """Rate per group at ``iteration`` (base * factor^passed milestones)."""
        passed = sum(1 for m in self.milestones if iteration >= m)
        scale = self.factor**passed
        return {name: rate * scale for name, rate in self.base_rates.items()}


class Adam:
    """Standard Adam (bias-corrected) over named parameter groups.

    ``groups`` maps a group name to a list of ``(param_name, tensor)``
    pairs; the schedule supplies each group's rate per iteration.
    """

    def __init__(self, groups, schedule, beta1=0.9, beta2=0.999, eps=1e-8):
        self.groups = {name: list(params) for name, params in groups.items()}
        self.schedule = schedule
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {}
        self._v = {}
        for params in self.groups.values():
            for name, p in params:
                self._m[name] = np.zeros_like(p.data)
                self._v[name] = np.zeros_like(p.data)

    def step(self, iteration=None):
        """Apply one update from the gradients stored on the parameters."""
        if iteration is None:
            iteration = self.step_count
        rates = self.schedule.lr_at(iteration)
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for group_name, params in self.groups.items():
            lr = rates[group_name]
            for name, p in params:
                g = p.grad
                if g is None:
                    continue
                if not np.isfinite(g).all():
                    raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
                m = self._m[name]
                v = self._v[name]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * (g * g)
                update = (lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
                p.data -= update.astype(p.data.dtype, copy=False)

    def zero_grad(self):
        for params in self.groups.values():
            for _, p in params:
                p.grad = None

    def check_finite(self):
        """Post-step guard: name the first parameter that went non-finite."""
        for params in self.groups.values():
            for name, p in params:
                if not p.all_finite():
                    raise FloatingPointError(f"parameter {name!r} became non-finite")


def quantize_minmax(values, bits):
    """Uniform quantization onto 2^bits levels spanning [min, max].

    Rounding is half-away-from-zero. A constant tensor quantizes to all-zero
    codes with zero scale, so it round-trips exactly.
    Returns ``(codes, scale, offset)`` with ``values ~= codes * scale + offset``.
    """
    if bits not in (6, 8):
        raise ValueError(f"supported bit widths are 6 and 8, got {bits}")
    values = np.asarray(values)
    vmin = float(values.min())
    vmax = float(values.max())
    levels = (1 << bits) - 1
    if vmax == vmin:
        return np.zeros(values.shape, dtype=np.int32), 0.0, vmin
    scale = (vmax - vmin) / levels
    # codes are nonnegative, so half-away-from-zero is floor(x + 0.5)
    codes = np.floor((values.astype(np.float64) - vmin) / scale + 0.5).astype(np.int32)
    return codes, scale, vmin


def dequantize(codes, scale, offset, dtype=np.float32):
    return (codes.astype(np.float64) * scale + offset).astype(dtype)
