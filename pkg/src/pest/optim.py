"""AdamW with decoupled weight decay, plus a cosine learning-rate schedule."""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DimensionMismatchError, StepOutOfRangeError


@dataclass
class CosineSchedule:
    """Half-cosine decay from ``base_lr`` to ``min_lr`` over ``total_steps``."""

    base_lr: float
    total_steps: int
    min_lr: float = 0.0

    def __post_init__(self):
        if not self.base_lr > 0.0:
            raise ConfigError(f"base_lr must be > 0, got {self.base_lr!r}")
        if int(self.total_steps) != self.total_steps or self.total_steps < 1:
            raise ConfigError(f"total_steps must be a positive int, got {self.total_steps!r}")
        self.total_steps = int(self.total_steps)
        if not 0.0 <= self.min_lr <= self.base_lr:
            raise ConfigError(
                f"min_lr must lie in [0, base_lr], got {self.min_lr!r} vs {self.base_lr!r}"
            )

    def lr_at(self, step: int) -> float:
        """Learning rate at ``step``; valid for 0 <= step <= total_steps."""
        if int(step) != step or not 0 <= step <= self.total_steps:
            raise StepOutOfRangeError(
                f"step must lie in [0, {self.total_steps}], got {step!r}"
            )
        frac = step / self.total_steps
        return self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + math.cos(math.pi * frac))


@dataclass
class AdamW:
    """Adam with decoupled weight decay over named parameter arrays.

    ``apply`` updates parameters in place:

        m <- b1 m + (1 - b1) g          v <- b2 v + (1 - b2) g^2
        mhat = m / (1 - b1^t)           vhat = v / (1 - b2^t)
        p <- p - lr (mhat / (sqrt(vhat) + eps) + weight_decay * p)

    The decay term is applied even when the gradient is exactly zero.  Moment
    buffers are allocated lazily, keyed by parameter name.
    """

    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.05
    step: int = field(default=0, init=False)
    _m: dict = field(default_factory=dict, init=False, repr=False)
    _v: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if not self.lr >= 0.0:
            raise ConfigError(f"lr must be >= 0, got {self.lr!r}")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ConfigError(
                f"betas must lie in [0, 1), got ({self.beta1!r}, {self.beta2!r})"
            )
        if not self.eps > 0.0:
            raise ConfigError(f"eps must be > 0, got {self.eps!r}")
        if not self.weight_decay >= 0.0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay!r}")

    def apply(self, params: dict, grads: dict, lr: float | None = None) -> None:
        """One update step over ``params`` using ``grads``, both name-keyed."""
        if set(params) != set(grads):
            raise DimensionMismatchError(
                f"params and grads must share names, got {sorted(params)} vs {sorted(grads)}"
            )
        step_lr = self.lr if lr is None else float(lr)
        if not step_lr >= 0.0:
            raise ConfigError(f"lr must be >= 0, got {lr!r}")
        self.step += 1
        bc1 = 1.0 - self.beta1**self.step
        bc2 = 1.0 - self.beta2**self.step
        for name, p in params.items():
            g = np.asarray(grads[name], dtype=np.float64)
            if g.shape != p.shape:
                raise DimensionMismatchError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"{name!r} shape {p.shape}"
                )
            if name not in self._m:
                self._m[name] = np.zeros_like(p)
                self._v[name] = np.zeros_like(p)
            m = self._m[name]
            v = self._v[name]
            if m.shape != p.shape:
                raise DimensionMismatchError(
                    f"moment buffer for {name!r} has shape {m.shape}, "
                    f"parameter has {p.shape}"
                )
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p -= step_lr * (update + self.weight_decay * p)
