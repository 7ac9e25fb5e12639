"""Training mathematics: cross-entropy loss, AdamW, cosine annealing.

AdamW applies decoupled weight decay (the decay term acts on the
parameter directly instead of being folded into the gradient moments)
and the learning rate follows a half-cosine per epoch:

    lr(t) = lr_min + (lr_max - lr_min) * (1 + cos(pi * t / t_max)) / 2
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericError, UsageError
from .tensor import Tensor, _accumulate

# Parameters regularization should leave alone: biases, layer-norm affine
# pairs, the class token, and position embeddings.
_NO_DECAY_SUFFIXES = (".bias", ".gamma", ".beta")
_NO_DECAY_NAMES = ("cls_token", "pos_embed")


def no_weight_decay(name: str) -> bool:
    return name.endswith(_NO_DECAY_SUFFIXES) or name in _NO_DECAY_NAMES


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under the logits.

    Computed in log space via log-sum-exp so huge logits cannot overflow.
    The gradient is (softmax(logits) - onehot(labels)) / batch.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise UsageError(f"cross_entropy expects [batch, classes] logits, got {logits.shape}")
    b, c = logits.shape
    if labels.shape != (b,):
        raise DataError(f"cross_entropy: {b} logit rows but labels shape {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= c:
        raise DataError(f"cross_entropy: labels must lie in [0, {c}), got range "
                        f"[{labels.min()}, {labels.max()}]")
    x = logits.data
    m = x.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(x - m).sum(axis=1))
    value = float((lse - x[np.arange(b), labels]).mean())
    out = Tensor(value, (logits,), op="cross_entropy")

    def grad_fn(g):
        probs = np.exp(x - lse[:, None])
        probs[np.arange(b), labels] -= 1.0
        _accumulate(logits, float(g) * probs / b)

    out._grad_fn = grad_fn
    return out


@dataclass
class CosineSchedule:
    """Half-cosine decay from eta_max at t=0 down to eta_min at t=t_max."""

    eta_max: float
    eta_min: float = 0.0
    t_max: int = 10

    def __post_init__(self):
        if self.eta_min > self.eta_max:
            raise ConfigError(f"eta_min {self.eta_min} exceeds eta_max {self.eta_max}")
        if self.t_max < 1:
            raise ConfigError(f"t_max must be at least 1, got {self.t_max}")

    def lr_at(self, t: int) -> float:
        if not 0 <= t <= self.t_max:
            raise UsageError(f"schedule epoch {t} outside [0, {self.t_max}]")
        return self.eta_min + 0.5 * (self.eta_max - self.eta_min) * (1.0 + math.cos(t * math.pi / self.t_max))


def lr_at(schedule: CosineSchedule, t: int) -> float:
    return schedule.lr_at(t)


class AdamW:
    """Adam with bias correction plus decoupled multiplicative weight decay.

    Per step, for each parameter theta with gradient g:

        m <- b1*m + (1-b1)*g          v <- b2*v + (1-b2)*g^2
        mhat = m / (1 - b1^t)         vhat = v / (1 - b2^t)
        theta <- theta - lr*mhat/(sqrt(vhat) + eps) - lr*wd*theta

    Decay is skipped for parameters matching :func:`no_weight_decay`.
    State (m, v, t) round-trips through checkpoints so runs resume exactly.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.01):
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ConfigError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        if eps <= 0:
            raise ConfigError(f"eps must be positive, got {eps}")
        if weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {weight_decay}")
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {name: np.zeros(p.shape) for name, p in self.params.items()}
        self.v = {name: np.zeros(p.shape) for name, p in self.params.items()}

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                raise UsageError(f"adamw: parameter {name} has no gradient; run backward first")
            if not np.all(np.isfinite(g)):
                raise NumericError(f"adamw: non-finite gradient for parameter {name}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay > 0.0 and not no_weight_decay(name):
                update = update + self.lr * self.weight_decay * p.data
            p.data = p.data - update

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Moment buffers under stable names, for checkpointing."""
        out = {}
        for name in self.params:
            out[f"m/{name}"] = self.m[name]
            out[f"v/{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], t: int) -> None:
        for name in self.params:
            self.m[name] = np.array(arrays[f"m/{name}"], dtype=np.float64)
            self.v[name] = np.array(arrays[f"v/{name}"], dtype=np.float64)
            if self.m[name].shape != self.params[name].shape:
                raise ConfigError(f"adamw state for {name} has wrong shape")
        self.t = int(t)
