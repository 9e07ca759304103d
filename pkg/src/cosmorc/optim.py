"""Adam optimizer over a flat real parameter vector, plus the lr schedule.

Every trainable quantity in this package is a float64 entry of one flat
vector (a complex weight contributes its real and imaginary part as two
adjacent entries), so the optimizer never sees structure and permuting the
parameter order commutes with the update.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamHyper:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    """Step count, moment vectors and a view of the parameters they drive."""

    params: np.ndarray
    hyper: AdamHyper = field(default_factory=AdamHyper)
    step: int = 0
    m: np.ndarray = None
    v: np.ndarray = None

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.m is None:
            self.m = np.zeros_like(self.params)
        if self.v is None:
            self.v = np.zeros_like(self.params)
        if self.m.shape != self.params.shape or self.v.shape != self.params.shape:
            raise ValueError("moment vectors must match the parameter count")


def adam_step(state, grads, lr=None):
    """One Adam update with bias correction; parameters change in place.

    `lr` overrides `state.hyper.lr` for this step (used by the schedule).
    Raises on a non-finite gradient, naming the first bad index, with the
    state untouched.
    """
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != state.params.shape:
        raise ValueError(f"gradient shape {grads.shape} != parameter shape {state.params.shape}")
    bad = np.flatnonzero(~np.isfinite(grads))
    if bad.size:
        raise FloatingPointError(f"non-finite gradient at index {bad[0]}")

    h = state.hyper
    if lr is None:
        lr = h.lr
    state.step += 1
    t = state.step
    state.m *= h.beta1
    state.m += (1.0 - h.beta1) * grads
    state.v *= h.beta2
    state.v += (1.0 - h.beta2) * grads * grads
    m_hat = state.m / (1.0 - h.beta1**t)
    v_hat = state.v / (1.0 - h.beta2**t)
    state.params -= lr * m_hat / (np.sqrt(v_hat) + h.eps)
    return state


def lr_schedule(epoch, total_epochs, lr0=0.01, decay=0.01):
    """Exponential interpolation from lr0 at epoch 0 to lr0*decay at the end.

    lr(e) = lr0 * decay**(e / total_epochs); `decay` is the total
    multiplicative decay over the run, not a per-epoch factor.
    """
    if total_epochs < 1:
        raise ValueError("total_epochs must be at least 1")
    if not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs}]")
    return lr0 * decay ** (epoch / total_epochs)
