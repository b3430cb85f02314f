"""Dense kernels, parameter init, Adam and a central-difference gradient check."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class DimensionError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def matmul(a, b):
    if a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")
    return a @ b


def add(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"add: {a.shape} + {b.shape}")
    return a + b


def hadamard(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"hadamard: {a.shape} * {b.shape}")
    return a * b


def row_broadcast(m, v):
    """Add vector ``v`` to every row of ``m``."""
    if m.shape[1] != v.shape[0]:
        raise DimensionError(f"row_broadcast: {m.shape} + {v.shape}")
    return m + v[None, :]


def transpose(m):
    return m.T


def relu(z):
    return np.maximum(z, 0.0)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z):
    """log(1 + exp(z)) without overflow."""
    return np.logaddexp(0.0, z)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class AdamState:
    first_moment: dict
    second_moment: dict
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: dict, **kw) -> "AdamState":
        return cls({k: np.zeros_like(v) for k, v in params.items()},
                   {k: np.zeros_like(v) for k, v in params.items()}, **kw)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> tuple[dict, AdamState]:
    """One bias-corrected Adam update; returns new params and a new state."""
    if lr <= 0:
        raise ValueError("lr must be positive")
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise DimensionError(f"gradient {k}: {g.shape} vs {params[k].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {k!r}")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    m_new, v_new, p_new = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = b1 * state.first_moment[k] + (1 - b1) * g
        v = b2 * state.second_moment[k] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p_new[k] = p - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        m_new[k], v_new[k] = m, v
    return p_new, AdamState(m_new, v_new, t, b1, b2, state.eps)


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: tuple  # (param name, flat index)
    per_param: dict = field(default_factory=dict)

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error <= tolerance


def finite_difference_check(loss: Callable[[dict], float], params: dict, grads: dict,
                            h: float = 1e-5, floor: float = 1e-6) -> GradCheckReport:
    """Compare ``grads`` against central differences of ``loss`` at ``params``.

    Relative error is ``|a - n| / max(|a|, |n|, floor)`` per entry.
    """
    worst, worst_at, per = 0.0, None, {}
    for k, p in params.items():
        numeric = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = loss(params)
            p[idx] = orig - h
            down = loss(params)
            p[idx] = orig
            numeric[idx] = (up - down) / (2 * h)
        analytic = grads[k]
        scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        rel = np.abs(analytic - numeric) / scale
        per[k] = float(rel.max()) if rel.size else 0.0
        if rel.size and rel.max() > worst:
            worst = float(rel.max())
            worst_at = (k, int(np.argmax(rel)))
    return GradCheckReport(worst, worst_at, per)
