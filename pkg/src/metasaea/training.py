"""Gradient-step utilities shared by the meta-trainer and the adapter.

Parameters are updated on flat vectors (see kernel.pack_params) with
either Adam or plain descent, then projected back onto the legal ranges:
log theta into [log 1e-5, log 100] and p into [1, 2].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernel import (
    P_MAX,
    P_MIN,
    THETA_MAX,
    THETA_MIN,
    BaseKernelParams,
    DeepKernelParams,
    TaskIncrements,
)

__all__ = ["AdamState", "sgd_step", "clamp_flat", "clamp_params", "clamp_increments"]

_LOG_THETA_MIN = np.log(THETA_MIN)
_LOG_THETA_MAX = np.log(THETA_MAX)


@dataclass
class AdamState:
    """Per-vector Adam accumulator (beta1=0.9, beta2=0.999, eps=1e-8)."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)

    def step(self, vec: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(vec)
            self.v = np.zeros_like(vec)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return vec - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def sgd_step(vec: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    return vec - lr * grad


def clamp_flat(vec: np.ndarray, d: int) -> np.ndarray:
    """Clamp the trailing (log_theta, p) blocks of a flat parameter vector."""
    out = vec.copy()
    out[-2 * d : -d] = np.clip(out[-2 * d : -d], _LOG_THETA_MIN, _LOG_THETA_MAX)
    out[-d:] = np.clip(out[-d:], P_MIN, P_MAX)
    return out


def clamp_params(params: DeepKernelParams) -> DeepKernelParams:
    """Project base-kernel parameters onto their legal ranges."""
    base = BaseKernelParams(
        np.clip(params.base.log_theta, _LOG_THETA_MIN, _LOG_THETA_MAX),
        np.clip(params.base.p, P_MIN, P_MAX),
    )
    return DeepKernelParams(params.mlp, base)


def clamp_increments(inc: TaskIncrements, base: BaseKernelParams) -> TaskIncrements:
    """Project increments so the combined parameters stay in range."""
    return TaskIncrements(
        np.clip(
            inc.d_log_theta,
            _LOG_THETA_MIN - base.log_theta,
            _LOG_THETA_MAX - base.log_theta,
        ),
        np.clip(inc.d_p, P_MIN - base.p, P_MAX - base.p),
    )
