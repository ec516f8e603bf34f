"""Gaussian-process core: concentrated likelihood, fitting, posterior
prediction, and leave-one-out error.

The prior mean and process variance are concentrated out of the marginal
likelihood with their closed-form generalized-least-squares estimates

    mu_hat = (1' R^-1 y) / (1' R^-1 1)
    s2_hat = (y - 1 mu)' R^-1 (y - 1 mu) / n

leaving the negative log likelihood

    nll = n/2 * log(2 pi s2_hat) + 1/2 * log|R| + n/2.

Outputs are standardized per fitting dataset (zero mean, unit variance)
and inputs min-max scaled to [0, 1]^d by the dataset bounds; predictions
are mapped back to original units. A diagonal nugget keeps R factorable
and is escalated tenfold on failure up to 1e-4.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import NotPositiveDefinite, ShapeMismatch, TooFewPoints
from .kernel import (
    DeepKernelParams,
    KernelGradients,
    TaskIncrements,
    _kernel_backward,
    _kernel_forward,
    _mlp_forward_batch,
    effective_base,
)
from .numkit import as_bounds

__all__ = [
    "Dataset",
    "GpState",
    "DEFAULT_NUGGET",
    "MAX_NUGGET",
    "fit_gp",
    "neg_log_likelihood",
    "NllResult",
    "predict",
    "predict_batch",
    "loo_mse",
]

DEFAULT_NUGGET = 1e-8
MAX_NUGGET = 1e-4
_VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class Dataset:
    """Paired decision vectors and scalar observations inside box bounds."""

    xs: np.ndarray
    ys: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        xs = np.atleast_2d(np.asarray(self.xs, dtype=float))
        ys = np.asarray(self.ys, dtype=float).ravel()
        bounds = as_bounds(self.bounds)
        if xs.shape[0] != ys.shape[0]:
            raise ShapeMismatch(f"{xs.shape[0]} inputs vs {ys.shape[0]} observations")
        if xs.shape[0] < 1:
            raise TooFewPoints("a dataset needs at least one point")
        if xs.shape[1] != bounds.shape[0]:
            raise ShapeMismatch(f"x width {xs.shape[1]} vs bounds {bounds.shape[0]}")
        eps = 1e-9 * np.maximum(1.0, np.abs(bounds).max(axis=1))
        if np.any(xs < bounds[:, 0] - eps) or np.any(xs > bounds[:, 1] + eps):
            raise ValueError("points outside bounds")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "bounds", bounds)

    def __len__(self) -> int:
        return self.xs.shape[0]

    @property
    def d(self) -> int:
        return self.xs.shape[1]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.xs[idx], self.ys[idx], self.bounds)

    def drop(self, i: int) -> "Dataset":
        keep = np.arange(len(self)) != i
        return Dataset(self.xs[keep], self.ys[keep], self.bounds)

    def append(self, xs, ys) -> "Dataset":
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        ys = np.asarray(ys, dtype=float).ravel()
        return Dataset(
            np.vstack([self.xs, xs]), np.concatenate([self.ys, ys]), self.bounds
        )


@dataclass(frozen=True)
class GpState:
    """Fitted GP, self-contained for prediction.

    Holds the kernel parameters it was fitted with (shared set plus any
    increments), the Cholesky factor of the correlation matrix, the
    concentrated mean/variance estimates, the output standardization
    constants, and the precomputed weight vector alpha = R^-1 (y - 1 mu).
    """

    params: DeepKernelParams
    increments: TaskIncrements | None
    chol: np.ndarray
    mu_hat: float
    sigma2_hat: float
    y_mean: float
    y_std: float
    x_scaled: np.ndarray
    bounds: np.ndarray
    alpha: np.ndarray
    nugget: float

    @property
    def n(self) -> int:
        return self.x_scaled.shape[0]


def _scale_inputs(xs: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    span = bounds[:, 1] - bounds[:, 0]
    return (xs - bounds[:, 0]) / span


def _factorize(k: np.ndarray, nugget: float):
    """Cholesky of k + nugget*I, escalating the nugget tenfold up to 1e-4."""
    n = k.shape[0]
    nug = max(nugget, 0.0)
    while True:
        try:
            return np.linalg.cholesky(k + nug * np.eye(n)), nug
        except np.linalg.LinAlgError:
            nug = max(nug, DEFAULT_NUGGET) * 10.0
            if nug > MAX_NUGGET:
                raise NotPositiveDefinite(
                    f"correlation matrix not factorable at nugget {MAX_NUGGET}"
                ) from None


class _FitCore(NamedTuple):
    x_scaled: np.ndarray
    y_std_vals: np.ndarray
    y_mean: float
    y_std: float
    theta: np.ndarray
    p: np.ndarray
    theta_mask: np.ndarray
    p_mask: np.ndarray
    phi: np.ndarray
    cache: tuple
    fw: tuple
    chol: np.ndarray
    nugget: float
    mu_hat: float
    residual: np.ndarray
    sigma2_hat: float
    alpha: np.ndarray


def _fit_core(params, increments, data: Dataset, nugget: float) -> _FitCore:
    n = len(data)
    if n < 2:
        raise TooFewPoints("fitting needs at least 2 points")
    x_scaled = _scale_inputs(data.xs, data.bounds)
    y_mean = float(np.mean(data.ys))
    y_std = max(float(np.std(data.ys)), _VAR_FLOOR)
    y = (data.ys - y_mean) / y_std

    theta, p, theta_mask, p_mask = effective_base(params, increments)
    phi, cache = _mlp_forward_batch(params.mlp, x_scaled)
    if phi.shape[1] != theta.shape[0]:
        raise ShapeMismatch(f"feature width {phi.shape[1]} vs kernel dims {theta.shape[0]}")
    fw = _kernel_forward(theta, p, phi, 0.0)
    chol, nug = _factorize(fw[0], nugget)

    rinv_y = cho_solve((chol, True), y)
    rinv_1 = cho_solve((chol, True), np.ones(n))
    mu_hat = float(np.sum(rinv_y) / np.sum(rinv_1))
    residual = y - mu_hat
    rinv_res = rinv_y - mu_hat * rinv_1
    sigma2_hat = max(float(residual @ rinv_res / n), _VAR_FLOOR)
    return _FitCore(
        x_scaled, y, y_mean, y_std, theta, p, theta_mask, p_mask,
        phi, cache, fw, chol, nug, mu_hat, residual, sigma2_hat, rinv_res,
    )


def fit_gp(
    params: DeepKernelParams,
    increments: TaskIncrements | None,
    data: Dataset,
    nugget: float = DEFAULT_NUGGET,
) -> GpState:
    """Fit the GP with fixed kernel parameters on a dataset."""
    core = _fit_core(params, increments, data, nugget)
    return GpState(
        params=params,
        increments=increments,
        chol=core.chol,
        mu_hat=core.mu_hat,
        sigma2_hat=core.sigma2_hat,
        y_mean=core.y_mean,
        y_std=core.y_std,
        x_scaled=core.x_scaled,
        bounds=data.bounds,
        alpha=core.alpha,
        nugget=core.nugget,
    )


class NllResult(NamedTuple):
    value: float
    grads: KernelGradients


def neg_log_likelihood(
    params: DeepKernelParams,
    increments: TaskIncrements | None,
    data: Dataset,
    nugget: float = DEFAULT_NUGGET,
) -> NllResult:
    """Concentrated negative log likelihood and its parameter gradients.

    The gradient record's log_theta / p entries apply both to the shared
    parameters and to task increments (additive parameterization). The
    loss gradient with respect to the correlation matrix,

        C = 1/2 * (R^-1 - alpha alpha' / s2_hat),

    follows from the envelope theorem at the concentrated optimum and is
    pushed through the kernel by reverse-mode accumulation.
    """
    core = _fit_core(params, increments, data, nugget)
    n = core.x_scaled.shape[0]
    log_det = 2.0 * float(np.sum(np.log(np.diag(core.chol))))
    value = 0.5 * n * np.log(2.0 * np.pi * core.sigma2_hat) + 0.5 * log_det + 0.5 * n

    rinv = cho_solve((core.chol, True), np.eye(n))
    cot = 0.5 * (rinv - np.outer(core.alpha, core.alpha) / core.sigma2_hat)
    grads = _kernel_backward(
        params.mlp, core.cache, core.theta, core.p,
        core.theta_mask, core.p_mask, core.fw, cot,
    )
    return NllResult(float(value), grads)


def predict(state: GpState, x) -> tuple[float, float]:
    """Posterior mean and variance at one decision vector, original units."""
    mean, var = predict_batch(state, np.atleast_2d(np.asarray(x, dtype=float)))
    return float(mean[0]), float(var[0])


def predict_batch(state: GpState, xs) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized posterior over rows of xs.

    mean = mu + r' R^-1 (y - 1 mu), var = s2 * (1 - r' R^-1 r), both
    de-standardized; the variance is clamped at zero before scaling.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    xq = _scale_inputs(xs, state.bounds)
    theta, p, _, _ = effective_base(state.params, state.increments)
    phi_q, _ = _mlp_forward_batch(state.params.mlp, xq)
    phi_t, _ = _mlp_forward_batch(state.params.mlp, state.x_scaled)
    diff = np.abs(phi_q[:, None, :] - phi_t[None, :, :])
    r = np.exp(-(diff**p @ theta))  # (q, n)
    mean = state.mu_hat + r @ state.alpha
    v = solve_triangular(state.chol, r.T, lower=True)
    var = state.sigma2_hat * np.clip(1.0 - np.sum(v * v, axis=0), 0.0, None)
    return state.y_mean + state.y_std * mean, state.y_std**2 * var


def loo_mse(
    params: DeepKernelParams,
    increments: TaskIncrements | None,
    data: Dataset,
    nugget: float = DEFAULT_NUGGET,
) -> float:
    """Leave-one-out mean squared prediction error at fixed kernel parameters.

    Each fold refits the GP state on the remaining points (n
    refactorizations; fine at the n <= 100 scale this library targets).
    """
    n = len(data)
    if n < 3:
        raise TooFewPoints("leave-one-out needs at least 3 points")
    sq = 0.0
    for i in range(n):
        state = fit_gp(params, increments, data.drop(i), nugget)
        mean, _ = predict(state, data.xs[i])
        sq += (mean - data.ys[i]) ** 2
    return float(sq / n)
