"""Task-specific surrogate adaptation and the error-gated update rule.

A surrogate owns a shared (experience) parameter set, learned offline
across related tasks, plus per-task increments on (log theta, p).
Adaptation trains only the increments on target-task data; the network
weights and the shared base-kernel values are frozen. The update rule
compares leave-one-out error before and after a short adaptation and
rolls back when the adaptation did not strictly improve it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import TooFewPoints
from .gp import DEFAULT_NUGGET, Dataset, GpState, fit_gp, loo_mse, neg_log_likelihood
from .kernel import DeepKernelParams, TaskIncrements
from .training import AdamState, clamp_increments

__all__ = ["Surrogate", "UpdateResult", "adapt", "update"]


@dataclass(frozen=True)
class Surrogate:
    """A GP surrogate bound to one optimization run.

    state (when present) was fitted with experience + increments on
    archive. adapt_steps applies to the initial adaptation from the
    first target samples; update_steps to each per-iteration update.
    """

    experience: DeepKernelParams
    increments: TaskIncrements | None = None
    state: GpState | None = None
    lr_beta: float = 1e-3
    adapt_steps: int = 100
    update_steps: int = 10
    nugget: float = DEFAULT_NUGGET
    archive: Dataset | None = None

    def predict(self, x):
        from .gp import predict

        return predict(self.state, x)

    def predict_batch(self, xs):
        from .gp import predict_batch

        return predict_batch(self.state, xs)


def adapt(s: Surrogate, data: Dataset, steps: int | None = None) -> Surrogate:
    """Fit increments to target data and refit the GP state.

    Runs Adam on the concentrated likelihood at rate lr_beta, updating
    only the increments; the combined parameters are re-clamped after
    every step. The increments kept are the best seen along the
    trajectory (including the starting point), so the loss after
    adaptation never exceeds the loss before it.
    """
    if steps is None:
        steps = s.adapt_steps
    d = s.experience.d
    inc = s.increments if s.increments is not None else TaskIncrements.zeros(d)

    best_inc = inc
    best_value = np.inf
    adam = AdamState(lr=s.lr_beta)
    vec = np.concatenate([inc.d_log_theta, inc.d_p])
    for _ in range(steps):
        cur = TaskIncrements(vec[:d], vec[d:])
        value, grads = neg_log_likelihood(s.experience, cur, data, s.nugget)
        if value < best_value:
            best_value, best_inc = value, cur
        if s.lr_beta != 0.0:
            vec = adam.step(vec, np.concatenate([grads.log_theta, grads.p]))
            cl = clamp_increments(TaskIncrements(vec[:d], vec[d:]), s.experience.base)
            vec = np.concatenate([cl.d_log_theta, cl.d_p])
    if steps > 0:
        final = TaskIncrements(vec[:d], vec[d:])
        value, _ = neg_log_likelihood(s.experience, final, data, s.nugget)
        if value < best_value:
            best_value, best_inc = value, final

    state = fit_gp(s.experience, best_inc, data, s.nugget)
    return replace(s, increments=best_inc, state=state, archive=data)


class UpdateResult(NamedTuple):
    surrogate: Surrogate
    accepted: bool
    e0: float
    e1: float


def update(s: Surrogate, archive: Dataset, steps: int | None = None) -> UpdateResult:
    """Error-gated adaptation on a grown archive.

    e0 is the leave-one-out MSE with the current increments, e1 after a
    short adaptation (update_steps by default). The adapted surrogate is
    kept only when e0 > e1, strictly; otherwise experience and increments
    stay bit-identical and only the GP state is refitted on the archive.
    """
    if len(archive) < 3:
        raise TooFewPoints("update needs an archive of at least 3 points")
    e0 = loo_mse(s.experience, s.increments, archive, s.nugget)
    candidate = adapt(s, archive, steps=steps if steps is not None else s.update_steps)
    e1 = loo_mse(candidate.experience, candidate.increments, archive, candidate.nugget)
    if e0 > e1:
        return UpdateResult(candidate, True, e0, e1)
    rolled_back = replace(
        s, state=fit_gp(s.experience, s.increments, archive, s.nugget), archive=archive
    )
    return UpdateResult(rolled_back, False, e0, e1)
