"""Learning task-independent kernel parameters ("experiences") across
datasets drawn from a family of related tasks, plus persistence of the
learned parameter store.

Training runs U = n_meta // batch iterations. Each iteration draws a
batch of source datasets (a source can be revisited across iterations,
so many fewer distinct tasks than n_meta draws is fine), subsamples
dm_size points from each without replacement, evaluates the concentrated
GP likelihood loss with zero task increments, sums the per-dataset
gradients in dataset order, and applies a single optimizer update to the
shared parameters only. After every update log theta is clamped to
[log 1e-5, log 100] and p to [1, 2].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import MetaSaeaError, SchemaError, VersionMismatch
from .gp import DEFAULT_NUGGET, Dataset, neg_log_likelihood
from .kernel import (
    BaseKernelParams,
    DeepKernelParams,
    MlpParams,
    TaskIncrements,
    init_deep_kernel_params,
    pack_gradients,
    pack_params,
    unpack_params,
)
from .numkit import RngStream
from .training import AdamState, clamp_flat, clamp_increments, sgd_step

__all__ = [
    "ExperienceParams",
    "MetaConfig",
    "MetaTrace",
    "meta_train",
    "save_experiences",
    "load_experiences",
    "STORE_VERSION",
]

# Experiences are a deep-kernel parameter set designated task-independent.
ExperienceParams = DeepKernelParams

STORE_VERSION = 1
_HIDDEN = (40, 40)


@dataclass
class MetaConfig:
    """Meta-training settings.

    n_meta counts dataset draws, not distinct tasks; batch draws per
    update iteration; dm_size points are subsampled from each drawn
    source. inner_steps > 0 optionally fits the per-dataset increments
    for a few plain-gradient steps before the outer loss is taken
    (first-order; default off).
    """

    n_meta: int
    dm_size: int
    batch: int = 10
    lr_alpha: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"  # "adam" | "sgd"
    inner_steps: int = 0
    inner_lr: float = 1e-3
    hidden: tuple[int, ...] = _HIDDEN
    nugget: float = DEFAULT_NUGGET

    def __post_init__(self):
        if self.n_meta < 1 or self.batch < 1 or self.dm_size < 2:
            raise ValueError("n_meta >= 1, batch >= 1, dm_size >= 2 required")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class IterationRecord:
    mean_loss: float
    losses: list[float] = field(default_factory=list)
    skipped: int = 0


@dataclass
class MetaTrace:
    """Per-iteration training record."""

    iterations: list[IterationRecord] = field(default_factory=list)

    @property
    def mean_losses(self) -> np.ndarray:
        return np.array([it.mean_loss for it in self.iterations])

    @property
    def total_skipped(self) -> int:
        return sum(it.skipped for it in self.iterations)


def _inner_adapt(params, subset, cfg) -> TaskIncrements:
    inc = TaskIncrements.zeros(params.d)
    for _ in range(cfg.inner_steps):
        _, grads = neg_log_likelihood(params, inc, subset, cfg.nugget)
        inc = clamp_increments(
            TaskIncrements(
                inc.d_log_theta - cfg.inner_lr * grads.log_theta,
                inc.d_p - cfg.inner_lr * grads.p,
            ),
            params.base,
        )
    return inc


def meta_train(
    sources: Sequence[Dataset], cfg: MetaConfig
) -> tuple[ExperienceParams, MetaTrace]:
    """Train shared kernel parameters across related-task datasets."""
    if not sources:
        raise ValueError("at least one source dataset is required")
    d = sources[0].d
    for i, s in enumerate(sources):
        if s.d != d:
            raise ValueError(f"source {i} has dimension {s.d}, expected {d}")
        if len(s) < cfg.dm_size:
            raise ValueError(f"source {i} has {len(s)} points < dm_size {cfg.dm_size}")

    rng = RngStream(cfg.seed)
    params = init_deep_kernel_params(d, rng.derive("init"), hidden=cfg.hidden)
    vec = pack_params(params)
    adam = AdamState(lr=cfg.lr_alpha)
    trace = MetaTrace()
    n_sources = len(sources)

    iterations = cfg.n_meta // cfg.batch
    for it in range(iterations):
        g = rng.derive("iter", it).generator()
        # distinct datasets within a batch when possible; tasks still
        # repeat across iterations when n_meta exceeds the source count
        replace = n_sources < cfg.batch
        picks = g.choice(n_sources, size=cfg.batch, replace=replace)
        grad_sum = np.zeros_like(vec)
        record = IterationRecord(mean_loss=np.nan)
        current = unpack_params(vec, params)
        for ds_index in picks:
            src = sources[int(ds_index)]
            idx = g.choice(len(src), size=cfg.dm_size, replace=False)
            subset = src.take(idx)
            inc = (
                _inner_adapt(current, subset, cfg)
                if cfg.inner_steps > 0
                else TaskIncrements.zeros(d)
            )
            try:
                value, grads = neg_log_likelihood(current, inc, subset, cfg.nugget)
            except MetaSaeaError:
                record.skipped += 1
                continue
            record.losses.append(value)
            grad_sum += pack_gradients(grads)
        if record.losses:
            if cfg.lr_alpha != 0.0:
                if cfg.optimizer == "adam":
                    vec = adam.step(vec, grad_sum)
                else:
                    vec = sgd_step(vec, grad_sum, cfg.lr_alpha)
                vec = clamp_flat(vec, d)
            record.mean_loss = float(np.mean(record.losses))
        trace.iterations.append(record)

    return unpack_params(vec, params), trace


# ---------------------------------------------------------------------------
# experience store
# ---------------------------------------------------------------------------


def _f17(x: float) -> float:
    # decimal round-trip at 17 significant digits is bit-exact for float64
    return float(format(float(x), ".17g"))


def save_experiences(params: ExperienceParams, path) -> None:
    """Write the parameter store as a versioned JSON document."""
    d = params.d
    doc = {
        "version": STORE_VERSION,
        "d": d,
        "layer_sizes": params.mlp.layer_sizes(d),
        "weights": [
            [[_f17(v) for v in row] for row in w] for w, _ in params.mlp.layers
        ],
        "biases": [[_f17(v) for v in b] for _, b in params.mlp.layers],
        "log_theta": [_f17(v) for v in params.base.log_theta],
        "p": [_f17(v) for v in params.base.p],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def _require(doc: dict, name: str):
    if name not in doc:
        raise SchemaError(f"missing field {name!r}")
    return doc[name]


def load_experiences(path) -> ExperienceParams:
    """Read a parameter store; bit-exact inverse of save_experiences."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from exc
    version = _require(doc, "version")
    if version != STORE_VERSION:
        raise VersionMismatch(f"store version {version!r}, expected {STORE_VERSION}")
    d = int(_require(doc, "d"))
    sizes = _require(doc, "layer_sizes")
    weights = _require(doc, "weights")
    biases = _require(doc, "biases")
    n_layers = len(sizes) - 1
    if len(weights) != n_layers or len(biases) != n_layers:
        raise SchemaError("field 'weights'/'biases' length does not match layer_sizes")
    layers = []
    for li in range(n_layers):
        w = np.asarray(weights[li], dtype=float)
        b = np.asarray(biases[li], dtype=float)
        if w.shape != (sizes[li + 1], sizes[li]):
            raise SchemaError(
                f"field 'weights[{li}]' has shape {w.shape}, "
                f"expected {(sizes[li + 1], sizes[li])}"
            )
        if b.shape != (sizes[li + 1],):
            raise SchemaError(f"field 'biases[{li}]' has shape {b.shape}")
        layers.append((w, b))
    log_theta = np.asarray(_require(doc, "log_theta"), dtype=float)
    p = np.asarray(_require(doc, "p"), dtype=float)
    if log_theta.shape != (d,):
        raise SchemaError(f"field 'log_theta' has length {log_theta.size}, expected {d}")
    if p.shape != (d,):
        raise SchemaError(f"field 'p' has length {p.size}, expected {d}")
    return DeepKernelParams(MlpParams(tuple(layers)), BaseKernelParams(log_theta, p))
