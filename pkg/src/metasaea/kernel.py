"""Deep correlation kernel: a small feed-forward feature map composed with
a per-dimension exponential-power kernel, with analytic gradients of every
kernel-matrix entry with respect to every parameter.

The kernel between two decision vectors x, x' is

    k(x, x') = exp(-sum_k theta_k * |phi(x)_k - phi(x')_k| ** p_k)

where phi is a fully connected network (input d -> 40 -> 40 -> output d,
ReLU hidden activations, linear output) and theta_k > 0, p_k in [1, 2].
An empty network (no layers) makes phi the identity, which reduces the
deep kernel exactly to the plain exponential kernel on raw inputs; that
configuration backs the non-deep GP baselines and parity tests.

theta is carried in log space so gradient steps preserve positivity.
Task-specific increments shift (log theta, p) additively on top of a
shared parameter set; the combined values are clamped to the legal
ranges before any kernel evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .numkit import RngStream

__all__ = [
    "MlpParams",
    "BaseKernelParams",
    "DeepKernelParams",
    "TaskIncrements",
    "KernelGradients",
    "THETA_MIN",
    "THETA_MAX",
    "P_MIN",
    "P_MAX",
    "init_mlp",
    "identity_mlp",
    "init_deep_kernel_params",
    "identity_kernel_params",
    "mlp_forward",
    "base_kernel",
    "deep_kernel",
    "kernel_matrix",
    "kernel_gradients",
]

THETA_MIN = 1e-5
THETA_MAX = 100.0
P_MIN = 1.0
P_MAX = 2.0

# |u - v| below this is treated as exactly zero in gradient formulas to
# avoid log(0); the kernel value itself is unaffected.
_TINY_DIST = 1e-300


@dataclass(frozen=True)
class MlpParams:
    """Feed-forward feature map parameters.

    layers is a tuple of (weight, bias) pairs with weight shaped
    (fan_out, fan_in). ReLU is applied after every layer except the last,
    whose output is linear. An empty tuple is the identity map.
    """

    layers: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        for li, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ShapeMismatch(f"layer {li}: weight {w.shape} vs bias {b.shape}")
            if li > 0 and w.shape[1] != self.layers[li - 1][0].shape[0]:
                raise ShapeMismatch(f"layer {li}: fan_in {w.shape[1]} does not chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {li}: non-finite parameters")

    @property
    def in_dim(self) -> int | None:
        return self.layers[0][0].shape[1] if self.layers else None

    @property
    def out_dim(self) -> int | None:
        return self.layers[-1][0].shape[0] if self.layers else None

    def layer_sizes(self, d: int) -> list[int]:
        """Full size chain [d, h1, ..., out]; just [d] for the identity map."""
        if not self.layers:
            return [d]
        return [self.layers[0][0].shape[1]] + [w.shape[0] for w, _ in self.layers]


@dataclass(frozen=True)
class BaseKernelParams:
    """Exponential-power kernel parameters: theta_k = exp(log_theta_k), p_k."""

    log_theta: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        lt = np.asarray(self.log_theta, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if lt.shape != p.shape or lt.ndim != 1:
            raise ShapeMismatch(f"log_theta {lt.shape} vs p {p.shape}")
        if not (np.all(np.isfinite(lt)) and np.all(np.isfinite(p))):
            raise ValueError("non-finite kernel parameters")
        if np.any(p < P_MIN - 1e-12) or np.any(p > P_MAX + 1e-12):
            raise ValueError(f"p must lie in [{P_MIN}, {P_MAX}]")
        object.__setattr__(self, "log_theta", lt)
        object.__setattr__(self, "p", p)

    @property
    def d(self) -> int:
        return self.log_theta.shape[0]


@dataclass(frozen=True)
class DeepKernelParams:
    """Complete deep-kernel parameter set: network plus base kernel."""

    mlp: MlpParams
    base: BaseKernelParams

    def __post_init__(self):
        if self.mlp.out_dim is not None and self.mlp.out_dim != self.base.d:
            raise ShapeMismatch(
                f"feature width {self.mlp.out_dim} vs kernel dims {self.base.d}"
            )

    @property
    def d(self) -> int:
        return self.base.d


@dataclass(frozen=True)
class TaskIncrements:
    """Additive offsets on (log theta, p) adapted per target task."""

    d_log_theta: np.ndarray
    d_p: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.d_log_theta, dtype=float)
        b = np.asarray(self.d_p, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise ShapeMismatch(f"d_log_theta {a.shape} vs d_p {b.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("non-finite increments")
        object.__setattr__(self, "d_log_theta", a)
        object.__setattr__(self, "d_p", b)

    @staticmethod
    def zeros(d: int) -> "TaskIncrements":
        return TaskIncrements(np.zeros(d), np.zeros(d))


@dataclass
class KernelGradients:
    """Gradient record mirroring DeepKernelParams.

    log_theta and p gradients apply equally to the shared parameters and
    to task increments: the two enter the kernel additively.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    log_theta: np.ndarray
    p: np.ndarray


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def init_mlp(d: int, hidden: tuple[int, ...], rng: RngStream) -> MlpParams:
    """Glorot-uniform weights, zero biases, output width equal to d."""
    g = rng.generator()
    sizes = [d, *hidden, d]
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = g.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append((w, np.zeros(fan_out)))
    return MlpParams(tuple(layers))


def identity_mlp() -> MlpParams:
    """Zero-layer network: phi(x) = x."""
    return MlpParams(())


def init_deep_kernel_params(
    d: int,
    rng: RngStream,
    hidden: tuple[int, ...] = (40, 40),
    log_theta: float = 0.0,
    p: float = 2.0,
) -> DeepKernelParams:
    base = BaseKernelParams(np.full(d, float(log_theta)), np.full(d, float(p)))
    return DeepKernelParams(init_mlp(d, hidden, rng), base)


def identity_kernel_params(d: int, log_theta: float = 0.0, p: float = 2.0) -> DeepKernelParams:
    """Identity feature map with constant initial (log theta, p)."""
    base = BaseKernelParams(np.full(d, float(log_theta)), np.full(d, float(p)))
    return DeepKernelParams(identity_mlp(), base)


def effective_base(
    params: DeepKernelParams, increments: TaskIncrements | None
):
    """Combined (theta, p) after increments and range clamping.

    Returns (theta, p, theta_mask, p_mask); the masks flag coordinates
    whose combined value sits inside the legal range, i.e. where the
    clamp is the identity and gradient flows.
    """
    lt = params.base.log_theta
    p = params.base.p
    if increments is not None:
        if increments.d_log_theta.shape != lt.shape:
            raise ShapeMismatch("increment width does not match kernel dims")
        lt = lt + increments.d_log_theta
        p = p + increments.d_p
    theta_raw = np.exp(lt)
    theta = np.clip(theta_raw, THETA_MIN, THETA_MAX)
    p_eff = np.clip(p, P_MIN, P_MAX)
    return theta, p_eff, theta_raw == theta, p == p_eff


# ---------------------------------------------------------------------------
# forward evaluation
# ---------------------------------------------------------------------------


def _mlp_forward_batch(mlp: MlpParams, x: np.ndarray):
    """Features for a batch of rows, keeping per-layer inputs and
    pre-activations for the backward pass."""
    h = x
    inputs = []
    preacts = []
    last = len(mlp.layers) - 1
    for li, (w, b) in enumerate(mlp.layers):
        inputs.append(h)
        z = h @ w.T + b
        preacts.append(z)
        h = z if li == last else np.maximum(z, 0.0)
    return h, (inputs, preacts)


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Feature vector for a single decision vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeMismatch(f"expected a vector, got shape {x.shape}")
    if params.in_dim is not None and x.shape[0] != params.in_dim:
        raise ShapeMismatch(f"input width {x.shape[0]} vs network {params.in_dim}")
    phi, _ = _mlp_forward_batch(params, x[None, :])
    return phi[0]


def base_kernel(base: BaseKernelParams, u, v) -> float:
    """exp(-sum_k theta_k |u_k - v_k|**p_k); 1.0 at u == v."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.shape != base.log_theta.shape:
        raise ShapeMismatch(f"feature shapes {u.shape}, {v.shape} vs kernel {base.d}")
    a = np.abs(u - v)
    return float(np.exp(-np.sum(np.exp(base.log_theta) * a**base.p)))


def deep_kernel(params: DeepKernelParams, x_i, x_j) -> float:
    """Base kernel evaluated on network features of the two inputs."""
    return base_kernel(
        params.base, mlp_forward(params.mlp, x_i), mlp_forward(params.mlp, x_j)
    )


def _kernel_forward(theta, p, phi, nugget):
    """Correlation matrix plus intermediates reused by the backward pass."""
    delta = phi[:, None, :] - phi[None, :, :]
    absd = np.abs(delta)
    pow_ = absd**p
    s = pow_ @ theta
    k = np.exp(-s)
    r = k + nugget * np.eye(phi.shape[0])
    return r, k, delta, absd, pow_


def kernel_matrix(
    params: DeepKernelParams,
    xs,
    nugget: float = 0.0,
    increments: TaskIncrements | None = None,
) -> np.ndarray:
    """n x n correlation matrix over a batch of decision vectors.

    Symmetric with unit diagonal plus nugget; positive semidefinite up to
    the nugget.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    theta, p, _, _ = effective_base(params, increments)
    phi, _ = _mlp_forward_batch(params.mlp, xs)
    if phi.shape[1] != theta.shape[0]:
        raise ShapeMismatch(f"feature width {phi.shape[1]} vs kernel dims {theta.shape[0]}")
    r, *_ = _kernel_forward(theta, p, phi, nugget)
    return r


def _mlp_backward(mlp: MlpParams, cache, d_phi):
    """Accumulate parameter gradients from the feature cotangent d_phi."""
    inputs, preacts = cache
    grads_w = [None] * len(mlp.layers)
    grads_b = [None] * len(mlp.layers)
    g = d_phi
    for li in range(len(mlp.layers) - 1, -1, -1):
        w, _ = mlp.layers[li]
        if li != len(mlp.layers) - 1:
            g = g * (preacts[li] > 0.0)
        grads_w[li] = g.T @ inputs[li]
        grads_b[li] = g.sum(axis=0)
        if li > 0:
            g = g @ w
    return grads_w, grads_b


def _kernel_backward(mlp, cache, theta, p, theta_mask, p_mask, fw, cot):
    """Gradients of sum_ij cot_ij * K_ij for every kernel parameter."""
    _, k, delta, absd, pow_ = fw
    ds = -(k * cot)  # d/dS of sum cot*exp(-S)
    safe = absd > _TINY_DIST
    grad_theta = np.einsum("ij,ijk->k", ds, pow_)
    log_a = np.where(safe, np.log(np.where(safe, absd, 1.0)), 0.0)
    grad_p = theta * np.einsum("ij,ijk->k", ds, pow_ * log_a)
    # gradient wrt pairwise feature differences; zero at coincident
    # features (subgradient choice for |.|**p at 0)
    a_pm1 = np.where(safe, absd ** (p - 1.0), 0.0)
    d_delta = ds[:, :, None] * (theta * p) * a_pm1 * np.sign(delta)
    d_phi = d_delta.sum(axis=1) - d_delta.sum(axis=0)
    grads_w, grads_b = _mlp_backward(mlp, cache, d_phi)
    return KernelGradients(
        weights=grads_w,
        biases=grads_b,
        log_theta=theta * grad_theta * theta_mask,
        p=grad_p * p_mask,
    )


def kernel_gradients(
    params: DeepKernelParams,
    xs,
    cotangent: np.ndarray,
    increments: TaskIncrements | None = None,
) -> KernelGradients:
    """sum_ij cotangent_ij * dK_ij/dgamma for every scalar parameter.

    The cotangent is the loss gradient with respect to the correlation
    matrix (an n x n array, normally symmetric). Accumulation is
    reverse-mode through the kernel expression and the feature network.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    cot = np.asarray(cotangent, dtype=float)
    n = xs.shape[0]
    if cot.shape != (n, n):
        raise ShapeMismatch(f"cotangent {cot.shape} vs {n} points")
    theta, p, theta_mask, p_mask = effective_base(params, increments)
    phi, cache = _mlp_forward_batch(params.mlp, xs)
    if phi.shape[1] != theta.shape[0]:
        raise ShapeMismatch(f"feature width {phi.shape[1]} vs kernel dims {theta.shape[0]}")
    fw = _kernel_forward(theta, p, phi, 0.0)
    return _kernel_backward(params.mlp, cache, theta, p, theta_mask, p_mask, fw, cot)


# ---------------------------------------------------------------------------
# flat parameter vector helpers (used by the trainers and gradient checks)
# ---------------------------------------------------------------------------


def pack_params(params: DeepKernelParams) -> np.ndarray:
    """All trainable scalars as one flat vector (weights, biases, log_theta, p)."""
    parts = []
    for w, b in params.mlp.layers:
        parts.append(w.ravel())
        parts.append(b.ravel())
    parts.append(params.base.log_theta)
    parts.append(params.base.p)
    return np.concatenate(parts) if parts else np.empty(0)


def unpack_params(vec: np.ndarray, template: DeepKernelParams) -> DeepKernelParams:
    """Rebuild structured parameters from a flat vector shaped like template."""
    i = 0
    layers = []
    for w, b in template.mlp.layers:
        layers.append(
            (
                vec[i : i + w.size].reshape(w.shape).copy(),
                vec[i + w.size : i + w.size + b.size].copy(),
            )
        )
        i += w.size + b.size
    d = template.base.d
    lt = vec[i : i + d].copy()
    p = vec[i + d : i + 2 * d].copy()
    return DeepKernelParams(MlpParams(tuple(layers)), BaseKernelParams(lt, p))


def pack_gradients(grads: KernelGradients) -> np.ndarray:
    parts = []
    for w, b in zip(grads.weights, grads.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    parts.append(grads.log_theta)
    parts.append(grads.p)
    return np.concatenate(parts)
