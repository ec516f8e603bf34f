"""Task families: parameterized sinusoid regression targets, the seven
DTLZ benchmark problems with per-objective scale/phase parameters that
define families of related variants, and a synthetic constrained
single-objective family with calibrated feasible volume.

Variant parameter ranges come in two regimes: "in-range" samples span the
canonical function's parameters, "out-of-range" excludes them, so any
experience learned from out-of-range variants cannot come from tasks
nearly identical to the canonical target.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, FeasibilityCalibrationFailed
from .gp import Dataset
from .numkit import RngStream, as_bounds, lhs_sample

__all__ = [
    "TaskSpec",
    "Evaluation",
    "DTLZ_FAMILIES",
    "SINUSOID_NOISE_STD",
    "sample_sinusoid",
    "eval_sinusoid",
    "sample_dtlz_variant",
    "canonical_dtlz",
    "eval_dtlz",
    "sample_constrained",
    "eval_constrained",
    "evaluate",
    "generate_dataset",
]

DTLZ_FAMILIES = tuple(f"dtlz{i}" for i in range(1, 8))

# noise level for sinusoid observations, read as a standard deviation
SINUSOID_NOISE_STD = 0.1

_SIN_A = (0.1, 5.0)
_SIN_W = (0.999, 1.0)
_SIN_B = (0.0, np.pi)

# variant parameter ranges per regime
_A_IN, _A_OUT = (0.1, 5.0), (1.5, 5.0)
_B_IN, _B_OUT = (0.5, 2.0), (0.5, 1.5)


@dataclass(frozen=True)
class TaskSpec:
    """A member of a task family with an evaluator and box bounds."""

    family: str
    d: int
    m: int
    params: dict
    bounds: np.ndarray
    n_constraints: int = 0
    seed: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "bounds", as_bounds(self.bounds))

    @property
    def n_channels(self) -> int:
        return self.m + self.n_constraints

    def to_json(self) -> dict:
        params = {
            k: (v.tolist() if isinstance(v, np.ndarray) else v)
            for k, v in self.params.items()
        }
        return {
            "family": self.family,
            "d": self.d,
            "m": self.m,
            "params": params,
            "seed": list(self.seed) if self.seed is not None else None,
        }

    @staticmethod
    def from_json(doc: dict) -> "TaskSpec":
        family = doc["family"]
        params = {
            k: (np.asarray(v, dtype=float) if isinstance(v, list) else v)
            for k, v in doc["params"].items()
        }
        d, m = int(doc["d"]), int(doc["m"])
        if family == "sinusoid":
            bounds = [[-5.0, 5.0]]
        else:
            bounds = [[0.0, 1.0]] * d
        n_cons = 4 if family == "constrained-synthetic" else 0
        seed = tuple(doc["seed"]) if doc.get("seed") is not None else None
        return TaskSpec(family, d, m, params, bounds, n_cons, seed)


@dataclass(frozen=True)
class Evaluation:
    """One true task evaluation: objectives, constraints (feasible iff all
    <= 0), and its unit cost against the evaluation budget."""

    objectives: np.ndarray
    constraints: np.ndarray = field(default_factory=lambda: np.empty(0))
    cost: int = 1

    @property
    def feasible(self) -> bool:
        return bool(np.all(self.constraints <= 0.0))


# ---------------------------------------------------------------------------
# sinusoid family
# ---------------------------------------------------------------------------


def sample_sinusoid(rng: RngStream) -> TaskSpec:
    """Random member y = A sin(w x + b): A in [0.1, 5], w in [0.999, 1],
    b in [0, pi], all uniform."""
    g = rng.generator()
    params = {
        "A": float(g.uniform(*_SIN_A)),
        "w": float(g.uniform(*_SIN_W)),
        "b": float(g.uniform(*_SIN_B)),
    }
    return TaskSpec("sinusoid", 1, 1, params, [[-5.0, 5.0]], seed=(rng.seed, rng.stream))


def eval_sinusoid(spec: TaskSpec, x, noise_rng: RngStream | None = None):
    """A sin(w x + b) plus Gaussian noise (std 0.1) when a stream is given."""
    x = np.asarray(x, dtype=float)
    y = spec.params["A"] * np.sin(spec.params["w"] * x + spec.params["b"])
    if noise_rng is not None:
        y = y + noise_rng.generator().normal(0.0, SINUSOID_NOISE_STD, size=np.shape(y))
    return y


# ---------------------------------------------------------------------------
# DTLZ family
# ---------------------------------------------------------------------------


def _dtlz_g1(z):  # multimodal Rastrigin-style distance term
    zc = z - 0.5
    return 100.0 * (z.size + np.sum(zc**2 - np.cos(20.0 * np.pi * zc)))


def _dtlz_g2(z):
    return float(np.sum((z - 0.5) ** 2))


def _dtlz_g6(z):
    return float(np.sum(z**0.1))


def _dtlz_linear(y, g, a, m):
    f = np.empty(m)
    f[0] = (a[0] + g) * 0.5 * np.prod(y)
    for j in range(1, m - 1):
        f[j] = (a[j] + g) * 0.5 * np.prod(y[: m - 1 - j]) * (1.0 - y[m - 1 - j])
    f[m - 1] = (a[m - 1] + g) * 0.5 * (1.0 - y[0])
    return f


def _dtlz_concave(y, g, a, b, m):
    # objective j uses its own phase divisor b[j] in every factor
    f = np.empty(m)
    f[0] = (a[0] + g) * np.prod(np.cos(y * np.pi / b[0]))
    for j in range(1, m - 1):
        f[j] = (
            (a[j] + g)
            * np.prod(np.cos(y[: m - 1 - j] * np.pi / b[j]))
            * np.sin(y[m - 1 - j] * np.pi / b[j])
        )
    f[m - 1] = (a[m - 1] + g) * np.sin(y[0] * np.pi / b[m - 1])
    return f


def _dtlz_bent(y, g, a, m):
    f = np.empty(m)
    f[: m - 1] = y + a[: m - 1]
    gp1 = 1.0 + g
    h = m - np.sum(f[: m - 1] / gp1 * (1.0 + np.sin(3.0 * np.pi * f[: m - 1])))
    f[m - 1] = gp1 * h
    return f


def eval_dtlz(spec: TaskSpec, x) -> Evaluation:
    """Objectives of one DTLZ variant at a point in [0, 1]^d.

    The first m-1 coordinates are position variables y, the remaining
    k = d - m + 1 are distance variables z.
    """
    x = np.asarray(x, dtype=float).ravel()
    m, d = spec.m, spec.d
    if x.size != d:
        raise DimensionError(f"point has {x.size} coordinates, task needs {d}")
    if d < m:
        raise DimensionError(f"d={d} must be >= m={m}")
    y, z = x[: m - 1], x[m - 1 :]
    a = np.asarray(spec.params["a"], dtype=float)
    family = spec.family

    if family == "dtlz1":
        return Evaluation(_dtlz_linear(y, _dtlz_g1(z), a, m))
    if family == "dtlz7":
        g = float(a[m - 1] + 9.0 * np.sum(z) / z.size)
        return Evaluation(_dtlz_bent(y, g, a, m))

    b = np.asarray(spec.params["b"], dtype=float)
    if family == "dtlz2":
        return Evaluation(_dtlz_concave(y, _dtlz_g2(z), a, b, m))
    if family == "dtlz3":
        return Evaluation(_dtlz_concave(y, _dtlz_g1(z), a, b, m))
    if family == "dtlz4":
        return Evaluation(_dtlz_concave(y**100, _dtlz_g2(z), a, b, m))
    if family in ("dtlz5", "dtlz6"):
        g = _dtlz_g2(z) if family == "dtlz5" else _dtlz_g6(z)
        yr = y.copy()
        yr[1:] = (1.0 + 2.0 * g * y[1:]) / (2.0 * (1.0 + g))
        return Evaluation(_dtlz_concave(yr, g, a, b, m))
    raise DimensionError(f"unknown DTLZ family {family!r}")


def canonical_dtlz(family: str, d: int = 10, m: int = 3) -> TaskSpec:
    """The textbook member of a DTLZ family (a = 1, b = 2; for the
    disconnected family a = 0 except the last component)."""
    if family not in DTLZ_FAMILIES:
        raise ValueError(f"not a DTLZ family: {family!r}")
    if family == "dtlz7":
        a = np.zeros(m)
        a[m - 1] = 1.0
        params = {"a": a}
    elif family == "dtlz1":
        params = {"a": np.ones(m)}
    else:
        params = {"a": np.ones(m), "b": np.full(m, 2.0)}
    return TaskSpec(family, d, m, params, [[0.0, 1.0]] * d)


def sample_dtlz_variant(
    family: str, regime: str, rng: RngStream, d: int = 10, m: int = 3
) -> TaskSpec:
    """Random variant with a (and b where the family has one) uniform in
    the regime's ranges."""
    if family not in DTLZ_FAMILIES:
        raise ValueError(f"not a DTLZ family: {family!r}")
    if regime not in ("in-range", "out-of-range"):
        raise ValueError(f"regime must be 'in-range' or 'out-of-range', got {regime!r}")
    g = rng.generator()
    a_range = _A_IN if regime == "in-range" else _A_OUT
    params = {"a": g.uniform(*a_range, size=m)}
    if family not in ("dtlz1", "dtlz7"):
        b_range = _B_IN if regime == "in-range" else _B_OUT
        params["b"] = g.uniform(*b_range, size=m)
    return TaskSpec(family, d, m, params, [[0.0, 1.0]] * d, seed=(rng.seed, rng.stream))


# ---------------------------------------------------------------------------
# synthetic constrained family
# ---------------------------------------------------------------------------

_CONS_D = 6
_CONS_N = 4
_FEASIBLE_RANGE = (0.05, 0.5)
_CALIBRATION_POINTS = 10_000
_MAX_CALIBRATION_TRIES = 100


def sample_constrained(rng: RngStream) -> TaskSpec:
    """Random constrained task on [0, 1]^6.

    Objective: separable quadratic bowl f = sum c_i (x_i - o_i)^2 with
    c in [0.5, 2]^6 and center o in [0.2, 0.8]^6. Constraints: four
    half-spaces a_j . x - b_j <= 0 with unit-norm random directions; each
    offset is placed at a random quantile (50-90%) of the projections of
    10^4 Monte-Carlo points, and the whole draw is rejected until the
    jointly feasible fraction of those points lies in [0.05, 0.5].
    """
    for attempt in range(_MAX_CALIBRATION_TRIES):
        g = rng.derive("attempt", attempt).generator()
        c = g.uniform(0.5, 2.0, size=_CONS_D)
        o = g.uniform(0.2, 0.8, size=_CONS_D)
        dirs = g.normal(size=(_CONS_N, _CONS_D))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        mc = g.uniform(0.0, 1.0, size=(_CALIBRATION_POINTS, _CONS_D))
        proj = mc @ dirs.T  # (points, constraints)
        quantiles = g.uniform(0.5, 0.9, size=_CONS_N)
        offsets = np.array([np.quantile(proj[:, j], quantiles[j]) for j in range(_CONS_N)])
        frac = float(np.mean(np.all(proj - offsets <= 0.0, axis=1)))
        if _FEASIBLE_RANGE[0] <= frac <= _FEASIBLE_RANGE[1]:
            params = {
                "c": c,
                "o": o,
                "a": dirs,
                "b": offsets,
                "feasible_fraction": frac,
            }
            return TaskSpec(
                "constrained-synthetic",
                _CONS_D,
                1,
                params,
                [[0.0, 1.0]] * _CONS_D,
                n_constraints=_CONS_N,
                seed=(rng.seed, rng.stream),
            )
    raise FeasibilityCalibrationFailed(
        f"no draw reached a feasible fraction in {_FEASIBLE_RANGE} "
        f"after {_MAX_CALIBRATION_TRIES} tries"
    )


def eval_constrained(spec: TaskSpec, x) -> Evaluation:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != spec.d:
        raise DimensionError(f"point has {x.size} coordinates, task needs {spec.d}")
    p = spec.params
    f = float(np.sum(p["c"] * (x - p["o"]) ** 2))
    g = np.asarray(p["a"]) @ x - np.asarray(p["b"])
    return Evaluation(np.array([f]), g)


# ---------------------------------------------------------------------------
# evaluation dispatch and dataset generation
# ---------------------------------------------------------------------------


def evaluate(spec: TaskSpec, x, noise_rng: RngStream | None = None) -> Evaluation:
    """Evaluate any task family at one decision vector."""
    if spec.family == "sinusoid":
        y = eval_sinusoid(spec, np.asarray(x, dtype=float).ravel()[0], noise_rng)
        return Evaluation(np.array([float(y)]))
    if spec.family in DTLZ_FAMILIES:
        return eval_dtlz(spec, x)
    if spec.family == "constrained-synthetic":
        return eval_constrained(spec, x)
    raise ValueError(f"unknown family {spec.family!r}")


def generate_dataset(
    spec: TaskSpec, n: int, sampling: str, rng: RngStream
) -> list[Dataset]:
    """n evaluations at LHS or uniform points: one dataset per output
    channel (objectives first, then constraints), sharing the inputs."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if sampling == "lhs":
        xs = lhs_sample(n, spec.bounds, rng.derive("x"))
    elif sampling == "uniform":
        g = rng.derive("x").generator()
        xs = g.uniform(spec.bounds[:, 0], spec.bounds[:, 1], size=(n, spec.d))
    else:
        raise ValueError(f"sampling must be 'lhs' or 'uniform', got {sampling!r}")
    outputs = np.empty((n, spec.n_channels))
    for i in range(n):
        ev = evaluate(spec, xs[i], noise_rng=rng.derive("noise", i))
        outputs[i] = np.concatenate([ev.objectives, ev.constraints])
    return [Dataset(xs, outputs[:, c], spec.bounds) for c in range(spec.n_channels)]
