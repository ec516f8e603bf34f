"""Deterministic numerical primitives shared by all modules.

Dense SPD linear algebra, seeded counter-based random streams,
Latin hypercube designs, and simplex-lattice weight vectors.
Matrices are plain float64 numpy arrays in row-major order; values are
treated as immutable once built and are safe to share across threads.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidBounds, NotPositiveDefinite

__all__ = [
    "RngStream",
    "cholesky_decompose",
    "lhs_sample",
    "simplex_lattice_weights",
    "as_bounds",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Addressable deterministic random source.

    The same (seed, stream) pair reproduces an identical number sequence
    on any platform: the generator is Philox, a counter-based generator
    keyed directly on both values. A stream is single-consumer; parallel
    work must own distinct stream ids, usually built with :meth:`derive`.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = (self.seed & _MASK64) | ((self.stream & _MASK64) << 64)
        return np.random.Generator(np.random.Philox(key=key))

    def derive(self, *tokens: int | str) -> "RngStream":
        """Child stream addressed by a path of ints or short strings.

        Hash-based so that unrelated derivation paths never collide in
        practice and the result does not depend on call order.
        """
        h = hashlib.blake2b(digest_size=8)
        h.update((self.stream & _MASK64).to_bytes(8, "little"))
        for tok in tokens:
            if isinstance(tok, str):
                raw = tok.encode("utf-8")
                h.update(b"s" + len(raw).to_bytes(2, "little") + raw)
            else:
                h.update(b"i" + int(tok).to_bytes(16, "little", signed=True))
        return RngStream(self.seed, int.from_bytes(h.digest(), "little"))


def as_bounds(bounds) -> np.ndarray:
    """Normalize per-dimension [lo, hi] pairs to a validated (d, 2) array."""
    b = np.asarray(bounds, dtype=float)
    if b.ndim == 1:
        b = b.reshape(1, 2)
    if b.ndim != 2 or b.shape[1] != 2:
        raise InvalidBounds(f"bounds must have shape (d, 2), got {b.shape}")
    if not np.all(np.isfinite(b)):
        raise InvalidBounds("bounds must be finite")
    if np.any(b[:, 0] >= b[:, 1]):
        bad = int(np.argmax(b[:, 0] >= b[:, 1]))
        raise InvalidBounds(f"lo >= hi in dimension {bad}")
    return b


def cholesky_decompose(a: np.ndarray, jitter: float = 0.0) -> np.ndarray:
    """Lower Cholesky factor L with L @ L.T == a (+ jitter on the diagonal).

    Parameters
    ----------
    a : (n, n) symmetric array. Symmetry is checked to 1e-10 (relative to
        the largest entry).
    jitter : nonnegative diagonal addition applied before factorization.

    Raises
    ------
    NotPositiveDefinite
        When a pivot is non-positive after the jitter; the caller should
        increase its nugget and retry.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-10 * scale):
        raise ValueError("matrix is not symmetric within 1e-10")
    if jitter:
        a = a + jitter * np.eye(a.shape[0])
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def lhs_sample(n: int, bounds, rng: RngStream) -> np.ndarray:
    """Latin hypercube design of n points over box bounds.

    Per dimension the interval [lo, hi) is split into n equal strata,
    each holding exactly one point placed uniformly inside its stratum
    (McKay construction: random permutations with in-stratum jitter).

    Returns an (n, d) array; deterministic per stream.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    b = as_bounds(bounds)
    d = b.shape[0]
    g = rng.generator()
    out = np.empty((n, d))
    for j in range(d):
        perm = g.permutation(n)
        u = g.random(n)
        out[:, j] = b[j, 0] + (perm + u) / n * (b[j, 1] - b[j, 0])
    return out


def simplex_lattice_weights(m: int, h: int) -> np.ndarray:
    """All weight vectors with components in {0, 1/h, ..., 1} summing to 1.

    The Das-Dennis simplex lattice: C(h+m-1, m-1) vectors, enumerated in
    lexicographic order. Requires m >= 2 and h >= 1.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    if h < 1:
        raise ValueError("h must be >= 1")
    count = math.comb(h + m - 1, m - 1)
    out = np.empty((count, m))
    # dividers split h unit cells into m ordered groups
    for row, cuts in enumerate(itertools.combinations(range(h + m - 1), m - 1)):
        prev = -1
        for j, c in enumerate(cuts):
            out[row, j] = c - prev - 1
            prev = c
        out[row, m - 1] = (h + m - 1) - prev - 1
    return out / h
