import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from metasaea.errors import InvalidBounds, NotPositiveDefinite
from metasaea.numkit import RngStream, cholesky_decompose, lhs_sample, simplex_lattice_weights


class TestCholesky:
    def test_identity(self):
        assert_array_equal(cholesky_decompose(np.eye(3)), np.eye(3))

    def test_hand_solved_2x2(self):
        a = np.array([[4.0, 2.0], [2.0, 3.0]])
        expected = np.array([[2.0, 0.0], [1.0, np.sqrt(2.0)]])
        assert_allclose(cholesky_decompose(a), expected, atol=1e-12)

    def test_indefinite_raises(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky_decompose(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            cholesky_decompose(np.array([[1.0, 0.5], [0.1, 1.0]]))

    def test_round_trip_random_spd(self):
        for seed in range(20):
            g = RngStream(seed, 7).generator()
            n = int(g.integers(2, 12))
            b = g.normal(size=(n, n))
            a = b.T @ b + 1e-6 * np.eye(n)
            low = cholesky_decompose(a)
            assert_array_equal(np.triu(low, 1), 0.0)
            err = np.linalg.norm(low @ low.T - a) / np.linalg.norm(a)
            assert err < 1e-8

    def test_jitter_rescues_semidefinite(self):
        a = np.ones((3, 3))  # rank one
        with pytest.raises(NotPositiveDefinite):
            cholesky_decompose(a)
        low = cholesky_decompose(a, jitter=1e-8)
        assert np.all(np.isfinite(low))


class TestLhs:
    def test_two_point_stratification_1d(self):
        pts = lhs_sample(2, [[0.0, 1.0]], RngStream(1))
        lo = pts[pts < 0.5]
        hi = pts[pts >= 0.5]
        assert lo.size == 1 and hi.size == 1

    def test_single_point_within_bounds(self):
        pts = lhs_sample(1, [[3.0, 5.0]], RngStream(2))
        assert pts.shape == (1, 1)
        assert 3.0 <= pts[0, 0] < 5.0

    def test_determinism(self):
        bounds = [[0.0, 1.0]] * 10
        a = lhs_sample(10, bounds, RngStream(3, 5))
        b = lhs_sample(10, bounds, RngStream(3, 5))
        assert_array_equal(a, b)

    def test_marginal_stratification_randomized(self):
        g = np.random.default_rng(0)
        for _ in range(10):
            n = int(g.integers(1, 201))
            d = int(g.integers(1, 11))
            bounds = np.column_stack([g.uniform(-5, 0, d), g.uniform(0.5, 5, d)])
            pts = lhs_sample(n, bounds, RngStream(int(g.integers(1 << 30))))
            for j in range(d):
                strata = np.floor(
                    (pts[:, j] - bounds[j, 0]) / (bounds[j, 1] - bounds[j, 0]) * n
                ).astype(int)
                assert_array_equal(np.sort(strata), np.arange(n))

    def test_invalid_bounds(self):
        with pytest.raises(InvalidBounds):
            lhs_sample(3, [[1.0, 1.0]], RngStream(0))


class TestSimplexLatticeWeights:
    def test_m3_h2_enumeration(self):
        w = simplex_lattice_weights(3, 2)
        assert w.shape == (6, 3)
        got = {tuple(row) for row in w}
        expected = {
            (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0),
            (0.5, 0.5, 0.0), (0.5, 0.0, 0.5), (0.0, 0.5, 0.5),
        }
        assert got == expected

    def test_m2_h1(self):
        w = simplex_lattice_weights(2, 1)
        assert {tuple(row) for row in w} == {(1.0, 0.0), (0.0, 1.0)}

    def test_m3_h12_count(self):
        w = simplex_lattice_weights(3, 12)
        assert w.shape[0] == math.comb(14, 2) == 91

    def test_exact_sums_and_multiples(self):
        for m, h in [(2, 5), (3, 7), (4, 4)]:
            w = simplex_lattice_weights(m, h)
            assert w.shape[0] == math.comb(h + m - 1, m - 1)
            assert np.all(w >= 0.0)
            assert np.max(np.abs(w.sum(axis=1) - 1.0)) < 1e-12
            assert np.max(np.abs(w * h - np.round(w * h))) < 1e-12


class TestRngStream:
    def test_same_stream_bitwise_identical(self):
        a = RngStream(42, 9).generator().random(1000)
        b = RngStream(42, 9).generator().random(1000)
        assert_array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = RngStream(42, 0).generator().random(100)
        b = RngStream(42, 1).generator().random(100)
        assert not np.array_equal(a, b)

    def test_derive_is_stable_and_order_free(self):
        base = RngStream(7)
        c1 = base.derive("init", 3)
        c2 = base.derive("init", 3)
        assert c1 == c2
        assert c1 != base.derive("init", 4)
        assert c1 != base.derive(3, "init")
