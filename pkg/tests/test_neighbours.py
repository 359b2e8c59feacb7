import numpy as np
import pytest

from gpnnlab.errors import EmptyInputError, ShapeError, SizeError
from gpnnlab.kernels import HyperParams, KernelSpec, rho2_from_delta
from gpnnlab.neighbours import Dataset, brute_force_query, build_index, query, query_many


def random_dataset(rng, n, d):
    return Dataset(inputs=rng.normal(size=(n, d)), targets=rng.normal(size=n))


class TestDataset:
    def test_shape_checks(self):
        with pytest.raises(ShapeError):
            Dataset(inputs=np.zeros((3, 2)), targets=np.zeros(4))
        with pytest.raises(ShapeError):
            Dataset(inputs=np.zeros(3), targets=np.zeros(3))
        with pytest.raises(ShapeError):
            Dataset(inputs=np.array([[np.inf, 0.0]]), targets=np.zeros(1))

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            Dataset(inputs=np.zeros((0, 2)), targets=np.zeros(0))


class TestQueryBasics:
    def test_training_point_is_own_nearest(self):
        rng = np.random.default_rng(0)
        data = random_dataset(rng, 30, 2)
        index = build_index(data)
        ns = query(index, data.inputs[7], 1)
        assert ns.indices[0] == 7
        assert ns.distances[0] == 0.0

    def test_single_point_dataset(self):
        data = Dataset(inputs=np.array([[1.0, 2.0]]), targets=np.array([0.5]))
        ns = query(build_index(data), np.array([9.0, 9.0]), 1)
        assert list(ns.indices) == [0]

    def test_collinear_hand_case(self):
        pts = np.arange(10.0)[:, None]
        data = Dataset(inputs=pts, targets=np.zeros(10))
        ns = query(build_index(data), np.array([0.6]), 2)
        assert list(ns.indices) == [1, 0]

    def test_duplicate_rows_both_returned(self):
        pts = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0]])
        data = Dataset(inputs=pts, targets=np.zeros(3))
        ns = query(build_index(data), np.array([0.1, 0.0]), 2)
        assert sorted(ns.indices) == [0, 1]
        # tie broken by lower row index first
        assert list(ns.indices) == [0, 1]

    def test_size_and_shape_errors(self):
        rng = np.random.default_rng(1)
        data = random_dataset(rng, 10, 3)
        index = build_index(data)
        with pytest.raises(SizeError):
            query(index, np.zeros(3), 11)
        with pytest.raises(SizeError):
            query(index, np.zeros(3), 0)
        with pytest.raises(ShapeError):
            query(index, np.zeros(4), 2)

    def test_invariants(self):
        rng = np.random.default_rng(2)
        data = random_dataset(rng, 200, 4)
        index = build_index(data)
        ns = query(index, rng.normal(size=4), 17)
        assert len(set(ns.indices)) == 17
        assert np.all(np.diff(ns.distances) >= 0)


class TestOracleEquivalence:
    @pytest.mark.parametrize("seed", range(12))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 2000))
        d = int(rng.integers(1, 8))
        m = int(rng.integers(1, min(n, 40) + 1))
        data = random_dataset(rng, n, d)
        index = build_index(data)
        for _ in range(5):
            x = rng.normal(size=d)
            got = query(index, x, m)
            want = brute_force_query(data, x, m)
            np.testing.assert_array_equal(got.indices, want.indices)
            np.testing.assert_array_equal(got.distances, want.distances)

    def test_matches_brute_force_with_ties(self):
        # lattice points give exact repeated distances
        rng = np.random.default_rng(3)
        pts = np.array([(i, j) for i in range(-6, 7) for j in range(-6, 7)], dtype=float)
        data = Dataset(inputs=pts, targets=np.zeros(len(pts)))
        index = build_index(data)
        for m in (1, 3, 4, 5, 9, 24):
            got = query(index, np.zeros(2), m)
            want = brute_force_query(data, np.zeros(2), m)
            np.testing.assert_array_equal(got.indices, want.indices)
        x = pts[40] + 0.5  # midpoint between lattice sites
        for m in (2, 4, 8):
            got = query(index, x, m)
            want = brute_force_query(data, x, m)
            np.testing.assert_array_equal(got.indices, want.indices)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(4)
        data = random_dataset(rng, 500, 3)
        index = build_index(data)
        queries = rng.normal(size=(20, 3))
        idx, dist = query_many(index, queries, 9)
        for i, x in enumerate(queries):
            single = query(index, x, 9)
            np.testing.assert_array_equal(idx[i], single.indices)
            np.testing.assert_array_equal(dist[i], single.distances)


class TestKernelFaithfulness:
    def test_rho_reranking_is_identity(self):
        rng = np.random.default_rng(5)
        data = random_dataset(rng, 300, 3)
        index = build_index(data)
        hp = HyperParams(0.8, 1.3, 0.1)
        specs = [
            KernelSpec("se", hp),
            KernelSpec("exp", hp),
            KernelSpec("matern", hp, nu=1.5),
            KernelSpec("rq", hp, alpha=2.0),
        ]
        for _ in range(10):
            x = rng.normal(size=3)
            ns = query(index, x, 25)
            for spec in specs:
                r = rho2_from_delta(spec, ns.distances)
                assert np.all(np.diff(r) >= 0), spec.label()
                np.testing.assert_array_equal(np.argsort(r, kind="stable"), np.arange(25))
