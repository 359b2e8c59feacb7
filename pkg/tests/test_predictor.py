import math

import numpy as np
import pytest

from gpnnlab.errors import ShapeError, SizeError
from gpnnlab.kernels import HyperParams, KernelSpec
from gpnnlab.neighbours import Dataset
from gpnnlab.predictor import (
    Prediction,
    build_gram,
    exact_gp_predict,
    gpnn_predict,
    gpnn_predict_infinite_lengthscale,
    knn_predict,
    predict_batch,
)

MODEL = KernelSpec("se", HyperParams(1.0, 0.9, 0.1))


def explicit_inverse_prediction(model, pts, y, x):
    """Textbook oracle: dense Gram, explicit inverse, no factor reuse."""
    from gpnnlab.kernels import covariance

    m = len(pts)
    K = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            K[i, j] = covariance(model, pts[i], pts[j], same_point=(i == j))
    ks = np.array([covariance(model, pts[i], x) for i in range(m)])
    Kinv = np.linalg.inv(K)
    mean = ks @ Kinv @ y
    var = model.params.signal_var + model.params.noise_var - ks @ Kinv @ ks
    return mean, var


class TestBuildGram:
    def test_single_neighbour(self):
        gram = build_gram(MODEL, np.zeros((1, 2)), np.zeros(2))
        assert gram.K[0, 0] == pytest.approx(1.0)
        assert gram.k_star[0] == pytest.approx(0.9)

    def test_duplicate_neighbours_keep_spd(self):
        pts = np.zeros((2, 2))
        gram = build_gram(MODEL, pts, np.ones(2))
        assert gram.K[0, 1] == pytest.approx(0.9)
        assert np.all(np.linalg.eigvalsh(gram.K) > 0)

    def test_offdiagonal_value(self):
        delta = math.sqrt(2.0 * math.log(2.0))
        pts = np.array([[0.0], [delta]])
        gram = build_gram(MODEL, pts, np.array([5.0]))
        assert gram.K[0, 1] == pytest.approx(0.45, rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            build_gram(MODEL, np.zeros((2, 2)), np.zeros(3))


class TestGpnnPredict:
    def test_m1_closed_form_at_query(self):
        pred = gpnn_predict(MODEL, np.zeros((1, 2)), np.array([2.0]), np.zeros(2))
        assert pred.mean == pytest.approx(0.9 * 2.0, rel=1e-12)
        assert pred.variance == pytest.approx(1.0 - 0.81, rel=1e-12)

    def test_prior_reversion_far_away(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(5, 2))
        pred = gpnn_predict(MODEL, pts, rng.normal(size=5), np.array([500.0, 500.0]))
        assert pred.mean == pytest.approx(0.0, abs=1e-10)
        assert pred.variance == pytest.approx(1.0, rel=1e-10)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_explicit_inverse(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(5, 3))
        y = rng.normal(size=5)
        x = rng.normal(size=3)
        pred = gpnn_predict(MODEL, pts, y, x)
        mean, var = explicit_inverse_prediction(MODEL, pts, y, x)
        assert pred.mean == pytest.approx(mean, rel=1e-9, abs=1e-12)
        assert pred.variance == pytest.approx(var, rel=1e-9)

    def test_variance_bounds(self):
        rng = np.random.default_rng(1)
        p = MODEL.params
        for _ in range(50):
            m = int(rng.integers(1, 12))
            pts = rng.normal(size=(m, 2))
            pred = gpnn_predict(MODEL, pts, rng.normal(size=m), rng.normal(size=2))
            assert p.noise_var < pred.variance <= p.signal_var + p.noise_var + 1e-12

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(7, 2))
        y = rng.normal(size=7)
        x = rng.normal(size=2)
        base = gpnn_predict(MODEL, pts, y, x)
        for _ in range(5):
            perm = rng.permutation(7)
            p2 = gpnn_predict(MODEL, pts[perm], y[perm], x)
            assert p2.mean == pytest.approx(base.mean, abs=1e-12)
            assert p2.variance == pytest.approx(base.variance, abs=1e-12)

    def test_interpolation_as_noise_vanishes(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(6, 2))
        y = rng.normal(size=6)
        tiny = KernelSpec("se", HyperParams(1.0, 0.9, 1e-12))
        pred = gpnn_predict(tiny, pts, y, pts[2])
        assert pred.mean == pytest.approx(y[2], abs=1e-4)


class TestKnnPredict:
    def test_uniform_average(self):
        pred = knn_predict(np.array([1.0, 2.0, 3.0]), noise_var=0.1)
        assert pred.mean == 2.0

    def test_single_target(self):
        pred = knn_predict(np.array([4.0]), noise_var=0.1)
        assert pred.mean == 4.0
        assert pred.variance == pytest.approx(0.2)

    def test_uniform_weights_minimise_mse(self):
        # numerical check that the equal-weight vector minimises
        # E[(f* + xi* - w.y)^2] for repeated observations of one location
        rng = np.random.default_rng(4)
        m, sf2, sn2 = 4, 0.9, 0.1
        draws = 40_000
        f = rng.normal(0.0, math.sqrt(sf2), size=draws)
        ystar = f + rng.normal(0.0, math.sqrt(sn2), size=draws)
        Y = f[:, None] + rng.normal(0.0, math.sqrt(sn2), size=(draws, m))

        def mse(w):
            return np.mean((ystar - Y @ w) ** 2)

        base = np.full(m, 1.0 / m)
        best = mse(base)
        for _ in range(60):
            w = base + rng.normal(scale=0.15, size=m)
            w = w / w.sum()  # stay unbiased
            assert mse(w) >= best - 5e-4


class TestInfiniteLengthscale:
    def test_noise_free_limit_is_average(self):
        model = KernelSpec("se", HyperParams(1.0, 0.9, 1e-14))
        y = np.array([1.0, 3.0])
        pred = gpnn_predict_infinite_lengthscale(model, y)
        assert pred.mean == pytest.approx(2.0, rel=1e-12)

    def test_m1_matches_closed_form(self):
        pred = gpnn_predict_infinite_lengthscale(MODEL, np.array([5.0]))
        assert pred.mean == pytest.approx(0.9 * 5.0, rel=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_large_lengthscale_convergence(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(1, 15))
        pts = rng.normal(size=(m, 3))
        y = rng.normal(size=m)
        wide = KernelSpec("se", HyperParams(1e6, 0.9, 0.1))
        got = gpnn_predict(wide, pts, y, rng.normal(size=3))
        want = gpnn_predict_infinite_lengthscale(wide, y)
        assert got.mean == pytest.approx(want.mean, abs=1e-6)
        assert got.variance == pytest.approx(want.variance, abs=1e-6)


class TestExactGp:
    def test_equals_gpnn_with_all_points(self):
        rng = np.random.default_rng(5)
        data = Dataset(inputs=rng.normal(size=(50, 2)), targets=rng.normal(size=50))
        x = rng.normal(size=2)
        full = exact_gp_predict(MODEL, data, x)
        nn = gpnn_predict(MODEL, data.inputs, data.targets, x)
        assert full.mean == pytest.approx(nn.mean, rel=1e-12)
        assert full.variance == pytest.approx(nn.variance, rel=1e-12)

    def test_explicit_inverse_oracle_n50(self):
        rng = np.random.default_rng(6)
        data = Dataset(inputs=rng.normal(size=(50, 2)), targets=rng.normal(size=50))
        x = rng.normal(size=2)
        got = exact_gp_predict(MODEL, data, x)
        mean, var = explicit_inverse_prediction(MODEL, data.inputs, data.targets, x)
        assert got.mean == pytest.approx(mean, rel=1e-9, abs=1e-12)
        assert got.variance == pytest.approx(var, rel=1e-9)

    def test_cap_enforced(self):
        rng = np.random.default_rng(7)
        data = Dataset(inputs=rng.normal(size=(10, 1)), targets=rng.normal(size=10))
        with pytest.raises(SizeError):
            exact_gp_predict(MODEL, data, np.zeros(1), dense_cap=5)


class TestPredictBatch:
    def test_matches_scalar_path(self):
        rng = np.random.default_rng(8)
        B, m, d = 40, 6, 3
        pts = rng.normal(size=(B, m, d))
        y = rng.normal(size=(B, m))
        X = rng.normal(size=(B, d))
        means, variances = predict_batch(MODEL, pts, y, X)
        for b in range(B):
            one = gpnn_predict(MODEL, pts[b], y[b], X[b])
            assert means[b] == pytest.approx(one.mean, rel=1e-10, abs=1e-12)
            assert variances[b] == pytest.approx(one.variance, rel=1e-10)
