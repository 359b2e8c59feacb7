"""Predictive distributions: nearest-neighbour GP, k-NN baseline and limits.

The m x m neighbour Gram solve is the whole per-prediction cost, so a
single Cholesky factorisation is reused for both the mean and the variance
term.  ``predict_batch`` stacks many equal-m queries into one LAPACK call,
which is what the experiment harness uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConditioningError, EmptyInputError, NumericError, ShapeError, SizeError
from .kernels import KernelSpec, correlation
from .neighbours import Dataset

__all__ = [
    "Prediction",
    "GramView",
    "build_gram",
    "gpnn_predict",
    "knn_predict",
    "gpnn_predict_infinite_lengthscale",
    "exact_gp_predict",
    "predict_batch",
    "DENSE_CAP",
]

DENSE_CAP = 4096

# Jitter policy: relative to total variance, escalating tenfold.
_JITTER_START = 1e-10
_JITTER_MAX = 1e-6


@dataclass(frozen=True)
class Prediction:
    """Posterior mean and variance for one query point."""

    mean: float
    variance: float


@dataclass(frozen=True)
class GramView:
    """Neighbour Gram matrix (noise on the diagonal) and query covariances."""

    K: np.ndarray
    k_star: np.ndarray


def _pairwise_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2)


def build_gram(model: KernelSpec, neighbours, x_star) -> GramView:
    """Model-kernel Gram over the neighbours plus covariances to the query.

    The query vector carries no noise term: prediction is of a fresh
    observation at a new location, whose noise enters only through the
    variance formula's additive term.
    """
    pts = np.asarray(neighbours, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ShapeError(f"neighbours must be a nonempty m x d matrix, got shape {pts.shape}")
    x = np.asarray(x_star, dtype=float)
    if x.shape != (pts.shape[1],):
        raise ShapeError(f"query must have dimension {pts.shape[1]}, got shape {x.shape}")
    p = model.params
    K = p.signal_var * np.asarray(correlation(model, _pairwise_distances(pts)))
    K[np.diag_indices_from(K)] += p.noise_var
    k_star = p.signal_var * np.asarray(correlation(model, np.linalg.norm(pts - x, axis=1)))
    if not (np.all(np.isfinite(K)) and np.all(np.isfinite(k_star))):
        raise NumericError("non-finite covariance encountered")
    return GramView(K=K, k_star=np.atleast_1d(k_star))


def _cho_factor_with_jitter(K: np.ndarray, scale: float):
    try:
        return cho_factor(K, lower=True)
    except np.linalg.LinAlgError:
        pass
    jitter = _JITTER_START
    eye = np.eye(K.shape[0])
    while jitter <= _JITTER_MAX:
        try:
            return cho_factor(K + jitter * scale * eye, lower=True)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise ConditioningError(
        f"Cholesky failed after escalating jitter to {_JITTER_MAX * scale:g}", jitter=_JITTER_MAX * scale
    )


def gpnn_predict(model: KernelSpec, neighbours, targets, x_star) -> Prediction:
    """GP posterior conditioned on the supplied neighbour set only."""
    gram = build_gram(model, neighbours, x_star)
    y = np.asarray(targets, dtype=float)
    if y.shape != (gram.K.shape[0],):
        raise ShapeError(f"targets must match neighbour count {gram.K.shape[0]}, got shape {y.shape}")
    p = model.params
    total_var = p.signal_var + p.noise_var
    factor = _cho_factor_with_jitter(gram.K, total_var)
    alpha = cho_solve(factor, y)
    kappa = float(gram.k_star @ cho_solve(factor, gram.k_star))
    return Prediction(mean=float(gram.k_star @ alpha), variance=total_var - kappa)


def knn_predict(targets, noise_var: float) -> Prediction:
    """Plain k-NN mean with the minimum-achievable-MSE variance convention.

    The reported variance noise_var * (1 + 1/m) is the floor attained by an
    unbiased m-point linear predictor, so the baseline emits a calibration
    number comparable to the GP's.
    """
    y = np.asarray(targets, dtype=float)
    if y.ndim != 1 or y.size < 1:
        raise EmptyInputError("need at least one neighbour target")
    m = y.size
    return Prediction(mean=float(y.mean()), variance=noise_var * (1.0 + 1.0 / m))


def gpnn_predict_infinite_lengthscale(model: KernelSpec, targets) -> Prediction:
    """Closed-form limit of the GP prediction as the model lengthscale -> inf.

    The Gram tends to noise_var*I + signal_var*11^T, whose solve shrinks the
    plain neighbour average by m*sf2 / (sn2 + m*sf2).
    """
    y = np.asarray(targets, dtype=float)
    if y.ndim != 1 or y.size < 1:
        raise EmptyInputError("need at least one neighbour target")
    m = y.size
    sf2, sn2 = model.params.signal_var, model.params.noise_var
    shrink = m * sf2 / (sn2 + m * sf2)
    kappa = sf2 * shrink  # k* = sf2 * 1 under full correlation
    return Prediction(mean=float(shrink * y.mean()), variance=sf2 + sn2 - kappa)


def exact_gp_predict(model: KernelSpec, data: Dataset, x_star, dense_cap: int = DENSE_CAP) -> Prediction:
    """Full-dataset GP posterior; only for n small enough to solve densely."""
    if data.n > dense_cap:
        raise SizeError(f"exact prediction capped at n = {dense_cap}, got {data.n}")
    return gpnn_predict(model, data.inputs, data.targets, x_star)


def predict_batch(model: KernelSpec, neighbour_points, neighbour_targets, x_stars) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised gpnn_predict over a batch of queries with equal m.

    neighbour_points: (B, m, d); neighbour_targets: (B, m); x_stars: (B, d).
    Returns (means, variances) of shape (B,).  Falls back to escalating
    jitter on the whole batch if any stacked factorisation fails.
    """
    pts = np.asarray(neighbour_points, dtype=float)
    y = np.asarray(neighbour_targets, dtype=float)
    X = np.asarray(x_stars, dtype=float)
    B, m, _ = pts.shape
    p = model.params
    diff = pts[:, :, None, :] - pts[:, None, :, :]
    K = p.signal_var * np.asarray(correlation(model, np.sqrt(np.einsum("bijk,bijk->bij", diff, diff))))
    K[:, np.arange(m), np.arange(m)] = p.signal_var + p.noise_var
    ks = p.signal_var * np.asarray(correlation(model, np.linalg.norm(pts - X[:, None, :], axis=2)))
    total_var = p.signal_var + p.noise_var
    jitter = 0.0
    while True:
        try:
            L = np.linalg.cholesky(K if jitter == 0.0 else K + jitter * total_var * np.eye(m))
            break
        except np.linalg.LinAlgError:
            jitter = _JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > _JITTER_MAX:
                raise ConditioningError(
                    f"batched Cholesky failed after jitter {_JITTER_MAX * total_var:g}",
                    jitter=_JITTER_MAX * total_var,
                ) from None
    # One stacked solve against the Cholesky factor covers mean and variance:
    # mean = (L^-1 k*) . (L^-1 y), kappa = ||L^-1 k*||^2.
    rhs = np.concatenate([y[:, :, None], ks[:, :, None]], axis=2)
    z = np.linalg.solve(L, rhs)
    means = np.einsum("bm,bm->b", z[:, :, 0], z[:, :, 1])
    kappas = np.einsum("bm,bm->b", z[:, :, 1], z[:, :, 1])
    return means, total_var - kappas
