"""Neighbour-set epsilon statistics and the matrix identities built on them.

For a neighbour set of a query x*, eps_i is the squared kernel metric from
neighbour i to x* and eps_ij between neighbours.  The m x m Gram then reads
K = sf2 - eps_ij + sn2*I, and everything here (the infinite-lengthscale
limit matrices, the series inverse, the eigenvalue sandwich, the norm
bounds) is a function of those epsilons.  Each closed-form quantity has an
exact counterpart computed by direct factorisation so the approximations
can be validated instance by instance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ExpansionDivergenceError, ShapeError, SizeError
from .kernels import HyperParams, KernelSpec, rho2_from_delta

__all__ = [
    "EpsilonStats",
    "LimitMatrices",
    "epsilon_stats",
    "scale_stats",
    "gram_from_stats",
    "limit_matrices",
    "check_a4",
    "a4_threshold",
    "neumann_inverse",
    "gershgorin_sum_bounds",
    "e_norm_bound",
    "one_k_inv_one_approx",
    "exact_one_k_inv_one",
    "exact_e_norm",
    "eq_series_norm",
    "one_k2_one_gap",
]


@dataclass(frozen=True)
class EpsilonStats:
    """Squared-metric statistics of one neighbour configuration.

    ``avg_eps`` is the mean of eps_i; ``avg_eps_pair`` the mean of eps_ij
    over ordered pairs i != j.  Pairwise fields are zero with
    ``pairwise_defined`` False when m < 2.
    """

    eps_i: np.ndarray
    eps_ij: np.ndarray
    avg_eps: float
    avg_eps_pair: float
    eps_min_i: float
    eps_max_i: float
    eps_min_pair: float
    pairwise_defined: bool

    @property
    def m(self) -> int:
        return self.eps_i.shape[0]


@dataclass(frozen=True)
class LimitMatrices:
    """The infinite-lengthscale Gram limit and its explicit inverse.

    K_inf = sn2*I + sf2*11^T, Q = K_inf^{-1} = (I - gamma*11^T)/sn2 with
    gamma = sf2/(sn2 + m*sf2), and E = K - K_inf (zero diagonal, -eps_ij).
    """

    K_inf: np.ndarray
    Q: np.ndarray
    gamma: float
    E: np.ndarray


def epsilon_stats(kernel: KernelSpec, neighbours, x_star) -> EpsilonStats:
    pts = np.asarray(neighbours, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ShapeError(f"neighbours must be a nonempty m x d matrix, got shape {pts.shape}")
    x = np.asarray(x_star, dtype=float)
    if x.shape != (pts.shape[1],):
        raise ShapeError(f"query must have dimension {pts.shape[1]}, got shape {x.shape}")
    m = pts.shape[0]
    eps_i = np.asarray(rho2_from_delta(kernel, np.linalg.norm(pts - x, axis=1)))
    eps_i = np.atleast_1d(eps_i)
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(d, 0.0)
    eps_ij = np.asarray(rho2_from_delta(kernel, d))
    np.fill_diagonal(eps_ij, 0.0)
    if m >= 2:
        off = eps_ij[~np.eye(m, dtype=bool)]
        pair_mean, pair_min = float(off.mean()), float(off.min())
        pairwise = True
    else:
        pair_mean = pair_min = 0.0
        pairwise = False
    return EpsilonStats(
        eps_i=eps_i,
        eps_ij=eps_ij,
        avg_eps=float(eps_i.mean()),
        avg_eps_pair=pair_mean,
        eps_min_i=float(eps_i.min()),
        eps_max_i=float(eps_i.max()),
        eps_min_pair=pair_min,
        pairwise_defined=pairwise,
    )


def scale_stats(stats: EpsilonStats, factor: float) -> EpsilonStats:
    """Stats with every squared metric scaled by ``factor`` in (0, 1].

    Scaling rho^2 by t rescales the metric by sqrt(t), so triangle-derived
    properties stay valid on the scaled configuration.
    """
    if not 0.0 < factor <= 1.0:
        raise SizeError(f"factor must lie in (0, 1], got {factor}")
    return EpsilonStats(
        eps_i=stats.eps_i * factor,
        eps_ij=stats.eps_ij * factor,
        avg_eps=stats.avg_eps * factor,
        avg_eps_pair=stats.avg_eps_pair * factor,
        eps_min_i=stats.eps_min_i * factor,
        eps_max_i=stats.eps_max_i * factor,
        eps_min_pair=stats.eps_min_pair * factor,
        pairwise_defined=stats.pairwise_defined,
    )


def gram_from_stats(stats: EpsilonStats, params: HyperParams) -> np.ndarray:
    """K = sf2 - eps_ij off-diagonal, sf2 + sn2 on the diagonal."""
    m = stats.m
    K = params.signal_var - stats.eps_ij
    K[np.diag_indices(m)] = params.signal_var + params.noise_var
    return K


def limit_matrices(stats: EpsilonStats, params: HyperParams) -> LimitMatrices:
    m = stats.m
    sf2, sn2 = params.signal_var, params.noise_var
    ones = np.ones((m, m))
    gamma = sf2 / (sn2 + m * sf2)
    return LimitMatrices(
        K_inf=sn2 * np.eye(m) + sf2 * ones,
        Q=(np.eye(m) - gamma * ones) / sn2,
        gamma=gamma,
        E=-stats.eps_ij.copy(),
    )


def a4_threshold(params: HyperParams, m: int) -> float:
    return (m * params.signal_var + params.noise_var) / (m - 1)


def check_a4(stats: EpsilonStats, params: HyperParams, m: int) -> bool:
    """Strict inequality eps_min_pair < (m*sf2 + sn2)/(m-1).

    Vacuously true for m < 2 (there are no pairs); callers can detect that
    case through stats.pairwise_defined.
    """
    if m != stats.m:
        raise SizeError(f"m = {m} does not match stats.m = {stats.m}")
    if m < 2:
        return True
    return stats.eps_min_pair < a4_threshold(params, m)


def eq_series_norm(limits: LimitMatrices) -> float:
    """max_i |sum_j (EQ)_ij| - the row-total norm controlling the series.

    This is the quantity the expansion argument actually bounds by
    m*sf2/(sn2 + m*sf2): E's rows have one sign, and Q's rows sum to
    1/(sn2 + m*sf2).  Induced matrix norms of EQ (max absolute row or
    column sums) exceed 1 on perfectly realisable far-apart neighbour
    configurations, so they are not what the bound refers to.
    """
    return float(np.max(np.abs((limits.E @ limits.Q).sum(axis=1))))


def neumann_inverse(K: np.ndarray, limits: LimitMatrices) -> np.ndarray:
    """Third-order series inverse 3Q - 3QKQ + QKQKQ around K_inf.

    The residual against the true inverse is cubic in E.  Raises when the
    row-total norm of EQ reaches 1 (possible only for corrupted inputs:
    genuine epsilon matrices keep it strictly below 1).
    """
    if eq_series_norm(limits) >= 1.0:
        raise ExpansionDivergenceError("series norm of EQ is >= 1; expansion diverges")
    Q = limits.Q
    QK = Q @ K
    return 3.0 * Q - 3.0 * QK @ Q + QK @ QK @ Q


def gershgorin_sum_bounds(stats: EpsilonStats, params: HyperParams, m: int) -> tuple[float, float]:
    """Sandwich for m^{-1} 1^T K^{-1} 1 from the eigenvalue range of K.

    Lower endpoint uses the largest disc radius (m-1)(sf2 - eps_min_pair);
    upper endpoint is 1/sn2, the inverse of the smallest possible
    eigenvalue.
    """
    if m != stats.m:
        raise SizeError(f"m = {m} does not match stats.m = {stats.m}")
    sf2, sn2 = params.signal_var, params.noise_var
    radius = (m - 1) * (sf2 - stats.eps_min_pair) if m >= 2 else 0.0
    return 1.0 / (sf2 + sn2 + radius), 1.0 / sn2


def e_norm_bound(stats: EpsilonStats, m: int) -> float:
    """Triangle-inequality bound m(eps_max + avg_eps + 2 sqrt(eps_max avg_eps)).

    Valid because each eps_ij is a genuine squared metric between points that
    are all within metric sqrt(eps_i) of the query.
    """
    if m != stats.m:
        raise SizeError(f"m = {m} does not match stats.m = {stats.m}")
    emax, ebar = stats.eps_max_i, stats.avg_eps
    return m * (emax + ebar + 2.0 * np.sqrt(emax) * np.sqrt(ebar))


def exact_e_norm(stats: EpsilonStats) -> float:
    """Exact 1-norm of E: max row sum of eps_ij (E is symmetric, one sign)."""
    return float(np.max(stats.eps_ij.sum(axis=1)))


def one_k_inv_one_approx(stats: EpsilonStats, params: HyperParams, m: int) -> float:
    """Second-order value of 1^T K^{-1} 1: (1 + (avg_pair - sn2/m)/sf2)/sf2."""
    if m != stats.m:
        raise SizeError(f"m = {m} does not match stats.m = {stats.m}")
    sf2, sn2 = params.signal_var, params.noise_var
    return (1.0 + (stats.avg_eps_pair - sn2 / m) / sf2) / sf2


def exact_one_k_inv_one(K: np.ndarray) -> float:
    """1^T K^{-1} 1 by Cholesky solve (the exact counterpart of the approx)."""
    ones = np.ones(K.shape[0])
    return float(ones @ cho_solve(cho_factor(K, lower=True), ones))


def one_k2_one_gap(K: np.ndarray) -> float:
    """|1^T K^2 1 - m^{-1} (1^T K 1)^2|, second order in the epsilons."""
    ones = np.ones(K.shape[0])
    v = K @ ones
    return float(abs(v @ v - (ones @ v) ** 2 / K.shape[0]))
