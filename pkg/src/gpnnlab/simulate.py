"""Synthetic data generation: normalised Gaussian inputs, latent field draws
from the generative kernel, and additive zero-mean noise.

Field sampling has two modes.  ``exact`` draws the joint Gaussian through a
Cholesky factor of the full noise-free Gram and is capped at a dense size.
``sequential`` visits the points in a seeded random order and draws each
value from its Gaussian conditional given the nearest already-sampled
points; with the conditioning size at n-1 the two modes coincide in
distribution, and with a small conditioning size it scales to the large-n
sweeps.  Train and test points are stacked into one draw so they share a
single coherent field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConditioningError, ConfigError, ShapeError, SizeError
from .kernels import KernelSpec, correlation

__all__ = [
    "FieldSampleConfig",
    "sample_inputs",
    "sample_field",
    "add_noise",
    "NOISE_FAMILIES",
    "FIELD_DENSE_CAP",
]

FIELD_DENSE_CAP = 4096
NOISE_FAMILIES = ("gaussian", "uniform", "laplace")

_JITTER_START = 1e-10
_JITTER_MAX = 1e-6


@dataclass(frozen=True)
class FieldSampleConfig:
    """One synthetic-data cell: kernel, sizes, sampling mode, noise, seed."""

    kernel: KernelSpec
    n_train: int
    n_test: int
    d: int
    sampling_mode: str = "exact"  # "exact" | "sequential"
    conditioning_size: int = 30
    noise_family: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 0 or self.d < 1:
            raise ConfigError(f"sizes must satisfy n_train >= 1, n_test >= 0, d >= 1, got {self}")
        if self.sampling_mode not in ("exact", "sequential"):
            raise ConfigError(f"unknown sampling mode {self.sampling_mode!r}")
        if self.sampling_mode == "exact" and self.n_train + self.n_test > FIELD_DENSE_CAP:
            raise SizeError(
                f"exact mode capped at {FIELD_DENSE_CAP} points, got {self.n_train + self.n_test}"
            )
        if self.conditioning_size < 1:
            raise ConfigError(f"conditioning_size must be >= 1, got {self.conditioning_size}")
        if self.noise_family not in NOISE_FAMILIES:
            raise ConfigError(f"unknown noise family {self.noise_family!r}")

    @property
    def n_total(self) -> int:
        return self.n_train + self.n_test


def sample_inputs(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. rows from N(0, I_d / d), so E||x||^2 = 1 in every dimension."""
    return rng.normal(0.0, 1.0 / math.sqrt(d), size=(n, d))


def _chol_with_jitter(K: np.ndarray, scale: float) -> np.ndarray:
    jitter = 0.0
    eye = None
    while True:
        try:
            return np.linalg.cholesky(K if jitter == 0.0 else K + (jitter * scale) * eye)
        except np.linalg.LinAlgError:
            if eye is None:
                eye = np.eye(K.shape[0])
            jitter = _JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > _JITTER_MAX:
                raise ConditioningError(
                    f"field Gram not factorisable at jitter {_JITTER_MAX * scale:g}",
                    jitter=_JITTER_MAX * scale,
                ) from None


def _exact_field(spec: KernelSpec, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    sf2 = spec.params.signal_var
    diff = X[:, None, :] - X[None, :, :]
    K = sf2 * np.asarray(correlation(spec, np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))))
    L = _chol_with_jitter(K, sf2)
    return L @ rng.standard_normal(X.shape[0])


def _previous_neighbours(Xp: np.ndarray, c: int, block: int = 1024) -> np.ndarray:
    """For each position i, the c nearest points among positions < i.

    A KD-tree over the prefix handles the bulk; points accumulated since the
    last tree rebuild are scanned directly, so conditioning sets are exactly
    the nearest previously visited points.
    """
    N = Xp.shape[0]
    out = np.full((N, c), -1, dtype=np.int64)
    for bs in range(0, N, block):
        be = min(bs + block, N)
        if bs > 0:
            k_tree = min(c, bs)
            tree = cKDTree(Xp[:bs])
            d_tree, i_tree = tree.query(Xp[bs:be], k=k_tree)
            if k_tree == 1:
                d_tree = d_tree[:, None]
                i_tree = i_tree[:, None]
        for i in range(bs, be):
            k = min(i, c)
            if k == 0:
                continue
            if bs == 0:
                tail_idx = np.arange(i)
                diff = Xp[:i] - Xp[i]
                tail_d = np.einsum("ij,ij->i", diff, diff)
                cand_idx, cand_d = tail_idx, tail_d
            else:
                diff = Xp[bs:i] - Xp[i]
                tail_d = np.einsum("ij,ij->i", diff, diff)
                row = i - bs
                cand_idx = np.concatenate([i_tree[row], np.arange(bs, i)])
                cand_d = np.concatenate([d_tree[row] ** 2, tail_d])
            if cand_idx.shape[0] > k:
                sel = np.argpartition(cand_d, k - 1)[:k]
                out[i, :k] = cand_idx[sel]
            else:
                out[i, :k] = cand_idx
    return out


def _conditional_weights(spec: KernelSpec, Xp: np.ndarray, nbr: np.ndarray, c: int):
    """Per-point regression weights and conditional standard deviations.

    The weights depend only on geometry, so they are precomputed in stacked
    Cholesky batches; the actual draw is then a cheap linear recurrence.
    """
    N, d = Xp.shape
    sf2 = spec.params.signal_var
    weights = np.zeros((N, c))
    sd = np.full(N, math.sqrt(sf2))
    rows_full = np.flatnonzero((nbr >= 0).sum(axis=1) == c)
    rows_full = rows_full[rows_full >= c]  # positions with a complete set
    chunk = max(16, int(4_000_000 / (c * c * max(d, 1))))
    for s in range(0, rows_full.size, chunk):
        rows = rows_full[s : s + chunk]
        G = Xp[nbr[rows]]  # (B, c, d)
        diff = G[:, :, None, :] - G[:, None, :, :]
        K = sf2 * np.asarray(correlation(spec, np.sqrt(np.einsum("bijk,bijk->bij", diff, diff))))
        kv = sf2 * np.asarray(correlation(spec, np.linalg.norm(G - Xp[rows][:, None, :], axis=2)))
        w, v = _solve_chunk(K, kv, sf2)
        weights[rows, :] = w
        sd[rows] = np.sqrt(v)
    # leading positions with fewer than c predecessors, done one by one
    for i in range(1, min(c, N)):
        k = min(i, c)
        idx = nbr[i, :k]
        G = Xp[idx]
        diff = G[:, None, :] - G[None, :, :]
        K = sf2 * np.asarray(correlation(spec, np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))))
        kv = sf2 * np.asarray(correlation(spec, np.linalg.norm(G - Xp[i], axis=1)))
        w, v = _solve_chunk(K[None], np.atleast_1d(kv)[None], sf2)
        weights[i, :k] = w[0]
        sd[i] = math.sqrt(v[0])
    return weights, sd


def _solve_chunk(K: np.ndarray, kv: np.ndarray, sf2: float):
    jitter = 0.0
    m = K.shape[-1]
    while True:
        try:
            Kj = K if jitter == 0.0 else K + (jitter * sf2) * np.eye(m)
            np.linalg.cholesky(Kj)
            w = np.linalg.solve(Kj, kv[..., None])[..., 0]
            break
        except np.linalg.LinAlgError:
            jitter = _JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > _JITTER_MAX:
                raise ConditioningError(
                    f"conditional Gram not factorisable at jitter {_JITTER_MAX * sf2:g}",
                    jitter=_JITTER_MAX * sf2,
                ) from None
    var = sf2 - np.einsum("bm,bm->b", kv, w)
    return w, np.maximum(var, 1e-12 * sf2)


def _sequential_field(spec: KernelSpec, X: np.ndarray, cond_size: int, rng: np.random.Generator) -> np.ndarray:
    N = X.shape[0]
    order = rng.permutation(N)
    Xp = X[order]
    c = min(cond_size, N - 1) if N > 1 else 0
    z = rng.standard_normal(N)
    if c == 0:
        f = z * math.sqrt(spec.params.signal_var)
        out = np.empty(N)
        out[order] = f
        return out
    nbr = _previous_neighbours(Xp, c)
    weights, sd = _conditional_weights(spec, Xp, nbr, c)
    fp = np.empty(N)
    fp[0] = sd[0] * z[0]
    for i in range(1, N):
        k = min(i, c)
        fp[i] = weights[i, :k] @ fp[nbr[i, :k]] + sd[i] * z[i]
    out = np.empty(N)
    out[order] = fp
    return out


def sample_field(cfg: FieldSampleConfig, X: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw the latent field over the stacked train+test inputs."""
    X = np.asarray(X, dtype=float)
    if X.shape != (cfg.n_total, cfg.d):
        raise ShapeError(f"inputs must be {cfg.n_total} x {cfg.d}, got shape {X.shape}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if cfg.sampling_mode == "exact":
        return _exact_field(cfg.kernel, X, rng)
    return _sequential_field(cfg.kernel, X, cfg.conditioning_size, rng)


def add_noise(f: np.ndarray, params, family: str, rng: np.random.Generator) -> np.ndarray:
    """Observations y = f + xi with i.i.d. zero-mean variance-sn2 noise."""
    f = np.asarray(f, dtype=float)
    sn2 = params.noise_var
    if family == "gaussian":
        xi = rng.normal(0.0, math.sqrt(sn2), size=f.shape)
    elif family == "uniform":
        half_width = math.sqrt(3.0 * sn2)
        xi = rng.uniform(-half_width, half_width, size=f.shape)
    elif family == "laplace":
        xi = rng.laplace(0.0, math.sqrt(sn2 / 2.0), size=f.shape)
    else:
        raise ConfigError(f"unknown noise family {family!r}")
    return f + xi
