"""Isotropic kernel families, their induced metric and Euclidean power bounds.

Every kernel is written as ``k(x, x') = signal_var * c(||x - x'|| ; l) +
delta_{x,x'} * noise_var`` with a normalised correlation ``c`` satisfying
``c(0) = 1``.  The induced (squared) metric is

    rho2(x, x') = signal_var * (1 - c(||x - x'||)),

and each family carries a power bound ``rho2 / signal_var <= L * (delta/l)^p``
valid for ``delta/l`` up to a (possibly infinite) domain limit.  Those (L, p)
pairs are what drive all convergence-rate formulas downstream.

Supported families: squared-exponential ("se"), exponential ("exp"),
Matern ("matern", any nu > 0), rational quadratic ("rq", alpha > 0) and
periodic ("periodic", period r > 0).  The Matern power bound excludes nu = 1;
the kernel itself remains usable for prediction at nu = 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import kve as bessel_kve

from .errors import ParameterError, ShapeError, UnsupportedBoundError

__all__ = [
    "HyperParams",
    "KernelSpec",
    "MetricBound",
    "A1Report",
    "correlation",
    "covariance",
    "rho2",
    "rho2_from_delta",
    "one_minus_correlation",
    "metric_bound",
    "check_a1",
    "spec_to_json",
    "spec_from_json",
    "MONOTONE_FAMILIES",
]

FAMILIES = ("se", "exp", "matern", "rq", "periodic")

# Families whose correlation decreases monotonically with Euclidean distance,
# so Euclidean and kernel-metric neighbour rankings coincide.
MONOTONE_FAMILIES = frozenset({"se", "exp", "matern", "rq"})

# Default cap on delta/l when sampling a bound with an infinite domain limit.
DEFAULT_A1_CAP = 50.0


@dataclass(frozen=True)
class HyperParams:
    """Kernel hyperparameters: lengthscale, signal variance, noise variance.

    A single isotropic lengthscale is shared across input dimensions.  All
    three fields must be strictly positive.
    """

    lengthscale: float
    signal_var: float
    noise_var: float

    def __post_init__(self):
        for name in ("lengthscale", "signal_var", "noise_var"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be a strictly positive finite real, got {v!r}")


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family plus its hyperparameters.

    ``nu`` (Matern), ``alpha`` (rational quadratic) and ``period`` (periodic)
    only apply to their respective families and must be positive.
    """

    family: str
    params: HyperParams
    nu: float | None = None
    alpha: float | None = None
    period: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "matern":
            if self.nu is None or not (math.isfinite(self.nu) and self.nu > 0):
                raise ParameterError(f"matern requires nu > 0, got {self.nu!r}")
        elif self.family == "rq":
            if self.alpha is None or not (math.isfinite(self.alpha) and self.alpha > 0):
                raise ParameterError(f"rq requires alpha > 0, got {self.alpha!r}")
        elif self.family == "periodic":
            if self.period is None or not (math.isfinite(self.period) and self.period > 0):
                raise ParameterError(f"periodic requires period > 0, got {self.period!r}")

    def with_params(self, **changes) -> "KernelSpec":
        """Copy of this spec with some hyperparameters replaced."""
        p = self.params
        new = HyperParams(
            lengthscale=changes.pop("lengthscale", p.lengthscale),
            signal_var=changes.pop("signal_var", p.signal_var),
            noise_var=changes.pop("noise_var", p.noise_var),
        )
        if changes:
            raise ParameterError(f"unknown hyperparameters {sorted(changes)}")
        return KernelSpec(self.family, new, nu=self.nu, alpha=self.alpha, period=self.period)

    def label(self) -> str:
        """Compact identifier used in result tables."""
        extra = ""
        if self.family == "matern":
            extra = f"{self.nu:g}"
        elif self.family == "rq":
            extra = f"{self.alpha:g}"
        elif self.family == "periodic":
            extra = f"{self.period:g}"
        head = self.family + (extra and f"({extra})")
        p = self.params
        return f"{head}[l={p.lengthscale:g},sf2={p.signal_var:g},sn2={p.noise_var:g}]"

    @property
    def monotone(self) -> bool:
        return self.family in MONOTONE_FAMILIES


@dataclass(frozen=True)
class MetricBound:
    """Constants (L, p) of the Euclidean power bound on the induced metric.

    The claim is ``rho2(delta)/signal_var <= L * (delta/l)**p`` for all
    ``delta/l < domain_limit``; ``p`` must lie in (0, 2].
    """

    L: float
    p: float
    domain_limit: float

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ParameterError(f"L must be positive and finite, got {self.L!r}")
        if not (0 < self.p <= 2):
            raise ParameterError(f"p must lie in (0, 2], got {self.p!r}")
        if not (self.domain_limit > 0):
            raise ParameterError(f"domain_limit must be positive, got {self.domain_limit!r}")

    def evaluate(self, u):
        """Bound value L * u**p at scaled separation u = delta/l."""
        u = np.asarray(u, dtype=float)
        # Integer powers via plain multiplication so tangent kernels compare
        # against bit-identical leading terms near u = 0.
        if self.p == 2.0:
            return self.L * u * u
        if self.p == 1.0:
            return self.L * u
        return self.L * u**self.p


def _matern_correlation(u, nu):
    """Normalised Matern correlation as a function of u = delta/l."""
    u = np.asarray(u, dtype=float)
    if nu == 0.5:
        return np.exp(-u)
    if nu == 1.5:
        t = math.sqrt(3.0) * u
        return (1.0 + t) * np.exp(-t)
    if nu == 2.5:
        t = math.sqrt(5.0) * u
        return (1.0 + t + t * t / 3.0) * np.exp(-t)
    # General nu: evaluate 2^(1-nu)/Gamma(nu) * t^nu * K_nu(t) in log space so
    # neither t^nu nor K_nu over/underflows on its own.
    t = math.sqrt(2.0 * nu) * u
    out = np.ones_like(t)
    mask = t > 1e-8
    if np.any(mask):
        tm = t[mask]
        with np.errstate(over="ignore"):
            scaled = bessel_kve(nu, tm)  # e^t * K_nu(t)
        log_c = (1.0 - nu) * math.log(2.0) - math.lgamma(nu) + nu * np.log(tm) + np.log(scaled) - tm
        val = np.exp(log_c)
        if nu > 1.0:
            # kve itself overflows for very large nu at small t; there the
            # leading series term pins c to 1 - t^2/(4(nu-1)).
            bad = ~np.isfinite(val)
            val[bad] = np.exp(-tm[bad] ** 2 / (4.0 * (nu - 1.0)))
        # kve underflow at huge t gives -inf logs, i.e. the correct limit 0.
        out[mask] = np.clip(np.nan_to_num(val, nan=0.0), 0.0, 1.0)
    return out


def _matern_one_minus(u, nu):
    """1 - matern correlation, with cancellation-free half-integer paths."""
    u = np.asarray(u, dtype=float)
    if nu == 0.5:
        return -np.expm1(-u)
    # Small-u series are written as (metric-bound leading term) minus an
    # explicitly positive correction, evaluated in the same float order as
    # MetricBound.evaluate, so the tangent bound cannot be crossed by
    # rounding alone.
    if nu == 1.5:
        # 1 - (1+t)e^{-t} at t = sqrt(3)u: 1.5u^2 - sqrt(3)u^3 + 9u^4/8 - ...
        t = math.sqrt(3.0) * u
        direct = -np.expm1(-t) - t * np.exp(-t)
        L = nu / (2.0 * (nu - 1.0))
        series = L * u * u - u * u * u * (math.sqrt(3.0) - u * (1.125 - u * 9.0 * math.sqrt(3.0) / 30.0))
        return np.where(u < 1e-3, series, direct)
    if nu == 2.5:
        # 1 - (1+t+t^2/3)e^{-t} at t = sqrt(5)u: (5/6)u^2 - (25/24)u^4 + ...
        t = math.sqrt(5.0) * u
        direct = -np.expm1(-t) - (t + t * t / 3.0) * np.exp(-t)
        L = nu / (2.0 * (nu - 1.0))
        series = L * u * u - u * u * u * u * (25.0 / 24.0 - u * 25.0 * math.sqrt(5.0) / 45.0)
        return np.where(u < 1e-3, series, direct)
    # kv path: accurate to ~1e-13 absolute, which is plenty except within an
    # ulp-sliver of the bound tangency at u -> 0 for non-half-integer nu > 1.
    return 1.0 - _matern_correlation(u, nu)


def correlation(spec: KernelSpec, delta):
    """Normalised correlation c(delta) at Euclidean separation delta >= 0.

    Accepts scalars or arrays; c(0) = 1 exactly for every family.
    """
    delta = np.asarray(delta, dtype=float)
    if np.any(delta < 0):
        raise ParameterError("delta must be nonnegative")
    l = spec.params.lengthscale
    u = delta / l
    if spec.family == "se":
        c = np.exp(-0.5 * u * u)
    elif spec.family == "exp":
        c = np.exp(-u)
    elif spec.family == "matern":
        c = _matern_correlation(u, spec.nu)
    elif spec.family == "rq":
        c = (1.0 + u * u / (2.0 * spec.alpha)) ** (-spec.alpha)
    else:  # periodic: the lengthscale tempers the sin^2 term, not delta itself
        s = np.sin(np.pi * delta / spec.period)
        c = np.exp(-2.0 * s * s / (l * l))
    if c.ndim == 0:
        return float(c)
    return c


def covariance(spec: KernelSpec, x, x2, same_point: bool = False) -> float:
    """Kernel value signal_var * c(||x - x2||) with noise added iff same_point."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.shape != x2.shape:
        raise ShapeError(f"point dimensions differ: {x.shape} vs {x2.shape}")
    delta = float(np.linalg.norm(x - x2))
    p = spec.params
    value = p.signal_var * correlation(spec, delta)
    if same_point:
        value += p.noise_var
    return value


def _one_minus_from_u(spec: KernelSpec, u):
    """1 - c at scaled separation u = delta/l, cancellation-free near 0.

    Several families have power bounds tangent to the metric at the origin,
    so the naive 1 - c would decide the bound inequality by rounding noise
    there; each family gets an expm1-style (or explicit series) formulation.
    """
    u = np.asarray(u, dtype=float)
    if spec.family == "se":
        return -np.expm1(-(0.5 * u * u))
    if spec.family == "exp":
        return -np.expm1(-u)
    if spec.family == "matern":
        return _matern_one_minus(u, spec.nu)
    if spec.family == "rq":
        a = spec.alpha
        direct = -np.expm1(-a * np.log1p(u * u / (2.0 * a)))
        series = 0.5 * u * u - u * u * u * u * ((a + 1.0) / (8.0 * a))
        return np.where(u < 1e-4, series, direct)
    l = spec.params.lengthscale
    x = np.pi * (u * l) / spec.period
    s = np.sin(x)
    direct = -np.expm1(-2.0 * s * s / (l * l))
    base = (2.0 * math.pi**2 / spec.period**2) * u * u
    series = base * (1.0 - x * x / 3.0) * (1.0 - 0.5 * base)
    return np.where(x < 1e-4, series, direct)


def one_minus_correlation(spec: KernelSpec, delta):
    """1 - c(delta); accepts scalars or arrays, accurate down to delta = 0."""
    delta = np.asarray(delta, dtype=float)
    if np.any(delta < 0):
        raise ParameterError("delta must be nonnegative")
    return _one_minus_from_u(spec, delta / spec.params.lengthscale)


def rho2_from_delta(spec: KernelSpec, delta):
    """Squared induced metric signal_var * (1 - c(delta)); vectorised."""
    return spec.params.signal_var * np.asarray(one_minus_correlation(spec, delta))


def rho2(spec: KernelSpec, x, x2) -> float:
    """Squared induced metric between two points."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.shape != x2.shape:
        raise ShapeError(f"point dimensions differ: {x.shape} vs {x2.shape}")
    return float(rho2_from_delta(spec, float(np.linalg.norm(x - x2))))


def metric_bound(spec: KernelSpec) -> MetricBound:
    """The (L, p, domain_limit) power bound for this kernel family.

    Matern nu = 1 has no such bound and raises; all other supported settings
    return constants computed at call time from the family parameters.
    """
    if spec.family == "se":
        return MetricBound(0.5, 2.0, math.inf)
    if spec.family == "exp":
        return MetricBound(1.0, 1.0, math.inf)
    if spec.family == "rq":
        return MetricBound(0.5, 2.0, math.inf)
    if spec.family == "periodic":
        r = spec.period
        return MetricBound(2.0 * math.pi**2 / r**2, 2.0, r * math.sqrt(6.0) / math.pi)
    nu = spec.nu
    if nu == 1.0:
        raise UnsupportedBoundError("no Euclidean power bound for matern nu = 1 (the kernel itself remains usable)")
    if nu > 1.0:
        return MetricBound(nu / (2.0 * (nu - 1.0)), 2.0, math.inf)
    # nu < 1: constants from the truncated small-argument series of K_nu.
    abs_gamma_neg = abs(gamma_fn(-nu))
    L = abs_gamma_neg * nu**nu / gamma_fn(nu)
    limit = (2.0**nu * gamma_fn(nu) / (nu**nu * (1.0 - nu) * abs_gamma_neg)) ** (1.0 / (2.0 * nu))
    return MetricBound(L, 2.0 * nu, limit)


@dataclass
class A1Report:
    """Result of sampling a metric power bound over its admissible range."""

    spec_label: str
    bound: MetricBound
    sample_count: int
    cap_used: float
    violations: np.ndarray = field(repr=False)  # offending delta/l values
    max_ratio: float = 0.0  # max over samples of rho2 / (sf2 * L * u^p)

    @property
    def ok(self) -> bool:
        return self.violations.size == 0


def check_a1(
    spec: KernelSpec,
    sample_count: int,
    rng_seed: int,
    cap: float = DEFAULT_A1_CAP,
    bound: MetricBound | None = None,
) -> A1Report:
    """Sample delta/l uniformly below the bound's domain and report violations.

    An empty report means ``rho2(delta)/signal_var <= L (delta/l)^p`` held on
    every sample.  Passing an explicit ``bound`` overrides the family bound
    (used to confirm the checker catches falsified constants).
    """
    if sample_count < 1:
        raise ParameterError(f"sample_count must be >= 1, got {sample_count}")
    b = bound if bound is not None else metric_bound(spec)
    hi = min(b.domain_limit, cap)
    rng = np.random.default_rng(rng_seed)
    u = rng.uniform(0.0, hi, size=sample_count)
    # Both sides evaluated from the same scaled separation u: converting
    # through delta = u*l and back would shift near-tangent comparisons by
    # an ulp and report spurious violations.
    lhs = np.asarray(_one_minus_from_u(spec, u))
    rhs = b.evaluate(u)
    bad = lhs > rhs
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(rhs > 0, lhs / rhs, 0.0)
    return A1Report(
        spec_label=spec.label(),
        bound=b,
        sample_count=sample_count,
        cap_used=hi,
        violations=u[bad],
        max_ratio=float(np.max(ratios)) if sample_count else 0.0,
    )


def spec_to_json(spec: KernelSpec) -> str:
    """Serialise a kernel spec to its JSON object form."""
    obj = {
        "family": spec.family,
        "lengthscale": spec.params.lengthscale,
        "signal_var": spec.params.signal_var,
        "noise_var": spec.params.noise_var,
    }
    if spec.nu is not None:
        obj["nu"] = spec.nu
    if spec.alpha is not None:
        obj["alpha"] = spec.alpha
    if spec.period is not None:
        obj["period"] = spec.period
    return json.dumps(obj)


def spec_from_json(data) -> KernelSpec:
    """Build a kernel spec from a JSON string or an already-parsed dict."""
    if isinstance(data, (str, bytes)):
        data = json.loads(data)
    if not isinstance(data, dict):
        raise ParameterError(f"kernel spec must be a JSON object, got {type(data).__name__}")
    try:
        params = HyperParams(
            lengthscale=float(data["lengthscale"]),
            signal_var=float(data["signal_var"]),
            noise_var=float(data["noise_var"]),
        )
        family = data["family"]
    except KeyError as exc:
        raise ParameterError(f"kernel spec missing field {exc}") from exc
    return KernelSpec(
        family=family,
        params=params,
        nu=float(data["nu"]) if "nu" in data else None,
        alpha=float(data["alpha"]) if "alpha" in data else None,
        period=float(data["period"]) if "period" in data else None,
    )
