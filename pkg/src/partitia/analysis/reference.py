"""Reference samplers for the limit laws of condensate fluctuations.

Each reference exposes ``sample(size, rng)`` and a closed-form log transform
used to validate the sampler before it is compared with simulations.

Stable laws are drawn with ``scipy.stats.levy_stable`` in the S1
parameterization with beta = 1.  For 1 < alpha < 2 such a variable X with
scale s and location 0 has E X = 0 and

    log E exp(-t X) = -s**alpha t**alpha / cos(pi alpha / 2),   t >= 0,

so a target log E exp(-t X) = C t**alpha (C > 0) is met by
s**alpha = -C cos(pi alpha / 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from ..errors import DivergenceError, DomainError
from ..lattice import _points_within, sphere_area
from ..partitions import h_from_theta
from ..weights import WeightSequence, levy_mass


def stable_scale(alpha: float, C: float) -> float:
    """S1 scale of the beta = 1 stable law with log E exp(-tX) = C t**alpha."""
    if not 1 < alpha < 2:
        raise DomainError("stable reference needs 1 < alpha < 2")
    if C <= 0:
        raise DomainError("Laplace exponent constant must be positive")
    return (-C * math.cos(math.pi * alpha / 2)) ** (1 / alpha)


@dataclass(frozen=True)
class StableReference:
    """Centered totally skewed stable Y with log E exp(-s Y) = C s**alpha.

    With ``negate`` the sample is -Y, so that log E exp(s Z) = C s**alpha.
    """

    alpha: float
    C: float
    negate: bool = False

    @classmethod
    def from_levy_density(cls, alpha: float, levy_scale: float = 1.0) -> "StableReference":
        """Limit of centered sums with jump density levy_scale * u**(-1-alpha):
        the Laplace exponent is levy_scale * Gamma(-alpha)."""
        return cls(alpha, levy_scale * math.gamma(-alpha))

    @property
    def scale(self) -> float:
        return stable_scale(self.alpha, self.C)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        x = stats.levy_stable.rvs(self.alpha, 1.0, loc=0.0, scale=self.scale, size=size, random_state=rng)
        return -x if self.negate else x

    def log_laplace(self, s) -> np.ndarray:
        """log E exp(-s Y) (or log E exp(s Z) when negated), s >= 0."""
        s = np.asarray(s, dtype=float)
        return self.C * s ** self.alpha


@dataclass(frozen=True)
class GammaSeriesReference:
    """Y = sum_{x != 0} (theta - G_x) / (c |x|**delta), G_x iid Gamma(theta, 1).

    Sites with |x| <= radius are drawn exactly; the remainder is replaced by a
    centered normal with the same variance.
    """

    theta: float
    delta: float
    d: int = 1
    c: float = 1.0
    radius: int = 256

    def __post_init__(self):
        if not self.theta > 0:
            raise DomainError("theta must be positive")
        if not 2 * self.delta > self.d:
            raise DomainError("the gamma series needs 2 delta > d for a finite variance")
        if self.radius < 1:
            raise DomainError("radius must be at least 1")

    def _coefficients(self) -> np.ndarray:
        pts = _points_within(self.d, self.radius)[1:]
        r = np.sqrt((pts.astype(float) ** 2).sum(axis=1))
        return 1.0 / (self.c * r ** self.delta)

    def _tail_power_sum(self, p: float) -> float:
        """sum over |x| > radius of |x|**(-p)."""
        if self.d == 1:
            return 2.0 * float(special.zeta(p, self.radius + 1))
        # lattice shells out to 4R, continuum beyond
        R2 = 4 * self.radius
        pts = _points_within(self.d, R2)
        r = np.sqrt((pts.astype(float) ** 2).sum(axis=1))
        r = r[r > self.radius]
        tail = sphere_area(self.d) * R2 ** (self.d - p) / (p - self.d)
        return float(np.sum(r ** (-p))) + tail

    @property
    def tail_variance(self) -> float:
        return self.theta * self._tail_power_sum(2 * self.delta) / self.c ** 2

    def sample(self, size: int, rng: np.random.Generator, block: int = 2_000_000) -> np.ndarray:
        coef = self._coefficients()
        m = len(coef)
        out = np.empty(size)
        step = max(1, block // m)
        for start in range(0, size, step):
            k = min(step, size - start)
            g = rng.standard_gamma(self.theta, size=(k, m))
            out[start:start + k] = (self.theta - g) @ coef
        out += rng.normal(0.0, math.sqrt(self.tail_variance), size=size)
        return out

    def log_laplace(self, s, radius: int | None = None) -> np.ndarray:
        """log E exp(s Y) = theta sum_x [s a_x - log(1 + s a_x)], a_x = 1/(c|x|**delta),
        for s > -c; the sum is carried to ``radius`` (default 16x the sampling
        radius) with a third-order tail correction."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any(s <= -self.c):
            raise DomainError("Laplace transform is finite only for s > -c")
        big = GammaSeriesReference(self.theta, self.delta, self.d, self.c, radius or 16 * self.radius)
        a = big._coefficients()
        u = s[:, None] * a[None, :]
        body = self.theta * np.sum(u - np.log1p(u), axis=1)
        t2 = big._tail_power_sum(2 * self.delta) / self.c ** 2
        t3 = big._tail_power_sum(3 * self.delta) / self.c ** 3
        return body + self.theta * (s ** 2 * t2 / 2 - s ** 3 * t3 / 3)


@dataclass(frozen=True)
class PoissonClusterReference:
    """X = sum_j j N_j with independent N_j ~ Poisson(theta_j / j).

    Drawn as a Poisson(Lambda) number of jumps, Lambda = sum theta_j / j, with
    iid sizes P(j) = theta_j / (j Lambda).  Sizes up to ``table_size`` come
    from a table; beyond it algebraic weights use exact Hurwitz-zeta inversion
    and other families are truncated (mass reported in ``tail_mass``).
    """

    weights: WeightSequence
    table_size: int = 4096

    def __post_init__(self):
        if self.weights.kind in ("constant", "bose"):
            raise DivergenceError("sum theta_j / j diverges: the cluster law does not exist")
        lm = levy_mass(self.weights)
        if lm.divergent or not math.isfinite(lm.value):
            raise DivergenceError("sum theta_j / j diverges")

    @property
    def levy_mass(self) -> float:
        return levy_mass(self.weights).value

    def _table(self):
        J = min(self.table_size, int(self.weights.max_index)) if self.weights.kind == "custom" else self.table_size
        j = np.arange(1, J + 1)
        p = self.weights.array(J)[1:] / j / self.levy_mass
        return p, max(0.0, 1.0 - math.fsum(p))

    @property
    def tail_mass(self) -> float:
        """Probability that a single jump exceeds the table (exact tail for algebraic weights)."""
        return self._table()[1]

    @property
    def truncation_error(self) -> float:
        """Total-variation bound of the truncation (zero for algebraic weights)."""
        if self.weights.kind == "algebraic" or self.weights.kind == "custom":
            return 0.0
        return self.levy_mass * self.tail_mass

    def pmf(self, kmax: int) -> np.ndarray:
        """P(X = k) = h_k exp(-Lambda) for k = 0..kmax."""
        h = h_from_theta(self.weights, kmax)
        return np.exp(h.log_h - self.levy_mass)

    def _tail_sizes(self, m: int, rng: np.random.Generator) -> np.ndarray:
        J = self.table_size
        if m == 0:
            return np.zeros(0, dtype=np.int64)
        if self.weights.kind != "algebraic":
            return np.full(m, J, dtype=np.int64)
        a = 1.0 - self.weights.exponent  # P(j) proportional to j**(-a)
        u = rng.random(m)
        total = special.zeta(a, J + 1)
        # smallest k > J with zeta(a, k+1) <= u * total
        lo = np.full(m, J + 1, dtype=np.float64)
        hi = np.full(m, float(J + 1))
        target = u * total
        while True:
            bad = special.zeta(a, hi + 1) > target
            if not bad.any():
                break
            hi[bad] *= 2
        while np.any(hi - lo > 0):
            mid = np.floor((lo + hi) / 2)
            ok = special.zeta(a, mid + 1) <= target
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid + 1)
        return hi.astype(np.int64)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        p, tail = self._table()
        counts = rng.poisson(self.levy_mass, size=size)
        total = int(counts.sum())
        cdf = np.cumsum(p)
        u = rng.random(total)
        sizes = np.searchsorted(cdf, u, side="right") + 1
        big = sizes > len(p)
        sizes[big] = self._tail_sizes(int(big.sum()), rng)
        owner = np.repeat(np.arange(size), counts)
        return np.bincount(owner, weights=sizes, minlength=size).astype(np.int64)


def _b_integrand(r: float, g: float, delta: float, d: int) -> float:
    """r**(d-1) [(1+u)**g - u**g - g u**(g-1)], u = r**delta, g = |gamma|."""
    u = r ** delta
    if u > 1e3:
        # series in 1/u: sum_{k>=2} binom(g, k) u**(g-k)
        tot, term, k = 0.0, g, 1
        while True:
            term *= (g - k) / (k + 1)
            k += 1
            val = term * u ** (g - k)
            tot += val
            if abs(val) < 1e-17 * abs(tot) or k > 60:
                break
        body = tot
    else:
        body = (1 + u) ** g - u ** g - g * u ** (g - 1)
    return r ** (d - 1) * body


def b_coefficient(gamma: float, delta: float, d: int) -> float:
    """b = -(Gamma(1+gamma)/|gamma|) int_{R^d} [(1+|x|^delta)^|gamma| - |x|^(delta|gamma|)
    - |gamma| |x|^(-delta(1+gamma))] dx for -1 < gamma < 0."""
    if not -1 < gamma < 0:
        raise DomainError("b coefficient needs -1 < gamma < 0")
    if not 1 < d / delta < gamma + 2:
        raise DomainError("b coefficient needs 1 < d/delta < gamma + 2")
    g = -gamma
    f = lambda r: _b_integrand(r, g, delta, d)
    # near 0 the integrand behaves like -g r**(d-1-delta(1-g)); split for the singularity
    a, _ = integrate.quad(f, 0, 1, epsabs=0, epsrel=1e-11, limit=400)
    b, _ = integrate.quad(f, 1, np.inf, epsabs=0, epsrel=1e-11, limit=400)
    integral = sphere_area(d) * (a + b)
    val = -math.gamma(1 + gamma) / g * integral
    if not val > 0:
        raise ArithmeticError("b coefficient should be positive")
    return val


def alg_neg_exponent(gamma: float, delta: float, d: int) -> float:
    """Power |gamma| + d/delta of t in log E exp(t Z)."""
    return -gamma + d / delta


def alg_neg_reference(gamma: float, delta: float, d: int) -> StableReference:
    """Z with log E exp(t Z) = b t**(|gamma| + d/delta)."""
    a = alg_neg_exponent(gamma, delta, d)
    return StableReference(a, b_coefficient(gamma, delta, d), negate=True)


def empirical_log_laplace(sample: np.ndarray, s, sign: float = -1.0) -> np.ndarray:
    """log mean exp(sign * s * X) over the sample."""
    x = np.asarray(sample, dtype=float)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    return np.array([special.logsumexp(sign * t * x) - math.log(len(x)) for t in s])


def reference_limit_sampler(kind: str, params: dict, size: int, rng: np.random.Generator) -> np.ndarray:
    """Dispatch by kind: ``gamma-series``, ``poisson-cluster``, ``stable`` or ``alg-neg``."""
    if kind == "gamma-series":
        ref = GammaSeriesReference(**params)
    elif kind == "poisson-cluster":
        ref = PoissonClusterReference(**params)
    elif kind == "stable":
        ref = StableReference.from_levy_density(**params)
    elif kind == "alg-neg":
        ref = alg_neg_reference(**params)
    else:
        raise DomainError(f"unknown reference kind {kind!r}")
    return ref.sample(size, rng)
