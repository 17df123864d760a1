"""Density series, critical quantities and thermodynamic limits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.special import logsumexp

from ..errors import DivergenceError, DomainError
from ..lattice import LatticeWeights, Potential, sphere_area
from ..partitions import h_from_theta
from ..samplers import log_partition_function
from ..weights import SeriesValue, WeightSequence, levy_exponent, weighted_sum


@dataclass
class DensitySeries:
    """z -> rho(z) = sum_j theta_j z**j int exp(-j V)."""

    weights: WeightSequence
    potential: Potential
    z_c: float = field(init=False)
    z_c_approximate: bool = field(init=False, default=False)

    def __post_init__(self):
        if self.weights.kind == "custom":
            self.z_c, self.z_c_approximate = _root_test_radius(self.weights)
        else:
            self.z_c = self.weights.radius()

    def integral(self, j) -> np.ndarray:
        return self.potential.integral_fn()(j)

    def moment(self, s: float, z: float) -> SeriesValue:
        """sum_j j**s theta_j z**j int exp(-j V)."""
        form = self.potential.integral_power()
        if form is None:
            return weighted_sum(self.weights, s=s, z=z, integral_fn=self.potential.integral_fn(),
                                max_terms=200_000)
        return weighted_sum(self.weights, s=s, z=z, integral_power=form[1], integral_const=form[0])

    def rho(self, z: float) -> float:
        if z < 0:
            raise DomainError("activity must be non-negative")
        if z > self.z_c * (1 + 1e-14):
            raise DomainError(f"z = {z} exceeds the radius of convergence {self.z_c}")
        if z == 0:
            return 0.0
        return self.moment(0.0, min(z, self.z_c)).value

    __call__ = rho

    @property
    def rho_c(self) -> float:
        if not math.isfinite(self.z_c):
            return math.inf
        return self.rho(self.z_c)

    def rho_alt(self, z: float, tol: float = 1e-13) -> float:
        """rho(z) from the h-table form: the integral over x of
        sum_n n h_n w**n / sum_n h_n w**n with w = z exp(-V(x)).

        Requires z strictly inside the radius of convergence.
        """
        if not 0 < z < self.z_c:
            raise DomainError("the h-table form is evaluated strictly inside the radius")
        # truncation so that h_n z**n is negligible
        N = 64
        while True:
            h = h_from_theta(self.weights, N)
            n = np.arange(N + 1)
            with np.errstate(divide="ignore"):
                lt = h.log_h + n * math.log(z)
            if lt[-1] - logsumexp(lt) < math.log(tol) - 5 and lt[-1] < lt[-2]:
                break
            N *= 2
            if N > 1 << 16:
                raise DivergenceError("h-series converges too slowly at this activity")
        lh = h.log_h

        def F(v: float) -> float:
            with np.errstate(divide="ignore"):
                terms = lh + n * (math.log(z) - v)
            den = logsumexp(terms)
            num = logsumexp(terms[1:] + np.log(n[1:]))
            return math.exp(num - den)

        return self._spatial_integral(F)

    def _spatial_integral(self, F) -> float:
        """int_{R^d} F(V(x)) dx for a function of the potential value."""
        pot = self.potential
        if pot.kind == "square":
            return F(0.0)
        if pot.kind in ("power", "quadratic"):
            p = pot.d / pot.delta
            pref = sphere_area(pot.d) / (pot.delta * pot.scale ** p)
            g = lambda v: v ** (p - 1) * F(v)
            a, _ = integrate.quad(g, 0, 1, epsabs=0, epsrel=1e-12, limit=400)
            b, _ = integrate.quad(g, 1, np.inf, epsabs=0, epsrel=1e-12, limit=400)
            return pref * (a + b)
        area = sphere_area(pot.d)
        g = lambda r: r ** (pot.d - 1) * F(float(pot.radial_value(np.array(r))))
        val, _ = integrate.quad(g, 0, np.inf, epsabs=0, epsrel=1e-10, limit=400)
        return area * val

    def monotone_on(self, grid) -> bool:
        vals = [self.rho(z) for z in grid]
        return all(b > a for a, b in zip(vals, vals[1:]))


def _root_test_radius(weights: WeightSequence) -> tuple[float, bool]:
    """Radius of sum theta_j z**j from a custom table: limsup theta_j**(1/j)
    estimated by a two-point Richardson step on (1/j) log theta_j."""
    t = np.asarray(weights.table)
    pos = np.flatnonzero(t > 0) + 1
    if len(pos) < 2:
        return math.inf, True
    j1, j2 = pos[-2], pos[-1]
    slope = (math.log(t[j2 - 1]) - math.log(t[j1 - 1])) / (j2 - j1)
    return math.exp(-slope) / weights.activity, True


def rho_of_z(series: DensitySeries, z: float) -> float:
    return series.rho(z)


def solve_activity(series: DensitySeries, rho: float) -> float:
    """z_0(rho): the root of rho(z) = rho below criticality, z_c above."""
    if rho <= 0:
        return 0.0
    rc = series.rho_c
    if rho >= rc:
        return series.z_c
    hi = series.z_c
    if not math.isfinite(hi):
        hi = 1.0
        while series.rho(hi) < rho:
            hi *= 2
    f = lambda z: series.rho(z) - rho
    z = optimize.brentq(f, 0.0, hi, xtol=1e-300, rtol=1e-15, maxiter=500)
    # Newton polish with rho'(z) = sum_j j theta_j z**(j-1) I_j
    for _ in range(3):
        d = series.moment(1.0, z).value / z
        if not (d > 0 and math.isfinite(d)):
            break
        step = f(z) / d
        if not 0 < z - step < hi:
            break
        z -= step
        if abs(step) <= 1e-16 * z:
            break
    return z


def condensate_fraction_theory(series: DensitySeries, rho: float) -> float:
    if rho <= 0:
        raise DomainError("density must be positive")
    rc = series.rho_c
    if not math.isfinite(rc):
        return 0.0
    return max(0.0, 1.0 - rc / rho)


@dataclass(frozen=True)
class TypicalLimits:
    z0: float
    size_fractions: np.ndarray  # limits of j R_j / n, index j (entry 0 unused)
    occupation_fractions: np.ndarray  # limits of k N_k / n, index k

    @property
    def component_densities(self) -> np.ndarray:
        """Limits of R_j / n."""
        j = np.arange(len(self.size_fractions))
        out = np.zeros_like(self.size_fractions)
        out[1:] = self.size_fractions[1:] / j[1:]
        return out


def typical_limits(series: DensitySeries, rho: float, j_max: int = 5, k_max: int = 5) -> TypicalLimits:
    """Limits of j R_j / n (j <= j_max) and of k N_k / n (k <= k_max)."""
    if rho <= 0:
        raise DomainError("density must be positive")
    z0 = solve_activity(series, rho)
    j = np.arange(1, j_max + 1)
    th = series.weights.array(j_max)[1:]
    a = np.zeros(j_max + 1)
    a[1:] = th * z0 ** j * series.integral(j) / rho
    h = h_from_theta(series.weights, max(k_max, 1))
    m = np.zeros(k_max + 1)
    for k in range(1, k_max + 1):
        def F(v, k=k):
            w = z0 * math.exp(-v)
            G = levy_exponent(series.weights, w)
            if not math.isfinite(G):
                return 0.0
            return k * math.exp(h.log_h[k] + k * math.log(w) - G) if w > 0 else 0.0
        m[k] = series._spatial_integral(F) / rho
    return TypicalLimits(z0, a, m)


def free_energy_limit(series: DensitySeries, rho: float) -> float:
    """lim (1/n) log Z_{L,n} = (1/rho) sum_j (theta_j/j) z0**j int exp(-jV) - log z0."""
    if rho <= 0:
        raise DomainError("density must be positive")
    z0 = solve_activity(series, rho)
    if z0 == 0:
        return math.inf
    s = series.moment(-1.0, z0)
    if s.divergent:
        raise DivergenceError("sum (theta_j / j) z0**j I_j diverges")
    return s.value / rho - math.log(z0)


def finite_size_free_energy(lat: LatticeWeights, weights: WeightSequence, n: int) -> float:
    """(1/n) log Z_{L,n} from the exact recurrence."""
    return log_partition_function(lat, weights, n) / n


def entropy_functional(series: DensitySeries, rho: float, a: np.ndarray) -> float:
    """I(a) = -sum_j a_j log(e theta_j I_j / (j a_j rho)) over j = 1..len(a)-1.

    ``a`` is indexed by j (entry 0 ignored); zero entries contribute nothing.
    """
    a = np.asarray(a, dtype=float)
    J = len(a) - 1
    j = np.arange(1, J + 1)
    aj = a[1:]
    th = series.weights.array(J)[1:]
    I = series.integral(j)
    keep = aj > 0
    terms = aj[keep] * (1.0 + np.log(th[keep] * I[keep] / (j[keep] * aj[keep] * rho)))
    return -float(math.fsum(terms))


def entropy_at_limits(series: DensitySeries, rho: float, J: int) -> tuple[float, float]:
    """(-I(a), tail bound) with a_j the limits of R_j / n for j <= J."""
    z0 = solve_activity(series, rho)
    j = np.arange(1, J + 1)
    a = np.zeros(J + 1)
    a[1:] = series.weights.array(J)[1:] * z0 ** j * series.integral(j) / (j * rho)
    val = -entropy_functional(series, rho, a)
    # terms beyond J are a_j (1 - j log z0) >= 0 and sum to at most the series tail
    full = series.moment(-1.0, z0).value / rho - math.log(z0) * series.moment(0.0, z0).value / rho
    return val, abs(full - val)


@dataclass(frozen=True)
class SigmaC:
    value: float
    finite: bool
    tail_bound: float


def sigma_c(series: DensitySeries) -> SigmaC:
    """sigma_c**2 = sum_j j theta_j int exp(-jV) at the radius (inf if divergent)."""
    s = series.moment(1.0, series.z_c)
    if s.divergent or not math.isfinite(s.value):
        return SigmaC(math.inf, False, 0.0)
    return SigmaC(s.value, True, s.tail_bound)


def finite_critical_mass(lat: LatticeWeights, weights: WeightSequence, exclude_origin: bool = True,
                         z: float = 1.0) -> float:
    """sum over sites x (x != 0 by default) of sum_j theta_j z**j exp(-j V(x/L)), the
    grand-canonical mean mass away from the origin, i.e. rho_c^L L^d."""
    w = z * np.exp(-lat.values)
    if exclude_origin:
        w = w[1:]
    if weights.kind in ("constant", "bose"):
        level = 1.0 if weights.kind == "bose" else weights.value
        weff = w * weights.activity
        return float(np.sum(level * weff / (1 - weff)))
    # sum_j theta_j w**j per site, by summing over j
    total = np.zeros_like(w)
    J = 1
    while True:
        lt = weights.log_array(J)
        j = np.arange(1, J + 1)
        total = np.exp(lt[1:][None, :] + np.log(w)[:, None] * j[None, :]).sum(axis=1)
        last = np.exp(lt[J] + J * np.log(w.max()))
        if last < 1e-17 * total.sum() or J > 1 << 16:
            break
        J *= 2
    return float(total.sum())
