"""Cramér series of the square-trap cluster law and the droplet shift."""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath as mp
import numpy as np
from scipy import optimize

from ..errors import DivergenceError, DomainError
from ..weights import WeightSequence, weighted_sum


def truncation_order(gamma: float) -> int:
    """Number of Cramér coefficients beyond the leading one kept for exponent gamma."""
    if not 0 < gamma < 1:
        raise DomainError("truncation order needs 0 < gamma < 1")
    return math.floor(1.0 / (1.0 - gamma) - 2.0 + 1e-12) + 1


def cumulants(weights: WeightSequence, kmax: int) -> np.ndarray:
    """kappa_k = sum_j j**(k-1) theta_j for k = 1..kmax (entry 0 unused)."""
    out = np.zeros(kmax + 1)
    for k in range(1, kmax + 1):
        s = weighted_sum(weights, s=k - 1, z=1.0)
        if s.divergent or not math.isfinite(s.value):
            raise DivergenceError(f"cumulant kappa_{k} diverges")
        out[k] = s.value
    return out


@dataclass(frozen=True)
class CramerData:
    cumulants: np.ndarray
    order: int
    coefficients: np.ndarray  # lambda_0..lambda_order

    @property
    def sigma2(self) -> float:
        return float(self.cumulants[2])

    def series(self, tau) -> np.ndarray:
        """sum_k lambda_k tau**k."""
        tau = np.asarray(tau, dtype=float)
        return np.polynomial.polynomial.polyval(tau, self.coefficients)

    def neg_legendre(self, tau) -> np.ndarray:
        """Truncated -phi~(tau) = -tau**2/(2 sigma2) + tau**3 sum_k lambda_k tau**k
        (minus the rate function of the excess tau)."""
        tau = np.asarray(tau, dtype=float)
        return -tau ** 2 / (2 * self.sigma2) + tau ** 3 * self.series(tau)


def _mul(a, b, n):
    out = [mp.mpf(0)] * n
    for i, x in enumerate(a[:n]):
        if x == 0:
            continue
        for j, y in enumerate(b[: n - i]):
            out[i + j] += x * y
    return out


def _reverse(c, n):
    """Compositional inverse of sum_{k>=1} c[k] t**k up to order n-1."""
    # t(tau) = sum b_k tau**k; solve order by order from f(t(tau)) = tau
    b = [mp.mpf(0)] * n
    b[1] = 1 / c[1]
    for m in range(2, n):
        # coefficient of tau**m in f(t) with b[m] = 0, then correct linearly
        total = mp.mpf(0)
        power = b[:]  # t**1
        for k in range(2, m + 1):
            power = _mul(power, b, n)
            total += c[k] * power[m] if k < len(c) else 0
        b[m] = -total / c[1]
    return b


def cramer_series(weights: WeightSequence, order: int | None = None, gamma: float | None = None,
                  dps: int = 40) -> CramerData:
    """lambda_0..lambda_t from reversion of tau(t) = phi'(t) - kappa_1.

    ``order`` defaults to the truncation order for ``gamma`` (or the weight
    exponent for stretched families).
    """
    if order is None:
        if gamma is None:
            if weights.kind != "stretched":
                raise DomainError("give the order or gamma for non-stretched weights")
            gamma = weights.exponent
        order = truncation_order(gamma)
    if order < 0:
        raise DomainError("order must be non-negative")
    kap = cumulants(weights, order + 3)
    return CramerData(kap, order, coefficients_from_cumulants(kap, order, dps))


def coefficients_from_cumulants(kap, order: int, dps: int = 40) -> np.ndarray:
    """lambda_0..lambda_order from kappa_0..kappa_{order+3} (entry 0 unused)."""
    top = order + 3
    if len(kap) < top + 1:
        raise DomainError(f"need cumulants up to kappa_{top}")
    if not kap[2] > 0:
        raise DomainError("kappa_2 must be positive")
    n = top + 1
    with mp.workdps(dps):
        K = [mp.mpf(float(x)) for x in kap]
        # tau(t) = sum_{k>=1} kappa_{k+1} t**k / k!
        c = [mp.mpf(0)] + [K[k + 1] / mp.factorial(k) for k in range(1, top)]
        b = _reverse(c, n)
        # -phi~ = phi(t) - (kappa_1 + tau) t = sum_{k>=2} kappa_k t**k/k! - tau t
        g = [mp.mpf(0)] * n
        power = b[:]
        for k in range(2, n):
            power = _mul(power, b, n)
            for m in range(n):
                g[m] += K[k] / mp.factorial(k) * power[m]
        for m in range(1, n):
            g[m] -= b[m - 1]
        lam = np.array([float(g[k + 3]) for k in range(order + 1)])
        quad = float(g[2])
    if not math.isclose(quad, -1 / (2 * float(kap[2])), rel_tol=1e-12):
        raise ArithmeticError("series reversion lost the quadratic term")
    return lam


def legendre_fit(weights: WeightSequence, order: int, n_points: int = 20, tau_max: float | None = None,
                 dps: int = 30, degree: int | None = None) -> np.ndarray:
    """lambda_0..lambda_order from a high-precision Legendre transform of phi.

    phi(t) = sum_j (theta_j/j)(exp(t j) - 1) is only finite for t <= 0 in the
    subexponential case, so the transform is sampled at small negative tau and
    (-phi~(tau) + tau**2/(2 kappa_2)) / tau**3 is fitted by a polynomial.
    """
    kap = cumulants(weights, 2)
    if tau_max is None:
        tau_max = 1e-3 * kap[2]
    degree = order + 4 if degree is None else degree
    with mp.workdps(dps):
        # truncate j where theta_j is below 10**(-dps) relative
        J = 64
        while True:
            lt = weights.log_values(np.array([J], dtype=float))[0]
            if lt < -(dps + 5) * math.log(10) - math.log(J):
                break
            J *= 2
            if J > 1 << 22:
                raise DivergenceError("weights decay too slowly for the Legendre transform")
        js = np.arange(1, J + 1, dtype=float)
        # theta_j in high precision from the closed form
        coef = [mp.e ** mp.mpf(float(v)) for v in weights.log_values(js)]
        if weights.kind == "stretched":
            g = mp.mpf(weights.exponent)
            lin = weights.linear
            coef = [mp.mpf(weights.value) * (mp.mpf(j) if lin else 1) * mp.e ** (-(mp.mpf(j) ** g))
                    for j in range(1, J + 1)]
        k1 = mp.fsum(coef)
        k2 = mp.fsum(cf * j for j, cf in enumerate(coef, 1))

        over_j = [cf / j for j, cf in enumerate(coef, 1)]
        times_j = [cf * j for j, cf in enumerate(coef, 1)]
        base = mp.fsum(over_j)

        def phis(t):
            q = mp.e ** t
            powers = [q] * len(coef)
            for i in range(1, len(coef)):
                powers[i] = powers[i - 1] * q
            return (mp.fdot(over_j, powers) - base, mp.fdot(coef, powers),
                    mp.fdot(times_j, powers))

        taus = [-mp.mpf(tau_max) * (mp.cos(mp.pi * (2 * i + 1) / (4 * n_points)) ** 2) for i in range(n_points)]
        taus = [tau for tau in taus if tau < 0]
        rows, rhs = [], []
        for tau in taus:
            t = tau / k2
            for _ in range(60):
                f, d1, d2 = phis(t)
                step = (d1 - k1 - tau) / d2
                t -= step
                if abs(step) < mp.mpf(10) ** (-dps + 3) * abs(t):
                    break
            f, _, _ = phis(t)
            val = f - (k1 + tau) * t
            h = (val + tau ** 2 / (2 * k2)) / tau ** 3
            rows.append([tau ** k for k in range(degree + 1)])
            rhs.append(h)
        A = mp.matrix(rows)
        y = mp.matrix(rhs)
        sol, _ = mp.qr_solve(A, y)
        return np.array([float(sol[k]) for k in range(order + 1)])


@dataclass(frozen=True)
class DropletShift:
    delta: float
    value: float
    asymptotic: float
    ratio: float
    excess: float
    local_minima: tuple[tuple[float, float], ...]
    endpoint_value: float  # f_L at Delta = (rho - rho_c) L^d, i.e. no macroscopic site

    @property
    def interior_is_global(self) -> bool:
        return self.value <= self.endpoint_value


def surface_function(cramer: CramerData, gamma: float, excess: float, volume: float):
    """f_L(Delta) for the stretched-exponential square trap.

    ``excess`` is (rho - rho_c) L^d and ``volume`` is L^d.
    """
    s2 = cramer.sigma2
    lam = cramer.coefficients
    m = volume - 1.0

    def f(D):
        D = np.asarray(D, dtype=float)
        u = D / m
        poly = np.polynomial.polynomial.polyval(u, lam)
        return (excess - D) ** gamma + D ** 2 / (2 * s2 * m) - D ** 3 / m ** 2 * poly

    return f


def droplet_shift(weights: WeightSequence, rho: float, L: float, d: int = 1, rho_c: float | None = None,
                  cramer: CramerData | None = None, starts: int = 8) -> DropletShift:
    """Minimize f_L over (0, (rho - rho_c) L^d) with multistart bounded searches."""
    if weights.kind != "stretched":
        raise DomainError("droplet shift needs stretched-exponential weights")
    gamma = weights.exponent
    if not 0 < gamma < 1:
        raise DomainError("gamma must lie in (0, 1)")
    if rho_c is None:
        rho_c = weighted_sum(weights, s=0.0, z=1.0).value
    if rho <= rho_c:
        raise DomainError("droplet shift needs rho > rho_c")
    if cramer is None:
        cramer = cramer_series(weights, gamma=gamma)
    vol = float(L) ** d
    E = (rho - rho_c) * vol
    f = surface_function(cramer, gamma, E, vol)
    asym = gamma * cramer.sigma2 * (rho - rho_c) ** (gamma - 1) * vol ** gamma

    # log-spaced multistart: bracket each start and run a bounded Brent search
    lo, hi = E * 1e-12, E * (1 - 1e-12)
    grid = np.geomspace(lo, hi, 4 * starts * 16)
    vals = f(grid)
    idx = [i for i in range(1, len(grid) - 1) if vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1]]
    found = []
    for i in idx:
        res = optimize.minimize_scalar(lambda x: float(f(x)), bounds=(grid[i - 1], grid[i + 1]),
                                       method="bounded", options={"xatol": 1e-10 * grid[i]})
        x = float(res.x)
        # Newton polish on f'
        for _ in range(5):
            hstep = 1e-5 * x
            d1 = (f(x + hstep) - f(x - hstep)) / (2 * hstep)
            d2 = (f(x + hstep) - 2 * f(x) + f(x - hstep)) / hstep ** 2
            if not d2 > 0:
                break
            nx = x - d1 / d2
            if not grid[i - 1] < nx < grid[i + 1]:
                break
            x = float(nx)
        found.append((x, float(f(x))))
    if not found:
        raise ArithmeticError(
            f"no interior minimum of the surface function (L={L}, excess={E:.6g}, "
            f"asymptotic shift {asym:.6g})")
    best = min(found, key=lambda p: p[1])
    return DropletShift(best[0], best[1], asym, best[0] / asym, E, tuple(found), float(f(E)))
