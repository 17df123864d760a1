"""Confining potentials, their lattice discretization and per-size site samplers."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import DivergenceError, DomainError, StateSpaceTooLargeError

POTENTIAL_KINDS = ("power", "quadratic", "square", "radial")


def ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def sphere_area(d: int) -> float:
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


@dataclass(frozen=True)
class Potential:
    """V on R^d: ``power`` c|x|^delta, ``quadratic`` beta|x|^2, ``square`` the
    indicator trap of (-1/2, 1/2]^d (V = 0 inside, +inf outside), or ``radial``
    with a user profile r -> V(r)."""

    kind: str
    d: int = 1
    delta: float = 1.0
    scale: float = 1.0
    profile: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise DomainError(f"unknown potential kind {self.kind!r}")
        if int(self.d) != self.d or self.d < 1:
            raise DomainError("dimension must be a positive integer")
        if self.kind == "quadratic":
            object.__setattr__(self, "delta", 2.0)
        if self.kind in ("power", "quadratic"):
            if not (self.delta > 0 and self.scale > 0):
                raise DomainError("power potentials need delta > 0 and a positive scale")
        if self.kind == "radial" and self.profile is None:
            raise DomainError("radial potential needs a profile")

    @classmethod
    def power(cls, delta: float, d: int = 1, c: float = 1.0) -> "Potential":
        return cls("power", d=d, delta=float(delta), scale=float(c))

    @classmethod
    def quadratic(cls, beta: float, d: int = 3) -> "Potential":
        return cls("quadratic", d=d, delta=2.0, scale=float(beta))

    @classmethod
    def square(cls, d: int = 1) -> "Potential":
        return cls("square", d=d)

    @classmethod
    def radial(cls, profile: Callable[[np.ndarray], np.ndarray], d: int = 1) -> "Potential":
        return cls("radial", d=d, profile=profile)

    @property
    def is_trap(self) -> bool:
        return self.kind != "square"

    def radial_value(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind in ("power", "quadratic"):
            return self.scale * r ** self.delta
        if self.kind == "radial":
            return np.asarray(self.profile(r), dtype=float)
        raise DomainError("the square trap is not radial")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        if self.kind == "square":
            inside = np.all((x > -0.5) & (x <= 0.5), axis=-1)
            return np.where(inside, 0.0, np.inf)
        return self.radial_value(np.linalg.norm(x, axis=-1))

    def integral_power(self) -> tuple[float, float] | None:
        """(C, p) with int exp(-j V) = C j**(-p), when that form is exact."""
        if self.kind == "square":
            return 1.0, 0.0
        if self.kind in ("power", "quadratic"):
            p = self.d / self.delta
            return ball_volume(self.d) * math.gamma(1 + p) * self.scale ** (-p), p
        return None

    def continuum_integral(self, j: float) -> float:
        """int_{R^d} exp(-j V(x)) dx."""
        if j <= 0:
            raise DomainError("j must be positive")
        form = self.integral_power()
        if form is not None:
            return form[0] * j ** (-form[1])
        area = sphere_area(self.d)
        f = lambda r: r ** (self.d - 1) * math.exp(-j * float(self.radial_value(np.array(r))))
        val, err = integrate.quad(f, 0, np.inf, epsrel=1e-10, epsabs=0, limit=400)
        if not math.isfinite(val) or err > 1e-8 * abs(val):
            raise DivergenceError("radial integral did not converge")
        return area * val

    def integral_fn(self) -> Callable[[np.ndarray], np.ndarray]:
        """Vectorized j -> int exp(-j V)."""
        form = self.integral_power()
        if form is not None:
            c, p = form
            return lambda j: c * np.asarray(j, dtype=float) ** (-p)
        return np.vectorize(self.continuum_integral, otypes=[float])

    def describe(self) -> dict:
        out = {"kind": self.kind, "d": self.d}
        if self.kind == "power":
            out.update(delta=self.delta, c=self.scale)
        elif self.kind == "quadratic":
            out.update(beta=self.scale)
        return out


def _tail_bound(d: int, Lr: float, delta: float, j: float, R: float) -> float:
    """Bound on sum over lattice points with |x| > R of exp(-j (|x|/Lr)**delta)."""
    u = (R - math.sqrt(d)) / Lr
    if u <= 0:
        return math.inf
    p = d / delta
    pref = 2 ** (d - 1) * sphere_area(d) * Lr ** d / (delta * j ** p)
    return pref * float(special.gamma(p) * special.gammaincc(p, j * u ** delta))


def _window_radius(d: int, Lr: float, delta: float, j: float, eps: float) -> float:
    lo = math.sqrt(d) + 1e-9
    hi = math.sqrt(d) + Lr * (max(math.log(1 / eps), 1.0) / j) ** (1 / delta) + 1.0
    while _tail_bound(d, Lr, delta, j, hi) > eps:
        hi = 2 * hi
    if _tail_bound(d, Lr, delta, j, lo) <= eps:
        return lo
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _tail_bound(d, Lr, delta, j, mid) > eps:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-3:
            break
    return hi


MAX_WINDOW_POINTS = 30_000_000  # bounding-cube points materialized for one window


def _points_within(d: int, R: float) -> np.ndarray:
    """Integer points with |x| <= R sorted by squared radius then lexicographically."""
    k = int(math.floor(R))
    if (2 * k + 1) ** d > MAX_WINDOW_POINTS:
        raise StateSpaceTooLargeError(
            f"a window of radius {R:.4g} in d={d} needs {(2 * k + 1) ** d:.3g} candidate points "
            f"(cap {MAX_WINDOW_POINTS}); lower L or raise eps")
    axis = np.arange(-k, k + 1, dtype=np.int64)
    if d == 1:
        pts = axis[:, None]
    else:
        grids = np.meshgrid(*([axis] * d), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
    sq = np.sum(pts * pts, axis=1)
    keep = sq <= R * R
    pts, sq = pts[keep], sq[keep]
    order = np.lexsort(tuple(pts[:, i] for i in range(d - 1, -1, -1)) + (sq,))
    return pts[order]


class LatticeWeights:
    """Discretized potential x -> V(x/L) on Z^d with shells, sums c_j(L) and samplers.

    For traps the site set is the window of points carrying non-negligible
    weight at j = 1; every effective sum comes with a certified bound on the
    discarded mass relative to ``eps``.
    """

    def __init__(self, potential: Potential, L: float, eps: float = 1e-12):
        if not L > 0:
            raise DomainError("L must be positive")
        if not 0 < eps < 1:
            raise DomainError("eps must lie in (0, 1)")
        self.potential = potential
        self.L = float(L)
        self.eps = float(eps)
        self.d = potential.d
        self.certified = True
        self._c: dict[int, tuple[float, float]] = {}
        self._cdf: dict[int, np.ndarray] = {}
        self._index: dict | None = None
        if potential.kind == "square":
            if abs(L - round(L)) > 1e-12:
                raise DomainError("the square trap needs an integer L")
            n = int(round(L))
            axis = np.arange(-((n + 1) // 2) + 1, n // 2 + 1, dtype=np.int64)
            if self.d == 1:
                pts = axis[:, None]
            else:
                pts = np.array(list(itertools.product(axis, repeat=self.d)), dtype=np.int64)
            sq = np.sum(pts * pts, axis=1)
            order = np.lexsort(tuple(pts[:, i] for i in range(self.d - 1, -1, -1)) + (sq,))
            self.points = pts[order]
            self.values = np.zeros(len(self.points))
            self.window_radius = math.inf
            self._shells(np.sum(self.points ** 2, axis=1))
            return
        if potential.kind in ("power", "quadratic"):
            self.reduced_L = self.L * potential.scale ** (-1.0 / potential.delta)
            self.window_radius = _window_radius(self.d, self.reduced_L, potential.delta, 1.0, eps)
        else:
            self.reduced_L = self.L
            self.certified = False
            self.window_radius = self._radial_window(1.0)
        self.points = _points_within(self.d, self.window_radius)
        sq = np.sum(self.points ** 2, axis=1)
        self._shells(sq)
        self.values = self.shell_values[self.shell_of_point]

    def _radial_window(self, j: float) -> float:
        target = (math.log(1 / self.eps) + 5.0) / j
        r = 1.0
        for _ in range(200):
            if float(self.potential.radial_value(np.array(r / self.L))) > target:
                return r
            r *= 1.5
        raise DivergenceError("potential does not confine: effective sums diverge")

    def _shells(self, sq: np.ndarray) -> None:
        uniq, start, counts = np.unique(sq, return_index=True, return_counts=True)
        self.shell_sq = uniq
        self.shell_start = start
        self.shell_count = counts
        self.shell_of_point = np.repeat(np.arange(len(uniq)), counts)
        if self.potential.kind == "square":
            self.shell_values = np.zeros(len(uniq))
        else:
            self.shell_values = self.potential.radial_value(np.sqrt(uniq) / self.L)

    # basic geometry
    @property
    def n_sites(self) -> int:
        return len(self.points)

    @property
    def origin_index(self) -> int:
        return 0  # points are sorted by radius

    def site(self, idx: int) -> tuple[int, ...]:
        return tuple(int(v) for v in self.points[idx])

    def index(self, site) -> int:
        if self._index is None:
            self._index = {tuple(int(v) for v in p): i for i, p in enumerate(self.points)}
        key = tuple(site) if not isinstance(site, (int, np.integer)) else (int(site),)
        try:
            return self._index[key]
        except KeyError:
            raise DomainError(f"site {key} lies outside the lattice window") from None

    def potential_at(self, site) -> float:
        """V(x/L) for a site tuple (any point of Z^d, not only the window)."""
        x = np.asarray(site, dtype=float) / self.L
        return float(self.potential(x))

    def weight(self, site, j: int) -> float:
        v = self.potential_at(site)
        return 0.0 if v == math.inf else math.exp(-j * v)

    # effective sums
    def _radius_for(self, j: int) -> float:
        if self.potential.kind in ("power", "quadratic"):
            return min(_window_radius(self.d, self.reduced_L, self.potential.delta, float(j), self.eps),
                       self.window_radius)
        return min(self._radial_window(float(j)), self.window_radius)

    def _n_shells(self, j: int) -> int:
        if self.potential.kind == "square":
            return len(self.shell_sq)
        R = self._radius_for(j)
        return int(np.searchsorted(self.shell_sq, R * R, side="right"))

    def effective_weight(self, j: int) -> float:
        """c_j(L) = sum_x exp(-j V(x/L))."""
        return self.effective_weight_certified(j)[0]

    def effective_weight_certified(self, j: int) -> tuple[float, float]:
        """(c_j(L), absolute bound on the truncation error)."""
        j = int(j)
        if j < 1:
            raise DomainError("j must be at least 1")
        if j not in self._c:
            if self.potential.kind == "square":
                self._c[j] = (float(len(self.points)), 0.0)
            else:
                k = self._n_shells(j)
                w = self.shell_count[:k] * np.exp(-j * self.shell_values[:k])
                total = float(np.sum(w[::-1]))
                if self.potential.kind in ("power", "quadratic"):
                    R = self._radius_for(j)
                    tail = _tail_bound(self.d, self.reduced_L, self.potential.delta, j, R)
                else:
                    tail = math.nan
                self._c[j] = (total, tail)
        return self._c[j]

    def effective_weights(self, J: int) -> np.ndarray:
        """Array c_0..c_J with c_0 = 0."""
        out = np.zeros(J + 1)
        for j in range(1, J + 1):
            out[j] = self.effective_weight(j)
        return out

    def tail_certificates(self, J: int) -> np.ndarray:
        return np.array([self.effective_weight_certified(j)[1] for j in range(1, J + 1)])

    # sampling
    def _site_cdf(self, j: int) -> np.ndarray:
        if j not in self._cdf:
            k = self._n_shells(j)
            w = self.shell_count[:k] * np.exp(-j * self.shell_values[:k])
            cdf = np.cumsum(w)
            self._cdf[j] = cdf / cdf[-1]
        return self._cdf[j]

    def sample_site_indices(self, j: int, size: int, rng: np.random.Generator) -> np.ndarray:
        """Point indices drawn from p_xj = exp(-j V(x/L)) / c_j(L)."""
        if self.potential.kind == "square":
            return rng.integers(0, len(self.points), size=size)
        cdf = self._site_cdf(int(j))
        shell = np.searchsorted(cdf, rng.random(size), side="right")
        shell = np.minimum(shell, len(cdf) - 1)
        offs = np.floor(rng.random(size) * self.shell_count[shell]).astype(np.int64)
        return self.shell_start[shell] + offs

    def site_probabilities(self, j: int) -> np.ndarray:
        """p_xj over all window points (zeros outside the j-window)."""
        if self.potential.kind == "square":
            return np.full(len(self.points), 1.0 / len(self.points))
        w = np.exp(-j * self.values)
        k = self._n_shells(j)
        cut = self.shell_start[k] if k < len(self.shell_sq) else len(self.points)
        w[cut:] = 0.0
        return w / w.sum()

    def window_indices(self) -> np.ndarray:
        """Sites with exp(-V(x/L)) >= eps (all sites for the square trap)."""
        if self.potential.kind == "square":
            return np.arange(len(self.points))
        return np.flatnonzero(self.values <= math.log(1 / self.eps))

    def describe(self) -> dict:
        out = {"L": self.L, "eps": self.eps, "sites": int(self.n_sites),
               "certified": self.certified}
        if self.potential.is_trap:
            out["window_radius"] = self.window_radius
        return out


def site_sampler(lat: LatticeWeights, j: int, rng: np.random.Generator) -> tuple[int, ...]:
    """One site drawn from p_xj."""
    return lat.site(int(lat.sample_site_indices(j, 1, rng)[0]))


def effective_weight(lat: LatticeWeights, j: int) -> float:
    return lat.effective_weight(j)


def continuum_integral(potential: Potential, j: float) -> float:
    return potential.continuum_integral(j)


def riemann_check(potential: Potential, j: int, L: float, eps: float = 1e-12) -> float:
    """|L^-d c_j(L) - int exp(-jV)| / int exp(-jV)."""
    lat = LatticeWeights(potential, L, eps)
    integral = potential.continuum_integral(j)
    return abs(lat.effective_weight(j) / lat.L ** lat.d - integral) / integral
