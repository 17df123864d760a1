"""Continuous-time Markov dynamics preserving the spatial partition measure.

Three processes act on ``SpatialPartitionState``: the chain of Chinese
restaurants (Ewens weights), its instant-reshuffling variant for general
weights, and spatial coagulation-fragmentation. A plain zero-range process on
occupation vectors serves as the comparison for the occupation projection.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError, InvalidWeightsError, StateSpaceTooLargeError
from .lattice import LatticeWeights
from .partitions import h_from_theta, size_biased_sizes
from .samplers import (CanonicalSampler, SpatialPartitionState, enumerate_occupations,
                       enumerate_spatial, log_weight_spatial)
from .weights import WeightSequence

Site = tuple


# ---------------------------------------------------------------------------
# jump kernels


class IndependentKernel:
    """t(x, y) = exp(-V(y/L)) / sum_z exp(-V(z/L)), the same row for every x.

    Self-jumps are allowed. On the square trap the kernel is uniform. The site
    set is the lattice window (sites with exp(-V) >= eps), or an explicit
    subset of point indices, and t is renormalized over it.
    """

    def __init__(self, lattice: LatticeWeights, indices: Sequence[int] | None = None):
        self.lattice = lattice
        idx = lattice.window_indices() if indices is None else np.asarray(indices, dtype=np.int64)
        self.indices = idx
        self.sites: list[Site] = [lattice.site(int(i)) for i in idx]
        w = np.exp(-lattice.values[idx])
        self.probs = w / w.sum()
        self._cdf = np.cumsum(self.probs)
        self._cdf[-1] = 1.0
        self._pos = {x: k for k, x in enumerate(self.sites)}
        self.uniform = lattice.potential.kind == "square"

    def prob(self, x: Site, y: Site) -> float:
        k = self._pos.get(y)
        return 0.0 if k is None else float(self.probs[k])

    def sample(self, x: Site, rng: np.random.Generator) -> Site:
        if self.uniform:
            return self.sites[int(rng.integers(len(self.sites)))]
        k = int(np.searchsorted(self._cdf, rng.random(), side="right"))
        return self.sites[min(k, len(self.sites) - 1)]

    def row(self, x: Site) -> list[tuple[Site, float]]:
        return [(y, float(p)) for y, p in zip(self.sites, self.probs)]

    def reversibility_defect(self, pairs: Iterable[tuple[Site, Site]]) -> float:
        """max |exp(-V_x) t(x,y) - exp(-V_y) t(y,x)| / scale over the pairs."""
        worst = 0.0
        for x, y in pairs:
            a = math.exp(-self.lattice.potential_at(x)) * self.prob(x, y)
            b = math.exp(-self.lattice.potential_at(y)) * self.prob(y, x)
            scale = max(a, b)
            if scale > 0:
                worst = max(worst, abs(a - b) / scale)
        return worst


class MatrixKernel:
    """Explicit row-stochastic kernel over a finite site list."""

    def __init__(self, sites: Sequence[Site], matrix: np.ndarray):
        self.sites = [tuple(s) for s in sites]
        P = np.asarray(matrix, dtype=float)
        if P.shape != (len(self.sites), len(self.sites)) or np.any(P < 0):
            raise DomainError("kernel matrix must be square and non-negative")
        if not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
            raise DomainError("kernel rows must sum to one")
        self.matrix = P
        self._pos = {x: k for k, x in enumerate(self.sites)}
        self._cdf = np.cumsum(P, axis=1)
        self.uniform = False

    def prob(self, x: Site, y: Site) -> float:
        i, k = self._pos.get(x), self._pos.get(y)
        return 0.0 if i is None or k is None else float(self.matrix[i, k])

    def sample(self, x: Site, rng: np.random.Generator) -> Site:
        row = self._cdf[self._pos[x]]
        k = int(np.searchsorted(row, rng.random() * row[-1], side="right"))
        return self.sites[min(k, len(self.sites) - 1)]

    def row(self, x: Site) -> list[tuple[Site, float]]:
        i = self._pos[x]
        return [(y, float(p)) for y, p in zip(self.sites, self.matrix[i]) if p > 0]


# ---------------------------------------------------------------------------
# occupation-only state for the zero-range process


class OccupationState:
    """Sparse occupation vector site -> eta_x > 0."""

    __slots__ = ("_eta", "n")

    def __init__(self, eta: Mapping[Site, int] | None = None):
        self._eta = {tuple(x): int(m) for x, m in (eta or {}).items() if m}
        self.n = sum(self._eta.values())

    def eta(self, x: Site) -> int:
        return self._eta.get(x, 0)

    def move(self, x: Site, y: Site) -> None:
        if x == y:
            return
        self._eta[x] -= 1
        if not self._eta[x]:
            del self._eta[x]
        self._eta[y] = self._eta.get(y, 0) + 1

    @property
    def sites(self) -> list[Site]:
        return list(self._eta)

    def occupations(self) -> dict[Site, int]:
        return dict(self._eta)

    def eta_key(self) -> tuple:
        return tuple(sorted(self._eta.items()))

    key = eta_key

    def counts(self) -> dict[int, int]:
        return {}

    def copy(self) -> "OccupationState":
        st = OccupationState()
        st._eta = dict(self._eta)
        st.n = self.n
        return st


# ---------------------------------------------------------------------------
# processes


class Process:
    """Common Gillespie machinery.

    Subclasses supply ``site_rate`` (aggregate rate of events originating at a
    site), ``fire`` (apply one such event, return the touched sites) and
    ``transitions`` (all distinct successor states with aggregated rates).
    """

    kernel: IndependentKernel | MatrixKernel

    @property
    def sites(self) -> list[Site]:
        return self.kernel.sites

    def site_rate(self, state, x: Site) -> float:
        raise NotImplementedError

    def fire(self, state, x: Site, rng: np.random.Generator) -> Iterable[Site]:
        raise NotImplementedError

    def transitions(self, state) -> dict[tuple, tuple[float, object]]:
        raise NotImplementedError

    def log_stationary_weight(self, state) -> float:
        raise NotImplementedError

    def total_rate(self, state) -> float:
        return sum(self.site_rate(state, x) for x in state.sites)

    def step(self, state, rng: np.random.Generator, cache: "RateCache | None" = None):
        """One event: returns (holding time, state), mutating ``state``."""
        cache = cache or RateCache(self, state)
        total = cache.total
        if total <= 0:
            return math.inf, state
        dt = rng.exponential(1.0 / total)
        x = cache.choose(rng.random() * total)
        touched = self.fire(state, x, rng)
        cache.update(state, touched)
        return dt, state

    def initial_state(self, kind: str, n: int, rng: np.random.Generator | None = None):
        """'origin' (all mass at the origin), 'singletons' (n monomers spread
        round-robin over the sites) or 'canonical' (exact stationary draw)."""
        origin = self.sites[0]
        if kind == "origin":
            return SpatialPartitionState({origin: [n]}) if n else SpatialPartitionState()
        if kind == "singletons":
            st = SpatialPartitionState()
            for i in range(n):
                st.add(self.sites[i % len(self.sites)], 1)
            return st
        if kind == "canonical":
            if rng is None:
                raise DomainError("a canonical initial state needs an rng")
            return self._canonical_draw(n, rng)
        raise DomainError(f"unknown initial state {kind!r}")

    def _canonical_draw(self, n: int, rng: np.random.Generator):
        sampler = CanonicalSampler(self.lattice, self.weights, n)
        while True:
            st = sampler.sample(rng)
            if all(x in self.kernel._pos for x in st.sites):
                return st


class RateCache:
    """Per-site aggregate rates, updated only at the sites an event touched."""

    def __init__(self, process: Process, state):
        self.process = process
        self.rates: dict[Site, float] = {}
        self.total = 0.0
        self._events = 0
        self.rebuild(state)

    def rebuild(self, state) -> None:
        self.rates = {x: self.process.site_rate(state, x) for x in state.sites}
        self.total = math.fsum(self.rates.values())

    def choose(self, u: float) -> Site:
        acc = 0.0
        last = None
        for x, r in self.rates.items():
            acc += r
            last = x
            if u < acc and r > 0:
                return x
        return last

    def update(self, state, touched: Iterable[Site]) -> None:
        for x in touched:
            old = self.rates.pop(x, 0.0)
            new = self.process.site_rate(state, x) if state.eta(x) else 0.0
            if state.eta(x):
                self.rates[x] = new
            self.total += new - old
        self._events += 1
        if self._events % 4096 == 0:
            self.total = math.fsum(self.rates.values())


def _weighted_choice(items: Sequence, weights: Sequence[float], u: float):
    total = sum(weights)
    acc = 0.0
    target = u * total
    for it, w in zip(items, weights):
        acc += w
        if target < acc:
            return it
    return items[-1]


@dataclass
class CRPChainConfig:
    theta: float
    lattice: LatticeWeights
    kernel: IndependentKernel | MatrixKernel | None = None

    def __post_init__(self):
        if not self.theta > 0:
            raise DomainError("the Ewens parameter must be positive")
        if self.kernel is None:
            self.kernel = IndependentKernel(self.lattice)


class CRPChain(Process):
    """Chain of Chinese restaurants.

    A customer leaves site x at rate g(eta_x) = eta_x/(theta + eta_x - 1),
    picked uniformly among the eta_x customers (so a j-table with probability
    j r_xj / eta_x). The customer walks to y ~ t(x, .) and joins a k-table
    with probability k r_yk/(eta_y + theta) or opens a new table with
    probability theta/(eta_y + theta), where the partition at y is read after
    the departure.
    """

    def __init__(self, cfg: CRPChainConfig):
        self.cfg = cfg
        self.theta = float(cfg.theta)
        self.lattice = cfg.lattice
        self.kernel = cfg.kernel
        self.weights = WeightSequence.constant(self.theta)

    def g(self, eta: int) -> float:
        return 0.0 if eta == 0 else eta / (self.theta + eta - 1)

    def site_rate(self, state, x):
        return self.g(state.eta(x))

    def rate_bound(self, state) -> float:
        return state.n / self.theta

    def fire(self, state, x, rng):
        row = state.site_counts(x)
        js = list(row)
        j = _weighted_choice(js, [k * row[k] for k in js], rng.random())
        y = self.kernel.sample(x, rng)
        state.remove(x, j)
        if j > 1:
            state.add(x, j - 1)
        rowy = state.site_counts(y)
        ks = [0] + list(rowy)
        k = _weighted_choice(ks, [self.theta] + [kk * rowy[kk] for kk in rowy], rng.random())
        if k:
            state.remove(y, k)
        state.add(y, k + 1)
        return (x, y)

    def transitions(self, state):
        out: dict[tuple, list] = {}
        base = state.key()
        for x in state.sites:
            gx = self.g(state.eta(x))
            eta_x = state.eta(x)
            for j, rj in state.site_counts(x).items():
                p_minus = j * rj / eta_x
                for y, txy in self.kernel.row(x):
                    if txy == 0:
                        continue
                    mid = state.copy()
                    mid.remove(x, j)
                    if j > 1:
                        mid.add(x, j - 1)
                    rowy = mid.site_counts(y)
                    denom = mid.eta(y) + self.theta
                    options = [(0, self.theta / denom)] + [(k, k * r / denom) for k, r in rowy.items()]
                    for k, p_plus in options:
                        new = mid.copy()
                        if k:
                            new.remove(y, k)
                        new.add(y, k + 1)
                        key = new.key()
                        if key == base:
                            continue
                        rate = gx * txy * p_minus * p_plus
                        if key in out:
                            out[key][0] += rate
                        else:
                            out[key] = [rate, new]
        return {k: (v[0], v[1]) for k, v in out.items()}

    def log_stationary_weight(self, state):
        return log_weight_spatial(self.lattice, self.weights, state)


class ReshuffleChain(Process):
    """Zero-range motion of one particle at rate g(eta_x) t(x, y) with
    g(m) = h_{m-1}/h_m, followed by fresh draws of the partitions at the two
    touched sites from nu_{eta_x - 1} and nu_{eta_y + 1} (nu_{eta_x} when
    y = x)."""

    def __init__(self, lattice: LatticeWeights, weights: WeightSequence, n_max: int,
                 kernel: IndependentKernel | MatrixKernel | None = None):
        self.lattice = lattice
        self.weights = weights
        self.kernel = kernel or IndependentKernel(lattice)
        self.n_max = int(n_max)
        self.h = h_from_theta(weights, self.n_max + 1)
        self._log_theta = weights.log_array(self.n_max + 1)

    def g(self, eta: int) -> float:
        if eta == 0:
            return 0.0
        return math.exp(self.h.log_h[eta - 1] - self.h.log_h[eta])

    def site_rate(self, state, x):
        return self.g(state.eta(x))

    def _redraw(self, state, x, m, rng):
        for j, r in list(state.site_counts(x).items()):
            state.remove(x, j, r)
        for j in size_biased_sizes(self._log_theta, self.h.log_h, m, rng):
            state.add(x, j)

    def fire(self, state, x, rng):
        y = self.kernel.sample(x, rng)
        ex, ey = state.eta(x), state.eta(y)
        if y == x:
            self._redraw(state, x, ex, rng)
        else:
            self._redraw(state, x, ex - 1, rng)
            self._redraw(state, y, ey + 1, rng)
        return (x, y)

    def _nu_table(self, m: int) -> list[tuple[dict, float]]:
        from .partitions import GibbsPartitionMeasure, enumerate_partitions, gibbs_prob
        meas = GibbsPartitionMeasure(self.weights, m, self.h)
        return [(p.counts, gibbs_prob(meas, p)) for p in enumerate_partitions(m)]

    def transitions(self, state):
        out: dict[tuple, list] = {}
        base = state.key()
        for x in state.sites:
            gx = self.g(state.eta(x))
            for y, txy in self.kernel.row(x):
                if txy == 0:
                    continue
                ex, ey = state.eta(x), state.eta(y)
                if y == x:
                    combos = [((c, p), None) for c, p in self._nu_table(ex)]
                else:
                    combos = [((cx, px), (cy, py)) for cx, px in self._nu_table(ex - 1)
                              for cy, py in self._nu_table(ey + 1)]
                for (cx, px), other in combos:
                    new = state.copy()
                    for j, r in list(new.site_counts(x).items()):
                        new.remove(x, j, r)
                    for j, r in cx.items():
                        new.add(x, j, r)
                    p = px
                    if other is not None:
                        cy, py = other
                        for j, r in list(new.site_counts(y).items()):
                            new.remove(y, j, r)
                        for j, r in cy.items():
                            new.add(y, j, r)
                        p *= py
                    key = new.key()
                    if key == base or p == 0:
                        continue
                    rate = gx * txy * p
                    if key in out:
                        out[key][0] += rate
                    else:
                        out[key] = [rate, new]
        return {k: (v[0], v[1]) for k, v in out.items()}

    def log_stationary_weight(self, state):
        return log_weight_spatial(self.lattice, self.weights, state)


@dataclass
class CoagFragConfig:
    """Rates a_j (coagulation of a j-cluster with a monomer) and b_j
    (fragmentation of a j-cluster into j-1 and 1), tied by
    a_j (theta_j / j) theta_1 = b_{j+1} theta_{j+1} / (j + 1)."""

    weights: WeightSequence
    a: np.ndarray  # index j, entry 0 unused
    b: np.ndarray  # index j, entries 0 and 1 unused
    validate: bool = True

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if len(self.b) != len(self.a) + 1:
            raise DomainError("b must have one more entry than a")
        if np.any(self.a[1:] <= 0) or np.any(self.b[2:] <= 0):
            raise DomainError("coagulation and fragmentation rates must be positive")
        if self.weights(1) <= 0:
            raise InvalidWeightsError("coagulation-fragmentation needs theta_1 > 0")
        if self.validate and self.constraint_defect() > 1e-12:
            raise DomainError("rates violate the balance constraint")

    @property
    def j_max(self) -> int:
        return len(self.a) - 1

    @classmethod
    def from_coagulation(cls, weights: WeightSequence, a: Callable[[int], float] | Sequence[float],
                         j_max: int) -> "CoagFragConfig":
        av = np.zeros(j_max + 1)
        for j in range(1, j_max + 1):
            av[j] = a(j) if callable(a) else a[j]
        th = weights.array(j_max + 1)
        b = np.zeros(j_max + 2)
        for j in range(1, j_max + 1):
            b[j + 1] = av[j] * (th[j] / j) * th[1] * (j + 1) / th[j + 1]
        return cls(weights, av, b)

    @classmethod
    def from_fragmentation(cls, weights: WeightSequence, b: Callable[[int], float] | Sequence[float],
                           j_max: int) -> "CoagFragConfig":
        bv = np.zeros(j_max + 2)
        for j in range(2, j_max + 2):
            bv[j] = b(j) if callable(b) else b[j]
        th = weights.array(j_max + 1)
        a = np.zeros(j_max + 1)
        for j in range(1, j_max + 1):
            a[j] = bv[j + 1] * th[j + 1] / (j + 1) / ((th[j] / j) * th[1])
        return cls(weights, a, bv)

    def constraint_defect(self) -> float:
        th = self.weights.array(self.j_max + 1)
        worst = 0.0
        for j in range(1, self.j_max + 1):
            lhs = self.a[j] * (th[j] / j) * th[1]
            rhs = self.b[j + 1] * th[j + 1] / (j + 1)
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
        return worst

    def perturbed(self, factor: float) -> "CoagFragConfig":
        """Copy with every b_j scaled by ``factor`` (constraint not enforced)."""
        return CoagFragConfig(self.weights, self.a.copy(), self.b * factor, validate=False)


class CoagFragChain(Process):
    """Spatial coagulation-fragmentation with monomer jumps.

    Events at a site x: a j-cluster (j >= 2) absorbs a monomer at rate
    a_j r_xj r_x1; two monomers merge at rate a_1 r_x1 (r_x1 - 1); a j-cluster
    sheds a monomer at rate b_j r_xj; a monomer jumps to y != x at rate
    r_x1 t(x, y).
    """

    def __init__(self, lattice: LatticeWeights, cfg: CoagFragConfig,
                 kernel: IndependentKernel | MatrixKernel | None = None):
        self.lattice = lattice
        self.cfg = cfg
        self.weights = cfg.weights
        self.kernel = kernel or IndependentKernel(lattice)

    def _a(self, j):
        if j > self.cfg.j_max:
            raise DomainError(f"coagulation rate a_{j} not tabulated")
        return self.cfg.a[j]

    def _b(self, j):
        if j > self.cfg.j_max + 1:
            raise DomainError(f"fragmentation rate b_{j} not tabulated")
        return self.cfg.b[j]

    def _site_events(self, state, x):
        row = state.site_counts(x)
        r1 = row.get(1, 0)
        ev = []
        for j, r in row.items():
            if j == 1:
                if r >= 2:
                    ev.append((("coag", 1), self._a(1) * r * (r - 1)))
            else:
                if r1:
                    ev.append((("coag", j), self._a(j) * r * r1))
                ev.append((("frag", j), self._b(j) * r))
        if r1:
            stay = self.kernel.prob(x, x)
            if stay < 1:
                ev.append((("jump", None), r1 * (1.0 - stay)))
        return ev

    def site_rate(self, state, x):
        return sum(r for _, r in self._site_events(state, x))

    @staticmethod
    def _apply(state, x, event, y=None):
        kind, j = event
        if kind == "coag":
            state.remove(x, 1)
            state.remove(x, j)
            state.add(x, j + 1)
        elif kind == "frag":
            state.remove(x, j)
            state.add(x, j - 1)
            state.add(x, 1)
        else:
            state.remove(x, 1)
            state.add(y, 1)

    def fire(self, state, x, rng):
        ev = self._site_events(state, x)
        event = _weighted_choice([e for e, _ in ev], [r for _, r in ev], rng.random())
        y = None
        if event[0] == "jump":
            while True:
                y = self.kernel.sample(x, rng)
                if y != x:
                    break
        self._apply(state, x, event, y)
        return (x,) if y is None else (x, y)

    def transitions(self, state):
        out: dict[tuple, list] = {}
        for x in state.sites:
            r1 = state.site_counts(x).get(1, 0)
            for event, rate in self._site_events(state, x):
                if event[0] == "jump":
                    targets = [(y, r1 * t) for y, t in self.kernel.row(x) if y != x and t > 0]
                else:
                    targets = [(None, rate)]
                for y, rr in targets:
                    new = state.copy()
                    self._apply(new, x, event, y)
                    key = new.key()
                    if key in out:
                        out[key][0] += rr
                    else:
                        out[key] = [rr, new]
        return {k: (v[0], v[1]) for k, v in out.items()}

    def log_stationary_weight(self, state):
        return log_weight_spatial(self.lattice, self.weights, state)


class ZeroRangeProcess(Process):
    """Particles leave x at rate g(eta_x) and jump to y ~ t(x, .)."""

    def __init__(self, lattice: LatticeWeights, g: Callable[[int], float],
                 kernel: IndependentKernel | MatrixKernel | None = None,
                 log_site_weight: Callable[[int], float] | None = None):
        self.lattice = lattice
        self.g = g
        self.kernel = kernel or IndependentKernel(lattice)
        self._log_site_weight = log_site_weight

    @classmethod
    def from_weights(cls, lattice: LatticeWeights, weights: WeightSequence, n_max: int,
                     kernel=None) -> "ZeroRangeProcess":
        """Rates g(m) = h_{m-1}/h_m, invariant law prod h_{eta_x} exp(-eta_x V)."""
        h = h_from_theta(weights, n_max + 1)
        g = lambda m: 0.0 if m == 0 else math.exp(h.log_h[m - 1] - h.log_h[m])
        return cls(lattice, g, kernel, lambda m: float(h.log_h[m]))

    def site_rate(self, state, x):
        return self.g(state.eta(x))

    def fire(self, state, x, rng):
        y = self.kernel.sample(x, rng)
        state.move(x, y)
        return (x, y)

    def transitions(self, state):
        out: dict[tuple, list] = {}
        for x in state.sites:
            gx = self.g(state.eta(x))
            for y, t in self.kernel.row(x):
                if y == x or t == 0:
                    continue
                new = state.copy()
                new.move(x, y)
                key = new.key()
                if key in out:
                    out[key][0] += gx * t
                else:
                    out[key] = [gx * t, new]
        return {k: (v[0], v[1]) for k, v in out.items()}

    def log_stationary_weight(self, state):
        if self._log_site_weight is None:
            raise DomainError("no invariant weights attached to this process")
        total = 0.0
        for x, m in state.occupations().items():
            total += self._log_site_weight(m) - m * self.lattice.potential_at(x)
        return total

    def initial_state(self, kind, n, rng=None):
        st = super().initial_state(kind if kind != "canonical" else "singletons", n, rng)
        return OccupationState(st.occupations())

    def jump_probabilities(self, state) -> dict[tuple, float]:
        """Jump-chain law from ``state`` keyed by the successor occupation key."""
        tr = self.transitions(state)
        total = sum(r for r, _ in tr.values())
        return {k: r / total for k, (r, _) in tr.items()}


# ---------------------------------------------------------------------------
# simulation


def _max_part(state) -> int:
    c = state.counts()
    return max(c) if c else 0


OBSERVABLES: dict[str, Callable] = {
    "eta": lambda st, lat: st.eta_key(),
    "key": lambda st, lat: st.key(),
    "r": lambda st, lat: tuple(sorted(st.counts().items())),
    "n": lambda st, lat: st.n,
    "H0": lambda st, lat: st.eta(lat.site(0)),
    "M": lambda st, lat: max(st.occupations().values(), default=0),
    "T": lambda st, lat: _max_part(st),
}


@dataclass
class TrajectoryRecord:
    times: list[float]
    values: dict[str, list]
    final_state: object
    n_events: int
    truncated: bool = False
    meta: dict = field(default_factory=dict)


def simulate(process: Process, state, rng: np.random.Generator, horizon: float | None = None,
             max_events: int | None = None, epochs: Sequence[float] | None = None,
             observables: Sequence[str] = ("eta",), copy: bool = True) -> TrajectoryRecord:
    """Gillespie trajectory from ``state``.

    With ``epochs`` the observables are recorded at those times (the state in
    force at each epoch); otherwise after every event, starting at t = 0.
    Stops at ``horizon`` (default: last epoch) or after ``max_events``; in the
    latter case the record is flagged truncated.
    """
    if horizon is None and epochs is None and max_events is None:
        raise DomainError("give a horizon, epochs or an event budget")
    state = state.copy() if copy else state
    lat = process.lattice
    fns = {name: OBSERVABLES[name] for name in observables}
    values: dict[str, list] = {name: [] for name in observables}
    times: list[float] = []
    n0 = state.n

    def record(t):
        times.append(t)
        for name, fn in fns.items():
            values[name].append(fn(state, lat))

    ep = None if epochs is None else np.asarray(sorted(epochs), dtype=float)
    if ep is not None and horizon is None:
        horizon = float(ep[-1]) if len(ep) else 0.0
    horizon = math.inf if horizon is None else horizon
    cache = RateCache(process, state)
    t = 0.0
    k = 0
    events = 0
    truncated = False
    if ep is None:
        record(0.0)
    while True:
        if max_events is not None and events >= max_events:
            truncated = t < horizon
            break
        total = cache.total
        dt = rng.exponential(1.0 / total) if total > 0 else math.inf
        t_next = t + dt
        if ep is not None:
            while k < len(ep) and ep[k] < t_next:
                if ep[k] <= horizon:
                    record(float(ep[k]))
                k += 1
        if t_next > horizon:
            break
        x = cache.choose(rng.random() * total)
        touched = process.fire(state, x, rng)
        cache.update(state, touched)
        events += 1
        t = t_next
        assert state.n == n0
        if ep is None:
            record(t)
    return TrajectoryRecord(times, values, state, events, truncated)


# ---------------------------------------------------------------------------
# enumeration-scale checks


def state_space(process: Process, n: int, cap: int = 200_000) -> list:
    """All states of mass n over the process sites."""
    if isinstance(process, ZeroRangeProcess):
        S = len(process.sites)
        if math.comb(n + S - 1, S - 1) > cap:
            raise StateSpaceTooLargeError("occupation space exceeds cap")
        return [OccupationState({x: m for x, m in zip(process.sites, eta) if m})
                for eta in enumerate_occupations(S, n)]
    states = list(enumerate_spatial(process.sites, n, cap=cap))
    if len(states) > cap:
        raise StateSpaceTooLargeError("state space exceeds cap")
    return states


@dataclass(frozen=True)
class DetailedBalanceReport:
    max_violation: float
    n_states: int
    n_transitions: int
    windowed: bool


def check_detailed_balance(process: Process, n: int, cap: int = 200_000) -> DetailedBalanceReport:
    """max over transitions of |P(s)q(s,s') - P(s')q(s',s)| / max(P(s)q(s,s'), P(s')q(s',s))."""
    states = state_space(process, n, cap)
    index = {s.key(): i for i, s in enumerate(states)}
    logw = np.array([process.log_stationary_weight(s) for s in states])
    shift = np.max(logw[np.isfinite(logw)]) if np.any(np.isfinite(logw)) else 0.0
    w = np.exp(logw - shift)
    trans = [process.transitions(s) for s in states]
    worst = 0.0
    count = 0
    for i, tr in enumerate(trans):
        ki = states[i].key()
        for key, (rate, _) in tr.items():
            count += 1
            j = index.get(key)
            if j is None:
                worst = max(worst, 1.0)
                continue
            back = trans[j].get(ki, (0.0, None))[0]
            a, b = w[i] * rate, w[j] * back
            scale = max(a, b)
            if scale > 0:
                worst = max(worst, abs(a - b) / scale)
    windowed = process.lattice.potential.is_trap
    return DetailedBalanceReport(worst, len(states), count, windowed)


def generator_matrix(process: Process, n: int, cap: int = 20_000) -> tuple[list, np.ndarray]:
    """(states, Q) with Q[i, j] the rate i -> j and diagonal minus the row sums."""
    states = state_space(process, n, cap)
    index = {s.key(): i for i, s in enumerate(states)}
    Q = np.zeros((len(states), len(states)))
    for i, s in enumerate(states):
        for key, (rate, _) in process.transitions(s).items():
            Q[i, index[key]] += rate
    Q[np.diag_indices_from(Q)] = -Q.sum(axis=1)
    return states, Q


def spectral_gap(Q: np.ndarray, weights: np.ndarray) -> float:
    """Smallest non-zero eigenvalue of -Q for a generator reversible w.r.t. ``weights``."""
    s = np.sqrt(weights / weights.sum())
    sym = (s[:, None] * Q) / s[None, :]
    sym = 0.5 * (sym + sym.T)
    ev = np.sort(-np.linalg.eigvalsh(sym))
    return float(ev[1]) if len(ev) > 1 else math.inf


# ---------------------------------------------------------------------------
# projections and effective rates


def zero_range_projection(record: TrajectoryRecord) -> tuple[list[float], list[tuple]]:
    """Occupation path (times, eta keys) from a record that stored 'eta'."""
    if "eta" not in record.values:
        raise DomainError("record has no occupation snapshots")
    return list(record.times), list(record.values["eta"])


def jump_chain(path: Sequence[tuple]) -> list[tuple]:
    """Drop consecutive repeats (null events) from an occupation path."""
    out: list[tuple] = []
    for eta in path:
        if not out or out[-1] != eta:
            out.append(eta)
    return out


def transition_counts(chain: Sequence[tuple]) -> Counter:
    return Counter(zip(chain[:-1], chain[1:]))


def effective_zrp_rate(weights: WeightSequence, eta: int, t_xy: float = 1.0) -> float:
    """theta_1 h_{eta-1} / h_eta * t(x, y)."""
    if eta < 1:
        raise DomainError("eta must be at least 1")
    h = h_from_theta(weights, eta)
    return weights(1) * math.exp(h.log_h[eta - 1] - h.log_h[eta]) * t_xy


def effective_coagulation_rate(lattice: LatticeWeights, a_j: float, r1: int, rj: int, j: int) -> float:
    """a_j r_1 r_j sum_x p_x1 p_xj, using sum_x p_x1 p_xj = c_{j+1}/(c_1 c_j)."""
    c1, cj, cj1 = (lattice.effective_weight(k) for k in (1, j, j + 1))
    return a_j * r1 * rj * cj1 / (c1 * cj)
