"""Spatial partition states, exact densities and samplers for the canonical and
grand-canonical measures."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import (DivergenceError, DomainError, IterationCapError, MassMismatchError,
                     StateSpaceTooLargeError, UnsampleableMassError)
from .lattice import LatticeWeights
from .partitions import (GibbsPartitionMeasure, HTable, IntegerPartition, convolution_table,
                         enumerate_partitions, gibbs_prob, h_from_theta,
                         size_biased_sizes, size_biased_sizes_batch)
from .weights import WeightSequence, levy_exponent, weighted_sum

Site = tuple


class SpatialPartitionState:
    """Sparse map site -> integer partition, stored as counts r_xj.

    Cached views: occupations eta_x, global counts r_j and the total n. Empty
    sites are never stored.
    """

    __slots__ = ("_r", "_eta", "_rj", "n")

    def __init__(self, parts: Mapping[Site, IntegerPartition | Iterable[int]] | None = None):
        self._r: dict[Site, dict[int, int]] = {}
        self._eta: dict[Site, int] = {}
        self._rj: dict[int, int] = {}
        self.n = 0
        if parts:
            for site, part in parts.items():
                for j in part:
                    self.add(site, int(j))

    @classmethod
    def from_components(cls, sites: Sequence[Site], sizes: Sequence[int]) -> "SpatialPartitionState":
        st = cls()
        for x, j in zip(sites, sizes):
            st.add(tuple(x), int(j))
        return st

    @classmethod
    def from_counts(cls, counts: Mapping[Site, Mapping[int, int]]) -> "SpatialPartitionState":
        st = cls()
        for x, row in counts.items():
            for j, r in row.items():
                if r:
                    st.add(tuple(x), int(j), int(r))
        return st

    def add(self, site: Site, j: int, count: int = 1) -> None:
        if j < 1 or count < 0:
            raise DomainError("component sizes must be positive")
        if count == 0:
            return
        row = self._r.get(site)
        if row is None:
            row = self._r[site] = {}
            self._eta[site] = 0
        row[j] = row.get(j, 0) + count
        self._eta[site] += j * count
        self._rj[j] = self._rj.get(j, 0) + count
        self.n += j * count

    def remove(self, site: Site, j: int, count: int = 1) -> None:
        row = self._r.get(site)
        have = row.get(j, 0) if row else 0
        if have < count:
            raise DomainError(f"no {count} component(s) of size {j} at {site}")
        if have == count:
            del row[j]
        else:
            row[j] = have - count
        self._eta[site] -= j * count
        if not row:
            del self._r[site]
            del self._eta[site]
        left = self._rj[j] - count
        if left:
            self._rj[j] = left
        else:
            del self._rj[j]
        self.n -= j * count

    # views
    def eta(self, site: Site) -> int:
        return self._eta.get(site, 0)

    def occupations(self) -> dict[Site, int]:
        return dict(self._eta)

    def counts(self) -> dict[int, int]:
        return dict(sorted(self._rj.items()))

    def site_counts(self, site: Site) -> dict[int, int]:
        return dict(self._r.get(site, {}))

    def partition(self, site: Site) -> IntegerPartition:
        return IntegerPartition.from_counts(self._r.get(site, {}))

    @property
    def sites(self) -> list[Site]:
        return list(self._r)

    def items(self) -> Iterator[tuple[Site, dict[int, int]]]:
        return iter(self._r.items())

    def key(self) -> tuple:
        return tuple(sorted((x, tuple(sorted(row.items()))) for x, row in self._r.items()))

    def eta_key(self) -> tuple:
        return tuple(sorted(self._eta.items()))

    def copy(self) -> "SpatialPartitionState":
        st = SpatialPartitionState()
        st._r = {x: dict(row) for x, row in self._r.items()}
        st._eta = dict(self._eta)
        st._rj = dict(self._rj)
        st.n = self.n
        return st

    def check(self) -> None:
        """Assert the cache invariants."""
        total = 0
        rj: dict[int, int] = {}
        for x, row in self._r.items():
            assert row, "empty partition stored"
            eta = sum(j * r for j, r in row.items())
            assert eta == self._eta[x]
            total += eta
            for j, r in row.items():
                assert r > 0
                rj[j] = rj.get(j, 0) + r
        assert total == self.n
        assert rj == self._rj

    def __eq__(self, other) -> bool:
        return isinstance(other, SpatialPartitionState) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        body = ", ".join(f"{x}: {self.partition(x).parts}" for x in sorted(self._r))
        return f"SpatialPartitionState({{{body}}})"


# ---------------------------------------------------------------------------
# partition functions


@dataclass
class EffectiveZTable:
    """theta_j^eff = theta_j c_j(L) and the table Z_{L,0..n}."""

    lattice: LatticeWeights
    weights: WeightSequence
    n: int
    force_log: bool | None = None
    log_theta_eff: np.ndarray = field(init=False)
    table: HTable = field(init=False)

    def __post_init__(self):
        c = self.lattice.effective_weights(self.n)
        with np.errstate(divide="ignore"):
            self.log_theta_eff = self.weights.log_array(self.n) + np.log(np.where(c > 0, c, 0.0))
        self.log_theta_eff[0] = -np.inf
        force = self.n > 10_000 if self.force_log is None else self.force_log
        self.table = convolution_table(self.log_theta_eff, self.n, force_log=force)

    @property
    def log_domain(self) -> bool:
        return self.table.log_domain

    def log_Z(self, m: int | None = None) -> float:
        return float(self.table.log_h[self.n if m is None else m])

    def Z(self, m: int | None = None) -> float:
        return float(np.exp(self.log_Z(m)))


def partition_function(lat: LatticeWeights, theta: WeightSequence, n: int) -> float:
    """Z_{L,n}; may be inf when the value overflows (see log_partition_function)."""
    return EffectiveZTable(lat, theta, n).Z()


def log_partition_function(lat: LatticeWeights, theta: WeightSequence, n: int) -> float:
    return EffectiveZTable(lat, theta, n).log_Z()


def _site_log_potential(lat: LatticeWeights, site: Site) -> float:
    return lat.potential_at(site)


def log_weight_spatial(lat: LatticeWeights, theta: WeightSequence, state: SpatialPartitionState) -> float:
    """log of prod_{x,j} ((theta_j/j) exp(-j V(x/L)))**r_xj / r_xj!."""
    if state.n == 0:
        return 0.0
    lt = theta.log_array(max(state.counts()))
    total = 0.0
    for x, row in state.items():
        v = _site_log_potential(lat, x)
        for j, r in row.items():
            if v == math.inf or lt[j] == -math.inf:
                return -math.inf
            total += r * (lt[j] - math.log(j) - j * v) - math.lgamma(r + 1)
    return total


def prob_spatial(lat: LatticeWeights, theta: WeightSequence, n: int, state: SpatialPartitionState,
                 table: EffectiveZTable | None = None) -> float:
    """P_{L,n}(state)."""
    if state.n != n:
        raise MassMismatchError(f"state of mass {state.n} under a measure of mass {n}")
    table = table or EffectiveZTable(lat, theta, n)
    lw = log_weight_spatial(lat, theta, state)
    return 0.0 if lw == -math.inf else math.exp(lw - table.log_Z(n))


def prob_eta(lat: LatticeWeights, theta: WeightSequence, n: int, eta: Mapping[Site, int],
             table: EffectiveZTable | None = None, h: HTable | None = None) -> float:
    """Occupation marginal: prod_x h_{eta_x} exp(-eta_x V(x/L)) / Z_{L,n}."""
    occ = {tuple(x): int(m) for x, m in eta.items() if m}
    if sum(occ.values()) != n:
        raise MassMismatchError("occupations do not sum to n")
    table = table or EffectiveZTable(lat, theta, n)
    h = h or h_from_theta(theta, n)
    lw = 0.0
    for x, m in occ.items():
        v = _site_log_potential(lat, x)
        if v == math.inf or h.log_h[m] == -math.inf:
            return 0.0
        lw += h.log_h[m] - m * v
    return math.exp(lw - table.log_Z(n))


def prob_r(lat: LatticeWeights, theta: WeightSequence, n: int, r: Mapping[int, int],
           table: EffectiveZTable | None = None) -> float:
    """Component-size marginal: prod_j (theta_j^eff/j)**r_j / r_j! / Z_{L,n}."""
    rr = {int(j): int(c) for j, c in r.items() if c}
    if sum(j * c for j, c in rr.items()) != n:
        raise MassMismatchError("component counts do not sum to n")
    table = table or EffectiveZTable(lat, theta, n)
    lw = 0.0
    for j, c in rr.items():
        lte = table.log_theta_eff[j]
        if lte == -math.inf:
            return 0.0
        lw += c * (lte - math.log(j)) - math.lgamma(c + 1)
    return math.exp(lw - table.log_Z(n))


def conditional_given_eta(lat: LatticeWeights, theta: WeightSequence,
                          state: SpatialPartitionState) -> float:
    """P(state | occupations) = prod_x nu_{eta_x}(lambda_x)."""
    if state.n == 0:
        return 1.0
    h = h_from_theta(theta, max(state.occupations().values()))
    p = 1.0
    for x in state.sites:
        part = state.partition(x)
        p *= gibbs_prob(GibbsPartitionMeasure(theta, part.weight, h), part)
    return p


def conditional_given_r(lat: LatticeWeights, state: SpatialPartitionState) -> float:
    """P(state | global counts): independent placement of components by p_xj."""
    lp = 0.0
    for j, rj in state.counts().items():
        lp += math.lgamma(rj + 1)
        cj = lat.effective_weight(j)
        for x, row in state.items():
            r = row.get(j, 0)
            if r:
                w = lat.weight(x, j)
                if w == 0:
                    return 0.0
                lp += r * math.log(w / cj) - math.lgamma(r + 1)
    return math.exp(lp)


# ---------------------------------------------------------------------------
# enumeration


def enumerate_occupations(n_sites: int, n: int) -> Iterator[tuple[int, ...]]:
    """All compositions of n into n_sites non-negative parts."""
    if n_sites == 0:
        if n == 0:
            yield ()
        return
    for bars in itertools.combinations(range(n + n_sites - 1), n_sites - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(n + n_sites - 1 - prev - 1)
        yield tuple(out)


def enumerate_spatial(sites: Sequence[Site], n: int, cap: int = 2_000_000) -> Iterator[SpatialPartitionState]:
    """Every spatial partition of total mass n over the given sites."""
    sites = [tuple(s) for s in sites]
    count = math.comb(n + len(sites) - 1, max(len(sites) - 1, 0)) if sites else (1 if n == 0 else 0)
    if count > cap:
        raise StateSpaceTooLargeError(f"{count} occupation vectors exceed the cap {cap}")
    parts_cache = {m: list(enumerate_partitions(m)) for m in range(n + 1)}
    for eta in enumerate_occupations(len(sites), n):
        choices = [parts_cache[m] for m in eta]
        for combo in itertools.product(*choices):
            yield SpatialPartitionState({x: p.parts for x, p in zip(sites, combo) if p.parts})


# ---------------------------------------------------------------------------
# canonical sampling


class CanonicalSampler:
    """Exact two-stage sampler for P_{L,n}: component sizes by size-biased
    recursion on (theta^eff, Z), then independent placement by p_xj."""

    def __init__(self, lat: LatticeWeights, theta: WeightSequence, n: int,
                 table: EffectiveZTable | None = None):
        self.lattice = lat
        self.weights = theta
        self.n = int(n)
        self.table = table or EffectiveZTable(lat, theta, self.n)
        if not np.isfinite(self.table.log_Z(self.n)):
            raise UnsampleableMassError(f"Z_(L,{n}) vanishes")

    def sample_sizes(self, rng: np.random.Generator) -> np.ndarray:
        return np.asarray(size_biased_sizes(self.table.log_theta_eff, self.table.table.log_h,
                                            self.n, rng), dtype=np.int64)

    def place(self, sizes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        idx = np.empty(len(sizes), dtype=np.int64)
        if self.lattice.potential.kind == "square":
            return self.lattice.sample_site_indices(1, len(sizes), rng)
        for j in np.unique(sizes):
            sel = np.flatnonzero(sizes == j)
            idx[sel] = self.lattice.sample_site_indices(int(j), len(sel), rng)
        return idx

    def sample_components(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """(site indices, sizes), one entry per component."""
        sizes = self.sample_sizes(rng)
        return self.place(sizes, rng), sizes

    def sample(self, rng: np.random.Generator) -> SpatialPartitionState:
        idx, sizes = self.sample_components(rng)
        pts = self.lattice.points
        return SpatialPartitionState.from_components([tuple(int(v) for v in pts[i]) for i in idx], sizes)

    def sample_dense(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Batch of draws as dense counts with shape (size, n_sites, n); entry
        [b, x, j-1] is r_xj. Intended for small lattices."""
        S = self.lattice.n_sites
        rj = size_biased_sizes_batch(self.table.log_theta_eff, self.table.table.log_h,
                                     self.n, size, rng)
        out = np.zeros((size, S, self.n), dtype=np.int64)
        for j in range(1, self.n + 1):
            counts = rj[:, j - 1]
            if not counts.any():
                continue
            p = self.lattice.site_probabilities(j)
            out[:, :, j - 1] = rng.multinomial(counts, p)
        return out


def sample_canonical_exact(lat: LatticeWeights, theta: WeightSequence, n: int,
                           rng: np.random.Generator) -> SpatialPartitionState:
    return CanonicalSampler(lat, theta, n).sample(rng)


# ---------------------------------------------------------------------------
# grand canonical


@dataclass
class GrandCanonicalConfig:
    """Poisson intensities (theta_j/j) z**j exp(-j V(x/L)) with a certified
    truncation j <= J."""

    lattice: LatticeWeights
    weights: WeightSequence
    z: float
    eps: float = 1e-12
    j_cap: int = 1_000_000
    J: int = field(init=False)
    intensities: np.ndarray = field(init=False)  # index j, entry 0 unused
    tail_bound: float = field(init=False)

    def __post_init__(self):
        if not self.z > 0:
            raise DomainError("activity must be positive")
        c1 = self.lattice.effective_weight(1)
        full = weighted_sum(self.weights, s=-1.0, z=self.z)
        if full.divergent or not math.isfinite(full.value):
            raise DivergenceError("Poisson intensity mass diverges at this activity")
        J = 16
        while True:
            lt = self.weights.log_array(J)
            j = np.arange(J + 1, dtype=float)
            with np.errstate(divide="ignore"):
                base = np.exp(lt + j * math.log(self.z) - np.log(np.maximum(j, 1)))
            base[0] = 0.0
            partial = float(base.sum())
            tail = c1 * max(full.value - partial, 0.0) + c1 * full.tail_bound
            total = c1 * full.value
            if tail <= self.eps * max(1.0, total) or J >= self.j_cap:
                break
            J = min(2 * J, self.j_cap)
        if tail > self.eps * max(1.0, total):
            raise DivergenceError(f"intensity tail {tail:.3g} not certified below eps by j = {J}")
        c = self.lattice.effective_weights(J)
        self.J = J
        self.intensities = base * c
        self.tail_bound = tail

    @property
    def mean_total(self) -> float:
        """E N = sum_j theta_j z**j c_j(L) (truncated at J)."""
        return float(np.sum(np.arange(self.J + 1) * self.intensities))

    @property
    def log_empty_probability(self) -> float:
        return -float(self.intensities.sum())


def sample_grand_canonical(cfg: GrandCanonicalConfig, rng: np.random.Generator) -> SpatialPartitionState:
    """Independent Poisson counts: R_j totals, then scatter by p_xj."""
    R = rng.poisson(cfg.intensities)
    pts = cfg.lattice.points
    sites: list[Site] = []
    sizes: list[int] = []
    for j in np.flatnonzero(R):
        idx = cfg.lattice.sample_site_indices(int(j), int(R[j]), rng)
        sites.extend(tuple(int(v) for v in pts[i]) for i in idx)
        sizes.extend([int(j)] * int(R[j]))
    return SpatialPartitionState.from_components(sites, sizes)


def grand_canonical_dense(cfg: GrandCanonicalConfig, size: int, rng: np.random.Generator,
                          J: int | None = None) -> np.ndarray:
    """Per-(site, j) Poisson counts for j <= J, shape (size, n_sites, J)."""
    J = cfg.J if J is None else min(J, cfg.J)
    lam = np.stack([(cfg.intensities[j] * cfg.lattice.site_probabilities(j)) for j in range(1, J + 1)],
                   axis=1)
    return rng.poisson(lam, size=(size,) + lam.shape)


def sample_canonical_rejection(cfg: GrandCanonicalConfig, n: int, rng: np.random.Generator,
                               max_iter: int = 1_000_000) -> SpatialPartitionState:
    """Grand-canonical draws repeated until N = n."""
    for _ in range(max_iter):
        st = sample_grand_canonical(cfg, rng)
        if st.n == n:
            return st
    est = rejection_acceptance(cfg, n)
    raise IterationCapError(f"no draw with N = {n} in {max_iter} attempts",
                            {"expected_acceptance": est, "attempts": max_iter})


def sample_canonical_rejection_dense(cfg: GrandCanonicalConfig, n: int, size: int,
                                     rng: np.random.Generator, block: int = 200_000,
                                     max_draws: int = 10**9) -> tuple[np.ndarray, float]:
    """``size`` accepted draws as dense counts (size, n_sites, n) and the
    empirical acceptance rate.

    Each grand-canonical draw is generated as: a Bernoulli for the event that
    some component is larger than n (an automatic rejection), then the Poisson
    counts for sizes up to n. This is the same law as full draws conditioned
    on N = n.
    """
    S = cfg.lattice.n_sites
    if n == 0:
        p_empty = math.exp(cfg.log_empty_probability)
        return np.zeros((size, S, 0), dtype=np.int64), p_empty
    J = min(n, cfg.J)
    big = float(cfg.intensities[J + 1:].sum()) + cfg.tail_bound
    p_big = -math.expm1(-big)
    lam = np.stack([cfg.intensities[j] * cfg.lattice.site_probabilities(j) for j in range(1, J + 1)],
                   axis=1)
    weights = np.arange(1, J + 1)
    accepted = []
    got = 0
    drawn = 0
    while got < size:
        if drawn >= max_draws:
            raise IterationCapError("rejection budget exhausted",
                                    {"accepted": got, "draws": drawn})
        counts = rng.poisson(lam, size=(block,) + lam.shape)
        clear = rng.random(block) >= p_big
        N = (counts * weights).sum(axis=(1, 2))
        ok = clear & (N == n)
        drawn += block
        if ok.any():
            accepted.append(counts[ok])
            got += int(ok.sum())
    out = np.concatenate(accepted)[:size]
    full = np.zeros((size, S, n), dtype=np.int64)
    full[:, :, :J] = out
    return full, got / drawn


def rejection_acceptance(cfg: GrandCanonicalConfig, n: int) -> float:
    """P(N = n) = z**n Z_{L,n} exp(-total intensity)."""
    tab = EffectiveZTable(cfg.lattice, cfg.weights, n)
    return math.exp(n * math.log(cfg.z) + tab.log_Z(n) + cfg.log_empty_probability)


def single_site_occupation_pmf(lat: LatticeWeights, theta: WeightSequence, z: float, site: Site,
                               m_max: int = 200) -> np.ndarray:
    """P(H_x = m) for m = 0..m_max under the grand-canonical measure."""
    v = lat.potential_at(site)
    out = np.zeros(m_max + 1)
    if v == math.inf:
        out[0] = 1.0
        return out
    w = z * math.exp(-v)
    G = levy_exponent(theta, w)
    if not math.isfinite(G):
        raise DivergenceError("one-site Levy mass diverges at this activity")
    h = h_from_theta(theta, m_max)
    m = np.arange(m_max + 1)
    with np.errstate(divide="ignore"):
        out = np.exp(h.log_h + m * math.log(w) - G)
    return out


def dense_key(counts: np.ndarray) -> np.ndarray:
    """Row-wise encoding of dense (batch, sites, J) counts as integers via np.unique."""
    flat = counts.reshape(counts.shape[0], -1)
    _, inverse = np.unique(flat, axis=0, return_inverse=True)
    return inverse.ravel()


def state_from_dense(lat: LatticeWeights, counts: np.ndarray) -> SpatialPartitionState:
    """One dense (sites, J) count matrix -> state."""
    st = SpatialPartitionState()
    for i, j in zip(*np.nonzero(counts)):
        st.add(lat.site(int(i)), int(j) + 1, int(counts[i, j]))
    return st
