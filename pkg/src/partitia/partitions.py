"""Integer partitions, the theta <-> h calculus and one-site Gibbs partitions."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import (DivergenceError, DomainError, InvalidTableError,
                     InvalidWeightsError, MassMismatchError, UnsampleableMassError)
from .weights import WeightSequence, levy_mass

OVERFLOW_SWITCH = 1e300


@dataclass(frozen=True)
class IntegerPartition:
    """Non-increasing tuple of positive parts."""

    parts: tuple[int, ...] = ()

    def __post_init__(self):
        parts = tuple(int(p) for p in self.parts)
        if any(p < 1 for p in parts):
            raise DomainError("parts must be positive integers")
        if any(a < b for a, b in zip(parts, parts[1:])):
            parts = tuple(sorted(parts, reverse=True))
        object.__setattr__(self, "parts", parts)

    @classmethod
    def from_counts(cls, counts: Mapping[int, int]) -> "IntegerPartition":
        parts: list[int] = []
        for j in sorted(counts, reverse=True):
            r = int(counts[j])
            if r < 0:
                raise DomainError("occupation counts must be non-negative")
            parts.extend([int(j)] * r)
        return cls(tuple(parts))

    @property
    def weight(self) -> int:
        return sum(self.parts)

    @property
    def counts(self) -> dict[int, int]:
        """Occupation view j -> r_j (only positive counts)."""
        return dict(sorted(Counter(self.parts).items()))

    def __len__(self) -> int:
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)


def enumerate_partitions(m: int) -> Iterator[IntegerPartition]:
    """All partitions of m in reverse lexicographic order."""
    if m < 0:
        raise DomainError("m must be non-negative")
    if m == 0:
        yield IntegerPartition(())
        return

    def rec(rest: int, cap: int, prefix: list[int]):
        if rest == 0:
            yield IntegerPartition(tuple(prefix))
            return
        for p in range(min(rest, cap), 0, -1):
            prefix.append(p)
            yield from rec(rest - p, p, prefix)
            prefix.pop()

    yield from rec(m, m, [])


@dataclass(frozen=True)
class HTable:
    """h_0..h_N with a log-scale companion.

    When ``log_domain`` is set the linear values overflowed and ``h`` may hold
    inf; ``log_h`` is always authoritative.
    """

    h: np.ndarray
    log_h: np.ndarray
    log_domain: bool = False

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.ndim != 1 or h.size == 0:
            raise InvalidTableError("h table must be a non-empty vector")
        if h[0] != 1.0:
            raise InvalidTableError(f"h_0 must equal 1, got {h[0]}")
        if np.any(h < 0) or np.any(np.isnan(h)):
            raise InvalidTableError("h entries must be non-negative")

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "HTable":
        h = np.asarray(values, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return cls(h, np.log(h), False)

    @property
    def N(self) -> int:
        return len(self.h) - 1

    def __len__(self) -> int:
        return len(self.h)

    def __getitem__(self, m):
        return self.h[m]


def convolution_table(log_theta: np.ndarray, n: int, force_log: bool = False) -> HTable:
    """Solve m*h_m = sum_{j=1}^m theta_j h_{m-j} for m <= n.

    ``log_theta`` holds log theta_j for j = 0..n (entry 0 ignored). The linear
    recurrence is used until a value exceeds 1e300, after which the whole
    table is recomputed with log-sum-exp.
    """
    log_theta = np.asarray(log_theta, dtype=float)
    if len(log_theta) < n + 1:
        raise InvalidWeightsError("weight array shorter than requested table")
    if np.any(np.isnan(log_theta[1:n + 1])) or np.any(log_theta[1:n + 1] == np.inf):
        raise InvalidWeightsError("weights must be finite and non-negative")
    if not force_log:
        theta = np.exp(log_theta[: n + 1])
        h = np.empty(n + 1)
        h[0] = 1.0
        ok = True
        for m in range(1, n + 1):
            v = np.dot(theta[1:m + 1], h[m - 1::-1]) / m
            if not v < OVERFLOW_SWITCH:
                ok = False
                break
            h[m] = v
        if ok:
            with np.errstate(divide="ignore"):
                return HTable(h, np.log(h), False)
    lh = np.empty(n + 1)
    lh[0] = 0.0
    lt = log_theta[1:n + 1]
    for m in range(1, n + 1):
        lh[m] = logsumexp(lt[:m] + lh[m - 1::-1]) - math.log(m)
    with np.errstate(over="ignore"):
        h = np.exp(lh)
    return HTable(h, lh, True)


def h_from_theta(theta: WeightSequence, N: int) -> HTable:
    """The single-site normalizations h_0..h_N for weights theta."""
    if N < 0:
        raise DomainError("N must be non-negative")
    return convolution_table(theta.log_array(N), N)


def theta_from_h(h: HTable | Sequence[float]) -> np.ndarray:
    """Invert the h recurrence: theta_n = n h_n - sum_{j<n} theta_j h_{n-j}.

    Returns theta_0..theta_N with theta_0 = 0. Entries may be negative, which
    signals a table that is not infinitely divisible. The subtraction loses
    about log10(n h_n / theta_n) digits, so tables growing much faster than
    theta (e.g. theta_j = j**1.5 at n in the hundreds) cannot be inverted in
    double precision.
    """
    if not isinstance(h, HTable):
        vals = np.asarray(h, dtype=float)
        if vals.size == 0 or vals[0] != 1.0:
            raise InvalidTableError("h_0 must equal 1")
        h = HTable.from_values(vals)
    if h.log_domain:
        return _theta_from_log_h(h.log_h)
    hv = h.h
    N = len(hv) - 1
    theta = np.zeros(N + 1)
    for n in range(1, N + 1):
        theta[n] = n * hv[n] - np.dot(theta[1:n], hv[n - 1:0:-1])
    return theta


def _theta_from_log_h(lh: np.ndarray) -> np.ndarray:
    # theta_n = h_n * (n - sum_{j<n} theta_j h_{n-j} / h_n); only the small
    # theta_n are representable so this is mainly useful near the bottom.
    N = len(lh) - 1
    theta = np.zeros(N + 1)
    for n in range(1, N + 1):
        ratios = np.exp(lh[n - 1:0:-1] - lh[n])
        theta[n] = math.exp(lh[n]) * (n - np.dot(theta[1:n], ratios)) if lh[n] < 700 else math.nan
    return theta


@dataclass(frozen=True)
class DivisibilityReport:
    divisible: bool
    first_violation: int | None
    theta: np.ndarray

    def __bool__(self) -> bool:
        return self.divisible


def is_infinitely_divisible(h: HTable | Sequence[float]) -> DivisibilityReport:
    """True iff the inverted theta_j are >= -tol, tol = 1e-12 * n * h_n."""
    table = h if isinstance(h, HTable) else HTable.from_values(h)
    theta = theta_from_h(table)
    n = np.arange(len(theta))
    tol = 1e-12 * np.maximum(n * table.h, 1e-300)
    bad = np.flatnonzero(theta[1:] < -tol[1:])
    if bad.size:
        return DivisibilityReport(False, int(bad[0]) + 1, theta)
    return DivisibilityReport(True, None, theta)


@dataclass(frozen=True)
class GibbsPartitionMeasure:
    """nu_m on partitions of m with weight prod (theta_j/j)**r_j / r_j! / h_m."""

    weights: WeightSequence
    m: int
    h: HTable = field(default=None)

    def __post_init__(self):
        if self.m < 0:
            raise DomainError("mass must be non-negative")
        if self.h is None:
            object.__setattr__(self, "h", h_from_theta(self.weights, self.m))
        elif self.h.N < self.m:
            raise InvalidTableError("h table shorter than the mass")

    def log_weight(self, part: IntegerPartition) -> float:
        counts = part.counts
        if not counts:
            return 0.0
        js = np.fromiter(counts.keys(), dtype=np.int64)
        rs = np.fromiter(counts.values(), dtype=float)
        lt = self.weights.log_array(int(js.max()))[js]
        if np.any(np.isneginf(lt)):
            return -math.inf
        return float(np.sum(rs * (lt - np.log(js)) - gammaln(rs + 1)))

    def prob(self, part: IntegerPartition) -> float:
        return gibbs_prob(self, part)

    def sample(self, rng: np.random.Generator) -> IntegerPartition:
        return sample_gibbs_partition(self, rng)

    def enumerate(self) -> Iterator[tuple[IntegerPartition, float]]:
        for part in enumerate_partitions(self.m):
            yield part, gibbs_prob(self, part)


def gibbs_prob(measure: GibbsPartitionMeasure, part: IntegerPartition) -> float:
    """nu_m(part)."""
    if part.weight != measure.m:
        raise MassMismatchError(f"partition of {part.weight} under a measure of mass {measure.m}")
    lw = measure.log_weight(part)
    if lw == -math.inf:
        return 0.0
    return math.exp(lw - measure.h.log_h[measure.m])


def _size_biased_logits(log_theta: np.ndarray, log_h: np.ndarray, m: int) -> np.ndarray:
    # log P(first pick = j), j = 1..m
    return log_theta[1:m + 1] + log_h[m - 1::-1] - log_h[m] - math.log(m)


def typical_size_pmf(theta: WeightSequence, h: HTable, n: int) -> np.ndarray:
    """P(size-biased component = l) = theta_l h_{n-l} / (n h_n) for l = 1..n."""
    if n < 1:
        raise DomainError("n must be at least 1")
    if h.N < n:
        raise InvalidTableError("h table shorter than n")
    if not np.isfinite(h.log_h[n]):
        raise UnsampleableMassError(f"h_{n} = 0")
    return np.exp(_size_biased_logits(theta.log_array(n), h.log_h, n))


def size_biased_sizes(log_theta: np.ndarray, log_h: np.ndarray, m: int,
                      rng: np.random.Generator) -> list[int]:
    """Component sizes of a draw from the Gibbs partition law with tables (theta, h)."""
    if m > 0 and not np.isfinite(log_h[m]):
        raise UnsampleableMassError(f"normalization vanishes at mass {m}")
    sizes: list[int] = []
    while m > 0:
        p = np.exp(_size_biased_logits(log_theta, log_h, m))
        cdf = np.cumsum(p)
        j = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")) + 1
        j = min(j, m)
        sizes.append(j)
        m -= j
    return sizes


def size_biased_sizes_batch(log_theta: np.ndarray, log_h: np.ndarray, m: int, size: int,
                            rng: np.random.Generator) -> np.ndarray:
    """Vectorized size-biased recursion: (size, m) array of counts r_j, column j-1."""
    if m > 0 and not np.isfinite(log_h[m]):
        raise UnsampleableMassError(f"normalization vanishes at mass {m}")
    counts = np.zeros((size, max(m, 1)), dtype=np.int64)
    if m == 0:
        return counts[:, :0]
    cdfs = {}
    for mm in range(1, m + 1):
        p = np.exp(_size_biased_logits(log_theta, log_h, mm))
        cdfs[mm] = np.cumsum(p) / p.sum()
    remaining = np.full(size, m, dtype=np.int64)
    rows = np.arange(size)
    while True:
        active = remaining > 0
        if not active.any():
            break
        u = rng.random(size)
        for mm in np.unique(remaining[active]):
            sel = rows[remaining == mm]
            j = np.searchsorted(cdfs[int(mm)], u[sel], side="right") + 1
            j = np.minimum(j, mm)
            counts[sel, j - 1] += 1
            remaining[sel] -= j
    return counts


def sample_gibbs_partition(measure: GibbsPartitionMeasure, rng: np.random.Generator) -> IntegerPartition:
    """Exact draw from nu_m by size-biased recursion."""
    sizes = size_biased_sizes(measure.weights.log_array(measure.m), measure.h.log_h,
                              measure.m, rng)
    return IntegerPartition(tuple(sizes))


def sample_gibbs_partitions(measure: GibbsPartitionMeasure, size: int,
                            rng: np.random.Generator) -> np.ndarray:
    """Many independent draws from nu_m as an array of counts r_1..r_m per row."""
    return size_biased_sizes_batch(measure.weights.log_array(measure.m), measure.h.log_h,
                                   measure.m, size, rng)


@dataclass(frozen=True)
class SubexponentialDiagnostic:
    ratios: np.ndarray  # d_n for n = 1..N
    levy_mass: float
    levy_tail_bound: float


def subexponential_diagnostic(theta: WeightSequence, N: int) -> SubexponentialDiagnostic:
    """Ratios d_n = n h_n / (theta_n exp(sum_j theta_j / j)) for n = 1..N."""
    mass = levy_mass(theta)
    if mass.divergent or not math.isfinite(mass.value):
        raise DivergenceError("sum theta_j / j diverges (infinite Levy mass)")
    h = h_from_theta(theta, N)
    lt = theta.log_array(N)[1:]
    if np.any(np.isneginf(lt)):
        raise ZeroDivisionError("theta_n = 0 in the diagnostic range")
    n = np.arange(1, N + 1)
    ratios = np.exp(np.log(n) + h.log_h[1:] - lt - mass.value)
    return SubexponentialDiagnostic(ratios, mass.value, mass.tail_bound)
