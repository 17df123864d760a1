"""Condensate statistics of sampled configurations and goodness-of-fit tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from ..errors import DomainError
from ..samplers import SpatialPartitionState


def default_cutoff(n: int) -> int:
    return max(1, math.isqrt(n))


@dataclass
class ReplicaRow:
    n: int
    H0: int
    M: int
    T: int
    S: int
    nu_hat: float
    mu_hat: float
    size_fractions: np.ndarray  # j R_j / n, j = 0..j_max
    occupation_fractions: np.ndarray  # k N_k / n, k = 0..k_max


def row_from_components(site_idx: np.ndarray, sizes: np.ndarray, n: int, K: int | None = None,
                        j_max: int = 5, k_max: int = 5, origin: int = 0) -> ReplicaRow:
    """Scalars of one configuration given as components (site index, size)."""
    site_idx = np.asarray(site_idx, dtype=np.int64)
    sizes = np.asarray(sizes, dtype=np.int64)
    if int(sizes.sum()) != n:
        raise DomainError("component sizes do not add up to n")
    K = default_cutoff(n) if K is None else K
    if n == 0:
        return ReplicaRow(0, 0, 0, 0, 0, 0.0, 0.0, np.zeros(j_max + 1), np.zeros(k_max + 1))
    sites, inv = np.unique(site_idx, return_inverse=True)
    eta = np.bincount(inv, weights=sizes).astype(np.int64)
    top = int(np.argmax(eta))
    M = int(eta[top])
    T = int(sizes.max())
    S = int(sizes[inv == top].max())
    pos = np.searchsorted(sites, origin)
    H0 = int(eta[pos]) if pos < len(sites) and sites[pos] == origin else 0
    nu = 1.0 - sizes[sizes <= K].sum() / n
    mu = 1.0 - eta[eta <= K].sum() / n
    jr = np.bincount(sizes[sizes <= j_max], minlength=j_max + 1)[: j_max + 1] * np.arange(j_max + 1) / n
    kn = np.bincount(eta[eta <= k_max], minlength=k_max + 1)[: k_max + 1] * np.arange(k_max + 1) / n
    return ReplicaRow(n, H0, M, T, S, float(nu), float(mu), jr, kn)


def row_from_state(state: SpatialPartitionState, origin=None, **kw) -> ReplicaRow:
    """Same as ``row_from_components`` for a SpatialPartitionState; sites are
    tuples and ``origin`` defaults to the zero site."""
    sites = state.sites
    if origin is None:
        origin = (0,) * (len(sites[0]) if sites else 1)
    label = {s: i + 1 for i, s in enumerate(sorted(set(sites) - {origin}))}
    label[origin] = 0
    idx, sz = [], []
    for site, counts in state.items():
        for j, c in counts.items():
            idx.extend([label[site]] * c)
            sz.extend([j] * c)
    return row_from_components(np.array(idx, dtype=np.int64), np.array(sz, dtype=np.int64), state.n,
                               origin=0, **kw)


@dataclass
class CondensateStats:
    """Per-replica scalars of an ensemble with means and standard errors."""

    K: int
    n: np.ndarray
    H0: np.ndarray
    M: np.ndarray
    T: np.ndarray
    S: np.ndarray
    nu_hat: np.ndarray
    mu_hat: np.ndarray
    size_fractions: np.ndarray
    occupation_fractions: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_rows(cls, rows: Sequence[ReplicaRow], K: int, meta: dict | None = None) -> "CondensateStats":
        if not rows:
            raise DomainError("empty ensemble")
        arr = lambda name, dt=np.int64: np.array([getattr(r, name) for r in rows], dtype=dt)
        out = cls(K, arr("n"), arr("H0"), arr("M"), arr("T"), arr("S"), arr("nu_hat", float),
                  arr("mu_hat", float), np.vstack([r.size_fractions for r in rows]),
                  np.vstack([r.occupation_fractions for r in rows]), dict(meta or {}))
        out.check()
        return out

    def __len__(self) -> int:
        return len(self.M)

    def check(self) -> None:
        if np.any(self.S > self.T) or np.any(self.T > self.M) or np.any(self.M > self.n):
            raise AssertionError("S_L <= T_L <= M_L <= n violated")

    @staticmethod
    def mean_se(x: np.ndarray) -> tuple[float, float]:
        x = np.asarray(x, dtype=float)
        if len(x) < 2:
            return float(x.mean()), math.nan
        return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))

    def summary(self) -> dict:
        out = {"replicas": len(self), "K": self.K}
        for name in ("H0", "M", "T", "S", "nu_hat", "mu_hat"):
            m, s = self.mean_se(getattr(self, name))
            out[name] = {"mean": m, "se": s}
        for name, arr in (("jR_j/n", self.size_fractions), ("kN_k/n", self.occupation_fractions)):
            out[name] = {str(i): dict(zip(("mean", "se"), self.mean_se(arr[:, i])))
                         for i in range(1, arr.shape[1])}
        return out


def extract_stats(ensemble: Iterable, n: int | None = None, K: int | None = None, j_max: int = 5,
                  k_max: int = 5, meta: dict | None = None) -> CondensateStats:
    """Statistics of states or (site indices, sizes) pairs."""
    rows = []
    for item in ensemble:
        if isinstance(item, SpatialPartitionState):
            kk = default_cutoff(item.n) if K is None else K
            rows.append(row_from_state(item, K=kk, j_max=j_max, k_max=k_max))
        else:
            idx, sizes = item
            m = int(np.sum(sizes)) if n is None else n
            kk = default_cutoff(m) if K is None else K
            rows.append(row_from_components(idx, sizes, m, K=kk, j_max=j_max, k_max=k_max))
    if not rows:
        raise DomainError("empty ensemble")
    return CondensateStats.from_rows(rows, K if K is not None else default_cutoff(rows[0].n), meta)


def cutoff_sensitivity(components: Sequence[tuple[np.ndarray, np.ndarray]], n: int) -> dict:
    """nu_hat and mu_hat at K in {n^(1/4), n^(1/2), n^(3/4)}."""
    out = {}
    for label, K in (("n^1/4", int(n ** 0.25)), ("n^1/2", default_cutoff(n)), ("n^3/4", int(n ** 0.75))):
        st = extract_stats(components, n=n, K=max(1, K))
        out[label] = {"K": max(1, K), "nu_hat": CondensateStats.mean_se(st.nu_hat),
                      "mu_hat": CondensateStats.mean_se(st.mu_hat)}
    return out


@dataclass(frozen=True)
class GofResult:
    statistic: float
    pvalue: float


def ks_test(sample, reference: str | Callable | np.ndarray = "norm", min_size: int = 50) -> GofResult:
    """One-sample KS against ``"norm"`` or a CDF callable; two-sample KS
    against an array of reference draws.  Asymptotic p-values."""
    x = np.asarray(sample, dtype=float)
    if len(x) < min_size:
        raise DomainError(f"KS test needs at least {min_size} observations, got {len(x)}")
    if isinstance(reference, str):
        if reference not in ("norm", "normal"):
            raise DomainError(f"unknown analytic reference {reference!r}")
        res = stats.kstest(x, "norm", method="asymp")
    elif callable(reference):
        res = stats.kstest(x, reference, method="asymp")
    else:
        y = np.asarray(reference, dtype=float)
        if len(y) < min_size:
            raise DomainError(f"reference sample needs at least {min_size} observations")
        res = stats.ks_2samp(x, y, method="asymp")
    return GofResult(float(res.statistic), float(res.pvalue))


def chi2_gof(observed, probs, min_expected: float = 5.0) -> GofResult:
    """Pearson chi-square of counts against probabilities, pooling sparse cells."""
    obs = np.asarray(observed, dtype=float)
    p = np.asarray(probs, dtype=float)
    if obs.shape != p.shape:
        raise DomainError("observed counts and probabilities differ in shape")
    total = obs.sum()
    exp = p / p.sum() * total
    order = np.argsort(exp)
    o_cells, e_cells = [], []
    acc_o = acc_e = 0.0
    for i in order:
        acc_o += obs[i]
        acc_e += exp[i]
        if acc_e >= min_expected:
            o_cells.append(acc_o)
            e_cells.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 and e_cells:
        o_cells[-1] += acc_o
        e_cells[-1] += acc_e
    if len(e_cells) < 2:
        raise DomainError("too few cells after pooling")
    res = stats.chisquare(o_cells, e_cells)
    return GofResult(float(res.statistic), float(res.pvalue))


def chi2_two_sample(counts_a, counts_b) -> GofResult:
    """Chi-square homogeneity test of two count vectors over the same cells."""
    a = np.asarray(counts_a, dtype=float)
    b = np.asarray(counts_b, dtype=float)
    keep = (a + b) > 0
    table = np.vstack([a[keep], b[keep]])
    if table.shape[1] < 2:
        raise DomainError("need at least two non-empty cells")
    chi2, p, _, _ = stats.chi2_contingency(table, correction=False)
    return GofResult(float(chi2), float(p))


def total_variation(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return 0.5 * float(np.abs(p - q).sum())
