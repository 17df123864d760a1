"""Experiment recipes shared by the command line and the acceptance suite."""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analysis.cramer import cramer_series, droplet_shift, legendre_fit
from .analysis.reference import GammaSeriesReference, PoissonClusterReference, StableReference
from .analysis.stats import (CondensateStats, ReplicaRow, chi2_gof, default_cutoff, ks_test,
                             row_from_components, total_variation)
from .analysis.theory import (DensitySeries, condensate_fraction_theory, entropy_at_limits,
                              finite_critical_mass, free_energy_limit, sigma_c, typical_limits)
from .dynamics import (CRPChain, CRPChainConfig, IndependentKernel, OccupationState, ZeroRangeProcess,
                       check_detailed_balance, generator_matrix, jump_chain, simulate, spectral_gap,
                       state_space, transition_counts)
from .errors import DomainError
from .lattice import LatticeWeights, Potential
from .partitions import convolution_table, h_from_theta
from .samplers import CanonicalSampler, EffectiveZTable, log_partition_function
from .weights import WeightSequence


def spawn_generators(seed: int, count: int) -> list[np.random.Generator]:
    """One independent generator per replica, indexed by replica number."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


@dataclass(frozen=True)
class Size:
    L: float
    n: int
    rho: float
    volume: float
    rounding: float  # n - rho L^d


def resolve_size(L: float, d: int, rho: float | None = None, n: int | None = None) -> Size:
    """n = round(rho L^d) when a density is given; the rounding is recorded."""
    vol = float(L) ** d
    if (rho is None) == (n is None):
        raise DomainError("give exactly one of rho and n")
    if n is None:
        n = int(round(rho * vol))
        return Size(L, n, rho, vol, n - rho * vol)
    return Size(L, int(n), n / vol, vol, 0.0)


def canonical_rows(weights: WeightSequence, potential: Potential, L: float, n: int, replicas: int,
                   seed: int, K: int | None = None, j_max: int = 5, k_max: int = 5, threads: int = 1,
                   eps: float = 1e-12) -> list[ReplicaRow]:
    """Exact canonical draws reduced to per-replica scalars, ordered by replica."""
    if replicas < 1:
        raise DomainError("replicas must be at least 1")
    lat = LatticeWeights(potential, L, eps)
    sampler = CanonicalSampler(lat, weights, n)
    K = default_cutoff(n) if K is None else K
    rngs = spawn_generators(seed, replicas)

    def one(rng):
        idx, sizes = sampler.sample_components(rng)
        return row_from_components(idx, sizes, n, K=K, j_max=j_max, k_max=k_max, origin=lat.origin_index)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, rngs))
    return [one(r) for r in rngs]


def canonical_ensemble(weights, potential, L, n, replicas, seed, **kw) -> CondensateStats:
    K = kw.get("K") or default_cutoff(n)
    rows = canonical_rows(weights, potential, L, n, replicas, seed, **kw)
    return CondensateStats.from_rows(rows, K, {"L": L, "n": n, "seed": seed})


def exact_size_fractions(lat: LatticeWeights, weights: WeightSequence, n: int, j_max: int) -> np.ndarray:
    """Finite-size E[j R_j / n] = theta^eff_j Z_{n-j} / (n Z_n)."""
    tab = EffectiveZTable(lat, weights, n)
    out = np.zeros(j_max + 1)
    for j in range(1, min(j_max, n) + 1):
        out[j] = math.exp(tab.log_theta_eff[j] + tab.log_Z(n - j) - tab.log_Z(n)) / n
    return out


def exact_site_occupation_square(weights: WeightSequence, L: int, n: int) -> np.ndarray:
    """Finite-size law of one site's occupation on the square trap (L^d = ``L`` sites):
    P(eta_x = k) = h_k Z^{(L-1)}_{n-k} / Z^{(L)}_n for k = 0..n."""
    vol = float(L)
    if vol < 2:
        raise DomainError("need at least two sites")
    lt = weights.log_array(n)
    rest = convolution_table(lt + math.log(vol - 1), n)
    full = convolution_table(lt + math.log(vol), n)
    h = h_from_theta(weights, n)
    k = np.arange(n + 1)
    return np.exp(h.log_h[k] + rest.log_h[n - k] - full.log_h[n])


def exact_max_law_square(weights: WeightSequence, L: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """P(M_L = k) = L P(eta_x = k) for n/2 < k <= n, where at most one site can
    hold k particles. The returned masses need not sum to one."""
    k = np.arange(n // 2 + 1, n + 1)
    return k, float(L) * exact_site_occupation_square(weights, L, n)[k]


def exact_occupation_fractions_square(weights: WeightSequence, L: int, n: int, k_max: int) -> np.ndarray:
    """Finite-size E[k N_k / n] on the square trap: k L P(eta_x = k) / n."""
    p = exact_site_occupation_square(weights, L, n)
    out = np.zeros(k_max + 1)
    k = np.arange(1, min(k_max, n) + 1)
    out[k] = k * float(L) * p[k] / n
    return out


def condensation_summary(stats: CondensateStats, series: DensitySeries, rho: float,
                         lat: LatticeWeights | None = None, weights: WeightSequence | None = None) -> dict:
    """Estimates of nu, mu, j R_j / n and k N_k / n next to their limits."""
    nu_m, nu_s = stats.mean_se(stats.nu_hat)
    mu_m, mu_s = stats.mean_se(stats.mu_hat)
    theory = condensate_fraction_theory(series, rho)
    J = stats.size_fractions.shape[1] - 1
    Kk = stats.occupation_fractions.shape[1] - 1
    lim = typical_limits(series, rho, j_max=J, k_max=Kk)
    out = {
        "rho": rho, "rho_c": series.rho_c, "K": stats.K, "replicas": len(stats),
        "nu_theory": theory, "nu_hat": nu_m, "nu_se": nu_s, "mu_hat": mu_m, "mu_se": mu_s,
        "nu_mu_joint_se": math.hypot(nu_s, mu_s),
        "size_fractions": [], "occupation_fractions": [],
    }
    finite = None
    if lat is not None and weights is not None:
        finite = exact_size_fractions(lat, weights, int(stats.n[0]), J)
    for j in range(1, J + 1):
        m, s = stats.mean_se(stats.size_fractions[:, j])
        rec = {"j": j, "mean": m, "se": s, "limit": float(lim.size_fractions[j])}
        if finite is not None:
            rec["finite_size"] = float(finite[j])
        out["size_fractions"].append(rec)
    for k in range(1, Kk + 1):
        m, s = stats.mean_se(stats.occupation_fractions[:, k])
        out["occupation_fractions"].append({"k": k, "mean": m, "se": s,
                                            "limit": float(lim.occupation_fractions[k])})
    return out


# fluctuation regimes

def scale_normal(values: np.ndarray, size: Size, rho_c: float, sigma2: float, d: int) -> np.ndarray:
    """(X - (rho - rho_c) L^d) / (sigma_c L^(d/2)), with the excess taken as n - rho_c L^d."""
    return (values - (size.n - rho_c * size.volume)) / math.sqrt(sigma2 * size.volume)


def scale_stable(values: np.ndarray, size: Size, rho_c: float, alpha: float) -> np.ndarray:
    """-(M - (rho - rho_c) L^d) / L^(d/alpha)."""
    return -(values - (size.n - rho_c * size.volume)) / size.volume ** (1 / alpha)


def scale_gamma_series(H0: np.ndarray, size: Size, lat: LatticeWeights, weights: WeightSequence,
                       delta: float) -> tuple[np.ndarray, float]:
    """(H_0 - (rho - rho_c^L) L^d) / L^delta with rho_c^L L^d the mean mass off the origin."""
    off = finite_critical_mass(lat, weights)
    return (H0 - (size.n - off)) / float(size.L) ** delta, off


def fluctuation_test(weights: WeightSequence, potential: Potential, L: float, replicas: int, seed: int,
                     regime: str, rho: float | None = None, n: int | None = None, observable: str = "M",
                     reference_size: int = 200_000, reference_seed: int | None = None,
                     radius: int = 256, threads: int = 1) -> dict:
    """Scaled condensate fluctuations against the limit law of ``regime``:
    ``normal``, ``stable``, ``gamma-series`` or ``cluster``."""
    d = potential.d
    size = resolve_size(L, d, rho, n)
    series = DensitySeries(weights, potential)
    rows = canonical_rows(weights, potential, L, size.n, replicas, seed, threads=threads)
    stats = CondensateStats.from_rows(rows, default_cutoff(size.n))
    ref_rng = np.random.default_rng(np.random.SeedSequence(seed if reference_seed is None else reference_seed,
                                                           spawn_key=(1,)))
    out = {"regime": regime, "L": L, "n": size.n, "rho": size.rho, "rounding": size.rounding,
           "replicas": replicas, "observable": observable}
    if regime == "normal":
        sig = sigma_c(series)
        if not sig.finite:
            raise DomainError("normal regime needs a finite sigma_c")
        x = scale_normal(getattr(stats, observable).astype(float), size, series.rho_c, sig.value, d)
        res = ks_test(x, "norm")
        out.update(sigma_c2=sig.value)
    elif regime == "stable":
        if weights.kind != "algebraic":
            raise DomainError("stable regime needs algebraic weights")
        alpha = -weights.exponent
        ref = StableReference.from_levy_density(alpha, weights.value)
        x = scale_stable(stats.M.astype(float), size, series.rho_c, alpha)
        res = ks_test(x, ref.sample(reference_size, ref_rng))
        out.update(alpha=alpha, laplace_constant=ref.C)
    elif regime == "gamma-series":
        if weights.kind not in ("constant", "bose") or potential.kind != "power":
            raise DomainError("gamma-series regime needs constant weights and a power trap")
        lat = LatticeWeights(potential, L)
        theta = 1.0 if weights.kind == "bose" else weights.value
        x, off = scale_gamma_series(stats.H0.astype(float), size, lat, weights, potential.delta)
        ref = GammaSeriesReference(theta, potential.delta, d, potential.scale, radius)
        res = ks_test(x, ref.sample(reference_size, ref_rng))
        out.update(rho_c_L_volume=off, tail_variance=ref.tail_variance, radius=radius)
    elif regime == "cluster":
        diff = (stats.M - stats.T).astype(np.int64)
        kmax = 10
        pmf = PoissonClusterReference(weights).pmf(kmax)
        emp = np.bincount(diff[diff <= kmax], minlength=kmax + 1)[: kmax + 1] / len(diff)
        out.update(tv=total_variation(emp, pmf), empirical=emp.tolist(), reference=pmf.tolist())
        return out | {"values": diff}
    else:
        raise DomainError(f"unknown regime {regime!r}")
    out.update(ks_statistic=res.statistic, pvalue=res.pvalue, mean=float(np.mean(x)),
               std=float(np.std(x, ddof=1)))
    return out | {"values": x}


def free_energy_report(weights: WeightSequence, rho: float, Ls, d: int = 1, J: int = 2000) -> dict:
    """Square-trap finite-size (1/n) log Z_{L,n} along L with n = rho L^d."""
    pot = Potential.square(d)
    series = DensitySeries(weights, pot)
    lim = free_energy_limit(series, rho)
    rows = []
    for L in Ls:
        size = resolve_size(L, d, rho)
        lat = LatticeWeights(pot, L)
        fe = log_partition_function(lat, weights, size.n) / size.n
        rows.append({"L": L, "n": size.n, "finite": fe, "gap": abs(fe - lim)})
    ent, tail = entropy_at_limits(series, rho, J)
    return {"limit": lim, "rows": rows, "entropy_identity": ent, "entropy_tail": tail}


def cramer_report(weights: WeightSequence, order: int | None = None) -> dict:
    cr = cramer_series(weights, order=order)
    fit = legendre_fit(weights, cr.order)
    rel = np.abs(fit / cr.coefficients - 1)
    return {"order": cr.order, "cumulants": cr.cumulants[1:].tolist(),
            "reversion": cr.coefficients.tolist(), "legendre": fit.tolist(),
            "max_relative_difference": float(rel.max()),
            "lambda0_closed_form": float(cr.cumulants[3] / (6 * cr.cumulants[2] ** 3))}


def droplet_report(weights: WeightSequence, rho: float, Ls, d: int = 1) -> dict:
    cr = cramer_series(weights)
    rows = []
    for L in Ls:
        try:
            r = droplet_shift(weights, rho, L, d=d, cramer=cr)
            rows.append({"L": L, "delta": r.delta, "value": r.value, "asymptotic": r.asymptotic,
                         "ratio": r.ratio, "interior_is_global": r.interior_is_global,
                         "local_minima": len(r.local_minima)})
        except ArithmeticError as exc:
            rows.append({"L": L, "error": str(exc)})
    return {"rho": rho, "gamma": weights.exponent, "rows": rows}


# stationarity and projection checks on enumerable systems

def stationary_law(process, n: int) -> tuple[list, np.ndarray]:
    """State keys and normalized invariant probabilities from enumeration."""
    states = state_space(process, n)
    logw = np.array([process.log_stationary_weight(s) for s in states])
    p = np.exp(logw - logw.max())
    return [s.key() for s in states], p / p.sum()


def long_run_counts(process, n: int, rng: np.random.Generator, samples: int, spacing: float,
                    burn_in: float | None = None) -> Counter:
    """Counts of states seen at ``samples`` epochs spaced ``spacing`` apart,
    started from an exact stationary draw after a burn-in."""
    state = process.initial_state("canonical", n, rng) if hasattr(process, "weights") \
        else process.initial_state("origin", n, rng)
    burn = spacing if burn_in is None else burn_in
    epochs = burn + spacing * np.arange(samples)
    rec = simulate(process, state, rng, epochs=epochs, observables=("key",), copy=False)
    return Counter(rec.values["key"])


def stationarity_check(process, n: int, seeds: int, seed: int, samples: int = 1000,
                       spacing: float | None = None) -> dict:
    """Detailed balance by enumeration plus a pooled long-run chi-square."""
    db = check_detailed_balance(process, n)
    keys, probs = stationary_law(process, n)
    if spacing is None:
        states, Q = generator_matrix(process, n)
        w = np.array([process.log_stationary_weight(s) for s in states])
        gap = spectral_gap(Q, np.exp(w - w.max()))
        spacing = 5.0 / gap
    pooled = Counter()
    per_seed = []
    for rng in spawn_generators(seed, seeds):
        c = long_run_counts(process, n, rng, samples, spacing)
        obs = np.array([c.get(k, 0) for k in keys], dtype=float)
        if sum(c.values()) != obs.sum():
            raise AssertionError("simulation visited a state outside the enumerated space")
        per_seed.append(chi2_gof(obs, probs).pvalue)
        pooled.update(c)
    obs = np.array([pooled.get(k, 0) for k in keys], dtype=float)
    res = chi2_gof(obs, probs)
    return {"n": n, "states": len(keys), "transitions": db.n_transitions,
            "max_violation": db.max_violation, "spacing": spacing, "samples_per_seed": samples,
            "seeds": seeds, "pooled_chi2": res.statistic, "pooled_pvalue": res.pvalue,
            "per_seed_pvalues": per_seed}


def projection_check(theta: float, lat: LatticeWeights, n: int, jumps: int, seed: int,
                     kernel=None) -> dict:
    """Jump-chain transition frequencies of the occupation projection of the
    restaurant chain against a standalone zero-range process."""
    kernel = kernel or IndependentKernel(lat)
    crp = CRPChain(CRPChainConfig(theta, lat, kernel))
    zrp = ZeroRangeProcess.from_weights(lat, WeightSequence.constant(theta), n, kernel)
    r1, r2 = spawn_generators(seed, 2)

    def chain(process, rng, start):
        path: list = []
        state = start
        while len(path) < jumps + 1:
            rec = simulate(process, state, rng, max_events=4 * jumps, observables=("eta",), copy=False)
            seq = jump_chain(rec.values["eta"])
            if path and seq and seq[0] == path[-1]:
                seq = seq[1:]
            path.extend(seq)
            state = rec.final_state
        return path[: jumps + 1]

    a = chain(crp, r1, crp.initial_state("canonical", n, r1))
    start = OccupationState(crp.initial_state("canonical", n, r2).occupations())
    b = chain(zrp, r2, start)
    ca, cb = transition_counts(a), transition_counts(b)
    out_a, out_b = Counter(), Counter()
    for (x, _), c in ca.items():
        out_a[x] += c
    for (x, _), c in cb.items():
        out_b[x] += c
    worst = 0.0
    entries = []
    for key in sorted(set(ca) | set(cb)):
        x = key[0]
        na, nb = out_a[x], out_b[x]
        if na == 0 or nb == 0:
            worst = math.inf
            continue
        pa, pb = ca.get(key, 0) / na, cb.get(key, 0) / nb
        pool = (ca.get(key, 0) + cb.get(key, 0)) / (na + nb)
        sd = math.sqrt(max(pool * (1 - pool), 1e-300) * (1 / na + 1 / nb))
        z = abs(pa - pb) / sd
        worst = max(worst, z)
        entries.append({"from": list(key[0]), "to": list(key[1]), "restaurant": pa, "zero_range": pb, "z": z})
    return {"jumps": jumps, "entries": entries, "max_z": worst}
