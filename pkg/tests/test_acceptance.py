"""Acceptance suite: exact small-instance oracles plus finite-size statistical checks.

Each test records one pass/fail line (printed in the terminal summary) and
then asserts the same condition at the stated tolerance.
"""

import math
import time

import numpy as np
import pytest
from scipy.special import zeta

from partitia.analysis.cramer import cramer_series, droplet_shift
from partitia.analysis.stats import CondensateStats, chi2_two_sample, default_cutoff, ks_test, total_variation
from partitia.analysis.reference import PoissonClusterReference
from partitia.analysis.theory import DensitySeries, sigma_c, typical_limits
from partitia.dynamics import CoagFragChain, CoagFragConfig, CRPChain, CRPChainConfig, check_detailed_balance
from partitia.experiments import (canonical_rows, cramer_report, fluctuation_test, free_energy_report,
                                  projection_check, resolve_size, scale_normal, stationarity_check)
from partitia.lattice import LatticeWeights, Potential
from partitia.partitions import h_from_theta, theta_from_h
from partitia.samplers import (CanonicalSampler, GrandCanonicalConfig, conditional_given_eta,
                               conditional_given_r, enumerate_spatial, prob_eta, prob_r, prob_spatial,
                               sample_canonical_rejection_dense)
from partitia.weights import WeightSequence as W

ZETA3 = float(zeta(3))
SQUARE = Potential.square(1)
CUBIC = W.algebraic(-3.0)


def square(S):
    return LatticeWeights(SQUARE, S)


# shared square-trap ensembles, theta_j = j^-3

@pytest.fixture(scope="module")
def supercritical():
    t = time.perf_counter()
    n = resolve_size(256, 1, 3.0).n
    rows = canonical_rows(CUBIC, SQUARE, 256, n, 2000, seed=501)
    return CondensateStats.from_rows(rows, default_cutoff(n)), n, time.perf_counter() - t


@pytest.fixture(scope="module")
def supercritical_small():
    n = resolve_size(64, 1, 3.0).n
    rows = canonical_rows(CUBIC, SQUARE, 64, n, 2000, seed=502)
    return CondensateStats.from_rows(rows, default_cutoff(n)), n


def test_c01_exact_measure_suite(acceptance_log):
    t = time.perf_counter()
    worst_sum = worst_marg = worst_cond = worst_rt = 0.0
    for w in (W.constant(1.0), W.constant(2.0), W.algebraic(-2.0), W.stretched(0.5)):
        for S in (1, 2, 3):
            lat = square(S)
            sites = [lat.site(i) for i in range(S)]
            for n in range(6):
                states = list(enumerate_spatial(sites, n))
                probs = [prob_spatial(lat, w, n, s) for s in states]
                worst_sum = max(worst_sum, abs(math.fsum(probs) - 1))
                by_eta, by_r = {}, {}
                for s, p in zip(states, probs):
                    by_eta[s.eta_key()] = by_eta.get(s.eta_key(), 0.0) + p
                    rk = tuple(sorted(s.counts().items()))
                    by_r[rk] = by_r.get(rk, 0.0) + p
                for s, p in zip(states, probs):
                    pe = prob_eta(lat, w, n, s.occupations())
                    pr = prob_r(lat, w, n, s.counts())
                    worst_marg = max(worst_marg, abs(by_eta[s.eta_key()] - pe),
                                     abs(by_r[tuple(sorted(s.counts().items()))] - pr))
                    worst_cond = max(worst_cond, abs(conditional_given_eta(lat, w, s) - p / pe),
                                     abs(conditional_given_r(lat, s) - p / pr))
        theta = w.array(20)[1:]
        back = theta_from_h(h_from_theta(w, 20))[1:]
        worst_rt = max(worst_rt, float(np.max(np.abs(back - theta) / theta)))
    elapsed = time.perf_counter() - t
    ok = worst_sum <= 1e-9 and worst_marg <= 1e-10 and worst_cond <= 1e-10 and worst_rt <= 1e-10 and elapsed < 10
    acceptance_log(1, ok, f"sum err {worst_sum:.1e}, marginals {worst_marg:.1e}, conditionals {worst_cond:.1e}, "
                          f"theta-h round trip {worst_rt:.1e}, {elapsed:.1f} s")
    assert ok


def test_c02_sampler_equivalence(acceptance_log):
    t = time.perf_counter()
    lat = square(2)
    one = W.constant(1.0)
    draws = 10 ** 6
    exact = CanonicalSampler(lat, one, 2).sample_dense(draws, np.random.default_rng(21))
    rej, rate = sample_canonical_rejection_dense(GrandCanonicalConfig(lat, one, 0.5), 2, draws,
                                                 np.random.default_rng(22))
    flat = np.concatenate([exact.reshape(draws, -1), rej.reshape(draws, -1)])
    keys, inv = np.unique(flat, axis=0, return_inverse=True)
    inv = inv.ravel()
    ca = np.bincount(inv[:draws], minlength=len(keys))
    cb = np.bincount(inv[draws:], minlength=len(keys))
    res = chi2_two_sample(ca, cb)
    elapsed = time.perf_counter() - t
    ok = len(keys) == 5 and res.pvalue > 1e-3 and elapsed < 30
    acceptance_log(2, ok, f"{len(keys)} states, chi2 p = {res.pvalue:.3f}, acceptance rate {rate:.4f}, "
                          f"{elapsed:.1f} s")
    assert ok


def test_c03_stationarity(acceptance_log):
    t = time.perf_counter()
    lat = square(2)
    procs = {
        "crp theta=1": CRPChain(CRPChainConfig(1.0, lat)),
        "crp theta=2": CRPChain(CRPChainConfig(2.0, lat)),
        "coag-frag theta=1": CoagFragChain(lat, CoagFragConfig.from_coagulation(W.constant(1.0), lambda j: 1.0, 4)),
        "coag-frag theta=j^-2": CoagFragChain(lat, CoagFragConfig.from_coagulation(W.algebraic(-2.0),
                                                                                  lambda j: 1.0, 4)),
    }
    worst = 0.0
    pvals = {}
    for name, proc in procs.items():
        for n in range(1, 5):
            worst = max(worst, check_detailed_balance(proc, n).max_violation)
        pvals[name] = stationarity_check(proc, 4, seeds=20, seed=31, samples=500)["pooled_pvalue"]
    elapsed = time.perf_counter() - t
    ok = worst <= 1e-10 and min(pvals.values()) > 0.01 and elapsed < 300
    detail = ", ".join(f"{k} p={v:.3f}" for k, v in pvals.items())
    acceptance_log(3, ok, f"max violation {worst:.1e}; {detail}; {elapsed:.0f} s")
    assert ok


def test_c04_projection(acceptance_log):
    t = time.perf_counter()
    res = projection_check(1.0, square(3), 3, 100_000, seed=41)
    elapsed = time.perf_counter() - t
    ok = res["max_z"] <= 4.0 and elapsed < 120
    acceptance_log(4, ok, f"max |z| = {res['max_z']:.2f} over {len(res['entries'])} transitions, {elapsed:.0f} s")
    assert ok


def test_c05_condensation_threshold(acceptance_log, supercritical):
    stats, n, elapsed_super = supercritical
    t = time.perf_counter()
    nu, nu_se = stats.mean_se(stats.nu_hat)
    mu, mu_se = stats.mean_se(stats.mu_hat)
    joint = math.hypot(nu_se, mu_se)
    paired = stats.mean_se(stats.mu_hat - stats.nu_hat)
    target = 1 - ZETA3 / 3
    n_sub = resolve_size(256, 1, 0.8 * ZETA3).n
    sub_rows = canonical_rows(CUBIC, SQUARE, 256, n_sub, 2000, seed=503)
    sub = CondensateStats.from_rows(sub_rows, default_cutoff(n_sub))
    nu_sub = sub.mean_se(sub.nu_hat)[0]
    elapsed = elapsed_super + time.perf_counter() - t
    ok = abs(nu - target) <= 0.02 and abs(nu - mu) <= 3 * joint and nu_sub <= 0.02 and elapsed < 600
    acceptance_log(5, ok, f"nu = {nu:.5f} +- {nu_se:.5f} (limit {target:.5f}), mu = {mu:.5f}, "
                          f"|nu-mu|/joint SE = {abs(nu - mu) / joint:.2f} (paired z {paired[0] / paired[1]:.1f}); "
                          f"subcritical nu = {nu_sub:.4f}; {elapsed:.0f} s")
    assert ok


def test_c06_typical_sizes(acceptance_log, supercritical):
    stats, n, _ = supercritical
    lim = typical_limits(DensitySeries(CUBIC, SQUARE), 3.0, j_max=5, k_max=5)
    z_size, z_occ = [], []
    for j in range(1, 6):
        m, s = stats.mean_se(stats.size_fractions[:, j])
        z_size.append((m - lim.size_fractions[j]) / s)
    for k in range(1, 6):
        m, s = stats.mean_se(stats.occupation_fractions[:, k])
        z_occ.append((m - lim.occupation_fractions[k]) / s)
    ok = max(map(abs, z_size)) <= 3 and max(map(abs, z_occ)) <= 3
    acceptance_log(6, ok, "size z-scores " + " ".join(f"{z:+.1f}" for z in z_size)
                   + "; occupation z-scores " + " ".join(f"{z:+.1f}" for z in z_occ))
    assert ok


def test_c07_normal_fluctuations(acceptance_log, supercritical, supercritical_small):
    series = DensitySeries(CUBIC, SQUARE)
    sig2 = sigma_c(series).value
    big, n_big, _ = supercritical
    small, n_small = supercritical_small
    out = {}
    for name in ("M", "T"):
        res = {}
        for L, st in ((64, small), (256, big)):
            size = resolve_size(L, 1, 3.0)
            x = scale_normal(getattr(st, name).astype(float), size, series.rho_c, sig2, 1)
            res[L] = ks_test(x, "norm")
        out[name] = res
    ok = all(r[256].pvalue > 1e-3 and r[256].statistic < r[64].statistic for r in out.values())
    acceptance_log(7, ok, "; ".join(f"{k}: D {r[64].statistic:.4f} -> {r[256].statistic:.4f}, "
                                    f"p(256) = {r[256].pvalue:.1e}" for k, r in out.items()))
    assert ok


def test_c08_cluster_law(acceptance_log, supercritical):
    stats, _, _ = supercritical
    diff = (stats.M - stats.T).astype(np.int64)
    pmf = PoissonClusterReference(CUBIC).pmf(10)
    emp = np.bincount(diff[diff <= 10], minlength=11)[:11] / len(diff)
    tv = total_variation(emp, pmf)
    ok = tv <= 0.05
    acceptance_log(8, ok, f"TV = {tv:.4f}")
    assert ok


def test_c09_heavy_tail(acceptance_log):
    t = time.perf_counter()
    w = W.algebraic(-1.5)
    rho_c = DensitySeries(w, SQUARE).rho_c
    res = fluctuation_test(w, SQUARE, 512, 2000, seed=901, regime="stable", rho=2 * rho_c)
    elapsed = time.perf_counter() - t
    ok = res["pvalue"] > 1e-3 and elapsed < 900
    acceptance_log(9, ok, f"KS D = {res['ks_statistic']:.4f}, p = {res['pvalue']:.1e}, {elapsed:.0f} s")
    assert ok


def test_c10_trap_condensate_location(acceptance_log):
    t = time.perf_counter()
    w = W.algebraic(-2.0)
    pot = Potential.power(0.5, 1)
    rho_c = DensitySeries(w, pot).rho_c
    rho = 2 * rho_c
    gaps = {}
    for L in (50, 200):
        n = resolve_size(L, 1, rho).n
        rows = canonical_rows(w, pot, L, n, 1000, seed=1001)
        gaps[L] = abs(np.mean([r.H0 for r in rows]) / L - (rho - rho_c))
    elapsed = time.perf_counter() - t
    ok = gaps[200] <= 0.05 and gaps[200] < gaps[50] and elapsed < 1200
    acceptance_log(10, ok, f"|mean H0/L - (rho-rho_c)|: {gaps[50]:.4f} (L=50) -> {gaps[200]:.4f} (L=200), "
                           f"{elapsed:.0f} s")
    assert ok


def test_c11_ewens_trap(acceptance_log):
    t = time.perf_counter()
    w = W.constant(1.0)
    pot = Potential.power(0.75, 1)
    rho = 2 * DensitySeries(w, pot).rho_c
    res = {L: fluctuation_test(w, pot, L, 1000, seed=1101, regime="gamma-series", rho=rho)
           for L in (50, 100, 200)}
    elapsed = time.perf_counter() - t
    stats_ = [res[L]["ks_statistic"] for L in (50, 100, 200)]
    direct = res[200]["pvalue"] > 1e-3
    trend = stats_[0] > stats_[1] > stats_[2]
    ok = (direct or trend) and elapsed < 2700
    mode = "p-value gate met" if direct else ("underpowered at L=200, graded on the decreasing KS statistic"
                                              if trend else "neither gate met")
    acceptance_log(11, ok, f"p(200) = {res[200]['pvalue']:.3f}; KS D along L=50,100,200: "
                           + ", ".join(f"{s:.4f}" for s in stats_) + f"; {mode}; {elapsed:.0f} s")
    assert ok


def test_c12_cramer(acceptance_log):
    t = time.perf_counter()
    w = W.stretched(0.6)
    rep = cramer_report(w)
    rho_c = DensitySeries(w, SQUARE).rho_c
    r = droplet_shift(w, 2 * rho_c, 1e5, cramer=cramer_series(w))
    elapsed = time.perf_counter() - t
    ok = rep["max_relative_difference"] <= 1e-6 and 0.9 <= r.ratio <= 1.1 and elapsed < 60
    acceptance_log(12, ok, f"order {rep['order']}, max rel diff {rep['max_relative_difference']:.1e}, "
                           f"Delta ratio at L=1e5 {r.ratio:.4f}, {elapsed:.1f} s")
    assert ok


def test_c13_free_energy(acceptance_log):
    t = time.perf_counter()
    rep = free_energy_report(CUBIC, 3.0, [33, 333, 3333], J=2000)
    gaps = [row["gap"] for row in rep["rows"]]
    ident = abs(rep["entropy_identity"] - rep["limit"])
    elapsed = time.perf_counter() - t
    ok = gaps[-1] < 1e-2 and gaps[0] > gaps[1] > gaps[2] and ident <= 1e-8 and elapsed < 60
    acceptance_log(13, ok, "gaps at n=" + ", ".join(f"{row['n']}: {row['gap']:.2e}" for row in rep["rows"])
                   + f"; entropy identity err {ident:.1e}; {elapsed:.1f} s")
    assert ok
