import math
from collections import Counter

import numpy as np
import pytest

from partitia.dynamics import (CoagFragChain, CoagFragConfig, CRPChain, CRPChainConfig, IndependentKernel,
                               OccupationState, ReshuffleChain, ZeroRangeProcess, check_detailed_balance,
                               effective_coagulation_rate, effective_zrp_rate, generator_matrix, jump_chain,
                               simulate, state_space, transition_counts, zero_range_projection)
from partitia.errors import DomainError
from partitia.experiments import projection_check, stationarity_check
from partitia.lattice import LatticeWeights, Potential
from partitia.samplers import SpatialPartitionState, prob_eta, prob_spatial
from partitia.weights import WeightSequence as W


def square(S):
    return LatticeWeights(Potential.square(1), S)


def crp(theta, S):
    return CRPChain(CRPChainConfig(theta, square(S)))


def stationary_vector(process, n):
    states, Q = generator_matrix(process, n)
    w, v = np.linalg.eig(Q.T)
    pi = np.real(v[:, np.argmin(np.abs(w))])
    return states, pi / pi.sum()


def test_crp_departure_rate():
    assert crp(1.0, 2).g(3) == pytest.approx(1.0)
    assert crp(2.0, 2).g(3) == pytest.approx(3 / 4)
    assert crp(1.0, 2).g(0) == 0.0


def test_crp_new_table_probability():
    # one customer leaves x for y where three customers already sit: new table w.p. theta/(eta_y + theta)
    lat = square(2)
    x, y = lat.site(0), lat.site(1)
    chain = CRPChain(CRPChainConfig(1.0, lat))
    state = SpatialPartitionState({x: [1], y: [3]})
    target = SpatialPartitionState({y: [3, 1]}).key()
    rate = chain.transitions(state)[target][0]
    t_xy = chain.kernel.prob(x, y)
    assert rate == pytest.approx(chain.g(1) * t_xy * 1 * 0.25)


def test_crp_single_site_stationary_is_gibbs():
    from partitia.partitions import GibbsPartitionMeasure
    chain = crp(1.0, 1)
    states, pi = stationary_vector(chain, 4)
    nu = GibbsPartitionMeasure(W.constant(1.0), 4)
    x = chain.sites[0]
    for s, p in zip(states, pi):
        assert p == pytest.approx(nu.prob(s.partition(x)), abs=1e-10)
    res = stationarity_check(chain, 4, seeds=2, seed=3, samples=800)
    assert res["pooled_pvalue"] > 0.01


def test_simulate_zero_mass_single_epoch():
    chain = crp(1.0, 2)
    rec = simulate(chain, SpatialPartitionState(), np.random.default_rng(0), horizon=5.0)
    assert rec.times == [0.0] and rec.n_events == 0


def test_simulate_needs_a_stopping_rule():
    chain = crp(1.0, 2)
    with pytest.raises(DomainError):
        simulate(chain, SpatialPartitionState(), np.random.default_rng(0))


def test_simulate_event_budget_flags_truncation():
    chain = crp(1.0, 2)
    st = chain.initial_state("singletons", 3)
    rec = simulate(chain, st, np.random.default_rng(1), horizon=1e9, max_events=50)
    assert rec.n_events == 50 and rec.truncated and rec.final_state.n == 3


def test_crp_time_average_matches_eta_law():
    from partitia.samplers import enumerate_occupations
    chain = crp(1.0, 3)
    rng = np.random.default_rng(2)
    st = chain.initial_state("canonical", 4, rng)
    epochs = 5.0 + 2.0 * np.arange(6000)
    rec = simulate(chain, st, rng, epochs=epochs, observables=("eta",))
    counts = Counter(rec.values["eta"])
    lat = chain.lattice
    sites = chain.sites
    from partitia.analysis.stats import chi2_gof
    keys, probs = [], []
    for eta in enumerate_occupations(3, 4):
        occ = {x: m for x, m in zip(sites, eta) if m}
        keys.append(OccupationState(occ).eta_key())
        probs.append(prob_eta(lat, W.constant(1.0), 4, dict(zip(sites, eta))))
    obs = np.array([counts.get(k, 0) for k in keys])
    assert obs.sum() == len(epochs)
    assert chi2_gof(obs, np.array(probs)).pvalue > 1e-3


def test_initial_states_forget():
    chain = crp(1.0, 2)
    rng = np.random.default_rng(4)

    def law(kind, T):
        c = Counter()
        for _ in range(400):
            rec = simulate(chain, chain.initial_state(kind, 3, rng), rng, epochs=[T], observables=("eta",))
            c[rec.values["eta"][0]] += 1
        return c

    def tv(a, b):
        keys = set(a) | set(b)
        return 0.5 * sum(abs(a[k] - b[k]) for k in keys) / 400

    early = tv(law("origin", 0.05), law("singletons", 0.05))
    late = tv(law("origin", 20.0), law("singletons", 20.0))
    assert late < early and late < 0.15


@pytest.mark.parametrize("theta", [1.0, 2.0])
def test_crp_detailed_balance(theta):
    assert check_detailed_balance(crp(theta, 2), 3).max_violation <= 1e-10


def test_reshuffle_rates_and_balance():
    chain = ReshuffleChain(square(2), W.algebraic(-2.0), 3)
    assert check_detailed_balance(chain, 3).max_violation <= 1e-10
    res = stationarity_check(chain, 3, seeds=3, seed=5, samples=600)
    assert res["pooled_pvalue"] > 0.01


def test_reshuffle_projection_equals_crp_projection():
    # both chains move one particle x -> y at rate g(eta_x) t(x, y) whatever the partitions are
    for theta in (1.0, 2.5):
        lat = square(3)
        a = CRPChain(CRPChainConfig(theta, lat))
        b = ReshuffleChain(lat, W.constant(theta), 4)
        for s in state_space(a, 4):
            ra, rb = Counter(), Counter()
            for _, (r, new) in a.transitions(s).items():
                if new.eta_key() != s.eta_key():
                    ra[new.eta_key()] += r
            for _, (r, new) in b.transitions(s).items():
                if new.eta_key() != s.eta_key():
                    rb[new.eta_key()] += r
            assert set(ra) == set(rb)
            for k in ra:
                assert ra[k] == pytest.approx(rb[k], rel=1e-12)


def test_single_particle_walk_on_trap():
    lat = LatticeWeights(Potential.power(1.0, 1), 2)
    kernel = IndependentKernel(lat, np.arange(5))
    chain = ReshuffleChain(lat, W.constant(1.0), 1, kernel)
    states, pi = stationary_vector(chain, 1)
    weights = np.array([math.exp(-lat.potential_at(s.sites[0])) for s in states])
    assert np.allclose(pi, weights / weights.sum(), atol=1e-12)


def test_coagulation_linear_rates():
    cfg = CoagFragConfig.from_coagulation(W.constant(1.0), lambda j: j, 6)
    assert np.allclose(cfg.b[2:], np.arange(2, 8))
    assert cfg.constraint_defect() <= 1e-14


def test_coag_frag_balance_and_stationarity():
    lat = square(2)
    for w in (W.constant(1.0), W.algebraic(-2.0)):
        cfg = CoagFragConfig.from_coagulation(w, lambda j: 1.0, 4)
        assert check_detailed_balance(CoagFragChain(lat, cfg), 3).max_violation <= 1e-10
    cfg = CoagFragConfig.from_coagulation(W.constant(1.0), lambda j: j, 4)
    res = stationarity_check(CoagFragChain(lat, cfg), 3, seeds=3, seed=6, samples=600)
    assert res["max_violation"] <= 1e-10 and res["pooled_pvalue"] > 0.01


def test_broken_fragmentation_negative_control():
    lat = square(2)
    cfg = CoagFragConfig.from_coagulation(W.algebraic(-2.0), lambda j: 1.0, 4).perturbed(1.01)
    v = check_detailed_balance(CoagFragChain(lat, cfg), 3).max_violation
    assert 0.5e-2 < v < 2e-2


def test_constraint_enforced():
    cfg = CoagFragConfig.from_coagulation(W.constant(1.0), lambda j: 1.0, 3)
    with pytest.raises(DomainError):
        CoagFragConfig(cfg.weights, cfg.a, cfg.b * 1.1)


def test_becker_doering_single_site():
    # one site, no jumps: stationary cluster-count law is prod (theta_j c/j)^r_j / r_j!
    lat = square(1)
    cfg = CoagFragConfig.from_coagulation(W.constant(1.0), lambda j: j, 4)
    chain = CoagFragChain(lat, cfg)
    states, pi = stationary_vector(chain, 4)
    for s, p in zip(states, pi):
        assert p == pytest.approx(prob_spatial(lat, W.constant(1.0), 4, s), abs=1e-10)


def test_zrp_invariant_measure_is_product_of_h():
    lat = square(3)
    w = W.algebraic(-2.0)
    zrp = ZeroRangeProcess.from_weights(lat, w, 4)
    states, pi = stationary_vector(zrp, 4)
    for s, p in zip(states, pi):
        assert p == pytest.approx(prob_eta(lat, w, 4, s.occupations()), abs=1e-10)
    assert check_detailed_balance(zrp, 4).max_violation <= 1e-10


def test_projection_of_single_particle():
    lat = square(3)
    chain = CRPChain(CRPChainConfig(1.0, lat))
    rng = np.random.default_rng(7)
    rec = simulate(chain, chain.initial_state("origin", 1), rng, max_events=2000, observables=("eta",))
    _, path = zero_range_projection(rec)
    jumps = transition_counts(jump_chain(path))
    # a lone customer moves to each other site with probability 1/2
    for (a, b), c in jumps.items():
        assert a != b
    totals = Counter()
    for (a, _), c in jumps.items():
        totals[a] += c
    for (a, b), c in jumps.items():
        assert abs(c / totals[a] - 0.5) < 5 * math.sqrt(0.25 / totals[a])


def test_projection_check_small():
    res = projection_check(1.0, square(3), 3, 20_000, seed=8)
    assert res["max_z"] < 4.5


def test_effective_rates():
    lat = square(4)
    for j in (1, 2, 5):
        assert effective_coagulation_rate(lat, 1.0, 1, 1, j) == pytest.approx(1 / 4)
    for theta in (0.5, 1.0, 3.0):
        for eta in (1, 2, 5, 9):
            want = theta * eta / (theta + eta - 1)
            assert effective_zrp_rate(W.constant(theta), eta) == pytest.approx(want, rel=1e-12)
        assert effective_zrp_rate(W.constant(theta), 1) == pytest.approx(1.0)
