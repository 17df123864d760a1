import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from partitia.analysis.theory import (DensitySeries, condensate_fraction_theory, entropy_at_limits,
                                      finite_size_free_energy, free_energy_limit, rho_of_z, sigma_c,
                                      solve_activity, typical_limits)
from partitia.lattice import LatticeWeights, Potential
from partitia.weights import WeightSequence as W

ZETA3 = float(mp.zeta(3))


@pytest.fixture(scope="module")
def zrp():
    return DensitySeries(W.algebraic(-3.0), Potential.square(1))


def test_critical_density_square_trap(zrp):
    assert zrp.rho_c == pytest.approx(1.2020569, abs=1e-7)
    assert rho_of_z(zrp, 1.0) == pytest.approx(ZETA3, rel=1e-14)
    assert rho_of_z(zrp, 1e-12) == pytest.approx(1e-12, rel=1e-6)
    assert rho_of_z(zrp, 0.0) == 0.0


def test_critical_density_bose():
    for beta in (1.0, 2.3):
        s = DensitySeries(W.bose(), Potential.quadratic(beta, 3))
        assert s.rho_c == pytest.approx((math.pi / beta) ** 1.5 * float(mp.zeta(1.5)), rel=1e-12)


def test_critical_density_power_trap():
    # theta_j = j^-2, V = |x|^0.5 in d = 1: rho_c = 2 Gamma(3) sum j^-4 = 4 zeta(4)
    s = DensitySeries(W.algebraic(-2.0), Potential.power(0.5, 1))
    assert s.rho_c == pytest.approx(4 * float(mp.zeta(4)), rel=1e-12)


def test_solve_activity_examples(zrp):
    assert solve_activity(zrp, 0.0) == 0.0
    assert solve_activity(zrp, 2.0) == 1.0
    assert solve_activity(zrp, ZETA3) == 1.0
    rho = 0.5 * zrp.rho_c
    assert rho_of_z(zrp, solve_activity(zrp, rho)) == pytest.approx(rho, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 0.999))
def test_solve_activity_round_trip(frac):
    series = DensitySeries(W.stretched(0.6), Potential.power(1.0, 1))
    rho = frac * series.rho_c
    assert rho_of_z(series, solve_activity(series, rho)) == pytest.approx(rho, rel=1e-10)


@pytest.mark.parametrize("weights,pot", [
    (W.algebraic(-3.0), Potential.square(1)),
    (W.constant(1.0), Potential.power(0.75, 1)),
    (W.stretched(0.5), Potential.quadratic(1.0, 3)),
])
def test_two_density_forms_agree(weights, pot):
    s = DensitySeries(weights, pot)
    zc = s.z_c
    for z in np.linspace(0.02, 0.95, 20) * zc:
        assert s.rho_alt(z) == pytest.approx(s.rho(z), rel=1e-8)
    assert s.monotone_on(np.linspace(0.0, zc, 50))


def test_condensate_fraction(zrp):
    assert condensate_fraction_theory(zrp, ZETA3) == pytest.approx(0.0, abs=1e-15)
    assert condensate_fraction_theory(zrp, 3.0) == pytest.approx(0.59931, abs=1e-5)
    assert condensate_fraction_theory(zrp, 3.0) == pytest.approx(1 - ZETA3 / 3, rel=1e-14)
    assert condensate_fraction_theory(zrp, 1.0) == 0.0


def test_typical_limits_square(zrp):
    lim = typical_limits(zrp, 3.0, j_max=2000, k_max=5)
    j = np.arange(1, 6)
    assert np.allclose(lim.size_fractions[1:6], j ** -3.0 / 3.0, rtol=1e-14)
    # the non-condensed fraction is sum_j a_j over all sizes
    assert 1 - lim.size_fractions.sum() == pytest.approx(condensate_fraction_theory(zrp, 3.0), abs=1e-6)
    assert lim.occupation_fractions[0] == 0.0


def test_typical_limits_subcritical(zrp):
    lim = typical_limits(zrp, 0.5, j_max=4000, k_max=400)
    assert lim.size_fractions.sum() == pytest.approx(1.0, abs=1e-6)
    assert lim.occupation_fractions.sum() == pytest.approx(1.0, abs=1e-4)


def test_singletons_dominate_at_low_density():
    s = DensitySeries(W.algebraic(-2.0), Potential.power(1.0, 1))
    a1 = [typical_limits(s, rho).size_fractions[1] for rho in (1e-1, 1e-2, 1e-4)]
    assert a1[0] < a1[1] < a1[2] and a1[2] == pytest.approx(1.0, abs=1e-3)


def test_free_energy_gap_shrinks(zrp):
    lim = free_energy_limit(zrp, 3.0)
    gaps = []
    for n in (100, 1000, 10000):
        L = n // 3
        gaps.append(abs(finite_size_free_energy(LatticeWeights(Potential.square(1), L), W.algebraic(-3.0), n) - lim))
    assert gaps[0] > gaps[1] > gaps[2]


def test_entropy_identity(zrp):
    value, diff = entropy_at_limits(zrp, 3.0, 2000)
    assert abs(diff) <= 1e-8
    assert value == pytest.approx(free_energy_limit(zrp, 3.0), abs=1e-8)


def test_free_energy_low_density_grows(zrp):
    vals = [free_energy_limit(zrp, rho) for rho in (1e-2, 1e-4, 1e-6)]
    assert vals[0] < vals[1] < vals[2]


def test_sigma_c_values(zrp):
    assert sigma_c(zrp).value == pytest.approx(float(mp.zeta(2)), rel=1e-12)
    assert not sigma_c(DensitySeries(W.algebraic(-1.5), Potential.square(1))).finite
    assert not sigma_c(DensitySeries(W.constant(1.0), Potential.power(0.75, 1))).finite


def test_sigma_c_trap_two_evaluations():
    # sum_j j int exp(-j |x|^0.4) dx, once through the closed form and once by quadrature
    s = sigma_c(DensitySeries(W.constant(1.0), Potential.power(0.4, 1)))
    per_j = lambda j: 2 * integrate.quad(lambda x: math.exp(-j * x ** 0.4), 0, np.inf, epsrel=1e-12)[0]
    head = math.fsum(j * per_j(j) for j in range(1, 60))
    tail = 2 * math.gamma(3.5) * float(mp.zeta(1.5, 60))
    assert s.value == pytest.approx(head + tail, rel=1e-9)
    assert s.value == pytest.approx(17.3637, abs=1e-4)
