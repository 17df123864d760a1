import math

import numpy as np
import pytest
from scipy import special

from partitia.analysis.reference import (GammaSeriesReference, PoissonClusterReference, StableReference,
                                         _b_integrand, alg_neg_exponent, alg_neg_reference, b_coefficient,
                                         empirical_log_laplace, reference_limit_sampler, stable_scale)
from partitia.analysis.stats import ks_test
from partitia.errors import DivergenceError, DomainError
from partitia.weights import WeightSequence as W


def test_stable_scale_domain():
    with pytest.raises(DomainError):
        stable_scale(2.5, 1.0)
    with pytest.raises(DomainError):
        stable_scale(1.5, -1.0)


def test_levy_density_constant():
    ref = StableReference.from_levy_density(1.5, 2.0)
    assert ref.C == pytest.approx(2.0 * math.gamma(-1.5))
    assert ref.C > 0


@pytest.mark.parametrize("alpha", [1.3, 1.75])
def test_stable_laplace_transform(alpha):
    ref = StableReference(alpha, 1.0)
    x = ref.sample(200_000, np.random.default_rng(int(alpha * 100)))
    s = np.array([0.25, 0.5, 0.75])
    assert np.allclose(empirical_log_laplace(x, s), ref.log_laplace(s), atol=1e-2)
    assert abs(np.median(x)) < 1.0


def test_negated_stable_flips_sign():
    ref = StableReference(1.5, 1.0, negate=True)
    x = ref.sample(200_000, np.random.default_rng(3))
    s = np.array([0.25, 0.5])
    assert np.allclose(empirical_log_laplace(x, s, sign=1.0), ref.log_laplace(s), atol=1e-2)


def test_stable_limit_of_poisson_cluster_sums():
    # X = sum_j j N_j, N_j ~ Poisson(L j^-2.5): (X - L zeta(1.5)) / L^(2/3) has jump density u^-2.5
    L = 32768
    pc = PoissonClusterReference(W.algebraic(-1.5, float(L)))
    assert pc.truncation_error == 0.0
    x = (pc.sample(3000, np.random.default_rng(11)) - L * special.zeta(1.5)) / L ** (1 / 1.5)
    y = StableReference.from_levy_density(1.5, 1.0).sample(100_000, np.random.default_rng(12))
    assert ks_test(x, y).pvalue > 1e-3


def test_gamma_series_moments():
    ref = GammaSeriesReference(1.0, 0.75)
    y = ref.sample(200_000, np.random.default_rng(1))
    var = 2 * 1.0 * special.zeta(1.5)  # theta sum_{x != 0} |x|^(-2 delta)
    assert abs(y.mean()) < 4 * math.sqrt(var / len(y))
    assert y.var() == pytest.approx(var, rel=2e-2)
    s = np.array([-0.5, 0.5])
    assert np.allclose(empirical_log_laplace(y, s, sign=1.0), ref.log_laplace(s), atol=1e-2)


def test_gamma_series_tail_variance():
    ref = GammaSeriesReference(2.0, 0.75, radius=64)
    expect = 2.0 * 2 * special.zeta(1.5, 65)
    assert ref.tail_variance == pytest.approx(expect, rel=1e-6)


def test_gamma_series_laplace_domain():
    with pytest.raises(DomainError):
        GammaSeriesReference(1.0, 0.75).log_laplace(-1.0)


def test_poisson_cluster_empty_probability():
    ref = PoissonClusterReference(W.algebraic(-2.0))
    pmf = ref.pmf(5)
    assert pmf[0] == pytest.approx(math.exp(-special.zeta(3)), rel=1e-12)
    assert pmf[0] == pytest.approx(0.300575, abs=1e-6)
    # P(X = 1) = theta_1 exp(-Lambda)
    assert pmf[1] == pytest.approx(pmf[0])


def test_poisson_cluster_sample_frequencies():
    ref = PoissonClusterReference(W.algebraic(-2.0))
    n = 100_000
    x = ref.sample(n, np.random.default_rng(0))
    pmf = ref.pmf(5)
    freq = np.bincount(x[x <= 5], minlength=6) / n
    assert np.all(np.abs(freq - pmf) < 5 * np.sqrt(pmf * (1 - pmf) / n))


def test_poisson_cluster_needs_summable_weights():
    with pytest.raises(DivergenceError):
        PoissonClusterReference(W.constant(1.0))


def test_b_integrand_power_laws():
    g, delta = 0.5, 0.8
    for lo, hi, slope in ((1e-8, 1e-6, -delta * (1 - g)), (1e6, 1e8, delta * (g - 2))):
        r = np.array([lo, hi])
        v = np.abs([_b_integrand(t, g, delta, 1) for t in r])
        assert np.diff(np.log(v))[0] / np.diff(np.log(r))[0] == pytest.approx(slope, abs=5e-3)


def test_b_integrand_series_switch_is_continuous():
    g, delta = 0.5, 0.8
    r = 1e3 ** (1 / delta)
    a = _b_integrand(r * (1 - 1e-9), g, delta, 1)
    b = _b_integrand(r * (1 + 1e-9), g, delta, 1)
    assert a == pytest.approx(b, rel=1e-6)


def test_b_coefficient_value():
    b = b_coefficient(-0.5, 0.8, 1)
    assert b > 0
    assert b == pytest.approx(6.259546288873875, rel=1e-9)
    with pytest.raises(DomainError):
        b_coefficient(0.5, 0.8, 1)
    with pytest.raises(DomainError):
        b_coefficient(-0.5, 2.0, 1)


def test_alg_neg_reference_scaling():
    ref = alg_neg_reference(-0.5, 0.8, 1)
    assert ref.alpha == pytest.approx(alg_neg_exponent(-0.5, 0.8, 1)) and ref.alpha == pytest.approx(1.75)
    r = ref.log_laplace(np.array([1.0, 2.0]))
    assert r[1] / r[0] == pytest.approx(2 ** 1.75, rel=1e-12)
    x = ref.sample(200_000, np.random.default_rng(5))
    s = np.array([0.25, 0.5])
    assert np.allclose(empirical_log_laplace(x, s, sign=1.0), ref.log_laplace(s), rtol=3e-2)


def test_reference_dispatch():
    rng = np.random.default_rng(9)
    assert reference_limit_sampler("gamma-series", {"theta": 1.0, "delta": 0.75}, 10, rng).shape == (10,)
    assert reference_limit_sampler("poisson-cluster", {"weights": W.algebraic(-2.0)}, 10, rng).dtype.kind == "i"
    assert reference_limit_sampler("stable", {"alpha": 1.5}, 10, rng).shape == (10,)
    assert reference_limit_sampler("alg-neg", {"gamma": -0.5, "delta": 0.8, "d": 1}, 10, rng).shape == (10,)
    with pytest.raises(DomainError):
        reference_limit_sampler("cauchy", {}, 10, rng)
