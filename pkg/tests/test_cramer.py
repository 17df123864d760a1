import math

import numpy as np
import pytest

from partitia.analysis.cramer import (coefficients_from_cumulants, cramer_series, cumulants, droplet_shift,
                                      legendre_fit, surface_function, truncation_order)
from partitia.errors import DomainError
from partitia.weights import WeightSequence as W


def test_truncation_orders():
    assert truncation_order(0.6) == 1
    assert truncation_order(0.5) == 1
    assert truncation_order(0.75) == 3
    with pytest.raises(DomainError):
        truncation_order(1.0)


def test_symmetric_cumulants_have_no_cubic_term():
    lam = coefficients_from_cumulants([0, 0, 1, 0, 3, 0, 15], 3)
    assert lam[0] == 0.0 and lam[2] == 0.0


def test_poisson_rate_function():
    # all cumulants 1: the rate is (1+x) log(1+x) - x = x^2/2 - x^3/6 + x^4/12 - x^5/20 + x^6/30
    lam = coefficients_from_cumulants([1] * 7, 3)
    assert np.allclose(lam, [1 / 6, -1 / 12, 1 / 20, -1 / 30], rtol=1e-14)


def test_cumulants_of_stretched_weights():
    kap = cumulants(W.stretched(0.6), 4)
    j = np.arange(1, 200_000, dtype=float)
    th = j * np.exp(-j ** 0.6)
    for k in range(1, 5):
        assert kap[k] == pytest.approx(np.sum(j ** (k - 1) * th), rel=1e-10)


def test_lambda0_closed_form():
    cr = cramer_series(W.stretched(0.6))
    assert cr.order == 1
    assert cr.coefficients[0] == pytest.approx(cr.cumulants[3] / (6 * cr.cumulants[2] ** 3), rel=1e-13)
    assert cr.coefficients[0] == pytest.approx(0.0016892713225894753, rel=1e-12)
    assert cr.coefficients[1] == pytest.approx(-0.00024378002403744567, rel=1e-12)


def test_reversion_against_legendre_transform():
    w = W.stretched(0.6)
    cr = cramer_series(w)
    fit = legendre_fit(w, cr.order)
    assert np.allclose(fit, cr.coefficients, rtol=1e-6, atol=0)


def test_truncated_transform_matches_fit_points():
    w = W.stretched(0.6)
    cr = cramer_series(w)
    tau = -1e-4 * cr.sigma2
    assert cr.neg_legendre(tau) == pytest.approx(-tau ** 2 / (2 * cr.sigma2), rel=1e-3)
    assert cr.neg_legendre(tau) + tau ** 2 / (2 * cr.sigma2) == pytest.approx(tau ** 3 * cr.series(tau), rel=1e-12)


def test_droplet_ratio_trend():
    w = W.stretched(0.6)
    cr = cramer_series(w)
    rho = 9.133049018235116  # twice the critical density of this square-trap model
    ratios = [droplet_shift(w, rho, L, cramer=cr).ratio for L in (1e3, 1e4, 1e5)]
    assert all(abs(b - 1) < abs(a - 1) for a, b in zip(ratios, ratios[1:]))
    assert 0.9 <= ratios[-1] <= 1.1


def test_droplet_minimizer_beats_small_shift():
    w = W.stretched(0.6)
    cr = cramer_series(w)
    for L in (1e3, 1e5):
        r = droplet_shift(w, 9.133049018235116, L, cramer=cr)
        f = surface_function(cr, 0.6, r.excess, L)
        assert f(1e-9 * r.excess) > r.value
        assert r.local_minima


def test_negligible_shift_below_one_half():
    w = W.stretched(0.45)
    cr = cramer_series(w, order=0)
    rho_c = 23.881641379771644
    scaled = []
    for L in (1e4, 1e6, 1e8):
        r = droplet_shift(w, 2 * rho_c, L, cramer=cr)
        scaled.append(r.delta / math.sqrt(L))
    assert scaled[0] > scaled[1] > scaled[2]
