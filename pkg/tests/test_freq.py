import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from urnstable import freq
from urnstable.errors import ParameterError
from urnstable.rng import stream


@pytest.mark.parametrize("beta", [0.2, 0.5, 0.6, 0.8, 0.95])
def test_normalizer_matches_mpmath_zeta(beta):
    m = freq.make_power_law(beta)
    ref = float(mpmath.zeta(1.0 / beta))
    assert m.normalizer == pytest.approx(ref, rel=1e-13)


def test_zeta_bracket_contains_value():
    lo, hi = freq.zeta_series(2.0, 1000)
    assert lo <= math.pi ** 2 / 6 <= hi
    assert hi - lo < 1e-12


def test_first_frequency_beta_half():
    m = freq.make_power_law(0.5)
    assert m.prob(1) == pytest.approx(6.0 / math.pi ** 2, rel=1e-14)
    assert m.prob(3) == pytest.approx(6.0 / (9 * math.pi ** 2), rel=1e-14)


def test_nu_small_example():
    # p_k >= 1/100  <=>  k**2 <= 600 / pi**2 = 60.79
    assert freq.make_power_law(0.5).nu(100) == 7


@pytest.mark.parametrize("beta", [0.3, 0.6, 0.9])
@pytest.mark.parametrize("x", [1.0, 2.0, 17.3, 1e3, 12345.0, 1e6])
def test_nu_counts_exactly(beta, x):
    m = freq.make_power_law(beta)
    k = np.arange(1, 3_000_000)
    brute = int(np.count_nonzero(m.prob(k) >= 1.0 / x))
    assert m.nu(x) == brute


def test_nu_log_perturbed_counts_exactly():
    m = freq.make_log_perturbed(0.5)
    k = np.arange(1, 200_000)
    for x in (10.0, 1e3, 1e5):
        assert m.nu(x) == int(np.count_nonzero(m.prob(k) >= 1.0 / x))


@given(st.floats(0.05, 0.95), st.floats(0.0, 1e7), st.floats(0.0, 1e7))
@settings(max_examples=60, deadline=None)
def test_nu_monotone(beta, x, y):
    m = freq.make_power_law(beta)
    lo, hi = sorted((x, y))
    assert m.nu(lo) <= m.nu(hi)


@given(st.floats(0.05, 0.95))
@settings(max_examples=30, deadline=None)
def test_probabilities_non_increasing(beta):
    p = freq.make_power_law(beta).head(500)
    assert np.all(np.diff(p) <= 0)


@pytest.mark.parametrize("beta", [0.4, 0.7])
def test_tail_mass_matches_hurwitz(beta):
    m = freq.make_power_law(beta)
    for k in (0, 1, 10, 1000):
        ref = float(mpmath.zeta(1 / beta, k + 1)) / float(mpmath.zeta(1 / beta))
        assert m.tail_mass(k) == pytest.approx(ref, rel=1e-12)


def test_log_perturbed_normalizer():
    beta = 0.5
    m = freq.make_log_perturbed(beta)
    ref = mpmath.nsum(lambda k: k ** (-1 / beta) / (1 + mpmath.log(k)), [1, mpmath.inf],
                      method="euler-maclaurin")
    assert m.normalizer == pytest.approx(float(ref), rel=1e-10)


def test_power_sampler_chi_square():
    m = freq.make_power_law(0.5)
    x = m.sample(stream(1, 0, 0), 400_000)
    kmax = 30
    obs = np.bincount(np.minimum(x, kmax + 1), minlength=kmax + 2)[1:]
    exp = np.append(m.head(kmax), m.tail_mass(kmax)) * len(x)
    p = stats.chisquare(obs, exp).pvalue
    assert p > 1e-3


def test_conditional_sampler_respects_start():
    m = freq.make_power_law(0.6)
    start = 50
    x = m.sample(stream(2, 0, 0), 200_000, start=start)
    assert x.min() >= start
    k = np.arange(start, start + 20)
    exp = m.prob(k) / m.tail_mass(start - 1)
    obs = np.array([(x == kk).mean() for kk in k])
    se = np.sqrt(exp * (1 - exp) / len(x))
    assert np.all(np.abs(obs - exp) < 4.5 * se)


def test_log_perturbed_sampler():
    m = freq.make_log_perturbed(0.5)
    x = m.sample(stream(3, 0, 0), 200_000)
    kmax = 10
    obs = np.bincount(np.minimum(x, kmax + 1), minlength=kmax + 2)[1:]
    exp = np.append(m.head(kmax), 1 - m.head(kmax).sum()) * len(x)
    assert stats.chisquare(obs, exp).pvalue > 1e-3


def test_finite_sampler():
    m = freq.make_finite([0.5, 0.3, 0.2])
    x = m.sample(stream(4, 0, 0), 100_000)
    assert set(np.unique(x)) == {1, 2, 3}
    assert np.mean(x == 1) == pytest.approx(0.5, abs=0.01)


def test_label_cap_returns_fresh_labels():
    m = freq.make_power_law(0.95)
    x = m.sample(stream(5, 0, 0), 20_000)
    frac = np.mean(x < 0)
    # P(k >= 2**62) = zeta(q, 2**62) / zeta(q) ~ (2**62)**(1-q) / ((q-1) zeta(q))
    q = 1 / 0.95
    ref = (2.0 ** 62) ** (1 - q) / ((q - 1) * m.normalizer)
    assert frac == pytest.approx(ref, abs=0.01)
    big = [freq.sample_label(m, stream(6, i, 0)) for i in range(200)]
    assert all(isinstance(k, int) and k >= 1 for k in big)


def test_normalizations_consistency():
    m = freq.make_power_law(0.5)
    nz = freq.normalizations(m, 10 ** 6, 0.8)
    assert nz.d_n == m.nu(10 ** 6)
    assert nz.b_n == pytest.approx(nz.d_n ** (1 / 0.8))
    assert nz.sigma_n ** 2 == pytest.approx(2 ** (2 * 0.5 - 2) * math.gamma(0.5) * nz.d_n)


def test_errors():
    with pytest.raises(ParameterError):
        freq.make_power_law(1.0)
    with pytest.raises(ParameterError):
        freq.make_power_law(0.0)
    with pytest.raises(ParameterError):
        freq.make_finite([0.2, 0.8])
    with pytest.raises(ParameterError):
        freq.make_power_law(0.5).prob(0)
    with pytest.raises(ParameterError):
        freq.make_power_law(0.5).nu(-1)
