import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from urnstable import freq, heavytail as H, limitlaw, urnsim as U, verify
from urnstable.errors import DecompositionUnavailable, ParameterError, UnsupportedLawError
from urnstable.rng import MARKS, URN, stream

P3 = [0.5, 0.3, 0.2]


def _trace(model, times, n, seed=0, rep=0, engine="binned"):
    return U.simulate(model, U.TimeGrid(tuple(times), n), stream(seed, rep, URN), engine)


# -- basic shapes and errors ----------------------------------------------------------

def test_empty_path():
    tr = _trace(freq.make_power_law(0.5), (0.5, 1.0), 0)
    assert np.all(tr.K == 0) and np.all(tr.Ustar == 0) and np.all(tr.M == 0)
    ms = U.attach_marks(tr, H.rademacher(), stream(0, 0, MARKS))
    assert np.all(ms.U == 0) and np.all(ms.Z == 0) and np.all(ms.U2 == 0)


def test_grid_validation():
    with pytest.raises(ParameterError):
        U.TimeGrid(tuple(np.linspace(0.05, 1, 21)), 10)
    with pytest.raises(ParameterError):
        U.TimeGrid((0.5, 0.2), 10)
    with pytest.raises(ParameterError):
        U.TimeGrid((1.5,), 10)
    with pytest.raises(ParameterError):
        U.ParityPattern((0, 0))
    g = U.TimeGrid((0.25, 0.25, 1.0), 10)
    assert list(g.checkpoints) == [2, 2, 10]


def test_pattern_roundtrip():
    p = U.ParityPattern((1, 0, 1))
    assert p.index == 5 and p.bitstring == "101"
    assert U.ParityPattern.from_index(5, 3) == p
    assert U.ParityPattern.from_string("101") == p
    assert len(U.all_patterns(4)) == 15


# -- invariants ----------------------------------------------------------------------

@given(st.integers(0, 3000), st.lists(st.floats(0, 1), min_size=1, max_size=5),
       st.sampled_from([0.3, 0.6, 0.9]), st.sampled_from(["binned", "stream"]),
       st.integers(0, 10 ** 6))
@settings(max_examples=40, deadline=None)
def test_trace_invariants(n, times, beta, engine, seed):
    times = sorted(times)
    tr = _trace(freq.make_power_law(beta), times, n, seed, engine=engine)
    M = tr.M
    d = tr.d
    # counts add up to the ball count at each checkpoint
    assert np.array_equal(tr.counts.sum(axis=0), tr.checkpoints)
    # all patterns plus the all-even occupied urns give K at the last checkpoint
    assert M.sum() == tr.K[-1]
    # U* at checkpoint j is the sum over patterns with bit j set
    for j in range(d):
        sel = [m for m in range(1, 1 << d) if (m >> j) & 1]
        assert tr.Ustar[j] == M[sel].sum()
    assert np.all(np.diff(tr.K) >= 0)
    assert np.all(np.diff(tr.counts, axis=1) >= 0)


def test_checkpoint_nesting_marginalises():
    model = freq.make_power_law(0.6)
    fine = _trace(model, (0.3, 0.6, 1.0), 5000, seed=4)
    # drop the middle checkpoint from the same path
    coarse = U.OccupancyTrace(model, fine.times[[0, 2]], fine.n, fine.checkpoints[[0, 2]],
                              fine.labels, fine.counts[:, [0, 2]])
    Mf, Mc = fine.M, coarse.M
    for m in range(4):
        b0, b1 = m & 1, (m >> 1) & 1
        idx = [b0 | (x << 1) | (b1 << 2) for x in (0, 1)]
        assert Mf[idx].sum() == Mc[m]


def test_tied_times_conflicting_patterns_are_empty():
    tr = _trace(freq.make_power_law(0.5), (0.5, 0.5), 1000, seed=1)
    assert tr.m_count((1, 0)) == 0 and tr.m_count((0, 1)) == 0
    assert tr.m_count((1, 1)) == tr.Ustar[0]


# -- enumeration oracle --------------------------------------------------------------

def test_expected_ustar_two_balls():
    table = verify.brute_force_finite_urn(P3, 2, (1.0,), "Ustar")
    mean = sum(k[0] * p for k, p in table.items())
    assert mean == pytest.approx(1.24, abs=1e-15)
    model = freq.make_finite(P3)
    assert U.expected_M(model, (1.0,), 2, (1,)) == pytest.approx(1.24, abs=1e-15)


@pytest.mark.parametrize("engine", ["binned", "stream"])
def test_m_law_matches_enumeration(engine):
    n, times = 6, (0.5, 1.0)
    table = verify.brute_force_finite_urn(P3, n, times, "M")
    model = freq.make_finite(P3)
    R = 20_000
    seen = {}
    for r in range(R):
        key = tuple(int(v) for v in _trace(model, times, n, 9, r, engine).M)
        seen[key] = seen.get(key, 0) + 1
    keys = sorted(table, key=lambda k: -table[k])
    big = [k for k in keys if table[k] * R >= 20]
    obs = [seen.get(k, 0) for k in big]
    exp = [table[k] * R for k in big]
    rest = R * (1 - sum(table[k] for k in big))
    if rest > 1e-9:
        obs.append(R - sum(obs))
        exp.append(rest)
    assert sum(obs) <= R and set(seen) <= set(table)
    assert stats.chisquare(obs, exp).pvalue > 1e-3


def test_single_urn_odd_count():
    table = verify.brute_force_finite_urn([1.0], 3, (1.0,), "Ustar")
    assert table == {(1,): 1.0}


# -- engines and expectations ----------------------------------------------------------

def _expected_ustar_direct(model, n, kmax=2_000_000):
    # sum_k (1 - (1 - 2 p_k)**n)/2, direct to kmax; beyond, P(odd) <= n p_k
    p = model.prob(np.arange(1, kmax + 1))
    head = math.fsum(0.5 * (1 - (1 - 2 * p) ** n))
    return head, n * model.tail_mass(kmax)


@pytest.mark.parametrize("engine", ["binned", "stream"])
def test_engine_mean_ustar(engine):
    model = freq.make_power_law(0.6)
    n, R = 20_000, 300
    x = np.array([_trace(model, (1.0,), n, 21, r, engine).Ustar[0] for r in range(R)])
    head, slack = _expected_ustar_direct(model, n)
    assert abs(x.mean() - head) <= 4 * x.std(ddof=1) / math.sqrt(R) + slack


def test_expected_m_matches_direct_sum():
    model = freq.make_power_law(0.6)
    n = 10 ** 5
    head, slack = _expected_ustar_direct(model, n)
    assert U.expected_M(model, (1.0,), n, (1,)) == pytest.approx(head, abs=slack + 1e-6)


def test_expected_m_poissonized_vs_direct():
    model = freq.make_power_law(0.5)
    times, n, pat = (0.4, 1.0), 5000.0, (1, 1)
    k = np.arange(1, 100_001)
    p = model.prob(k)
    direct = math.fsum(0.5 * (1 - np.exp(-2 * p * n * 0.4)) * 0.5 * (1 + np.exp(-2 * p * n * 0.6)))
    tail_bound = n * model.tail_mass(100_000)
    assert U.expected_M(model, times, n, pat, poissonized=True) == pytest.approx(
        direct, abs=tail_bound)


def test_poissonized_mean_and_variance():
    model = freq.make_power_law(0.5)
    times, n, R = (0.5, 1.0), 20_000.0, 2000
    M = np.array([U.poissonized_simulate(model, times, n, stream(3, r, URN)).M
                  for r in range(R)])
    for m in (1, 2, 3):
        pat = U.ParityPattern.from_index(m, 2)
        ex = U.expected_M(model, times, n, pat, poissonized=True)
        x = M[:, m]
        assert abs(x.mean() - ex) <= 3 * x.std(ddof=1) / math.sqrt(R)
        # variance of a sum of independent indicators is below its mean
        assert x.var(ddof=1) <= x.mean() * (1 + 4 * math.sqrt(2 / R))


def test_poissonized_zero_horizon():
    tr = U.poissonized_simulate(freq.make_power_law(0.5), (0.0,), 100.0, stream(1, 0, URN))
    assert np.all(tr.M == 0)


def test_lln_at_large_n():
    model = freq.make_power_law(0.6)
    tr = _trace(model, (1.0,), 10 ** 6, seed=2)
    target = limitlaw.m_delta((1.0,), (1,), 0.6).value
    assert tr.Ustar[0] / model.nu(1e6) == pytest.approx(target, rel=0.05)


def test_expected_odd_prob_examples():
    m = freq.make_finite([0.7, 0.3])
    assert U.expected_odd_prob(m, 0, 2) == 0.0
    assert U.expected_odd_prob(m, 1, 2) == pytest.approx(0.3)
    assert U.expected_odd_prob(m, 2, 2) == pytest.approx(0.42)
    # enumeration: two balls, urn 2 odd iff exactly one lands there
    assert U.expected_odd_prob(m, 2, 2) == pytest.approx(2 * 0.3 * 0.7)
    # large n, p >= 1/4 branch
    assert U.expected_odd_prob(m, 7, 1) == pytest.approx(0.5 * (1 - (-0.4) ** 7))


def test_v_function():
    model = freq.make_power_law(0.5)
    assert U.v_function(model, 0.0) == 0.0
    ts = [1.0, 10.0, 1e3, 1e5]
    vs = [U.v_function(model, t) for t in ts]
    assert np.all(np.diff(vs) > 0)
    ratio = U.v_function(model, 1e8) / model.nu(1e8)
    assert ratio == pytest.approx(math.gamma(0.5), rel=0.02)


def test_v_function_direct_sum():
    model = freq.make_power_law(0.6)
    t = 1e4
    k = np.arange(1, 5_000_001, dtype=float)
    direct = math.fsum(-np.expm1(-model.prob(k) * t))
    # remaining terms are below t p_k
    slack = t * model.tail_mass(5_000_000)
    assert U.v_function(model, t) == pytest.approx(direct, abs=slack + 1e-9)


# -- marks ---------------------------------------------------------------------------

def test_rademacher_bound_and_decomposition():
    model = freq.make_power_law(0.6)
    law = H.rademacher()
    for r in range(20):
        tr = _trace(model, (0.3, 1.0), 5000, 6, r)
        ms = U.attach_marks(tr, law, stream(6, r, MARKS))
        assert np.all(np.abs(ms.U) <= tr.Ustar)
        assert np.allclose(ms.U1 + ms.U2, ms.U, rtol=1e-9, atol=1e-9)
        assert np.all(np.abs(ms.Z) <= tr.K)


def test_single_ball_mark():
    tr = _trace(freq.make_power_law(0.5), (1.0,), 1, seed=3)
    ms = U.attach_marks(tr, H.symmetric_pareto(0.8), stream(3, 0, MARKS))
    eps = H.symmetric_pareto(0.8).sample(stream(3, 0, MARKS), 1)
    assert ms.U[0] == eps[0] and ms.Z[0] == eps[0]


def test_decomposition_unavailable():
    tr = _trace(freq.make_power_law(0.9), (1.0,), 100)
    with pytest.raises(DecompositionUnavailable):
        U.attach_marks(tr, H.symmetric_pareto(0.8), stream(0, 0, MARKS), decompose=True)
    ms = U.attach_marks(tr, H.symmetric_pareto(0.8), stream(0, 0, MARKS))
    assert np.all(np.isnan(ms.U1)) and np.all(np.isfinite(ms.U))


def test_u2_law_with_stable_marks():
    # with stable marks U2_n is exactly SaS with scale**alpha = sum_k P(odd)**alpha
    alpha, beta, n = 1.5, 0.5, 2000
    model = freq.make_power_law(beta)
    law = H.exact_sas(alpha)
    k = np.arange(1, 4_000_001, dtype=float)
    q = 0.5 * (1 - (1 - 2 * model.prob(k)) ** n)
    scale_a = math.fsum(q ** alpha) + n ** alpha * model.power_sum(alpha, 4_000_000)
    R = 3000
    u2 = np.array([U.attach_marks(_trace(model, (1.0,), n, 8, r), law,
                                  stream(8, r, MARKS)).U2[0] for r in range(R)])
    for th in (0.02, 0.05):
        c = np.cos(th * u2)
        assert abs(c.mean() - math.exp(-scale_a * th ** alpha)) < 4 * c.std() / math.sqrt(R)


def test_stationary_stream_identity():
    model = freq.make_power_law(0.6)
    law = H.symmetric_pareto(0.8)
    s = U.stationary_stream(model, law, 10_000, stream(1, 0, URN))
    assert s.X[0] == s.marks[0]
    assert s.S[-1] == pytest.approx(s.U(), rel=1e-12, abs=1e-9)
    # partial sums match U_i at intermediate points too
    for i in (1, 17, 5000):
        sub = U.StationaryStream(s.labels[:i], s.marks[:i], s.X[:i], s.S[:i])
        assert s.S[i - 1] == pytest.approx(sub.U(), rel=1e-12, abs=1e-9)


def test_stationary_stream_marginal():
    # X_i repeats the mark of its urn, so test one index across independent streams
    model = freq.make_power_law(0.5)
    law = H.symmetric_pareto(0.8)
    x = np.array([U.stationary_stream(model, law, 200, stream(2, r, URN)).X[-1]
                  for r in range(3000)])

    def cdf(v):
        v = np.asarray(v, float)
        tail = 0.5 * np.minimum(1.0, np.abs(v) ** -0.8)
        return np.where(v < 0, tail, 1 - tail)

    assert stats.kstest(x, cdf).pvalue > 1e-3


# -- conditional chf -------------------------------------------------------------------

def test_conditional_chf_trivial_cases():
    model = freq.make_power_law(0.5)
    tr = _trace(model, (1.0,), 1)
    law = H.symmetric_pareto(0.8)
    assert U.conditional_chf(tr, [0.7], law, b_n=2.0) == pytest.approx(law.chf(0.35), abs=1e-14)
    tr2 = _trace(model, (0.5, 1.0), 500)
    assert U.conditional_chf(tr2, [0.0, 0.0], law, b_n=3.0) == 1.0


def test_conditional_chf_enumeration():
    rep = verify.conditioning_identity_test(seed=1, eps_draws=50_000)
    assert rep.checks[0].passed, rep.summary()


def test_conditional_chf_unsupported_law():
    tr = _trace(freq.make_power_law(0.5), (1.0,), 10)
    with pytest.raises(UnsupportedLawError):
        U.conditional_chf(tr, [1.0], object(), b_n=1.0)


def test_rao_blackwell_dominance():
    model = freq.make_power_law(0.6)
    law = H.symmetric_pareto(0.8)
    n, R = 5000, 400
    b = freq.normalizations(model, n, 0.8).b_n
    a = np.array([[1.0, 0.5]])
    plain, rb = [], []
    for r in range(R):
        tr = _trace(model, (0.5, 1.0), n, 5, r)
        ms = U.attach_marks(tr, law, stream(5, r, MARKS), decompose=False)
        plain.append(math.cos(ms.U @ a[0] / b))
        rb.append(U.conditional_chf(tr, a, law, b)[0])
    assert np.var(rb) <= np.var(plain)
    assert abs(np.mean(rb) - np.mean(plain)) < 3 * np.std(plain) / math.sqrt(R)
