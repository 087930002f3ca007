"""The twelve acceptance criteria at full scale and their stated tolerances.

Each test records a one-line PASS/FAIL verdict that is printed in the pytest
terminal summary. The LePage batch (R = 1e5, J = 1e4, times 0.5 and 1) is
drawn once and shared by criteria 8, 9 and 12; its cost is charged to 8.
"""
import math
import time

import numpy as np
import pytest

from conftest import record
from urnstable import freq, heavytail as H, limitlaw, urnsim, verify

SEED = 42
CFG = verify.DEFAULT_SUITE


def _verdict(num, title, rep, runtime, limit, extra=""):
    ok = rep.passed and runtime < limit
    worst = "; ".join(f"{c.name}={c.observed:.4g}" for c in rep.checks)
    record(num, title, ok, f"[{worst}] {extra}runtime {runtime:.1f}s < {limit:g}s")
    assert rep.passed, rep.summary()
    assert runtime < limit, f"runtime {runtime:.1f}s over {limit}s"


@pytest.fixture(scope="module")
def lepage_batch():
    c = CFG["lepage"]
    t0 = time.perf_counter()
    s = limitlaw.lepage_sample(limitlaw.LePageConfig(c["alpha"], c["beta"], c["J"]),
                               [0.5, 1.0], c["R"], SEED)
    return s, time.perf_counter() - t0


def test_criterion_01_closed_form_anchor():
    rep = verify.mdelta_anchor_test([0.2, 0.5, 0.8], 1e-8)
    _verdict(1, "closed-form anchor", rep, rep.runtime, 1.0)


def test_criterion_02_homogeneity():
    rep = verify.homogeneity_test(SEED, configs=5, max_d=4, tol=1e-8)
    _verdict(2, "homogeneity", rep, rep.runtime, 5.0)


def test_criterion_03_conditioning_identity():
    rep = verify.conditioning_identity_test(SEED, n_path=1000, eps_draws=100_000)
    assert len(rep.checks[1].details["mc"]) == 10
    _verdict(3, "conditioning identity", rep, rep.runtime, 30.0)


def test_criterion_04_lln():
    c = CFG["lln"]
    model = freq.make_power_law(c["beta"])
    rep = verify.ExperimentReport("lln", {}, SEED)
    total = 0.0
    for pat in urnsim.all_patterns(2):
        sub = verify.lln_test(model, c["times"], pat.bits, c["n"], c["R"], SEED)
        rep.checks += sub.checks
        total += sub.runtime
    assert len(rep.checks) == 3
    _verdict(4, "law of large numbers", rep, total, 120.0)


def test_criterion_05_clt_covariance():
    c = CFG["clt_cov"]
    rep = verify.clt_cov_test(freq.make_power_law(c["beta"]), [(0.5,), (1.0,)], (1,),
                              c["n"], c["R"], SEED, pairs=[(1, 1), (0, 1)])
    var, cov = rep.checks
    assert var.target == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-10)
    bif = math.gamma(0.5) * 2 ** -1.5 * (1.5 ** 0.5 - 0.5 ** 0.5)
    assert cov.target == pytest.approx(bif, rel=1e-10)
    _verdict(5, "functional CLT covariance", rep, rep.runtime, 180.0)


def test_criterion_06_karlin_clt():
    c = CFG["karlin"]
    rep = verify.karlin_clt_test(freq.make_power_law(c["beta"]), c["n"], c["R"], SEED)
    _verdict(6, "Karlin CLT", rep, rep.runtime, 300.0)


def test_criterion_07_fdd_gate():
    c = CFG["fdd"]
    law = H.symmetric_pareto(c["alpha"])
    rep = verify.fdd_convergence_test(freq.make_power_law(c["beta"]), law,
                                      urnsim.TimeGrid(tuple(c["times"]), c["n"]),
                                      c["a_grid"], c["R"], SEED, c["tol"])
    assert rep.checks[0].name.startswith("sigma_eps") and rep.checks[0].tolerance == 1e-6
    assert len(c["a_grid"]) == 10
    _verdict(7, "finite-dimensional convergence", rep, rep.runtime, 600.0)


def test_criterion_08_lepage_law(lepage_batch):
    sample, t_sample = lepage_batch
    c = CFG["lepage"]
    rep = verify.lepage_law_test(c["alpha"], c["beta"], c["a"], c["R"], SEED, c["J"],
                                 sample=sample)
    for a, chk in zip(c["a"], rep.checks):
        anchor = math.exp(-a ** c["alpha"] * math.gamma(1 - c["beta"]) * 2 ** (c["beta"] - 1))
        assert chk.details["exact"] == pytest.approx(anchor, rel=1e-8)
    bound = f"truncation bound {sample.chf_bound(2.0):.2e}; "
    _verdict(8, "LePage series vs exact law", rep, rep.runtime + t_sample, 300.0, bound)


def test_criterion_09_self_similarity(lepage_batch):
    sample, _ = lepage_batch
    c, lp = CFG["selfsim"], CFG["lepage"]
    rep = verify.selfsim_test(lp["alpha"], lp["beta"], c["lambda"], [0.5],
                              [[a] for a in lp["a"]], sample=sample, tol_mc=c["tol"])
    exact = verify.selfsim_test(lp["alpha"], lp["beta"], 2.0, [0.3, 0.8],
                                [[1.0, -0.5], [0.25, 2.0], [1.5, 1.5]])
    rep.checks += exact.checks
    _verdict(9, "self-similarity", rep, rep.runtime + exact.runtime, 300.0)


def test_criterion_10_stationary_increments():
    c, lp = CFG["stationarity"], CFG["lepage"]
    rep = verify.stationarity_test(lp["alpha"], lp["beta"], c["t"], c["h"], c["a"])
    _verdict(10, "stationary increments", rep, rep.runtime, 10.0)


def test_criterion_11_occupancy():
    c = CFG["occupancy"]
    rep = verify.occupancy_test(freq.make_power_law(c["beta"]), H.symmetric_pareto(c["alpha"]),
                                urnsim.TimeGrid(tuple(c["times"]), c["n"]), c["a_grid"],
                                c["R"], SEED, c["tol"])
    _verdict(11, "occupancy limit", rep, rep.runtime, 600.0)


def test_criterion_12_tail_index(lepage_batch):
    sample, _ = lepage_batch
    c = CFG["tail"]
    x = sample.paths[:, 1]
    assert sample.times[1] == 1.0 and x.size == 100_000
    rep = verify.hill_test(x, c["k"], c["target"], c["tol"])
    _verdict(12, "tail index", rep, rep.runtime, 120.0)
