"""Seeded, tolerance-bounded experiments comparing simulations with exact laws.

Every experiment returns an :class:`ExperimentReport` listing checks with the
observed value, the target and the tolerance. Targets come from quadrature,
closed forms or enumeration, never from an earlier simulation.
"""
from __future__ import annotations

import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np
from scipy import stats

from . import limitlaw, rng as rngmod, urnsim
from .errors import ParameterError
from .freq import FrequencyModel, make_finite, make_power_law, normalizations
from .heavytail import (PARETO, EpsilonLaw, hill_estimate, rademacher, sin_power_integral,
                        symmetric_pareto)


# -- estimates and reports ----------------------------------------------------------

@dataclass
class EcfEstimate:
    grid: np.ndarray            # (G, d)
    values: np.ndarray          # complex (G,)
    std_errors: np.ndarray      # (G,)
    R: int


def ecf(samples, grid) -> EcfEstimate:
    """Empirical chf ``mean exp(i <a, X>)`` on a grid of coefficient vectors.

    The standard error combines the real and imaginary parts,
    ``sqrt(var cos + var sin) / sqrt(R)``.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    g = np.asarray(grid, dtype=np.float64)
    if g.size == 0:
        raise ParameterError("empty coefficient grid")
    if g.ndim == 1:
        g = g[:, None] if x.shape[1] == 1 else g[None, :]
    R = x.shape[0]
    if R < 2:
        raise ParameterError("need at least two replicates")
    if g.shape[1] != x.shape[1]:
        raise ParameterError("grid vectors and samples differ in dimension")
    phase = x @ g.T
    c, s = np.cos(phase), np.sin(phase)
    vals = c.mean(axis=0) + 1j * s.mean(axis=0)
    se = np.sqrt(c.var(axis=0, ddof=1) + s.var(axis=0, ddof=1)) / math.sqrt(R)
    return EcfEstimate(g, vals, se, R)


@dataclass
class Check:
    name: str
    passed: bool
    observed: float
    target: float
    tolerance: float
    details: dict = field(default_factory=dict)


@dataclass
class ExperimentReport:
    name: str
    config: dict
    seed: int | None
    checks: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    runtime: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, observed, target, tolerance, passed=None, **details):
        if passed is None:
            passed = abs(observed - target) <= tolerance
        self.checks.append(Check(name, bool(passed), float(observed), float(target),
                                 float(tolerance), details))
        return self.checks[-1]

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {"name": self.name, "passed": self.passed, "config": self.config,
               "seed": self.seed, "checks": [asdict(c) for c in self.checks],
               "diagnostics": self.diagnostics}
        if include_timing:
            out["runtime"] = self.runtime
        return _jsonable(out)

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)

    def summary(self) -> str:
        lines = [f"{self.name}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            lines.append(f"  [{'ok' if c.passed else 'FAIL'}] {c.name}: observed={c.observed:.6g}"
                         f" target={c.target:.6g} tol={c.tolerance:.3g}")
        return "\n".join(lines)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        rep = fn(*args, **kwargs)
        rep.runtime = time.perf_counter() - t0
        return rep
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    wrapper.__wrapped__ = fn
    return wrapper


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("URNSTABLE_THREADS", "1")))
    except ValueError:
        return 1


def farm(fn, reps: int, workers: int | None = None) -> list:
    """``[fn(r) for r in range(reps)]``, optionally over processes; order is fixed."""
    workers = default_workers() if workers is None else workers
    if workers <= 1 or reps < 2:
        return [fn(r) for r in range(reps)]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(fn, range(reps), chunksize=max(1, reps // (8 * workers))))


# -- replicate kernels (top level so they pickle) --------------------------------------

def _urn_replicate(rep, model, grid, law, seed, poissonized=False):
    if poissonized:
        tr = urnsim.poissonized_simulate(model, grid.times, grid.n,
                                         rngmod.stream(seed, rep, rngmod.URN))
    else:
        tr = urnsim.simulate(model, grid, rngmod.stream(seed, rep, rngmod.URN))
    out = {"M": tr.M, "Ustar": tr.Ustar, "K": tr.K}
    if law is not None:
        ms = urnsim.attach_marks(tr, law, rngmod.stream(seed, rep, rngmod.MARKS),
                                 decompose=False)
        out["U"] = ms.U
        out["Z"] = ms.Z
    return out


def _sub_pattern_counts(rep, model, grid, cols, delta, seed, poissonized):
    if poissonized:
        tr = urnsim.poissonized_simulate(model, grid.times, grid.n,
                                         rngmod.stream(seed, rep, rngmod.URN))
    else:
        tr = urnsim.simulate(model, grid, rngmod.stream(seed, rep, rngmod.URN))
    par = tr.counts & 1
    want = np.asarray(delta)
    return np.array([np.count_nonzero(np.all(par[:, c] == want, axis=1)) for c in cols])


# -- experiments ----------------------------------------------------------------------

def _beta_of(model):
    if model.beta is None:
        raise ParameterError("experiment needs a regularly varying model (beta known)")
    return model.beta


@_timed
def fdd_convergence_test(model: FrequencyModel, law: EpsilonLaw, grid: urnsim.TimeGrid,
                         a_grid, R: int, seed: int, tol: float = 0.05,
                         workers: int | None = None) -> ExperimentReport:
    """ecf of ``U_{floor(nt)}/b_n`` against the stable limit, plain and Rao-Blackwellized."""
    beta = _beta_of(model)
    alpha = law.alpha
    A = np.atleast_2d(np.asarray(a_grid, dtype=np.float64))
    rep = ExperimentReport("fdd_convergence", {
        "beta": beta, "alpha": alpha, "law": law.kind, "n": grid.n, "times": grid.times,
        "a_grid": A, "R": R, "tol": tol}, seed)
    if law.kind == PARETO:
        quad_val, _ = sin_power_integral(alpha)
        rep.add("sigma_eps_closed_form_vs_quadrature", law.sigma_alpha,
                law.c_eps * quad_val, 1e-6)
    b_n = normalizations(model, max(grid.n, 1), alpha).b_n
    sims = farm(partial(_urn_replicate, model=model, grid=grid, law=law, seed=seed), R, workers)
    U = np.array([s["U"] for s in sims]) / b_n
    M = np.array([s["M"] for s in sims])
    target = np.atleast_1d(limitlaw.chf_U(A, grid.times, alpha, beta,
                                          sigma=law.sigma_alpha ** (1.0 / alpha)))
    plain = ecf(U, A)
    table = urnsim.chf_log_table(A, law, b_n, grid.d)
    cond = urnsim.conditional_chf_batch(M, table)
    rb_mean = cond.mean(axis=0)
    rb_se = cond.std(axis=0, ddof=1) / math.sqrt(R)
    dp = np.abs(plain.values - target)
    dr = np.abs(rb_mean - target)
    rep.add("plain_ecf_sup_discrepancy", dp.max(), 0.0, tol, passed=dp.max() <= tol)
    rep.add("rao_blackwell_sup_discrepancy", dr.max(), 0.0, tol, passed=dr.max() <= tol)
    rep.diagnostics.update({
        "target": target, "plain_ecf": plain.values.real, "plain_se": plain.std_errors,
        "rb_ecf": rb_mean, "rb_se": rb_se, "b_n": b_n,
        "rb_se_le_plain_se": bool(np.all(rb_se <= plain.std_errors + 1e-12)),
    })
    return rep


@_timed
def lln_test(model: FrequencyModel, times, delta, n: int, R: int, seed: int,
             rel_tol: float = 0.05, workers: int | None = None) -> ExperimentReport:
    """Mean of ``M^delta_{floor(nt)} / d_n`` against ``m_t^delta``."""
    beta = _beta_of(model)
    pat = urnsim.ParityPattern(tuple(delta))
    grid = urnsim.TimeGrid(tuple(times), n)
    rep = ExperimentReport("lln", {"beta": beta, "times": grid.times, "delta": pat.bits,
                                   "n": n, "R": R, "rel_tol": rel_tol}, seed)
    d_n = normalizations(model, max(n, 1), 2.0).d_n
    target = limitlaw.m_delta(grid.times, pat.bits, beta).value
    sims = farm(partial(_urn_replicate, model=model, grid=grid, law=None, seed=seed), R, workers)
    x = np.array([s["M"][pat.index] for s in sims], dtype=np.float64) / d_n
    mean = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(R)) if R > 1 else math.inf
    tol = max(3.0 * se, rel_tol * abs(target))
    rep.add(f"mean_M_{pat.bitstring}_over_d_n", mean, target, tol)
    rep.diagnostics.update({"se": se, "replicate_sd": float(x.std(ddof=1)) if R > 1 else 0.0,
                            "d_n": d_n, "expected_M_over_d_n":
                            urnsim.expected_M(model, grid.times, n, pat) / d_n})
    return rep


def _jackknife_cov(x, y):
    """Sample covariance and its delete-one jackknife standard error."""
    R = len(x)
    sx, sy, sxy = x.sum(), y.sum(), (x * y).sum()
    cov = (sxy - sx * sy / R) / (R - 1)
    mx = (sx - x) / (R - 1)
    my = (sy - y) / (R - 1)
    loo = (sxy - x * y - (R - 1) * mx * my) / (R - 2)
    se = math.sqrt((R - 1) / R * np.sum((loo - loo.mean()) ** 2))
    return float(cov), se


@_timed
def clt_cov_test(model: FrequencyModel, points, delta, n: int, R: int, seed: int,
                 pairs=None, poissonized: bool = False,
                 workers: int | None = None) -> ExperimentReport:
    """Covariances of ``(M^delta - mean)/sqrt(d_n)`` at time vectors ``points``.

    ``points`` is a list of length-d time vectors; ``pairs`` lists the index
    pairs to test (default: all pairs including the diagonal).
    """
    beta = _beta_of(model)
    pts = [tuple(float(v) for v in np.atleast_1d(p)) for p in points]
    d = len(delta)
    if any(len(p) != d for p in pts):
        raise ParameterError("every point needs one time per pattern bit")
    all_t = sorted({v for p in pts for v in p})
    grid = urnsim.TimeGrid(tuple(all_t), n)
    cols = [[all_t.index(v) for v in p] for p in pts]
    pairs = pairs or [(i, j) for i in range(len(pts)) for j in range(i, len(pts))]
    rep = ExperimentReport("clt_cov", {"beta": beta, "points": pts, "delta": list(delta),
                                       "n": n, "R": R, "poissonized": poissonized}, seed)
    d_n = normalizations(model, max(n, 1), 2.0).d_n
    rows = farm(partial(_sub_pattern_counts, model=model, grid=grid, cols=cols,
                        delta=tuple(delta), seed=seed, poissonized=poissonized), R, workers)
    X = np.array(rows, dtype=np.float64) / math.sqrt(d_n)
    for i, j in pairs:
        cov, se = _jackknife_cov(X[:, i], X[:, j])
        target = limitlaw.field_cov(pts[i], pts[j], delta, beta)
        extra = {}
        if d == 1:
            extra["bifbm"] = limitlaw.bifbm_cov(pts[i][0], pts[j][0], beta)
        rep.add(f"cov[{i},{j}]", cov, target, 3.0 * se, jackknife_se=se, **extra)
    rep.diagnostics["d_n"] = d_n
    return rep


@_timed
def karlin_clt_test(model: FrequencyModel, n: int, R: int, seed: int,
                    var_tol: float = 0.1, ks_tol: float = 0.05,
                    workers: int | None = None) -> ExperimentReport:
    """``(U*_n - E U*_n) / sigma_n`` against the standard normal."""
    beta = _beta_of(model)
    grid = urnsim.TimeGrid((1.0,), n)
    rep = ExperimentReport("karlin_clt", {"beta": beta, "n": n, "R": R,
                                          "var_tol": var_tol, "ks_tol": ks_tol}, seed)
    norms = normalizations(model, n, 2.0)
    mean = urnsim.expected_M(model, (1.0,), n, (1,))
    sims = farm(partial(_urn_replicate, model=model, grid=grid, law=None, seed=seed), R, workers)
    u = np.array([s["Ustar"][0] for s in sims], dtype=np.float64)
    z = (u - mean) / norms.sigma_n
    var = float(z.var(ddof=1))
    ks = float(stats.kstest(z, "norm").statistic)
    rep.add("variance", var, 1.0, var_tol)
    rep.add("ks_distance", ks, 0.0, ks_tol, passed=ks <= ks_tol)
    rep.diagnostics.update({
        "E_Ustar": mean, "sigma_n": norms.sigma_n, "d_n": norms.d_n,
        "E_Ustar_over_d_n": mean / norms.d_n,
        "m_1": limitlaw.m_delta((1.0,), (1,), beta).value,
    })
    return rep


@_timed
def selfsim_test(alpha: float, beta: float, lam: float, times, a_grid, R: int = 0,
                 seed: int = 0, J: int = 10_000, sample=None, tol_exact: float = 1e-8,
                 tol_mc: float = 0.03) -> ExperimentReport:
    """``U_{lam t}`` against ``lam**(beta/alpha) U_t``: exact chf identity and series draws.

    ``sample`` may be a :class:`limitlaw.LePageSample` holding the times
    ``t`` followed by ``lam t``; otherwise ``R`` fresh replicates are drawn.
    """
    H = beta / alpha
    t = np.atleast_1d(np.asarray(times, dtype=np.float64))
    A = np.atleast_2d(np.asarray(a_grid, dtype=np.float64))
    if A.shape[1] != len(t):
        A = A.reshape(-1, len(t))
    rep = ExperimentReport("selfsim", {"alpha": alpha, "beta": beta, "lambda": lam,
                                       "times": t, "a_grid": A, "R": R, "J": J}, seed)
    lhs = np.atleast_1d(limitlaw.chf_U(A, lam * t, alpha, beta))
    rhs = np.atleast_1d(limitlaw.chf_U(lam ** H * A, t, alpha, beta))
    rep.add("exact_identity_max_abs", float(np.max(np.abs(lhs - rhs))), 0.0, tol_exact,
            passed=np.max(np.abs(lhs - rhs)) <= tol_exact)
    if sample is None and R > 0:
        sample = limitlaw.lepage_sample(limitlaw.LePageConfig(alpha, beta, J),
                                        np.concatenate([t, lam * t]), R, seed)
    if sample is not None:
        d = len(t)
        if not np.allclose(sample.times, np.concatenate([t, lam * t])):
            raise ParameterError("sample times must be t followed by lam * t")
        base = sample.paths[:, :d]
        scaled = sample.paths[:, d:2 * d]
        ph_l = scaled @ A.T
        ph_r = lam ** H * base @ A.T
        diff = np.exp(1j * ph_l) - np.exp(1j * ph_r)
        dev = np.abs(diff.mean(axis=0))
        se = np.sqrt(diff.real.var(axis=0, ddof=1) + diff.imag.var(axis=0, ddof=1)) \
            / math.sqrt(len(diff))
        rep.add("series_ecf_sup_discrepancy", float(dev.max()), 0.0, tol_mc,
                passed=dev.max() <= tol_mc, se_at_sup=float(se[np.argmax(dev)]))
        rep.diagnostics["series_R"] = int(len(diff))
    return rep


@_timed
def lepage_law_test(alpha: float, beta: float, a_points, R: int, seed: int,
                    J: int = 10_000, sample=None, t_index: int = -1) -> ExperimentReport:
    """Series marginal ``U_1`` against ``exp(-|a|**alpha m_1^1)``.

    Tolerance is three standard errors plus the printed truncation bound.
    """
    rep = ExperimentReport("lepage_law", {"alpha": alpha, "beta": beta,
                                          "a": list(a_points), "R": R, "J": J}, seed)
    if sample is None:
        sample = limitlaw.lepage_sample(limitlaw.LePageConfig(alpha, beta, J), [1.0],
                                        R, seed)
    x = sample.paths[:, t_index]
    t1 = float(sample.times[t_index])
    m1 = limitlaw.m_delta((t1,), (1,), beta).value
    est = ecf(x, np.asarray(a_points, dtype=np.float64)[:, None])
    for a, v, se in zip(a_points, est.values, est.std_errors):
        target = math.exp(-abs(a) ** alpha * m1)
        bound = float(sample.chf_bound(abs(a)))
        rep.add(f"ecf(a={a:g})", abs(v - target), 0.0, 3.0 * se + bound,
                passed=abs(v - target) <= 3.0 * se + bound, value=v, exact=target,
                se=se, truncation_bound=bound)
    rep.diagnostics["abs_tail_bound"] = sample.abs_tail_bound
    return rep


@_timed
def hill_test(samples, k: int, target: float, tol: float) -> ExperimentReport:
    rep = ExperimentReport("tail_index", {"k": k, "n": int(np.size(samples))}, None)
    h = hill_estimate(samples, k)
    rep.add("hill_estimate", h, target, tol)
    return rep


@_timed
def stationarity_test(alpha: float, beta: float, t_grid, h_grid, a_grid,
                      tol: float = 1e-8) -> ExperimentReport:
    """``E exp(i a (U_{t+h} - U_t))`` from two-point chf's must not depend on ``t``."""
    rep = ExperimentReport("stationary_increments", {"alpha": alpha, "beta": beta,
                                                     "t": list(t_grid), "h": list(h_grid),
                                                     "a": list(a_grid)}, None)
    worst = 0.0
    for h in h_grid:
        ref = np.atleast_1d(limitlaw.chf_U(np.asarray(a_grid, float)[:, None], [h], alpha, beta))
        for t in t_grid:
            A = np.array([[-a, a] for a in a_grid], dtype=np.float64)
            val = np.atleast_1d(limitlaw.chf_U(A, [t, t + h], alpha, beta))
            worst = max(worst, float(np.max(np.abs(val - ref))))
    rep.add("max_abs_deviation", worst, 0.0, tol, passed=worst <= tol)
    return rep


@_timed
def occupancy_test(model: FrequencyModel, law: EpsilonLaw, grid: urnsim.TimeGrid, a_grid,
                   R: int, seed: int, tol: float = 0.05, workers: int | None = None,
                   ) -> ExperimentReport:
    """ecf of ``Z_{floor(nt)}/b_n`` against the occupancy limit chf."""
    beta = _beta_of(model)
    alpha = law.alpha
    A = np.atleast_2d(np.asarray(a_grid, dtype=np.float64))
    rep = ExperimentReport("occupancy", {"beta": beta, "alpha": alpha, "law": law.kind,
                                         "n": grid.n, "times": grid.times, "a_grid": A,
                                         "R": R, "tol": tol}, seed)
    worst = 0.0
    for t in grid.times:
        q = limitlaw.occupancy_integral(t, beta).value
        worst = max(worst, abs(q - math.gamma(1.0 - beta) * t ** beta))
    rep.add("d1_quadrature_vs_closed_form", worst, 0.0, 1e-8, passed=worst <= 1e-8)
    b_n = normalizations(model, max(grid.n, 1), alpha).b_n
    sims = farm(partial(_urn_replicate, model=model, grid=grid, law=law, seed=seed), R, workers)
    Z = np.array([s["Z"] for s in sims]) / b_n
    target = np.atleast_1d(limitlaw.chf_Z(A, grid.times, alpha, beta,
                                          sigma=law.sigma_alpha ** (1.0 / alpha)))
    est = ecf(Z, A)
    dev = np.abs(est.values - target)
    rep.add("ecf_sup_discrepancy", float(dev.max()), 0.0, tol, passed=dev.max() <= tol)
    rep.diagnostics.update({"target": target, "ecf": est.values.real, "se": est.std_errors})
    return rep


# -- enumeration oracle -----------------------------------------------------------------

def _enumerate(p, n):
    p = np.asarray(p, dtype=np.float64)
    L = len(p)
    if L ** n > 10 ** 7:
        raise ParameterError(f"{L}**{n} outcomes exceed the enumeration limit")
    if n == 0:
        return np.zeros((1, 0), np.int64), np.ones(1)
    idx = np.indices((L,) * n).reshape(n, -1).T
    prob = np.prod(p[idx], axis=1)
    return idx, prob


def brute_force_finite_urn(p, n: int, times=(1.0,), statistic: str = "Ustar", a=None,
                           b_n: float = 1.0):
    """Exact law of a statistic by enumerating all ``len(p)**n`` ball sequences.

    ``statistic``: ``Ustar`` (dict tuple-of-U* -> prob), ``M`` (dict M-vector ->
    prob), ``traces`` (list of (prob, counts matrix)) or ``chf``, the exact joint
    chf of ``U/b_n`` at each row of ``a`` with Rademacher marks, averaged over
    every sign assignment.
    """
    if n > 8:
        raise ParameterError("enumeration supports n <= 8")
    p = np.asarray(p, dtype=np.float64)
    seqs, prob = _enumerate(p, n)
    grid = urnsim.TimeGrid(tuple(times), n)
    cps = grid.checkpoints
    L = len(p)
    counts = np.stack([np.stack([(seqs[:, :c] == k).sum(axis=1) for k in range(L)], axis=1)
                       for c in cps], axis=2)            # (N, L, d)
    if statistic == "traces":
        return list(zip(prob, counts))
    if statistic in ("Ustar", "M"):
        table: dict = {}
        w = 1 << np.arange(grid.d)
        for pr, c in zip(prob, counts):
            if statistic == "Ustar":
                key = tuple(int(v) for v in (c & 1).sum(axis=0))
            else:
                masks = ((c & 1) @ w)[c[:, -1] > 0]
                key = tuple(int(v) for v in np.bincount(masks, minlength=1 << grid.d))
            table[key] = table.get(key, 0.0) + pr
        return table
    if statistic == "chf":
        if a is None:
            raise ParameterError("chf needs coefficient vectors a")
        A = np.atleast_2d(np.asarray(a, dtype=np.float64))
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=L)))  # (2**L, L)
        odd = (counts & 1).astype(np.float64)                               # (N, L, d)
        U = np.einsum("sl,nld->nsd", signs, odd)                           # (N, 2**L, d)
        vals = np.cos(U @ A.T / b_n).mean(axis=1)                          # (N, G)
        return prob @ vals
    raise ParameterError(f"unknown statistic {statistic!r}")


def trace_from_counts(p, times, n, counts) -> urnsim.OccupancyTrace:
    """Occupancy trace of an explicit finite-urn count matrix (urns x checkpoints)."""
    model = make_finite(p)
    grid = urnsim.TimeGrid(tuple(times), n)
    occ = counts[:, -1] > 0
    return urnsim.OccupancyTrace(model, np.asarray(grid.times), n, grid.checkpoints,
                                 np.flatnonzero(occ).astype(np.int64) + 1,
                                 np.asarray(counts[occ], dtype=np.int64))


@_timed
def conditioning_identity_test(seed: int, p=(0.5, 0.3, 0.2), n_small: int = 4,
                               times=(0.5, 1.0), a_exact=None, n_path: int = 1000,
                               beta: float = 0.6, eps_draws: int = 100_000,
                               a_mc=None) -> ExperimentReport:
    """Conditional chf product against enumeration and against MC over the marks."""
    law = rademacher()
    rep = ExperimentReport("conditioning_identity", {"p": list(p), "n_small": n_small,
                                                     "times": list(times), "n_path": n_path,
                                                     "beta": beta, "eps_draws": eps_draws},
                           seed)
    A = np.asarray(a_exact if a_exact is not None else
                   [[0.3, 0.7], [1.0, -1.0], [2.0, 0.5], [-1.5, 2.5], [3.0, 3.0]], float)
    b = 1.7
    exact = brute_force_finite_urn(p, n_small, times, "chf", A, b)
    prod = np.zeros(len(A))
    for pr, c in brute_force_finite_urn(p, n_small, times, "traces"):
        tr = trace_from_counts(p, times, n_small, c)
        prod += pr * np.atleast_1d(urnsim.conditional_chf(tr, A, law, b))
    err = float(np.max(np.abs(exact - prod)))
    rep.add("enumeration_max_abs", err, 0.0, 1e-12, passed=err <= 1e-12)

    model = make_power_law(beta)
    grid = urnsim.TimeGrid(tuple(times), n_path)
    tr = urnsim.simulate(model, grid, rngmod.stream(seed, 0, rngmod.URN))
    b_n = normalizations(model, n_path, 2.0).b_n
    G = np.asarray(a_mc if a_mc is not None else
                   [[0.5, 0.5], [1, 0], [0, 1], [1, -1], [2, 1], [-1, 2], [3, 0.5],
                    [0.25, -0.75], [1.5, 1.5], [4, -2]], float)
    exact_c = np.atleast_1d(urnsim.conditional_chf(tr, G, law, b_n))
    g = rngmod.stream(seed, 0, rngmod.MARKS)
    odd = (tr.counts & 1).astype(np.float64)
    acc = np.zeros(len(G))
    acc2 = np.zeros(len(G))
    done = 0
    while done < eps_draws:
        m = min(10_000, eps_draws - done)
        eps = law.sample(g, (m, len(tr.labels)))
        c = np.cos((eps @ odd) @ G.T / b_n)
        acc += c.sum(axis=0)
        acc2 += (c * c).sum(axis=0)
        done += m
    mean = acc / eps_draws
    se = np.sqrt(np.maximum(acc2 / eps_draws - mean ** 2, 0.0) * eps_draws
                 / (eps_draws - 1) / eps_draws)
    z = np.abs(mean - exact_c) / np.maximum(se, 1e-300)
    rep.add("mc_max_z", float(z.max()), 0.0, 3.0, passed=z.max() <= 3.0,
            mc=mean, product=exact_c, se=se)
    return rep


# -- suite ----------------------------------------------------------------------------

A_GRID_2D = [[0.25, 0.25], [0.5, 0.5], [1.0, 1.0], [2.0, 0.0], [0.0, 2.0], [1.0, -1.0],
             [-0.5, 1.0], [1.5, -0.5], [0.75, 0.25], [2.0, 2.0]]

DEFAULT_SUITE = {
    "mdelta_anchor": {"betas": [0.2, 0.5, 0.8], "tol": 1e-8},
    "homogeneity": {"configs": 5, "max_d": 4, "tol": 1e-8},
    "conditioning": {"n_path": 1000, "eps_draws": 100_000},
    "lln": {"beta": 0.6, "times": [0.5, 1.0], "n": 1_000_000, "R": 50},
    "clt_cov": {"beta": 0.5, "n": 100_000, "R": 2000},
    "karlin": {"beta": 0.5, "n": 1_000_000, "R": 2000},
    "fdd": {"alpha": 0.8, "beta": 0.6, "n": 100_000, "R": 5000, "times": [0.5, 1.0],
            "a_grid": A_GRID_2D, "tol": 0.05},
    "lepage": {"alpha": 0.8, "beta": 0.6, "J": 10_000, "R": 100_000, "a": [0.5, 1.0, 2.0]},
    "selfsim": {"lambda": 2.0, "tol": 0.03},
    "stationarity": {"t": [0.0, 0.1, 0.3, 0.5], "h": [0.1, 0.25, 0.5], "a": [0.5, 1.0, 2.0]},
    "occupancy": {"alpha": 0.8, "beta": 0.6, "n": 100_000, "R": 5000, "times": [0.5, 1.0],
                  "a_grid": A_GRID_2D, "tol": 0.05},
    "tail": {"k": 1000, "target": 0.8, "tol": 0.15},
}


@_timed
def mdelta_anchor_test(betas, tol=1e-8) -> ExperimentReport:
    rep = ExperimentReport("mdelta_anchor", {"betas": list(betas), "tol": tol}, None)
    for b in betas:
        rep.add(f"m_1^1(beta={b})", limitlaw.m_delta((1.0,), (1,), b).value,
                math.gamma(1.0 - b) * 2.0 ** (b - 1.0), tol)
    return rep


@_timed
def homogeneity_test(seed: int, configs: int = 5, max_d: int = 4,
                     tol: float = 1e-8) -> ExperimentReport:
    """``m_{lam t}^delta = lam**beta m_t^delta`` at random configurations."""
    rep = ExperimentReport("homogeneity", {"configs": configs, "max_d": max_d, "tol": tol},
                           seed)
    g = rngmod.stream(seed, 0, rngmod.AUX)
    for i in range(configs):
        d = int(g.integers(1, max_d + 1))
        t = np.sort(g.uniform(0.05, 1.0, d))
        delta = g.integers(0, 2, d)
        if not delta.any():
            delta[int(g.integers(0, d))] = 1
        lam = float(g.uniform(0.2, 5.0))
        beta = float(g.uniform(0.1, 0.9))
        lhs = limitlaw.m_delta(lam * t, delta, beta).value
        rhs = lam ** beta * limitlaw.m_delta(t, delta, beta).value
        rep.add(f"config{i}", lhs, rhs, tol, t=t, delta=delta, lam=lam, beta=beta)
    return rep


def _merge(cfg, override):
    out = json.loads(json.dumps(cfg))
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k].update(v)
        else:
            out[k] = v
    return out


def run_suite(config: dict | None = None, seed: int = 42, only=None,
              workers: int | None = None, log=None) -> dict:
    """Run the acceptance gates; returns ``{gate name: ExperimentReport}``.

    ``config`` overrides entries of :data:`DEFAULT_SUITE`; ``only`` restricts
    the gates by name.
    """
    cfg = _merge(DEFAULT_SUITE, config)
    want = set(only) if only else set(cfg)
    out = {}

    def emit(name, rep):
        out[name] = rep
        if log:
            log(f"{name}: {'PASS' if rep.passed else 'FAIL'}")

    if "mdelta_anchor" in want:
        c = cfg["mdelta_anchor"]
        emit("mdelta_anchor", mdelta_anchor_test(c["betas"], c["tol"]))
    if "homogeneity" in want:
        c = cfg["homogeneity"]
        emit("homogeneity", homogeneity_test(seed, c["configs"], c["max_d"], c["tol"]))
    if "conditioning" in want:
        c = cfg["conditioning"]
        emit("conditioning", conditioning_identity_test(seed, n_path=c["n_path"],
                                                        eps_draws=c["eps_draws"]))
    if "lln" in want:
        c = cfg["lln"]
        model = make_power_law(c["beta"])
        d = len(c["times"])
        rep = ExperimentReport("lln", {"per_pattern": True}, seed)
        for pat in urnsim.all_patterns(d):
            sub = lln_test(model, c["times"], pat.bits, c["n"], c["R"], seed, workers=workers)
            for chk in sub.checks:
                rep.checks.append(chk)
        emit("lln", rep)
    if "clt_cov" in want:
        c = cfg["clt_cov"]
        emit("clt_cov", clt_cov_test(make_power_law(c["beta"]), [(0.5,), (1.0,)], (1,),
                                     c["n"], c["R"], seed, pairs=[(1, 1), (0, 1)],
                                     workers=workers))
    if "karlin" in want:
        c = cfg["karlin"]
        emit("karlin", karlin_clt_test(make_power_law(c["beta"]), c["n"], c["R"], seed,
                                       workers=workers))
    if "fdd" in want:
        c = cfg["fdd"]
        emit("fdd", fdd_convergence_test(make_power_law(c["beta"]),
                                         symmetric_pareto(c["alpha"]),
                                         urnsim.TimeGrid(tuple(c["times"]), c["n"]),
                                         c["a_grid"], c["R"], seed, c["tol"], workers))
    sample = None
    if want & {"lepage", "selfsim", "tail"}:
        c = cfg["lepage"]
        sample = limitlaw.lepage_sample(limitlaw.LePageConfig(c["alpha"], c["beta"], c["J"]),
                                        [0.5, 1.0], c["R"], seed)
    if "lepage" in want:
        c = cfg["lepage"]
        emit("lepage", lepage_law_test(c["alpha"], c["beta"], c["a"], c["R"], seed, c["J"],
                                       sample=sample))
    if "selfsim" in want:
        c, lp = cfg["selfsim"], cfg["lepage"]
        emit("selfsim", selfsim_test(lp["alpha"], lp["beta"], c["lambda"], [0.5],
                                     [[a] for a in lp["a"]], sample=sample,
                                     tol_mc=c["tol"]))
    if "stationarity" in want:
        c, lp = cfg["stationarity"], cfg["lepage"]
        emit("stationarity", stationarity_test(lp["alpha"], lp["beta"], c["t"], c["h"], c["a"]))
    if "occupancy" in want:
        c = cfg["occupancy"]
        emit("occupancy", occupancy_test(make_power_law(c["beta"]),
                                         symmetric_pareto(c["alpha"]),
                                         urnsim.TimeGrid(tuple(c["times"]), c["n"]),
                                         c["a_grid"], c["R"], seed, c["tol"], workers))
    if "tail" in want:
        c = cfg["tail"]
        emit("tail", hill_test(sample.paths[:, 1], c["k"], c["target"], c["tol"]))
    return out


def suite_report(results: dict, config: dict | None, seed: int,
                 include_timing: bool = False) -> dict:
    return _jsonable({
        "seed": seed,
        "config": _merge(DEFAULT_SUITE, config),
        "passed": all(r.passed for r in results.values()),
        "gates": {k: r.to_dict(include_timing) for k, r in results.items()},
    })
