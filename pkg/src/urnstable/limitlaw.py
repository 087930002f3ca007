"""Limiting objects: parity integrals, covariance kernels, stable chf's and
series simulation of the stable limit processes.

All integrals against ``beta r**(-beta-1) dr`` are split at ``r = 1``; the
piece on ``[1, inf)`` is mapped to ``[0, 1]`` by ``u = 1/r`` and both pieces go
to QUADPACK with algebraic endpoint weights.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np

from . import rng as rngmod
from ._quad import quad
from .errors import NumericalError, ParameterError
from .heavytail import series_constant

DEFAULT_TOL = 1e-10
_R_FLOOR = 1e-280


# -- parity probabilities -----------------------------------------------------

def _pattern_factors(times, bits):
    """Increment form of a parity pattern for a sorted time vector.

    Returns ``(deltas, signs, zero)`` with ``P = 2**-d prod(1 + sign e^{-2 s delta})``;
    ``zero`` is set when equal times carry conflicting bits.
    """
    t = np.asarray(times, dtype=np.float64)
    b = np.asarray(bits, dtype=np.int64)
    prev_t = np.concatenate([[0.0], t[:-1]])
    prev_b = np.concatenate([[0], b[:-1]])
    deltas = t - prev_t
    signs = np.where(b == prev_b, 1.0, -1.0)
    zero = bool(np.any((deltas == 0.0) & (signs < 0)))
    return deltas, signs, zero


def _sort_pattern(times, bits):
    t = np.asarray(times, dtype=np.float64)
    b = np.asarray(bits, dtype=np.int64)
    if t.shape != b.shape or t.ndim != 1:
        raise ParameterError("times and pattern must be vectors of equal length")
    if np.any(t < 0):
        raise ParameterError("times must be nonnegative")
    order = np.argsort(t, kind="stable")
    return t[order], b[order]


def _parity_eval(deltas, signs, zero, s):
    """``P(vec N(s t) = delta mod 2)`` for an array of ``s >= 0``."""
    s = np.asarray(s, dtype=np.float64)
    if zero:
        return np.zeros_like(s)
    d = len(deltas)
    out = np.full(s.shape, 2.0 ** -d)
    for dl, sg in zip(deltas, signs):
        if dl == 0.0:
            out = out * (1.0 + sg)
            continue
        with np.errstate(invalid="ignore"):
            x = 2.0 * s * dl
        if sg > 0:
            out = out * (1.0 + np.exp(-x))
        else:
            out = out * (-np.expm1(-x))
    return out


def parity_prob(t, delta, s):
    """Probability that a unit Poisson process has parities ``delta`` at ``s*t``.

    ``t`` must be sorted; the product runs over increments with sign +1 where
    consecutive bits agree (with a leading 0 bit at time 0).
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(np.diff(t) < 0):
        raise ParameterError("times must be sorted; permute delta accordingly")
    if np.any(t < 0):
        raise ParameterError("times must be nonnegative")
    deltas, signs, zero = _pattern_factors(t, delta)
    out = _parity_eval(deltas, signs, zero, s)
    return out if out.ndim else float(out)


def _mbeta_integral(g, beta, tol):
    """``int_0^inf g(r) beta r**(-beta-1) dr`` for ``g(r) = O(r)`` at 0."""
    def head(r):
        r = max(r, _R_FLOOR)
        return g(r) / r

    def tail(u):
        return g(math.inf if u == 0.0 else 1.0 / u)

    a, ea = quad(head, 0.0, 1.0, weight="alg", wvar=(-beta, 0.0), epsabs=tol / 4,
                 epsrel=1e-13)
    b, eb = quad(tail, 0.0, 1.0, weight="alg", wvar=(beta - 1.0, 0.0), epsabs=tol / 4,
                 epsrel=1e-13)
    return beta * (a + b), beta * (ea + eb)


@dataclass(frozen=True)
class ParityIntegral:
    t: tuple
    delta: tuple
    beta: float
    value: float
    abs_error: float


@lru_cache(maxsize=65536)
def _m_delta_cached(t, delta, beta, tol):
    ts, bs = _sort_pattern(t, delta)
    deltas, signs, zero = _pattern_factors(ts, bs)
    if zero or not np.any(bs):
        return 0.0, 0.0

    def g(r):
        return float(_parity_eval(deltas, signs, False, r))

    return _mbeta_integral(g, beta, tol)


def m_delta(t, delta, beta: float, tol: float = DEFAULT_TOL) -> ParityIntegral:
    """``m_t^delta = int_0^inf P(vec N(r t) = delta mod 2) beta r**(-beta-1) dr``.

    Times need not be sorted; pattern bits follow their times.
    """
    _check_beta(beta)
    t = tuple(float(x) for x in np.atleast_1d(t))
    delta = tuple(int(x) for x in np.atleast_1d(delta))
    if len(t) != len(delta):
        raise ParameterError("times and pattern must have equal length")
    if any(x not in (0, 1) for x in delta) or not any(delta):
        raise ParameterError("pattern must be a nonzero 0/1 vector")
    value, err = _m_delta_cached(t, delta, float(beta), float(tol))
    if err > tol:
        raise NumericalError("m_delta quadrature above tolerance", {"abserr": err})
    return ParityIntegral(t, delta, float(beta), value, err)


def field_cov(t, s, delta, beta: float, tol: float = DEFAULT_TOL) -> float:
    """Covariance of the Gaussian limit field of the even/odd-occupancy counts."""
    _check_beta(beta)
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    delta = np.atleast_1d(np.asarray(delta, dtype=np.int64))
    if not (len(t) == len(s) == len(delta)):
        raise ParameterError("time grids and pattern must share one dimension")
    return _field_cov_cached(tuple(t), tuple(s), tuple(int(x) for x in delta),
                             float(beta), float(tol))


@lru_cache(maxsize=65536)
def _field_cov_cached(t, s, delta, beta, tol):
    ft = _pattern_factors(*_sort_pattern(t, delta))
    fs = _pattern_factors(*_sort_pattern(s, delta))
    fj = _pattern_factors(*_sort_pattern(t + s, delta + delta))

    def g(r):
        return float(_parity_eval(*fj, r) - _parity_eval(*ft, r) * _parity_eval(*fs, r))

    value, err = _mbeta_integral(g, beta, tol)
    if err > tol:
        raise NumericalError("field_cov quadrature above tolerance", {"abserr": err})
    return value


def occupancy_integral(t: float, beta: float, tol: float = DEFAULT_TOL) -> ParityIntegral:
    """``int_0^inf P(N(r t) > 0) beta r**(-beta-1) dr`` by quadrature.

    The closed form is ``Gamma(1-beta) t**beta``; this is the independent check.
    """
    _check_beta(beta)
    if t < 0:
        raise ParameterError("t must be nonnegative")
    if t == 0:
        return ParityIntegral((0.0,), (1,), float(beta), 0.0, 0.0)
    value, err = _mbeta_integral(lambda r: -math.expm1(-r * t), float(beta), tol)
    return ParityIntegral((float(t),), (1,), float(beta), value, err)


def bifbm_cov(s: float, t: float, beta: float) -> float:
    """``Gamma(1-beta) 2**(beta-2) ((s+t)**beta - |s-t|**beta)``."""
    if s < 0 or t < 0:
        raise ParameterError("times must be nonnegative")
    return math.gamma(1.0 - beta) * 2.0 ** (beta - 2.0) * ((s + t) ** beta - abs(s - t) ** beta)


# -- finite-dimensional characteristic functions --------------------------------

def patterns(d: int) -> np.ndarray:
    """All nonzero 0/1 patterns of length ``d``; row ``m-1`` has bit j = (m >> j) & 1."""
    if d < 1:
        raise ParameterError("dimension must be >= 1")
    m = np.arange(1, 2 ** d)
    return ((m[:, None] >> np.arange(d)[None, :]) & 1).astype(np.int64)


def m_table(t, beta: float, tol: float = DEFAULT_TOL) -> np.ndarray:
    """``m_t^delta`` for every pattern of :func:`patterns`."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    return np.array([m_delta(t, p, beta, tol).value for p in patterns(len(t))])


def chf_U(a, t, alpha: float, beta: float, sigma: float = 1.0,
          tol: float = DEFAULT_TOL):
    """``E exp(i sum_j a_j sigma U_{t_j}) = exp(-sigma**alpha sum_delta |<a,delta>|**alpha m_t^delta)``.

    ``a`` may be a single coefficient vector or a ``(G, d)`` grid.
    """
    _check_alpha(alpha)
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    a = np.asarray(a, dtype=np.float64)
    single = a.ndim <= 1
    a2 = np.atleast_2d(a.reshape(-1, len(t)) if a.ndim <= 1 else a)
    pats = patterns(len(t))
    m = m_table(t, beta, tol)
    dots = np.abs(a2 @ pats.T)
    out = np.exp(-sigma ** alpha * (dots ** alpha) @ m)
    return float(out[0]) if single else out


def chf_Z(a, t, alpha: float, beta: float, sigma: float = 1.0):
    """Joint chf of the occupancy limit at sorted times ``t``.

    ``exp(-sigma**alpha Gamma(1-beta) sum_k |sum_{j>=k} a_j|**alpha (t_k**beta - t_{k-1}**beta))``
    """
    _check_alpha(alpha)
    _check_beta(beta)
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(np.diff(t) < 0):
        raise ParameterError("times must be sorted")
    a = np.asarray(a, dtype=np.float64)
    single = a.ndim <= 1
    a2 = np.atleast_2d(a.reshape(-1, len(t)) if a.ndim <= 1 else a)
    tails = np.cumsum(a2[:, ::-1], axis=1)[:, ::-1]
    inc = np.diff(np.concatenate([[0.0], t ** beta]))
    out = np.exp(-sigma ** alpha * math.gamma(1.0 - beta) * (np.abs(tails) ** alpha) @ inc)
    return float(out[0]) if single else out


# -- LePage series ---------------------------------------------------------------

@dataclass(frozen=True)
class LePageConfig:
    """Truncated series for the stable integrals driving U and Z.

    Atom ``j`` carries weight ``W eps_j Gamma_j**(-1/alpha)`` with
    ``W = (C_alpha Gamma(1-beta) t_max**beta)**(1/alpha)``, a radius ``s_j`` with
    density proportional to ``s**(-beta-1)(1 - e^{-s})`` and a unit Poisson path
    on ``[0, s_j]`` conditioned to be nonempty.
    """

    alpha: float
    beta: float
    J: int = 10_000

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ParameterError(f"series simulation needs alpha in (0, 2), got {self.alpha}")
        _check_beta(self.beta)
        if self.J < 0:
            raise ParameterError("J must be >= 0")

    @property
    def c_alpha(self) -> float:
        return series_constant(self.alpha)

    def weight(self, t_max: float = 1.0) -> float:
        return (self.c_alpha * math.gamma(1.0 - self.beta) * t_max ** self.beta) ** (1.0 / self.alpha)

    def chf_truncation_bound(self, a_l1, t_max: float = 1.0):
        """Bound on ``|chf(full series) - chf(first J atoms)|`` at coefficient l1-norm ``a_l1``."""
        p = 2.0 / self.alpha
        if self.J + 1 <= p:
            return np.full(np.shape(a_l1), 2.0) if np.ndim(a_l1) else 2.0
        # sum_{j>J} E Gamma_j**-p = Gamma(J+1-p) / ((p-1) Gamma(J))
        tail = math.exp(math.lgamma(self.J + 1 - p) - math.lgamma(self.J)) / (p - 1.0)
        bound = 0.5 * (np.asarray(a_l1) * self.weight(t_max)) ** 2 * tail
        return np.minimum(bound, 2.0) if np.ndim(bound) else min(float(bound), 2.0)

    def abs_tail_bound(self, t_max: float = 1.0) -> float:
        """``E sum_{j>J} W Gamma_j**(-1/alpha)``, finite for alpha < 1 only."""
        p = 1.0 / self.alpha
        if p <= 1.0 or self.J + 1 <= p:
            return math.inf
        tail = math.exp(math.lgamma(self.J + 1 - p) - math.lgamma(self.J)) / (p - 1.0)
        return self.weight(t_max) * tail


@dataclass
class LePageSample:
    times: np.ndarray
    paths: np.ndarray           # (reps, d)
    chf_bound_unit: float       # chf truncation bound at |a|_1 = 1
    abs_tail_bound: float
    config: LePageConfig = field(repr=False)

    def chf_bound(self, a_l1):
        return self.config.chf_truncation_bound(a_l1, float(np.max(self.times, initial=0.0)))


# raw uniform on [0, 1) from a Philox state address; every replicate owns one
_NEXT_DOUBLE = np.random.Philox(0).ctypes.next_double
_KERNEL_CHUNK = 8192


@numba.njit
def _atom_radius(st, p0, e0, e1):
    # rejection from r**-beta on (0,1] and r**(-beta-1) on (1, inf);
    # returns (s, 1 - e^{-s})
    while True:
        v = _NEXT_DOUBLE(st)
        if v < p0:
            r = math.exp(e0 * math.log1p(-v / p0))
            em = -math.expm1(-r)
            if _NEXT_DOUBLE(st) * r < em:
                return r, em
        else:
            r = math.exp(e1 * math.log1p(-(v - p0) / (1.0 - p0)))
            em = -math.expm1(-r)
            if _NEXT_DOUBLE(st) < em:
                return r, em


@numba.njit(parallel=True)
def _lepage_kernel(states, J, alpha, beta, u, which, weight):
    reps = states.shape[0]
    d = u.shape[0]
    out = np.zeros((reps, d))
    inv_alpha = 1.0 / alpha
    w0 = 1.0 / (1.0 - beta)
    w1 = 1.0 / beta
    p0 = w0 / (w0 + w1)
    inv_beta = 1.0 / beta
    for rep in numba.prange(reps):
        st = states[rep]
        gam = 0.0
        for _ in range(J):
            # one uniform gives both the sign and the exponential gap
            v = 2.0 * _NEXT_DOUBLE(st)
            neg = v >= 1.0
            if neg:
                v -= 1.0
            gam -= math.log1p(-v)
            c = weight * math.exp(-inv_alpha * math.log(gam))
            if neg:
                c = -c
            if which == 1:
                # (s, tau) has joint density proportional to s**-beta e^{-s tau}
                # on tau in (0, 1), so tau alone is a power of a uniform
                tau = math.exp(inv_beta * math.log1p(-_NEXT_DOUBLE(st)))
                for i in range(d):
                    if tau <= u[i]:
                        out[rep, i] += c
                continue
            s, em = _atom_radius(st, p0, w0, -w1)
            # first point of the nonempty unit-rate path, rescaled to (0, 1]
            tau = -math.log1p(-(1.0 - _NEXT_DOUBLE(st)) * em) / s
            # only parities matter: a Poisson(lam) count is odd w.p. (1 - e^{-2 lam})/2
            odd = 0
            lo = 0.0
            for i in range(d):
                hi = u[i]
                if hi > lo:
                    if lo < tau <= hi:
                        odd ^= 1
                    start = lo if lo > tau else tau
                    if hi > start:
                        if _NEXT_DOUBLE(st) < -0.5 * math.expm1(-2.0 * s * (hi - start)):
                            odd ^= 1
                    lo = hi
                if odd:
                    out[rep, i] += c
    return out


def lepage_sample(config: LePageConfig, t, reps: int, seed: int, which: str = "U") -> LePageSample:
    """``reps`` independent truncated-series draws of U (or Z) at times ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(t < 0):
        raise ParameterError("times must be nonnegative")
    if which not in ("U", "Z"):
        raise ParameterError("which must be 'U' or 'Z'")
    order = np.argsort(t, kind="stable")
    t_max = float(t.max()) if t.size else 0.0
    paths = np.zeros((reps, len(t)))
    if config.J > 0 and t_max > 0:
        u = t[order] / t_max
        code = 0 if which == "U" else 1
        for lo in range(0, reps, _KERNEL_CHUNK):
            hi = min(reps, lo + _KERNEL_CHUNK)
            gens, states = rngmod.kernel_states(seed, lo, hi)
            raw = _lepage_kernel(states, int(config.J), float(config.alpha),
                                 float(config.beta), u, code, config.weight(t_max))
            del gens
            paths[lo:hi][:, order] = raw
    unit = config.chf_truncation_bound(1.0, t_max) if t_max > 0 else 0.0
    if unit > 1e-3:
        warnings.warn(f"J={config.J} leaves chf truncation bound {unit:.3g} at |a|=1",
                      RuntimeWarning, stacklevel=2)
    return LePageSample(t, paths, unit, config.abs_tail_bound(t_max) if t_max > 0 else 0.0,
                        config)


def lepage_simulate(config: LePageConfig, t, which: str = "U",
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """One truncated-series path of U (or Z) evaluated at ``t``."""
    rng = rng if rng is not None else np.random.default_rng()
    seed = int(rng.integers(0, 2 ** 63))
    return lepage_sample(config, t, 1, seed, which).paths[0]


# -- Gaussian limit field ---------------------------------------------------------

def field_cov_matrix(points, delta, beta: float) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = len(pts)
    cov = np.empty((n, n))
    for i, j in itertools.combinations_with_replacement(range(n), 2):
        cov[i, j] = cov[j, i] = field_cov(pts[i], pts[j], delta, beta)
    return cov


def gaussian_field_sample(points, delta, beta: float, rng: np.random.Generator,
                          size: int = 1) -> np.ndarray:
    """Draws of the centred Gaussian limit field at ``points`` (shape ``(size, N)``)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) > 1000:
        raise ParameterError("at most 1000 field points")
    cov = field_cov_matrix(pts, delta, beta)
    live = np.diag(cov) > 1e-14
    out = np.zeros((size, len(pts)))
    if not live.any():
        return out
    sub = cov[np.ix_(live, live)]
    lam_min = float(np.linalg.eigvalsh(sub).min())
    if lam_min < -1e-8:
        raise NumericalError("field covariance is indefinite", {"min_eigenvalue": lam_min})
    jitter = max(0.0, -lam_min) + 1e-12 * float(np.trace(sub)) / len(sub)
    chol = np.linalg.cholesky(sub + jitter * np.eye(len(sub)))
    out[:, live] = rng.standard_normal((size, len(sub))) @ chol.T
    return out


def _check_beta(beta):
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"beta must lie in (0, 1), got {beta}")


def _check_alpha(alpha):
    if not 0.0 < alpha <= 2.0:
        raise ParameterError(f"alpha must lie in (0, 2], got {alpha}")
