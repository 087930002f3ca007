"""Urn sampling, occupancy statistics at checkpoint times and marked sums.

Two engines produce the same law. ``stream`` draws every ball label. ``binned``
draws the counts of the heavily used urns ``k <= kcut`` from a multinomial and
only draws labels for the balls that land beyond ``kcut``; since each urn's
count is all that matters, this is exact and costs ``O(kcut + n * tail)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DecompositionUnavailable, ParameterError, UnsupportedLawError
from .freq import FINITE, LABEL_CAP, FrequencyModel, normalizations
from .heavytail import EpsilonLaw, chambers_mallows_stuck

MAX_D = 20
CHUNK = 1 << 20
KCUT_MIN = 16
KCUT_MAX = 1 << 20


@dataclass(frozen=True)
class TimeGrid:
    """Checkpoint times ``t_1 <= ... <= t_d`` and horizon ``n``."""

    times: tuple
    n: int

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64).ravel()
        if t.size < 1:
            raise ParameterError("need at least one checkpoint")
        if t.size > MAX_D:
            raise ParameterError(f"d={t.size} > {MAX_D}: pattern space too large")
        if np.any(np.diff(t) < 0):
            raise ParameterError("times must be sorted")
        if t[0] < 0 or t[-1] > 1:
            raise ParameterError("times must lie in [0, 1]")
        if int(self.n) != self.n or self.n < 0:
            raise ParameterError("n must be a nonnegative integer")
        object.__setattr__(self, "times", tuple(float(x) for x in t))
        object.__setattr__(self, "n", int(self.n))

    @property
    def d(self) -> int:
        return len(self.times)

    @property
    def checkpoints(self) -> np.ndarray:
        return np.floor(self.n * np.asarray(self.times)).astype(np.int64)


@dataclass(frozen=True)
class ParityPattern:
    """A nonzero parity vector; bit ``j`` refers to checkpoint ``j``."""

    bits: tuple

    def __post_init__(self):
        b = tuple(int(x) for x in self.bits)
        if not b or any(x not in (0, 1) for x in b):
            raise ParameterError("pattern bits must be 0/1")
        if not any(b):
            raise ParameterError("the all-zero pattern is excluded")
        if len(b) > MAX_D:
            raise ParameterError(f"d > {MAX_D}")
        object.__setattr__(self, "bits", b)

    @property
    def d(self) -> int:
        return len(self.bits)

    @property
    def index(self) -> int:
        return sum(bit << j for j, bit in enumerate(self.bits))

    @property
    def bitstring(self) -> str:
        return "".join(map(str, self.bits))

    @classmethod
    def from_index(cls, m: int, d: int) -> "ParityPattern":
        return cls(tuple((m >> j) & 1 for j in range(d)))

    @classmethod
    def from_string(cls, s: str) -> "ParityPattern":
        return cls(tuple(int(c) for c in s))


def all_patterns(d: int) -> list[ParityPattern]:
    return [ParityPattern.from_index(m, d) for m in range(1, 1 << d)]


@dataclass
class OccupancyTrace:
    """Per-urn counts at each checkpoint for the occupied urns of one path.

    ``labels`` are urn indices; negative labels stand for distinct urns
    beyond the label cap. ``counts[i, j]`` is the count of urn ``labels[i]``
    after ``checkpoints[j]`` balls (or at time ``n t_j`` when Poissonized).
    """

    model: FrequencyModel = field(repr=False)
    times: np.ndarray
    n: float
    checkpoints: np.ndarray
    labels: np.ndarray
    counts: np.ndarray
    poissonized: bool = False

    @property
    def d(self) -> int:
        return len(self.times)

    @property
    def K(self) -> np.ndarray:
        """Occupied urns at each checkpoint."""
        return np.count_nonzero(self.counts, axis=0)

    @property
    def Ustar(self) -> np.ndarray:
        """Odd-occupied urns at each checkpoint."""
        return np.count_nonzero(self.counts & 1, axis=0)

    @property
    def final_counts(self) -> np.ndarray:
        return self.counts[:, -1] if self.counts.size else np.zeros(0, np.int64)

    @property
    def masks(self) -> np.ndarray:
        """Parity bitmask per occupied urn, bit ``j`` = checkpoint ``j``."""
        if not len(self.labels):
            return np.zeros(0, dtype=np.int64)
        w = np.left_shift(np.int64(1), np.arange(self.d, dtype=np.int64))
        return (self.counts & 1) @ w

    @property
    def M(self) -> np.ndarray:
        """``M[m]`` for ``m`` in ``0 .. 2**d - 1``; entry 0 counts occupied all-even urns."""
        return np.bincount(self.masks, minlength=1 << self.d).astype(np.int64)

    def m_count(self, pattern) -> int:
        if not isinstance(pattern, ParityPattern):
            pattern = ParityPattern(tuple(pattern))
        if pattern.d != self.d:
            raise ParameterError("pattern length differs from the grid dimension")
        return int(self.M[pattern.index])

    def m_dict(self) -> dict:
        M = self.M
        return {ParityPattern.from_index(m, self.d).bitstring: int(M[m])
                for m in range(1, 1 << self.d)}

    def probs(self) -> np.ndarray:
        """``p_k`` for each stored urn (tiny value for capped labels)."""
        lab = np.where(self.labels > 0, self.labels, int(LABEL_CAP)).astype(np.float64)
        if self.model.family == FINITE:
            return np.asarray(self.model.prob(self.labels), dtype=np.float64)
        return np.asarray(self.model.prob(lab), dtype=np.float64)


@dataclass
class MarkedSums:
    """Randomized statistics at each checkpoint; U1/U2 are NaN when unavailable."""

    U: np.ndarray
    Z: np.ndarray
    U1: np.ndarray
    U2: np.ndarray
    u2_tail_scale: float = 0.0


# -- engines ---------------------------------------------------------------------

def _empty_trace(model, grid, poissonized=False):
    return OccupancyTrace(model, np.asarray(grid.times), grid.n, grid.checkpoints,
                          np.zeros(0, np.int64), np.zeros((0, grid.d), np.int64),
                          poissonized)


def choose_kcut(model: FrequencyModel, n: float) -> int:
    """Smallest ``k`` with ``n * sum_{j>k} p_j <= k``, clipped to a sane range."""
    if model.family == FINITE:
        return len(model.probs)
    if n <= KCUT_MIN:
        return KCUT_MIN
    lo, hi = KCUT_MIN, KCUT_MIN
    while hi < KCUT_MAX and n * model.tail_mass(hi) > hi:
        lo, hi = hi, hi * 2
    hi = min(hi, KCUT_MAX)
    if n * model.tail_mass(hi) > hi:
        return hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if n * model.tail_mass(mid) <= mid:
            hi = mid
        else:
            lo = mid
    return hi


def _label_counts(model, rng, total, start, synth_base):
    """Counts of ``total`` labels drawn from ``model`` given ``label >= start``.

    Returns sorted unique labels and counts; capped draws become distinct
    negative labels starting at ``synth_base``.
    """
    labs, cnts = [], []
    fresh = 0
    left = int(total)
    while left > 0:
        m = min(left, CHUNK)
        k = model.sample(rng, m, start=start)
        big = k < 0
        nb = int(big.sum())
        if nb:
            labs.append(synth_base - fresh - np.arange(nb, dtype=np.int64))
            cnts.append(np.ones(nb, dtype=np.int64))
            fresh += nb
            k = k[~big]
        u, c = np.unique(k, return_counts=True)
        labs.append(u)
        cnts.append(c.astype(np.int64))
        left -= m
    if not labs:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), 0
    lab = np.concatenate(labs)
    cnt = np.concatenate(cnts)
    u, inv = np.unique(lab, return_inverse=True)
    return u, np.bincount(inv, weights=cnt).astype(np.int64), fresh


def _assemble(model, grid_times, n, checkpoints, head_inc, tail_parts, poissonized):
    """Stack head increments and tail label counts into cumulative per-urn counts."""
    d = len(grid_times)
    blocks_lab, blocks_cnt = [], []
    if head_inc is not None:
        cum = np.cumsum(head_inc, axis=1)
        occ = cum[:, -1] > 0
        blocks_lab.append(np.flatnonzero(occ).astype(np.int64) + 1)
        blocks_cnt.append(cum[occ])
    if tail_parts:
        lab = np.concatenate([p[0] for p in tail_parts])
        col = np.concatenate([np.full(len(p[0]), p[2], np.int64) for p in tail_parts])
        cnt = np.concatenate([p[1] for p in tail_parts])
        if lab.size:
            u, inv = np.unique(lab, return_inverse=True)
            inc = np.zeros((len(u), d), np.int64)
            np.add.at(inc, (inv, col), cnt)
            blocks_lab.append(u)
            blocks_cnt.append(np.cumsum(inc, axis=1))
    if blocks_lab:
        labels = np.concatenate(blocks_lab)
        counts = np.concatenate(blocks_cnt, axis=0)
    else:
        labels = np.zeros(0, np.int64)
        counts = np.zeros((0, d), np.int64)
    return OccupancyTrace(model, np.asarray(grid_times), n, checkpoints, labels,
                          counts, poissonized)


def simulate(model: FrequencyModel, grid: TimeGrid, rng: np.random.Generator,
             engine: str = "binned") -> OccupancyTrace:
    """Throw ``grid.n`` balls and record per-urn counts at each checkpoint."""
    if engine not in ("binned", "stream"):
        raise ParameterError(f"unknown engine {engine!r}")
    if grid.n == 0:
        return _empty_trace(model, grid)
    cps = grid.checkpoints
    inc = np.diff(np.concatenate([[0], cps]))
    finite = model.family == FINITE
    kcut = choose_kcut(model, grid.n) if engine == "binned" else 0
    head = None
    tail_parts = []
    synth = -1
    if kcut:
        ph = model.head(kcut)
        rest = 0.0 if finite else model.tail_mass(kcut)
        pv = np.append(ph, rest)
        pv /= pv.sum()
        head = np.zeros((kcut, grid.d), np.int64)
        for j, m in enumerate(inc):
            if m == 0:
                continue
            draw = rng.multinomial(int(m), pv)
            head[:, j] = draw[:kcut]
            if draw[kcut]:
                u, c, fresh = _label_counts(model, rng, draw[kcut], kcut + 1, synth)
                tail_parts.append((u, c, j))
                synth -= fresh
    else:
        for j, m in enumerate(inc):
            if m == 0:
                continue
            u, c, fresh = _label_counts(model, rng, m, 1, synth)
            tail_parts.append((u, c, j))
            synth -= fresh
    return _assemble(model, grid.times, grid.n, cps, head, tail_parts, False)


def poissonized_simulate(model: FrequencyModel, times, n: float, rng: np.random.Generator,
                         ) -> OccupancyTrace:
    """Balls arrive as a rate-``n`` Poisson process; counts at times ``n t_j``.

    ``times`` may exceed 1 (any horizon ``T = max(times)``); each urn ``k``
    receives an independent Poisson process of rate ``n p_k``.
    """
    t = np.asarray(times, dtype=np.float64).ravel()
    if t.size < 1 or t.size > MAX_D:
        raise ParameterError(f"need 1 <= d <= {MAX_D}")
    if np.any(np.diff(t) < 0) or t[0] < 0:
        raise ParameterError("times must be sorted and nonnegative")
    if n < 0:
        raise ParameterError("n must be nonnegative")
    d = t.size
    horizon = float(n) * t
    cps = horizon
    if horizon[-1] == 0:
        return OccupancyTrace(model, t, n, cps, np.zeros(0, np.int64),
                              np.zeros((0, d), np.int64), True)
    finite = model.family == FINITE
    kcut = choose_kcut(model, horizon[-1])
    ph = model.head(kcut)
    rest = 0.0 if finite else model.tail_mass(kcut)
    dt = np.diff(np.concatenate([[0.0], horizon]))
    head = np.zeros((kcut, d), np.int64)
    tail_parts = []
    synth = -1
    for j, h in enumerate(dt):
        if h == 0:
            continue
        head[:, j] = rng.poisson(ph * h)
        if rest > 0:
            m = rng.poisson(rest * h)
            if m:
                u, c, fresh = _label_counts(model, rng, m, kcut + 1, synth)
                tail_parts.append((u, c, j))
                synth -= fresh
    return _assemble(model, t, n, cps, head, tail_parts, True)


# -- marks -------------------------------------------------------------------------

def _odd_prob(p, m, poissonized=False):
    """``P(count odd)`` for a Binomial(m, p) (or Poisson(m p)) count."""
    p = np.asarray(p, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if poissonized:
        return -0.5 * np.expm1(-2.0 * p * m)
    with np.errstate(divide="ignore", invalid="ignore"):
        small = -0.5 * np.expm1(m * np.log1p(-2.0 * p))
        big = 0.5 * (1.0 - np.power(1.0 - 2.0 * p, m))
    out = np.where(p < 0.25, small, big)
    return np.where(m == 0, 0.0, out)


def expected_odd_prob(model: FrequencyModel, n: int, k: int) -> float:
    """``P(Y_{n,k} odd) = (1 - (1 - 2 p_k)**n) / 2``."""
    if n < 0 or k < 1:
        raise ParameterError("need n >= 0 and k >= 1")
    return float(_odd_prob(model.prob(k), n))


def _u2_cut(model, n_max):
    if model.family == FINITE:
        return len(model.probs)
    return max(model.nu(1000.0 * max(n_max, 1.0)), 1)


def attach_marks(trace: OccupancyTrace, law: EpsilonLaw, rng: np.random.Generator,
                 decompose: bool | None = None) -> MarkedSums:
    """Draw one mark per occupied urn and form U, Z and (optionally) U1, U2.

    ``decompose=None`` computes U1/U2 when they exist and fills NaN otherwise;
    ``True`` raises :class:`DecompositionUnavailable` when ``beta >= alpha``.

    U2 is summed urn by urn for ``k <= nu(1000 n)``. Past that point every
    ``P(odd)`` is ``n_j p_k`` to relative order 1e-3, so the remaining sum is
    ``n_j S`` with ``S = sum eps_k p_k``, drawn as one stable variable with
    scale ``(sigma_eps**alpha sum p_k**alpha)**(1/alpha)``. This is exact in law
    for stable marks and a stable approximation otherwise.
    """
    d = trace.d
    eps = law.sample(rng, len(trace.labels))
    odd = (trace.counts & 1).astype(np.float64)
    occ = (trace.counts > 0).astype(np.float64)
    U = eps @ odd if len(eps) else np.zeros(d)
    Z = eps @ occ if len(eps) else np.zeros(d)
    model = trace.model
    a = law.alpha
    ok = model.family == FINITE or (model.beta is not None and model.beta < a)
    if decompose and not ok:
        raise DecompositionUnavailable(
            f"U1/U2 need beta < alpha (beta={model.beta}, alpha={a})")
    if not ok or decompose is False:
        nan = np.full(d, np.nan)
        return MarkedSums(np.asarray(U, float), np.asarray(Z, float), nan, nan.copy())
    m = np.asarray(trace.checkpoints, dtype=np.float64)
    pois = trace.poissonized
    p_occ = trace.probs()
    U2 = eps @ _odd_prob(p_occ[:, None], m[None, :], pois) if len(eps) else np.zeros(d)
    kd = _u2_cut(model, m[-1])
    # unoccupied urns in the head
    taken = np.zeros(kd, bool)
    lab = trace.labels
    inside = (lab >= 1) & (lab <= kd)
    taken[lab[inside] - 1] = True
    free = np.flatnonzero(~taken) + 1
    if free.size:
        pf = model.head(kd)[free - 1]
        ef = law.sample(rng, free.size)
        for j in range(d):
            U2[j] += ef @ _odd_prob(pf, m[j], pois)
    scale = 0.0
    if model.family != FINITE:
        mass = model.power_sum(a, kd)
        beyond = ~inside
        mass -= float(np.sum(p_occ[beyond] ** a))
        mass = max(mass, 0.0)
        scale = (law.sigma_alpha * mass) ** (1.0 / a)
        if scale > 0:
            s = scale * float(chambers_mallows_stuck(rng, a))
            U2 = U2 + m * s
    U = np.asarray(U, float)
    U2 = np.asarray(U2, float)
    return MarkedSums(U, np.asarray(Z, float), U - U2, U2, scale)


# -- stationary sequence -------------------------------------------------------------

@dataclass
class StationaryStream:
    labels: np.ndarray      # urn of each ball (negative: capped, distinct)
    marks: np.ndarray       # eps of the urn of each ball
    X: np.ndarray
    S: np.ndarray           # running sums, S[i-1] = U_i

    def U(self) -> float:
        """``sum_k eps_k 1{Y_k odd}`` recomputed from the final counts."""
        if not len(self.labels):
            return 0.0
        u, first, cnt = np.unique(self.labels, return_index=True, return_counts=True)
        return float(np.sum(self.marks[first][cnt % 2 == 1]))


def stationary_stream(model: FrequencyModel, law: EpsilonLaw, n: int,
                      rng: np.random.Generator) -> StationaryStream:
    """``X_i = eps_{Y_i}`` if urn ``Y_i`` now holds an odd count, else ``-eps_{Y_i}``."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    lab = model.sample(rng, n)
    big = lab < 0
    lab = lab.copy()
    lab[big] = -1 - np.arange(int(big.sum()), dtype=np.int64)
    u, inv = np.unique(lab, return_inverse=True)
    eps = law.sample(rng, len(u))
    order = np.argsort(inv, kind="stable")
    grp = inv[order]
    starts = np.flatnonzero(np.r_[True, grp[1:] != grp[:-1]])
    run = np.arange(n) - np.repeat(starts, np.diff(np.r_[starts, n]))
    occurrence = np.empty(n, np.int64)
    occurrence[order] = run + 1
    marks = eps[inv]
    X = np.where(occurrence % 2 == 1, marks, -marks)
    return StationaryStream(lab, marks, X, np.cumsum(X))


# -- exact expectations ----------------------------------------------------------------

def _tail_cut(model, scale):
    # first k with p_k * scale <= 0.05
    return model.nu(20.0 * scale) + 1


def v_function(model: FrequencyModel, t: float) -> float:
    """``V(t) = sum_k (1 - exp(-p_k t))``."""
    if t < 0:
        raise ParameterError("t must be >= 0")
    if t == 0:
        return 0.0
    if model.family == FINITE:
        return float(np.sum(-np.expm1(-model.probs * t)))
    K = _tail_cut(model, t)
    head = 0.0
    for lo in range(1, K + 1, CHUNK):
        hi = min(K, lo + CHUNK - 1)
        head += math.fsum(-np.expm1(-model.prob(np.arange(lo, hi + 1)) * t))
    # sum_{k>K} (1 - e^{-p t}) = sum_{m>=1} (-1)**(m+1) t**m/m! sum_{k>K} p**m
    tail = 0.0
    for m in range(1, 60):
        term = t ** m / math.factorial(m) * model.power_sum(float(m), K)
        tail += term if m % 2 else -term
        if term < 1e-17 * max(head, 1.0):
            break
    return head + tail


def _pattern_signs(bits):
    # increment parity f_j = delta_j xor delta_{j-1}
    prev = 0
    out = []
    for b in bits:
        out.append(b ^ prev)
        prev = b
    return out


def expected_M(model: FrequencyModel, times, n: float, pattern,
               poissonized: bool = False) -> float:
    """``E M^delta``: sum over urns of the probability of the parity vector ``delta``.

    Checkpoints are ``floor(n t_j)`` balls, or times ``n t_j`` when Poissonized.
    """
    t = np.asarray(times, dtype=np.float64).ravel()
    if not isinstance(pattern, ParityPattern):
        pattern = ParityPattern(tuple(pattern))
    if pattern.d != t.size:
        raise ParameterError("pattern length differs from the number of times")
    cps = n * t if poissonized else np.floor(n * t)
    m = np.diff(np.concatenate([[0.0], cps]))
    f = _pattern_signs(pattern.bits)
    s = np.array([-1.0 if fj else 1.0 for fj in f])

    def block(p):
        x = np.exp(-2.0 * p[:, None] * m) if poissonized else \
            np.power(1.0 - 2.0 * p[:, None], m)
        return np.prod(0.5 * (1.0 + s * x), axis=1)

    if model.family == FINITE:
        return float(math.fsum(block(model.probs)))
    K = _tail_cut(model, max(cps[-1], 1.0))
    head = 0.0
    for lo in range(1, K + 1, CHUNK):
        hi = min(K, lo + CHUNK - 1)
        head += math.fsum(block(np.asarray(model.prob(np.arange(lo, hi + 1)), float)))
    # tail: prod_j (1 + s_j x_j)/2 = 2**-d sum_S (prod_{j in S} s_j) x_S, and the
    # coefficients sum to 0, so each x_S may be replaced by x_S - 1 and expanded
    # in powers of p
    d = t.size
    tail = 0.0
    for S in range(1, 1 << d):
        idx = [j for j in range(d) if (S >> j) & 1]
        coef = float(np.prod(s[idx])) / (1 << d)
        mS = float(np.sum(m[idx]))
        if mS == 0:
            continue
        tail += coef * _power_tail(model, K, mS, poissonized)
    return head + tail


def _power_tail(model, K, mS, poissonized):
    """``sum_{k>K} ((1-2p_k)**mS - 1)`` (or ``e^{-2 p mS} - 1``) by power sums."""
    total = 0.0
    c = 1.0
    for r in range(1, 80):
        if poissonized:
            c = c * (-2.0 * mS) / r
        else:
            c = c * (-2.0) * (mS - r + 1) / r
            if c == 0.0:
                break
        term = c * model.power_sum(float(r), K)
        total += term
        if abs(term) < 1e-18 * max(abs(total), 1.0) and r > 2:
            break
    return total


# -- conditional characteristic function ---------------------------------------------

def _pattern_matrix(d):
    m = np.arange(1, 1 << d)
    return ((m[:, None] >> np.arange(d)) & 1).astype(np.float64)


def chf_log_table(a, law: EpsilonLaw, b_n: float, d: int):
    """``log|phi|`` and sign flags of ``phi(<a, delta>/b_n)`` for every pattern.

    ``a`` has shape ``(G, d)``; results have shape ``(G, 2**d - 1)``.
    """
    if b_n <= 0:
        raise ParameterError("b_n must be positive")
    if not hasattr(law, "log_chf"):
        raise UnsupportedLawError("law has no characteristic function")
    A = np.atleast_2d(np.asarray(a, dtype=np.float64))
    if A.shape[1] != d:
        raise ParameterError("coefficient vectors must have length d")
    theta = A @ _pattern_matrix(d).T / b_n
    logabs, neg = law.log_chf(theta)
    return np.asarray(logabs), np.asarray(neg)


def conditional_chf_batch(M, table) -> np.ndarray:
    """Rows of M-counts (``(R, 2**d)``, entry 0 ignored) against a log table."""
    logabs, neg = table
    Mn = np.atleast_2d(np.asarray(M))[:, 1:].astype(np.float64)
    with np.errstate(invalid="ignore"):
        zero = np.isneginf(logabs)
        la = np.where(zero, 0.0, logabs)
        s = Mn @ la.T
        hit_zero = (Mn > 0).astype(np.float64) @ zero.T.astype(np.float64) > 0
        flips = ((Mn % 2) @ neg.T.astype(np.float64)) % 2
    out = np.exp(s) * np.where(flips > 0.5, -1.0, 1.0)
    return np.where(hit_zero, 0.0, out)


def conditional_chf(trace: OccupancyTrace, a, law: EpsilonLaw, b_n: float | None = None):
    """``E[exp(i sum_j a_j U_{n_j} / b_n) | urn path] = prod_delta phi(<a,delta>/b_n)**M^delta``.

    Real because the marks are symmetric. ``a`` may be one vector or a
    ``(G, d)`` array, giving a scalar or a length-``G`` array.
    """
    if b_n is None:
        n = int(round(trace.n))
        b_n = normalizations(trace.model, max(n, 1), min(law.alpha, 2.0)).b_n
    a_arr = np.asarray(a, dtype=np.float64)
    table = chf_log_table(a_arr, law, b_n, trace.d)
    out = conditional_chf_batch(trace.M[None, :], table)[0]
    return float(out[0]) if a_arr.ndim == 1 else out

