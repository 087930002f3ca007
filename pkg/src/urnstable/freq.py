"""Regularly varying urn frequencies p_k, their counting function and sampling.

The main family is the pure power law ``p_k = k**(-1/beta) / Z`` whose counting
function ``nu(x) = #{k : p_k >= 1/x}`` equals ``floor((x/Z)**beta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ._quad import quad_tail
from .errors import ParameterError

POWER = "power"
LOG_PERTURBED = "logperturbed"
FINITE = "finite"

# Labels at or above this value are returned as fresh synthetic urns; the
# probability that two balls share such an urn is below 1e-20 at n = 1e8.
LABEL_CAP = 2.0 ** 62
SERIES_TERMS = 10 ** 6


def zeta_series(q: float, kmax: int = SERIES_TERMS) -> tuple[float, float]:
    """Bracket ``sum_{k>=1} k**-q`` by a direct sum plus Euler-Maclaurin tails.

    For completely monotone summands consecutive Euler-Maclaurin truncations
    bracket the tail, so the returned ``(lo, hi)`` contains the true value.
    """
    if q <= 1:
        raise ParameterError(f"series diverges for exponent {q} <= 1")
    k = np.arange(kmax, 0, -1, dtype=np.float64)
    head = math.fsum(k ** -q)
    K = float(kmax)
    # sum_{k>K} f(k) = int_K^inf f - f(K)/2 - f'(K)/12 + f'''(K)/720 - ...
    base = K ** (1 - q) / (q - 1) - 0.5 * K ** -q
    t2 = q * K ** (-q - 1) / 12.0
    t4 = q * (q + 1) * (q + 2) * K ** (-q - 3) / 720.0
    a, b = head + base + t2 - t4, head + base + t2
    return (min(a, b), max(a, b))


@dataclass(frozen=True)
class Normalizations:
    d_n: float
    b_n: float
    sigma_n: float


@dataclass(frozen=True, eq=False)
class FrequencyModel:
    """A non-increasing probability sequence on the positive integers.

    Immutable; the cached tables in ``_cache`` are filled lazily and are only
    ever read after first use.
    """

    family: str
    beta: float | None
    normalizer: float
    probs: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def exponent(self) -> float:
        return 1.0 / self.beta

    @property
    def support_size(self) -> float:
        return len(self.probs) if self.family == FINITE else math.inf

    # -- evaluation ---------------------------------------------------------
    def prob(self, k):
        k = np.asarray(k)
        if np.any(k < 1):
            raise ParameterError("labels start at 1")
        kf = k.astype(np.float64)
        if self.family == POWER:
            out = kf ** -self.exponent / self.normalizer
        elif self.family == LOG_PERTURBED:
            out = kf ** -self.exponent / (1.0 + np.log(kf)) / self.normalizer
        else:
            p = np.concatenate([self.probs, [0.0]])
            out = p[np.minimum(k, len(self.probs) + 1) - 1]
        return out if out.ndim else float(out)

    def head(self, kmax: int) -> np.ndarray:
        """``p_1 .. p_kmax`` (zero-padded past a finite support)."""
        return np.asarray(self.prob(np.arange(1, kmax + 1)), dtype=np.float64)

    def tail_mass(self, k: int) -> float:
        """``sum_{j>k} p_j``."""
        if self.family == FINITE:
            return float(self.probs[k:].sum()) if k < len(self.probs) else 0.0
        return self.power_sum(1.0, k)

    def power_sum(self, m: float, k: int) -> float:
        """``sum_{j>k} p_j**m`` (finite iff m/beta > 1 for infinite families)."""
        if self.family == FINITE:
            return float((self.probs[k:] ** m).sum()) if k < len(self.probs) else 0.0
        if self.family == POWER:
            s = m * self.exponent
            if s <= 1:
                return math.inf
            return float(special.zeta(s, k + 1)) / self.normalizer ** m
        s = m * self.exponent
        if s <= 1:
            return math.inf
        cut = max(k, 10 ** 5)
        j = np.arange(k + 1, cut + 1, dtype=np.float64)
        direct = math.fsum(self.prob(j) ** m) if cut > k else 0.0
        tail, _ = quad_tail(lambda x: (x ** -self.exponent / (1 + math.log(x))
                                       / self.normalizer) ** m, cut + 0.5)
        return direct + tail

    def nu(self, x: float) -> int:
        """Exact ``#{k >= 1 : p_k >= 1/x}``."""
        if x < 0:
            raise ParameterError("nu is defined for x >= 0")
        if x == 0:
            return 0
        thr = 1.0 / x
        if self.family == FINITE:
            return int(np.count_nonzero(self.probs >= thr))
        if self.family == POWER:
            c = int(math.floor((x / self.normalizer) ** self.beta))
        else:
            c = self._log_nu_guess(x)
        c = max(c, 0)
        while self.prob(c + 1) >= thr:
            c += 1
        while c > 0 and self.prob(c) < thr:
            c -= 1
        return c

    def _log_nu_guess(self, x: float) -> int:
        # k**q (1 + log k) <= x / Z, bisection on integers
        lo, hi = 0, 1
        while self.prob(hi) >= 1.0 / x:
            lo, hi = hi, hi * 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.prob(mid) >= 1.0 / x:
                lo = mid
            else:
                hi = mid
        return lo

    # -- sampling -----------------------------------------------------------
    def sample(self, rng: np.random.Generator, size: int, start: int = 1) -> np.ndarray:
        """Draw ``size`` labels conditioned on ``label >= start``.

        Labels beyond :data:`LABEL_CAP` come back as ``-1`` and must be
        treated as distinct never-seen urns by the caller.
        """
        size = int(size)
        if size == 0:
            return np.empty(0, dtype=np.int64)
        if self.family == FINITE:
            p = self.probs[start - 1:]
            if p.sum() <= 0:
                raise ParameterError("no probability mass at or beyond start")
            return rng.choice(np.arange(start, len(self.probs) + 1), size=size,
                              p=p / p.sum()).astype(np.int64)
        if self.family == POWER:
            return _zipf_rejection_inversion(rng, size, self.exponent, start)
        # log-perturbed: thin the pure power law by 1 / (1 + log k)
        out = np.empty(size, dtype=np.int64)
        filled = 0
        while filled < size:
            want = max(2 * (size - filled), 64)
            k = _zipf_rejection_inversion(rng, want, self.exponent, start)
            kf = np.where(k > 0, k, LABEL_CAP).astype(np.float64)
            keep = k[rng.random(want) * (1.0 + np.log(kf)) <= 1.0 + math.log(start)]
            take = min(len(keep), size - filled)
            out[filled:filled + take] = keep[:take]
            filled += take
        return out

    def sample_label(self, rng: np.random.Generator) -> int:
        k = int(self.sample(rng, 1)[0])
        if k < 0:
            # beyond LABEL_CAP: redraw the exact position with Python ints
            return _zipf_big_label(rng, self.exponent)
        return k


def _zipf_rejection_inversion(rng, size, q, start=1):
    """Rejection-inversion for P(k) proportional to k**-q on k >= start, q > 1.

    Works in tail coordinates ``G(x) = int_x^inf t**-q dt`` to avoid the
    cancellation of the textbook form near the far tail.
    """
    k0 = float(start)

    def G(x):
        return x ** (1.0 - q) / (q - 1.0)

    def Ginv(y):
        return ((q - 1.0) * y) ** (1.0 / (1.0 - q))

    umax = G(k0 + 0.5) + k0 ** -q
    squeeze = (k0 + 1.0) - Ginv(G(k0 + 1.5) + (k0 + 1.0) ** -q)
    out = np.empty(size, dtype=np.int64)
    pending = np.arange(size)
    while pending.size:
        m = pending.size
        u = (1.0 - rng.random(m)) * umax
        with np.errstate(over="ignore", divide="ignore"):
            x = Ginv(u)
        k = np.floor(x + 0.5)
        k = np.maximum(k, k0)
        big = ~(k < LABEL_CAP)
        kk = np.where(big, LABEL_CAP, k)
        with np.errstate(over="ignore"):
            accept = (kk - x <= squeeze) | (u <= G(kk + 0.5) + kk ** -q) | big
        labels = np.where(big, -1, kk.astype(np.int64))
        out[pending[accept]] = labels[accept]
        pending = pending[~accept]
    return out


def _zipf_big_label(rng, q):
    # conditional on k >= LABEL_CAP the continuous approximation is exact to
    # relative order 1/LABEL_CAP
    u = 1.0 - rng.random()
    x = LABEL_CAP * u ** (1.0 / (1.0 - q))
    return int(x)


def make_power_law(beta: float) -> FrequencyModel:
    """``p_k = k**(-1/beta) / zeta(1/beta)``."""
    _check_beta(beta)
    lo, hi = zeta_series(1.0 / beta)
    return FrequencyModel(POWER, float(beta), 0.5 * (lo + hi))


def make_log_perturbed(beta: float) -> FrequencyModel:
    """``p_k`` proportional to ``k**(-1/beta) / (1 + log k)``; experimental."""
    _check_beta(beta)
    q = 1.0 / beta
    kmax = SERIES_TERMS
    k = np.arange(kmax, 0, -1, dtype=np.float64)
    head = math.fsum(k ** -q / (1.0 + np.log(k)))
    tail, _ = quad_tail(lambda x: x ** -q / (1.0 + math.log(x)), kmax + 0.5)
    return FrequencyModel(LOG_PERTURBED, float(beta), head + tail)


def make_finite(probs) -> FrequencyModel:
    """Explicit finite probability vector, used for enumeration oracles."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or np.any(p <= 0):
        raise ParameterError("probabilities must be a non-empty positive vector")
    if abs(p.sum() - 1.0) > 1e-12:
        raise ParameterError("probabilities must sum to one")
    if np.any(np.diff(p) > 0):
        raise ParameterError("probabilities must be non-increasing")
    return FrequencyModel(FINITE, None, 1.0, p)


def _check_beta(beta):
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"beta must lie in (0, 1), got {beta}")


def prob(model: FrequencyModel, k):
    return model.prob(k)


def nu(model: FrequencyModel, x: float) -> int:
    return model.nu(x)


def sample_label(model: FrequencyModel, rng: np.random.Generator) -> int:
    return model.sample_label(rng)


def normalizations(model: FrequencyModel, n: int, alpha: float) -> Normalizations:
    """``d_n = nu(n)``, ``b_n = d_n**(1/alpha)`` and Karlin's ``sigma_n``."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    if not 0.0 < alpha <= 2.0:
        raise ParameterError(f"alpha must lie in (0, 2], got {alpha}")
    d = float(model.nu(n))
    b = d ** (1.0 / alpha)
    if model.beta is None:
        sigma = math.nan
    else:
        beta = model.beta
        sigma = 2.0 ** (beta - 1.0) * math.sqrt(math.gamma(1.0 - beta) * d)
    return Normalizations(d, b, sigma)
