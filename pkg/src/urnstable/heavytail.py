"""Symmetric mark laws, their characteristic functions and stable constants."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._quad import quad
from .errors import ParameterError

RADEMACHER = "rademacher"
PARETO = "pareto"
STABLE = "stable"


def sigma_eps_alpha(c_eps: float, alpha: float) -> float:
    """``C_eps * int_0^inf x**-alpha sin(x) dx``.

    Uses ``Gamma(1-a) cos(pi a/2) = pi / (2 Gamma(a) sin(pi a/2))``, which is
    smooth through alpha = 1 where it equals pi/2.
    """
    if not 0.0 < alpha < 2.0:
        raise ParameterError(f"alpha must lie in (0, 2), got {alpha}")
    if alpha == 1.0:
        return c_eps * math.pi / 2.0
    return c_eps * math.pi / (2.0 * math.gamma(alpha) * math.sin(math.pi * alpha / 2.0))


def series_constant(alpha: float) -> float:
    """LePage constant ``C_alpha = (int_0^inf x**-alpha sin x dx)**-1``."""
    return 1.0 / sigma_eps_alpha(1.0, alpha)


def sin_power_integral(alpha: float) -> tuple[float, float]:
    """``int_0^inf x**-alpha sin x dx`` by oscillatory quadrature."""
    if not 0.0 < alpha < 2.0:
        raise ParameterError(f"alpha must lie in (0, 2), got {alpha}")
    head, e1 = quad(lambda x: np.sinc(x / math.pi), 0.0, 1.0, weight="alg",
                    wvar=(1.0 - alpha, 0.0))
    tail, e2 = quad(lambda x: x ** -alpha, 1.0, np.inf, weight="sin", wvar=1.0)
    return head + tail, e1 + e2


@lru_cache(maxsize=None)
def _pareto_consts(alpha: float) -> float:
    # int_1^inf cos(u) u**(-alpha-1) du
    a, _ = quad(lambda u: u ** (-alpha - 1.0), 1.0, np.inf, weight="cos", wvar=1.0,
                epsabs=1e-14, epsrel=1e-13)
    return a


def _pareto_one_minus_chf(alpha: float, theta: float) -> float:
    # 1 - phi(theta) for |eps| ~ Pareto(alpha, xmin=1), theta >= 0
    if theta == 0.0:
        return 0.0
    if theta <= 1.0:
        a = _pareto_consts(alpha)
        b, _ = quad(lambda u: -2.0 * math.sin(0.5 * u) ** 2 * u ** (-alpha - 1.0),
                    theta, 1.0, epsabs=1e-14, epsrel=1e-13)
        return theta ** alpha * (1.0 - alpha * (a + b))
    c, _ = quad(lambda u: u ** (-alpha - 1.0), theta, np.inf, weight="cos", wvar=1.0,
                epsabs=1e-14, epsrel=1e-13)
    return 1.0 - alpha * theta ** alpha * c


@dataclass(frozen=True)
class EpsilonLaw:
    """Symmetric law of the urn marks.

    ``kind`` is one of ``rademacher``, ``pareto`` (``P(|e| > x) = (x/xmin)**-alpha``
    for ``x >= xmin``, random sign) or ``stable`` (chf ``exp(-(scale|t|)**alpha)``).
    """

    kind: str
    alpha: float = 2.0
    xmin: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in (RADEMACHER, PARETO, STABLE):
            raise ParameterError(f"unknown law {self.kind!r}")
        if self.kind == PARETO and not (0.0 < self.alpha < 2.0 and self.xmin > 0):
            raise ParameterError("pareto marks need alpha in (0, 2) and xmin > 0")
        if self.kind == STABLE and not (0.0 < self.alpha <= 2.0 and self.scale > 0):
            raise ParameterError("stable marks need alpha in (0, 2] and scale > 0")

    @property
    def c_eps(self) -> float:
        """Tail constant ``lim x**alpha P(|e| > x)``; zero for bounded marks."""
        if self.kind == PARETO:
            return self.xmin ** self.alpha
        if self.kind == STABLE and self.alpha < 2:
            return series_constant(self.alpha) * self.scale ** self.alpha
        return 0.0

    @property
    def sigma_alpha(self) -> float:
        """``sigma_eps**alpha``: the small-theta coefficient of ``1 - phi``."""
        if self.kind == RADEMACHER:
            return 0.5
        if self.kind == STABLE:
            return self.scale ** self.alpha
        return sigma_eps_alpha(self.c_eps, self.alpha)

    def sample(self, rng: np.random.Generator, size=None):
        if self.kind == RADEMACHER:
            return 2.0 * rng.integers(0, 2, size=size) - 1.0
        if self.kind == PARETO:
            u = 1.0 - rng.random(size)
            sign = 2.0 * rng.integers(0, 2, size=size) - 1.0
            return sign * self.xmin * u ** (-1.0 / self.alpha)
        return self.scale * chambers_mallows_stuck(rng, self.alpha, size)

    def chf(self, theta):
        """Real characteristic function ``E cos(theta e)``."""
        return 1.0 - self.one_minus_chf(theta)

    def one_minus_chf(self, theta):
        """``1 - phi(theta)`` without cancellation at small theta."""
        th = np.abs(np.asarray(theta, dtype=np.float64))
        if self.kind == RADEMACHER:
            out = 2.0 * np.sin(0.5 * th) ** 2
        elif self.kind == STABLE:
            out = -np.expm1(-(self.scale * th) ** self.alpha)
        else:
            flat = [_pareto_one_minus_chf(self.alpha, float(x) * self.xmin)
                    for x in th.ravel()]
            out = np.asarray(flat).reshape(th.shape)
        return out if out.ndim else float(out)

    def log_chf(self, theta):
        """``(log|phi|, phi < 0)``; ``log|phi| = -inf`` where ``phi = 0``."""
        om = np.asarray(self.one_minus_chf(theta), dtype=np.float64)
        phi = 1.0 - om
        with np.errstate(divide="ignore", invalid="ignore"):
            logabs = np.where(om < 0.5, np.log1p(-om), np.log(np.abs(phi)))
        return logabs, phi < 0


def rademacher() -> EpsilonLaw:
    return EpsilonLaw(RADEMACHER)


def symmetric_pareto(alpha: float, xmin: float = 1.0) -> EpsilonLaw:
    return EpsilonLaw(PARETO, alpha=alpha, xmin=xmin)


def exact_sas(alpha: float, scale: float = 1.0) -> EpsilonLaw:
    return EpsilonLaw(STABLE, alpha=alpha, scale=scale)


def chambers_mallows_stuck(rng: np.random.Generator, alpha: float, size=None):
    """Standard SaS variates with chf ``exp(-|t|**alpha)``."""
    v = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, size)
    w = rng.standard_exponential(size)
    if alpha == 1.0:
        return np.tan(v)
    return (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
            * (np.cos(v - alpha * v) / w) ** ((1.0 - alpha) / alpha))


def sample_eps(law: EpsilonLaw, rng: np.random.Generator, size=None):
    return law.sample(rng, size)


def chf_eps(law: EpsilonLaw, theta):
    return law.chf(theta)


def hill_estimate(samples, k: int) -> float:
    """Hill estimator of the tail index from the ``k`` largest ``|samples|``."""
    x = np.abs(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    if not 1 <= k < n:
        raise ParameterError(f"need 1 <= k < sample size, got k={k}, n={n}")
    if np.all(x == x[0]):
        raise ParameterError("all samples are equal")
    top = -np.partition(-x, k)[: k + 1]
    top.sort()
    threshold = top[0]
    if threshold <= 0:
        raise ParameterError("threshold order statistic is zero; too few nonzero samples")
    h = np.mean(np.log(top[1:])) - math.log(threshold)
    if h <= 0:
        raise ParameterError("degenerate upper tail")
    return 1.0 / h
