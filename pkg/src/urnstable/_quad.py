"""Thin wrapper over QUADPACK that raises instead of warning."""
from __future__ import annotations

import warnings

from scipy import integrate

from .errors import NumericalError


def quad(func, a, b, *, epsabs=1e-12, epsrel=1e-12, limit=200, **kw):
    """Return ``(value, abserr)``; raise :class:`NumericalError` on failure."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        res = integrate.quad(func, a, b, epsabs=epsabs, epsrel=epsrel,
                             limit=limit, full_output=1, **kw)
    value, abserr = res[0], res[1]
    if len(res) > 3:
        msg = res[3]
        # QAWS/QAWO report roundoff once they are already below tolerance.
        if abserr > max(epsabs, epsrel * abs(value)) * 10:
            raise NumericalError(
                f"quadrature on [{a}, {b}] did not converge: {msg}",
                {"value": value, "abserr": abserr, "message": msg},
            )
    return value, abserr


def quad_tail(func, x0, *, epsabs=1e-20, epsrel=1e-12, **kw):
    """``int_{x0}^inf func`` through ``u = 1/x`` on ``(0, 1/x0]``.

    QUADPACK's own infinite-range map loses the integrand entirely when ``x0``
    is large, so the substitution is done explicitly.
    """
    if x0 <= 0:
        raise ValueError("x0 must be positive")

    def g(u):
        if u == 0.0:
            return 0.0
        return func(1.0 / u) / (u * u)

    return quad(g, 0.0, 1.0 / x0, epsabs=epsabs, epsrel=epsrel, **kw)
