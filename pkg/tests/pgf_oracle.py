"""Exact stationary law for Bernoulli(0.3)/Bernoulli(0.2) offspring with
DiscretePareto(alpha) immigration, from its generating function.

The stationary series is a sum of independent thinned immigration counts, so its
pgf is prod_i G_eps(F_i(s)), where F_i is the pgf of the size at lag i of one
ancestor's line.  G_eps(z) = 1 - (1 - z) Li_alpha(z) / z.  Coefficients come back
from an FFT on a circle of radius r < 1, which damps aliasing to r^K.
"""

from __future__ import annotations

import numpy as np


def polylog(s: float, n_series: int = 90):
    """Vectorized Li_s(z) for |z| < 1 and non-integer s."""
    import mpmath

    coef = np.array([complex(mpmath.zeta(s - k) / mpmath.factorial(k)) for k in range(n_series)])
    gamma = complex(mpmath.gamma(1 - s))
    k_small = np.arange(1, 70)

    def li(z):
        z = np.asarray(z, dtype=complex)
        out = np.empty_like(z)
        small = np.abs(z) < 0.5
        out[small] = (z[small][:, None] ** k_small / k_small**s).sum(axis=1)
        mu = np.log(z[~small])
        out[~small] = gamma * (-mu) ** (s - 1) + np.polyval(coef[::-1], mu)
        return out

    return li


def stationary_pmf(alpha: float, n_terms: int = 60, size: int = 2**16, damp: float = 1e-10):
    """pmf of the stationary series on 0..size-1 (accurate well below ``size``)."""
    li = polylog(alpha)
    r = damp ** (1.0 / size)
    s = r * np.exp(2j * np.pi * np.arange(size) / size)
    g_eps = lambda z: 1 - (1 - z) * li(z) / z
    f_prev2, f_prev = np.ones(size, complex), s.copy()
    log_p = np.log(g_eps(f_prev))
    for _ in range(n_terms):
        f = (0.7 + 0.3 * f_prev) * (0.8 + 0.2 * f_prev2)
        log_p += np.log(g_eps(f))
        f_prev2, f_prev = f_prev, f
    return np.fft.fft(np.exp(log_p)).real / size * r ** (-np.arange(size, dtype=float))


def stationary_tail(alpha: float, x: int, **kw) -> float:
    return float(1.0 - stationary_pmf(alpha, **kw)[: int(x) + 1].sum())
