"""Closed-form mean structure, moments and tail constants of the GINAR(2) model.

Offspring means enter through the mean matrix ``M = [[m_xi, m_eta], [1, 0]]``
with eigenvalues ``lambda_pm = (m_xi +- sqrt(m_xi^2 + 4 m_eta)) / 2``.
``m_k`` is the expected population at time k of the process without
immigration started from ``(X_0, X_{-1}) = (1, 0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

INF = math.inf


class AnalyticsError(ValueError):
    """Inputs outside the domain of a closed-form result."""


class Criticality(str, Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class MeanStructure:
    m_xi: float
    m_eta: float
    lambda_plus: float
    lambda_minus: float
    rho: float
    criticality: Criticality
    primitive: bool

    def m(self, k: int) -> float:
        return m_seq(self, k)


def mean_structure(m_xi: float, m_eta: float) -> MeanStructure:
    if not (m_xi >= 0 and m_eta >= 0):
        raise AnalyticsError(f"offspring means must be non-negative, got ({m_xi}, {m_eta})")
    if not (math.isfinite(m_xi) and math.isfinite(m_eta)):
        raise AnalyticsError("offspring means must be finite")
    lp = 0.5 * (m_xi + math.sqrt(m_xi * m_xi + 4.0 * m_eta))
    # product form avoids cancellation in (m_xi - sqrt(.))/2 for small m_eta
    lm = -m_eta / lp if lp > 0 else 0.0
    s = m_xi + m_eta
    if s < 1:
        crit = Criticality.SUBCRITICAL
    elif s == 1:
        crit = Criticality.CRITICAL
    else:
        crit = Criticality.SUPERCRITICAL
    return MeanStructure(float(m_xi), float(m_eta), lp, lm, lp, crit, m_xi > 0 and m_eta > 0)


def m_seq(ms: MeanStructure, k: int) -> float:
    """m_k = (lambda_+^{k+1} - lambda_-^{k+1}) / (lambda_+ - lambda_-), m_0 = 1, m_{-1} = 0."""
    if k < -1:
        raise AnalyticsError(f"m_k is defined for k >= -1, got {k}")
    if k == -1:
        return 0.0
    if k == 0:
        return 1.0
    lp, lm = ms.lambda_plus, ms.lambda_minus
    if lp == lm:
        return 0.0
    return (lp ** (k + 1) - lm ** (k + 1)) / (lp - lm)


def m_array(ms: MeanStructure, n: int) -> np.ndarray:
    """[m_0, ..., m_n]."""
    return np.array([m_seq(ms, k) for k in range(n + 1)])


def matrix_power(ms: MeanStructure, n: int) -> np.ndarray:
    """M^n from the spectral decomposition of the mean matrix."""
    if n < 0:
        raise AnalyticsError(f"matrix power needs n >= 0, got {n}")
    if n == 0:
        return np.eye(2)
    lp, lm, me = ms.lambda_plus, ms.lambda_minus, ms.m_eta
    if lp == lm:
        # only m_xi = m_eta = 0: M = [[0, 0], [1, 0]] is nilpotent
        return np.array([[0.0, 0.0], [1.0, 0.0]]) if n == 1 else np.zeros((2, 2))
    d = lp - lm
    a = np.array([[lp, me], [1.0, -lm]])
    b = np.array([[-lm, -me], [-1.0, lp]])
    return (lp**n * a + lm**n * b) / d


def mean_matrix(ms: MeanStructure) -> np.ndarray:
    return np.array([[ms.m_xi, ms.m_eta], [1.0, 0.0]])


def expectation(ms: MeanStructure, n: int, ex0: float, exm1: float, m_eps: float) -> float:
    """E(X_n) = m_n E X_0 + m_{n-1} m_eta E X_{-1} + m_eps sum_{j<n} m_j."""
    if n < -1:
        raise AnalyticsError(f"n must be >= -1, got {n}")
    if n == -1:
        return float(exm1)
    if n == 0:
        return float(ex0)
    transient = math.fsum(m_seq(ms, j) for j in range(n)) if m_eps else 0.0
    return m_seq(ms, n) * ex0 + m_seq(ms, n - 1) * ms.m_eta * exm1 + m_eps * transient


def stationary_mean(ms: MeanStructure, m_eps: float) -> float:
    """m_eps / (1 - m_xi - m_eta), the subcritical limit of E(X_n)."""
    if ms.criticality is not Criticality.SUBCRITICAL:
        raise AnalyticsError("stationary mean needs m_xi + m_eta < 1")
    return m_eps / (1.0 - ms.m_xi - ms.m_eta)


def first_moment_bound(ms: MeanStructure, n: int, ex0: float, exm1: float) -> float:
    """rho^n E X_0 + rho^{n-1} m_eta E X_{-1}, valid without immigration."""
    if n < 1:
        raise AnalyticsError(f"bound is stated for n >= 1, got {n}")
    rho = ms.rho
    return rho**n * ex0 + (rho ** (n - 1) * ms.m_eta * exm1 if exm1 else 0.0)


def variance_xn(ms: MeanStructure, var_xi: float, var_eta: float, n: int) -> float:
    """Var(X_n) for the process without immigration started from (1, 0)."""
    if n < 1:
        raise AnalyticsError(f"n must be >= 1, got {n}")
    m = m_array(ms, n)
    s_xi = math.fsum(m[j] ** 2 * m[n - j - 1] for j in range(n))
    s_eta = math.fsum(m[j] ** 2 * m[n - j - 2] for j in range(n - 1))
    return var_xi * s_xi + var_eta * s_eta


@dataclass(frozen=True)
class MomentBounds:
    c_sub: float | None
    c_crit: float | None
    c_sup: float | None


def moment_bounds(ms: MeanStructure, var_xi: float, var_eta: float) -> MomentBounds:
    """The regime constants; only the one matching rho is filled in."""
    rho = ms.rho
    if rho <= 0:
        raise AnalyticsError("second-moment bound needs rho > 0")
    if rho < 1:
        return MomentBounds(1 + var_xi / (rho * (1 - rho)) + var_eta / (rho**2 * (1 - rho)), None, None)
    if rho == 1:
        return MomentBounds(None, 1 + var_xi + var_eta, None)
    return MomentBounds(None, None, 1 + var_xi / (rho * (rho - 1)) + var_eta / (rho**3 * (rho - 1)))


def second_moment_bound(ms: MeanStructure, var_xi: float, var_eta: float, n: int) -> float:
    """Upper bound on E(X_n^2) for the process started from (1, 0)."""
    c = moment_bounds(ms, var_xi, var_eta)
    rho = ms.rho
    if c.c_sub is not None:
        return c.c_sub * rho**n
    if c.c_crit is not None:
        return c.c_crit * n
    return c.c_sup * rho ** (2 * n)


def moment_finite(r: float, ex0_r: float, exm1_r: float, exi_r: float, eeta_r: float) -> bool:
    """Sufficient condition for E(X_n^r) < inf for all n: all four r-th moments finite."""
    if not r > 1:
        raise AnalyticsError(f"r must exceed 1, got {r}")
    return all(math.isfinite(v) for v in (ex0_r, exm1_r, exi_r, eeta_r))


def _check_tail_hypotheses(ms: MeanStructure, allow_first_order: bool = False) -> None:
    if not ms.m_xi > 0:
        raise AnalyticsError("needs m_xi > 0")
    if not (ms.m_eta > 0 or (allow_first_order and ms.m_eta == 0)):
        raise AnalyticsError("needs m_eta > 0")
    if ms.criticality is not Criticality.SUBCRITICAL:
        raise AnalyticsError("needs m_xi + m_eta < 1")


def stationary_tail_constant(ms: MeanStructure, alpha: float, tol: float = 1e-10,
                             allow_first_order: bool = False) -> tuple[float, int]:
    """sum_i m_i^alpha truncated at N with remainder rho^{(N+1)alpha} / (1 - rho^alpha) < tol.

    Returns ``(value, N)``.
    """
    _check_tail_hypotheses(ms, allow_first_order)
    if not alpha > 0:
        raise AnalyticsError(f"alpha must be positive, got {alpha}")
    if not 0 < tol < 1:
        raise AnalyticsError(f"tol must lie in (0, 1), got {tol}")
    ra = ms.rho**alpha
    n_used = 0
    while ra ** (n_used + 1) / (1.0 - ra) >= tol:
        n_used += 1
    value = math.fsum(m_seq(ms, i) ** alpha for i in range(n_used + 1))
    return value, n_used


def first_order_constant(m_xi: float, alpha: float) -> float:
    """sum_i m_xi^{i alpha} = 1 / (1 - m_xi^alpha)."""
    if not 0 < m_xi < 1:
        raise AnalyticsError(f"m_xi must lie in (0, 1), got {m_xi}")
    if not alpha > 0:
        raise AnalyticsError(f"alpha must be positive, got {alpha}")
    return 1.0 / (1.0 - m_xi**alpha)


@dataclass(frozen=True)
class TailPrediction:
    """Limit of P(X_n > x) relative to the initial tails.

    ``case`` is one of "x0" (beta0 < beta_-1), "equal", "xm1" (beta_-1 < beta0).
    ``coef_x0`` multiplies P(X_0 > x) and ``coef_xm1`` multiplies
    P(X_{-1} > x); the coefficient of the non-dominant tail is 0.
    """

    case: str
    coef_x0: float
    coef_xm1: float

    @property
    def total(self) -> float:
        return self.coef_x0 + self.coef_xm1


def predicted_tail_ratio(ms: MeanStructure, n: int, beta0: float, betam1: float = INF) -> TailPrediction:
    """Tail of X_n (no immigration) with regularly varying initial sizes.

    ``betam1 = inf`` stands for a light-tailed (or zero) X_{-1}.
    """
    if n < 1:
        raise AnalyticsError(f"n must be >= 1, got {n}")
    if not ms.m_xi > 0:
        raise AnalyticsError("needs m_xi > 0")
    if beta0 < 0 or betam1 < 0:
        raise AnalyticsError("tail indices must be non-negative")
    if math.isinf(beta0) and math.isinf(betam1):
        raise AnalyticsError("at least one initial size must be regularly varying")
    if not math.isinf(betam1) and not ms.m_eta > 0:
        raise AnalyticsError("a regularly varying X_{-1} needs m_eta > 0")
    c0 = m_seq(ms, n) ** beta0 if math.isfinite(beta0) else 0.0
    cm1 = (m_seq(ms, n - 1) * ms.m_eta) ** betam1 if math.isfinite(betam1) else 0.0
    if beta0 < betam1:
        return TailPrediction("x0", c0, 0.0)
    if beta0 == betam1:
        return TailPrediction("equal", c0, cm1)
    return TailPrediction("xm1", 0.0, cm1)


def truncation_level(rho: float, tol: float) -> int:
    """N = ceil(log(tol) / log(rho)), so that rho^{N+1} < tol."""
    if not 0 < rho < 1:
        raise AnalyticsError(f"truncation needs 0 < rho < 1, got {rho}")
    if not 0 < tol < 1:
        raise AnalyticsError(f"tol must lie in (0, 1), got {tol}")
    return math.ceil(math.log(tol) / math.log(rho))
