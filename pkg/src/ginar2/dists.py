"""Discrete non-negative integer distributions with exact tail functions.

Every law used by the simulators (offspring at age 1 and 2, immigration,
initial population sizes) is a :class:`DistSpec`.  Each variant knows its
exact tail ``P(X > x)``, its pmf, how to sample itself with a numpy
``Generator`` and how to compute (possibly infinite) moments.

The heavy-tailed family is :class:`DiscretePareto` with tail

    T(k) = C * (1 + k)**(-alpha) * (1 + log(1 + k))**beta,   k >= 0,

which is regularly varying with index ``alpha`` for every real ``beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special, stats

INF = math.inf

# Inversion sampling of DiscretePareto is capped here; the cap is only hit with
# probability T(2**53), about 1e-13 for alpha = 0.8.
SAMPLE_CAP = 2**53

# Stopping rule for series summation (see _tail_series).
SERIES_MIN_TERMS = 10_000
SERIES_RTOL = 1e-10


class DistError(ValueError):
    """Invalid distribution parameters or an unsupported request."""


class InsufficientDomainError(DistError):
    """A tabulated function does not reach far enough for the requested construction."""


def _as_int_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.int64)


@dataclass(frozen=True)
class DistSpec:
    """Base class of the distribution variants.

    Subclasses implement ``_tail_int`` (tail at integer points, vectorized),
    ``sample_array`` and ``to_dict``.
    """

    kind = "abstract"

    def tail(self, x) -> np.ndarray | float:
        """P(X > x) for real x (scalar or array)."""
        xa = np.asarray(x, dtype=float)
        k = np.floor(np.where(xa < 0, -1.0, np.minimum(xa, 2.0**62))).astype(np.int64)
        out = np.where(k < 0, 1.0, self._tail_int(np.maximum(k, 0)))
        return float(out) if np.ndim(x) == 0 else out

    def pmf(self, k) -> np.ndarray | float:
        ka = _as_int_array(k)
        out = np.where(ka < 0, 0.0, self._pmf_int(np.maximum(ka, 0)))
        return float(out) if np.ndim(k) == 0 else out

    def _pmf_int(self, k: np.ndarray) -> np.ndarray:
        prev = np.where(k == 0, 1.0, self._tail_int(np.maximum(k - 1, 0)))
        return prev - self._tail_int(k)

    def _tail_int(self, k: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample_array(self, rng: np.random.Generator, size) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> int:
        return int(self.sample_array(rng, 1)[0])

    # moments -----------------------------------------------------------------

    @property
    def support_max(self) -> float:
        """Largest support point (``inf`` for unbounded support)."""
        return INF

    @property
    def regularly_varying_index(self) -> float | None:
        """Tail index alpha if the law is regularly varying, else None."""
        return None

    def mean(self) -> float:
        return self.moment(1.0)

    def moment(self, r: float) -> float:
        if r <= 0:
            raise DistError(f"moment order must be positive, got {r}")
        return _light_moment(self, lambda k: k**r)

    def log_moment(self) -> float:
        """E(1{X != 0} log X)."""
        return _light_moment(self, lambda k: np.where(k > 0, np.log(np.maximum(k, 1)), 0.0))

    def variance(self) -> float:
        m1 = self.mean()
        if not math.isfinite(m1):
            return INF
        m2 = self.moment(2.0)
        return max(m2 - m1 * m1, 0.0)

    def to_dict(self) -> dict:
        raise NotImplementedError


def _light_moment(spec: DistSpec, h: Callable[[np.ndarray], np.ndarray]) -> float:
    """E h(X) by summing the pmf until the remaining tail is below 1e-18."""
    hi = spec.support_max
    if not math.isfinite(hi):
        hi = 64
        while spec.tail(hi) > 1e-18:
            hi *= 2
    k = np.arange(int(hi) + 1, dtype=np.int64)
    return float(np.sum(h(k.astype(float)) * spec.pmf(k)))


@dataclass(frozen=True)
class Constant(DistSpec):
    value: int = 0
    kind = "constant"

    def __post_init__(self):
        if int(self.value) != self.value or self.value < 0:
            raise DistError(f"Constant needs a non-negative integer, got {self.value}")
        object.__setattr__(self, "value", int(self.value))

    def _tail_int(self, k):
        return np.where(k < self.value, 1.0, 0.0)

    def sample_array(self, rng, size):
        return np.full(size, self.value, dtype=np.int64)

    @property
    def support_max(self):
        return self.value

    def moment(self, r):
        if r <= 0:
            raise DistError(f"moment order must be positive, got {r}")
        return float(self.value) ** r

    def to_dict(self):
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class Bernoulli(DistSpec):
    p: float = 0.5
    kind = "bernoulli"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DistError(f"Bernoulli p must lie in [0, 1], got {self.p}")

    def _tail_int(self, k):
        return np.where(k == 0, self.p, 0.0)

    def _pmf_int(self, k):
        return np.select([k == 0, k == 1], [1.0 - self.p, self.p], 0.0)

    def sample_array(self, rng, size):
        return rng.binomial(1, self.p, size).astype(np.int64)

    @property
    def support_max(self):
        return 1

    def moment(self, r):
        if r <= 0:
            raise DistError(f"moment order must be positive, got {r}")
        return float(self.p)

    def to_dict(self):
        return {"kind": self.kind, "p": self.p}


@dataclass(frozen=True)
class Binomial(DistSpec):
    n: int = 1
    p: float = 0.5
    kind = "binomial"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DistError(f"Binomial n must be a positive integer, got {self.n}")
        if not 0.0 <= self.p <= 1.0:
            raise DistError(f"Binomial p must lie in [0, 1], got {self.p}")
        object.__setattr__(self, "n", int(self.n))

    def _tail_int(self, k):
        return stats.binom.sf(k, self.n, self.p)

    def _pmf_int(self, k):
        return stats.binom.pmf(k, self.n, self.p)

    def sample_array(self, rng, size):
        return rng.binomial(self.n, self.p, size).astype(np.int64)

    @property
    def support_max(self):
        return self.n

    def mean(self):
        return self.n * self.p

    def to_dict(self):
        return {"kind": self.kind, "n": self.n, "p": self.p}


@dataclass(frozen=True)
class Poisson(DistSpec):
    rate: float = 1.0
    kind = "poisson"

    def __post_init__(self):
        if not (self.rate >= 0 and math.isfinite(self.rate)):
            raise DistError(f"Poisson rate must be finite and non-negative, got {self.rate}")

    def _tail_int(self, k):
        return stats.poisson.sf(k, self.rate)

    def _pmf_int(self, k):
        return stats.poisson.pmf(k, self.rate)

    def sample_array(self, rng, size):
        return rng.poisson(self.rate, size).astype(np.int64)

    def mean(self):
        return float(self.rate)

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class Geometric(DistSpec):
    """Number of failures before the first success; support {0, 1, 2, ...}."""

    p: float = 0.5
    kind = "geometric"

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise DistError(f"Geometric p must lie in (0, 1], got {self.p}")

    def _tail_int(self, k):
        return (1.0 - self.p) ** (k.astype(float) + 1.0)

    def sample_array(self, rng, size):
        return (rng.geometric(self.p, size) - 1).astype(np.int64)

    def mean(self):
        return (1.0 - self.p) / self.p

    def to_dict(self):
        return {"kind": self.kind, "p": self.p}


@dataclass(frozen=True)
class FinitePMF(DistSpec):
    weights: tuple[float, ...] = (1.0,)
    kind = "finite_pmf"

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if not w or any(v < 0 for v in w):
            raise DistError("FinitePMF weights must be a non-empty list of non-negative reals")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise DistError(f"FinitePMF weights sum to {math.fsum(w)!r}, not 1")
        object.__setattr__(self, "weights", w)

    @cached_property
    def _tails(self) -> np.ndarray:
        w = np.asarray(self.weights)
        # tails[k] = sum of weights above k, accumulated from the right
        return np.concatenate([np.cumsum(w[::-1])[::-1][1:], [0.0]])

    def _tail_int(self, k):
        return self._tails[np.minimum(k, len(self.weights) - 1)]

    def _pmf_int(self, k):
        w = np.asarray(self.weights)
        return np.where(k < len(w), w[np.minimum(k, len(w) - 1)], 0.0)

    def sample_array(self, rng, size):
        return rng.choice(len(self.weights), size=size, p=self.weights).astype(np.int64)

    @property
    def support_max(self):
        return len(self.weights) - 1

    def to_dict(self):
        return {"kind": self.kind, "weights": list(self.weights)}


@dataclass(frozen=True)
class DiscretePareto(DistSpec):
    """Regularly varying law with tail C (1+k)^-alpha (1+log(1+k))^beta.

    For ``log_factor > alpha`` the raw tail first increases; it is then
    rescaled by ``C = 1/max_k T(k)`` and held at 1 below the argmax so that
    the tail is non-increasing.  With ``log_factor <= alpha`` C = 1 and the
    support starts at 1.
    """

    alpha: float = 1.0
    log_factor: float = 0.0
    kind = "discrete_pareto"

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise DistError(f"DiscretePareto alpha must be positive, got {self.alpha}")
        if not math.isfinite(self.log_factor):
            raise DistError("DiscretePareto log_factor must be finite")

    def _raw_log_tail(self, k):
        k = np.asarray(k, dtype=float)
        return -self.alpha * np.log1p(k) + self.log_factor * np.log1p(np.log1p(k))

    @cached_property
    def _peak(self) -> tuple[int, float]:
        """(argmax k*, log max) of the raw tail over integers k >= 0."""
        a, b = self.alpha, self.log_factor
        if b <= a:
            return 0, 0.0
        # the raw tail increases up to 1 + k = exp(b/a - 1)
        t_star = math.exp(b / a - 1.0) - 1.0
        cands = [max(0, math.floor(t_star)), math.ceil(t_star)]
        vals = [float(self._raw_log_tail(c)) for c in cands]
        i = int(np.argmax(vals))
        return cands[i], vals[i]

    @property
    def log_constant(self) -> float:
        return -max(self._peak[1], 0.0)

    def log_tail_int(self, k) -> np.ndarray:
        k = np.asarray(k)
        kstar = self._peak[0]
        lt = self.log_constant + self._raw_log_tail(k)
        return np.where(k < kstar, 0.0, np.minimum(lt, 0.0))

    def _tail_int(self, k):
        return np.exp(self.log_tail_int(k))

    def _pmf_int(self, k):
        # -expm1 keeps small differences accurate
        k = np.asarray(k)
        lt = self.log_tail_int(k)
        lprev = np.where(k == 0, 0.0, self.log_tail_int(np.maximum(k - 1, 0)))
        return np.exp(lprev) * -np.expm1(lt - lprev)

    def sample_array(self, rng, size):
        u = 1.0 - rng.random(size)  # uniform on (0, 1]
        return self.invert(u)

    def invert(self, u) -> np.ndarray:
        """min{k >= 0 : u > T(k)} for u in (0, 1], capped at SAMPLE_CAP."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        logu = np.log(u)
        if self.log_factor == 0.0:
            guess = np.floor(np.exp(np.minimum(-logu / self.alpha, math.log(SAMPLE_CAP))))
            k = np.clip(guess, 0, SAMPLE_CAP).astype(np.int64)
            # float rounding can put the guess one off the exact boundary
            for _ in range(2):
                k = np.where((k > 0) & (logu > self.log_tail_int(k - 1)), k - 1, k)
                k = np.where((k < SAMPLE_CAP) & ~(logu > self.log_tail_int(k)), k + 1, k)
            return k
        lo = np.full(u.shape, -1, dtype=np.int64)  # T(lo) >= u always (T(-1) = 1)
        hi = np.full(u.shape, SAMPLE_CAP, dtype=np.int64)
        while True:
            active = hi - lo > 1
            if not active.any():
                break
            mid = lo + (hi - lo) // 2
            below = logu > self.log_tail_int(np.maximum(mid, 0))
            hi = np.where(active & below, mid, hi)
            lo = np.where(active & ~below, mid, lo)
        return hi

    @property
    def regularly_varying_index(self):
        return self.alpha

    def _moment_finite(self, r: float) -> bool:
        if r < self.alpha:
            return True
        return r == self.alpha and self.log_factor < -1.0

    def moment(self, r):
        if r <= 0:
            raise DistError(f"moment order must be positive, got {r}")
        if not self._moment_finite(r):
            return INF
        # E X^r = sum_k ((k+1)^r - k^r) T(k); the k = 0 term is T(0)
        return float(self._tail_int(np.int64(0))) + _tail_series(
            self, lambda t: _log_power_increment(t, r))

    def log_moment(self):
        # E 1{X>0} log X = sum_{k>=1} log(1 + 1/k) T(k)
        return _tail_series(self, _log_log_increment)

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha, "log_factor": self.log_factor}


def _log_power_increment(t, r):
    """log((t + 1)^r - t^r) for t > 0, without cancellation for large t."""
    t = np.asarray(t, dtype=float)
    return r * np.log(t) + np.log(np.expm1(r * np.log1p(1.0 / t)))


def _log_log_increment(t):
    """log(log(1 + 1/t)) for t > 0."""
    return np.log(np.log1p(1.0 / np.asarray(t, dtype=float)))


def _tail_series(spec: DiscretePareto, log_weight, start: int = 1) -> float:
    """sum_{k >= start} w(k) T(k), start >= 1, for a smooth eventually decreasing summand.

    Terms are summed directly up to K >= SERIES_MIN_TERMS (beyond the peak of
    the tail); the remainder is taken from Euler-Maclaurin: the tail integral
    plus the endpoint and first-derivative corrections.  The result is
    accepted once the neglected third-derivative term is below SERIES_RTOL of
    the sum, doubling K otherwise.
    """
    def g(t):
        t = np.asarray(t, dtype=float)
        return np.exp(log_weight(t) + spec.log_constant + spec._raw_log_tail(t))

    K = max(SERIES_MIN_TERMS, 4 * spec._peak[0] + start + 16)
    head_k = start
    head = 0.0
    while True:
        k = np.arange(head_k, K, dtype=np.int64)
        terms = np.exp(log_weight(k.astype(float)) + spec.log_tail_int(k))
        head += math.fsum(terms)
        head_k = K
        # t = K e^u maps [K, inf) onto [0, inf); the integrand decays exponentially in u
        u_max = math.log(1e300 / K)
        integral, _ = integrate.quad(lambda u: float(g(K * math.exp(u))) * K * math.exp(u),
                                     0.0, u_max, limit=400, epsabs=0.0, epsrel=1e-13)
        h = K * 1e-3
        d1 = float(g(K + h) - g(K - h)) / (2 * h)
        d3 = float(g(K + 2 * h) - 2 * g(K + h) + 2 * g(K - h) - g(K - 2 * h)) / (2 * h**3)
        total = head + integral + 0.5 * float(g(K)) - d1 / 12.0
        if abs(d3) / 720.0 <= SERIES_RTOL * abs(total) or K >= 10**7:
            return total
        K *= 2


def partial_tail_sum(spec: DiscretePareto, n: int) -> float:
    """sum_{k=0}^{n-1} T(k) without materializing n terms.

    Exact summation up to K (past the peak of the tail), Euler-Maclaurin on
    [K, n]: integral plus endpoint and first-derivative corrections.
    """
    n = int(n)
    K = max(SERIES_MIN_TERMS, 4 * spec._peak[0] + 16)
    if n <= K:
        return math.fsum(np.exp(spec.log_tail_int(np.arange(n, dtype=np.int64))))
    head = math.fsum(np.exp(spec.log_tail_int(np.arange(K, dtype=np.int64))))

    def g(t):
        return np.exp(spec.log_constant + spec._raw_log_tail(t))

    def dg(t):
        h = t * 1e-3
        return float(g(t + h) - g(t - h)) / (2 * h)

    integral, _ = integrate.quad(lambda u: float(g(K * math.exp(u))) * K * math.exp(u),
                                 0.0, math.log(n / K), limit=400, epsabs=0.0, epsrel=1e-13)
    return head + integral + 0.5 * float(g(K) - g(n)) + (dg(n) - dg(K)) / 12.0


# module-level operations ------------------------------------------------------

def sample(spec: DistSpec, rng: np.random.Generator) -> int:
    return spec.sample(rng)


def exact_tail(spec: DistSpec, x):
    return spec.tail(x)


def pmf(spec: DistSpec, k):
    return spec.pmf(k)


def mean(spec: DistSpec) -> float:
    return spec.mean()


def moment(spec: DistSpec, r: float) -> float:
    return spec.moment(r)


def log_moment(spec: DistSpec) -> float:
    return spec.log_moment()


_KINDS: dict[str, type[DistSpec]] = {
    cls.kind: cls
    for cls in (Constant, Bernoulli, Binomial, Poisson, Geometric, FinitePMF, DiscretePareto)
}


def from_dict(d: dict) -> DistSpec:
    """Inverse of ``DistSpec.to_dict``."""
    d = dict(d)
    try:
        cls = _KINDS[d.pop("kind")]
    except KeyError as exc:
        raise DistError(f"unknown or missing distribution kind in {d!r}") from exc
    if cls is FinitePMF and "weights" in d:
        d["weights"] = tuple(d["weights"])
    try:
        return cls(**d)
    except TypeError as exc:
        raise DistError(f"bad fields for {cls.kind}: {exc}") from exc


# slowly varying construction ---------------------------------------------------

@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant function on [0, breakpoints[-1]].

    Left-continuous: ``values[0]`` on [0, b_0], ``values[i]`` on (b_{i-1}, b_i].
    Right-continuous: ``values[0]`` on [0, b_0), ``values[i]`` on [b_{i-1}, b_i).
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]
    left_continuous: bool = True

    def __post_init__(self):
        if len(self.breakpoints) != len(self.values):
            raise ValueError("breakpoints and values must have equal length")
        if any(b >= c for b, c in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(v <= 0 for v in self.values):
            raise ValueError("values must be positive")

    def __call__(self, x):
        xa = np.asarray(x, dtype=float)
        b = np.asarray(self.breakpoints)
        side = "left" if self.left_continuous else "right"
        idx = np.searchsorted(b, xa, side=side)
        if np.any(idx >= len(b)):
            raise InsufficientDomainError("argument beyond the last constructed breakpoint")
        out = np.asarray(self.values)[idx]
        return float(out) if np.ndim(x) == 0 else out


def _grid_sup(grid: np.ndarray, hv: np.ndarray, threshold: float) -> float:
    """Grid resolution of sup{y : h(y) > threshold}.

    Returns the grid point right after the last exceedance (exact whenever
    the crossing lies on the grid), or 0 if h never exceeds the threshold.
    """
    above = np.nonzero(hv > threshold)[0]
    if above.size == 0:
        return 0.0
    last = above[-1]
    if last + 1 >= len(grid):
        raise InsufficientDomainError(
            f"h still exceeds {threshold:g} at the end of the grid ({grid[-1]:g})")
    return float(grid[last + 1])


def construct_slowly_varying(grid: Sequence[float], h_values: Sequence[float],
                             levels: int | None = None,
                             left_continuous: bool = True) -> StepFunction:
    """Build an increasing slowly varying L >= 1 with L(x) h(x) -> 0.

    ``h_values`` tabulates a positive function tending to 0 on the increasing
    ``grid``.  Breakpoints follow x_0 = sup{h > 1} and
    x_k = max((k+1) x_{k-1}, sup{h > (k+1)^-2}), with L = k+1 on (x_{k-1}, x_k].
    Without ``levels`` as many levels are built as the grid resolves; asking
    for more raises :class:`InsufficientDomainError`.
    """
    grid = np.asarray(grid, dtype=float)
    hv = np.asarray(h_values, dtype=float)
    if grid.shape != hv.shape or grid.ndim != 1:
        raise ValueError("grid and h_values must be 1-d arrays of equal length")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if np.any(~(hv > 0)):
        raise ValueError("h must be strictly positive on the grid")

    xs = [_grid_sup(grid, hv, 1.0)]
    k = 1
    while levels is None or len(xs) < levels:
        try:
            s = _grid_sup(grid, hv, (k + 1) ** -2.0)
        except InsufficientDomainError:
            if levels is None:
                break
            raise
        x = max((k + 1) * xs[-1], s)
        if x > grid[-1]:
            if levels is None:
                break
            raise InsufficientDomainError(
                f"level {k + 1} needs x = {x:g} beyond the grid end {grid[-1]:g}")
        xs.append(x)
        k += 1
    if len(xs) < 2:
        raise InsufficientDomainError("grid too short to resolve more than one level")

    # drop empty intervals (x_k == x_{k-1}); L then jumps by more than one
    bps, vals = [xs[0]], [1.0]
    for i, x in enumerate(xs[1:], start=1):
        if x > bps[-1]:
            bps.append(x)
            vals.append(float(i + 1))
    return StepFunction(tuple(bps), tuple(vals), left_continuous)


def hurwitz_zeta(s: float, a: float = 1.0) -> float:
    """sum_{k >= 0} (k + a)^-s, used as a closed-form cross-check."""
    return float(special.zeta(s, a))
