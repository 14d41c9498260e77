"""Empirical tails and numerical checks of regular-variation results.

Monte Carlo checks compare empirical tails against exact reference tails at
reference quantiles (levels such as 1e-2, 1e-3) rather than at fixed x, so
the same tolerance means the same thing across laws.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import jsonable
from .dists import Constant, DiscretePareto, DistSpec, partial_tail_sum
from .process import SampleSet, branch_sum_array, stream

DEFAULT_LEVELS = (0.1, 0.01, 0.001)
Z95 = 1.96
KARAMATA_DIRECT_MAX = 2**22


class TailCheckError(ValueError):
    """Preconditions of a tail check are not met."""


def _draws(samples) -> np.ndarray:
    draws = samples.draws if isinstance(samples, SampleSet) else np.asarray(samples)
    if draws.size == 0:
        raise TailCheckError("empty sample")
    return draws


def empirical_tail(samples, x) -> float | np.ndarray:
    """Fraction of draws strictly greater than x (x may be an array)."""
    draws = np.sort(_draws(samples))
    xa = np.asarray(x, dtype=float)
    out = 1.0 - np.searchsorted(draws, xa, side="right") / draws.size
    return float(out) if np.ndim(x) == 0 else out


def tail_quantile(spec: DistSpec, level: float) -> int:
    """Smallest integer x >= 0 with P(X > x) <= level."""
    if not 0 < level < 1:
        raise TailCheckError(f"level must lie in (0, 1), got {level}")
    hi = 1
    while spec.tail(hi) > level:
        hi *= 2
        if hi > 2**62:
            raise TailCheckError(f"{spec.kind} tail never drops to {level}")
    lo = -1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if spec.tail(mid) <= level:
            hi = mid
        else:
            lo = mid
    return hi


# Hill estimator --------------------------------------------------------------------

@dataclass(frozen=True)
class HillEstimate:
    k: int
    alpha_hat: float
    ci95: tuple[float, float]
    k_requested: int

    @property
    def tie_adjusted(self) -> bool:
        return self.k != self.k_requested


def hill(samples, k: int) -> HillEstimate:
    """Hill estimate from the k largest positive draws.

    If the (k+1)-th largest value ties with the k-th, k is lowered to the
    largest value whose threshold is strictly below the k-th largest draw.
    """
    if k < 10:
        raise TailCheckError(f"k must be at least 10, got {k}")
    pos = np.sort(_draws(samples)[_draws(samples) > 0])[::-1].astype(float)
    if pos.size < k + 1:
        raise TailCheckError(f"need at least {k + 1} positive draws, got {pos.size}")
    k_used = k
    while k_used >= 1 and pos[k_used] == pos[k_used - 1]:
        k_used -= 1
    if k_used < 1:
        raise TailCheckError("degenerate sample: the top order statistics are all tied")
    spacings = np.log(pos[:k_used] / pos[k_used])
    total = math.fsum(spacings)
    if total <= 0:
        raise TailCheckError("degenerate sample: zero log-spacings")
    a = k_used / total
    half = Z95 / math.sqrt(k_used)
    return HillEstimate(k_used, a, (a * (1 - half), a * (1 + half)), k)


# tail reports ------------------------------------------------------------------------

@dataclass
class TailReport:
    x_grid: list[float]
    empirical_tail: list[float]
    reference_tail: list[float]
    ratio: list[float]
    standard_errors: list[float]
    sample_count: int
    predicted_limit: float | None = None
    levels: list[float] = field(default_factory=list)
    unreliable: list[bool] = field(default_factory=list)
    exact: bool = False

    @property
    def ratio_se(self) -> list[float]:
        return [se / r if r > 0 else math.nan for se, r in zip(self.standard_errors, self.reference_tail)]

    def relative_errors(self) -> list[float]:
        if self.predicted_limit is None:
            raise TailCheckError("predicted_limit not set")
        return [abs(r / self.predicted_limit - 1.0) for r in self.ratio]

    def within(self, rel_tol: float) -> list[bool]:
        return [e <= rel_tol for e in self.relative_errors()]

    def to_csv(self, path) -> None:
        lines = ["x,empirical,reference,ratio,se"]
        for row in zip(self.x_grid, self.empirical_tail, self.reference_tail, self.ratio,
                       self.standard_errors):
            lines.append(",".join(repr(float(v)) for v in row))
        Path(path).write_text("\n".join(lines) + "\n")

    def summary(self, rel_tol: float | None = None) -> dict:
        d = asdict(self)
        if rel_tol is not None and self.predicted_limit is not None:
            d["rel_tol"] = rel_tol
            d["pass"] = self.within(rel_tol)
        return d

    def write_summary(self, path, rel_tol: float | None = None) -> None:
        text = json.dumps(jsonable(self.summary(rel_tol)), indent=2, allow_nan=False)
        Path(path).write_text(text + "\n")


def _report(draws: np.ndarray, xs: list[float], reference: list[float], levels, min_count: float,
            predicted: float | None) -> TailReport:
    n = draws.size
    emp = empirical_tail(draws, np.asarray(xs, dtype=float))
    emp = [float(v) for v in np.atleast_1d(emp)]
    se = [math.sqrt(p * (1 - p) / n) for p in emp]
    ratio = [e / r if r > 0 else math.nan for e, r in zip(emp, reference)]
    unreliable = [lev * n < min_count for lev in levels]
    return TailReport([float(x) for x in xs], emp, [float(r) for r in reference], ratio, se, n,
                      predicted, [float(v) for v in levels], unreliable)


def tail_ratio_curve(numerator, reference: DistSpec, levels=DEFAULT_LEVELS,
                     predicted_limit: float | None = None, min_count: float = 1.0) -> TailReport:
    """Empirical tail of ``numerator`` over the exact tail of ``reference``.

    The grid is the reference-tail quantiles at ``levels``.  Levels with fewer
    than ``min_count`` expected exceedances are flagged unreliable.
    """
    draws = _draws(numerator)
    levels = list(levels)
    if any(not 0 < lev < 1 for lev in levels):
        raise TailCheckError("levels must lie in (0, 1)")
    xs = [tail_quantile(reference, lev) for lev in levels]
    ref = [reference.tail(x) for x in xs]
    return _report(draws, xs, ref, levels, min_count, predicted_limit)


# deterministic regular-variation checks -------------------------------------------------

def _rv_index(spec: DistSpec) -> float:
    a = spec.regularly_varying_index
    if a is None:
        raise TailCheckError(f"{spec.kind} is not regularly varying")
    return a


@dataclass(frozen=True)
class KaramataPoint:
    x: float
    ratio: float
    target: float


def karamata_check(spec: DistSpec, x_grid, part: str = "i") -> list[KaramataPoint]:
    """x T(x) / int_0^x T (part i, alpha < 1) or x T(x) / int_x^inf T (part ii, alpha > 1).

    The tail is the step function T(floor(t)), integrated exactly.
    """
    alpha = _rv_index(spec)
    xs = np.asarray(x_grid, dtype=float)
    if np.any(xs <= 0):
        raise TailCheckError("x_grid must be positive")
    if part == "i":
        if not 0 <= alpha < 1:
            raise TailCheckError(f"part (i) needs alpha in [0, 1), got {alpha}")
        target = 1.0 - alpha
    elif part == "ii":
        if not alpha > 1:
            raise TailCheckError(f"part (ii) needs alpha > 1, got {alpha}")
        target = alpha - 1.0
    else:
        raise TailCheckError(f"part must be 'i' or 'ii', got {part!r}")

    top = int(np.floor(xs.max()))
    if top > KARAMATA_DIRECT_MAX and not isinstance(spec, DiscretePareto):
        raise TailCheckError(f"x up to {top} needs a DiscretePareto law (direct limit "
                             f"{KARAMATA_DIRECT_MAX})")
    direct = min(top, KARAMATA_DIRECT_MAX)
    tails = np.asarray(spec.tail(np.arange(direct + 1)), dtype=float)
    # cum[m] = sum_{k<m} T(k)
    cum = np.concatenate([[0.0], np.cumsum(tails)])
    out = []
    for x in xs:
        fl = int(math.floor(x))
        if fl <= direct:
            tx = float(tails[fl])
            below = cum[fl] + (x - fl) * tx
        else:
            tx = float(spec.tail(fl))
            below = partial_tail_sum(spec, fl) + (x - fl) * tx
        if part == "i":
            denom = below
        else:
            denom = spec.mean() - below
        out.append(KaramataPoint(float(x), float(x * tx / denom), target))
    return out


@dataclass(frozen=True)
class PotterResult:
    x0: float | None
    violations: int
    grid_max: float

    @property
    def found(self) -> bool:
        return self.x0 is not None


def potter_check(spec: DistSpec, delta: float, q_grid, x0_search_max: float,
                 x_max: float | None = None, points_per_decade: int = 50) -> PotterResult:
    """Smallest grid x0 beyond which
    (1-delta) q^(-alpha-delta) < T(qx)/T(x) < (1+delta) q^(-alpha+delta) for all q.

    The grid runs log-uniformly from 1 to ``x_max`` (default
    ``1e4 * x0_search_max``).  If no x0 <= x0_search_max works, ``x0`` is
    None and ``violations`` counts the failing grid points above the search
    limit.
    """
    alpha = _rv_index(spec)
    if not delta > 0:
        raise TailCheckError("delta must be positive")
    qs = np.asarray(q_grid, dtype=float)
    if np.any(qs < 1):
        raise TailCheckError("q_grid must lie in [1, inf)")
    x_max = x_max if x_max is not None else 1e4 * x0_search_max
    decades = math.log10(x_max)
    xs = np.unique(np.concatenate([np.logspace(0, decades, int(decades * points_per_decade) + 1),
                                   [x0_search_max]]))
    tx = np.asarray(spec.tail(xs), dtype=float)
    bad = np.zeros(xs.shape, dtype=bool)
    for q in qs:
        r = np.asarray(spec.tail(q * xs), dtype=float) / tx
        lo = (1 - delta) * q ** (-alpha - delta)
        hi = (1 + delta) * q ** (-alpha + delta)
        bad |= ~((lo < r) & (r < hi))
    idx = np.nonzero(bad)[0]
    x0 = float(xs[0]) if idx.size == 0 else (float(xs[idx[-1] + 1]) if idx[-1] + 1 < xs.size else math.inf)
    if x0 > x0_search_max:
        return PotterResult(None, int(np.count_nonzero(bad[xs > x0_search_max])), float(xs[-1]))
    return PotterResult(x0, int(np.count_nonzero(bad[xs >= x0])), float(xs[-1]))


# Monte Carlo checks ---------------------------------------------------------------------

def wilson_upper(p_hat: float, n: int, z: float = Z95) -> float:
    denom = 1 + z * z / n
    centre = p_hat + z * z / (2 * n)
    half = z * math.sqrt(p_hat * (1 - p_hat) / n + z * z / (4 * n * n))
    return (centre + half) / denom


@dataclass(frozen=True)
class LargeDevRow:
    n: int
    y: float
    p_hat: float
    ratio: float
    wilson_upper: float


@dataclass
class LargeDevReport:
    rows: list[LargeDevRow]
    max_ratio: float
    small_n_max_upper: float
    large_n_max_upper: float
    slack: float

    @property
    def bounded(self) -> bool:
        return (math.isfinite(self.large_n_max_upper)
                and self.large_n_max_upper <= self.slack * self.small_n_max_upper)


def large_dev_check(spec_eta: DistSpec, gamma: float, n_grid=(2, 4, 8, 16),
                    level_grid=(1, 2, 5, 10), mc_count: int = 10**6, seed: int = 0,
                    slack: float = 3.0, block: int = 8192) -> LargeDevReport:
    """P(eta_1 + ... + eta_n > y) / (n P(eta_1 > y)) at y = gamma n c, c in level_grid.

    n = 1 is evaluated exactly (ratio 1).  The bound is judged non-exploding
    when the largest Wilson upper bound over the larger n stays within
    ``slack`` times the largest one over the two smallest n >= 2.
    """
    alpha = _rv_index(spec_eta)
    if not 1 < alpha < 2:
        raise TailCheckError(f"large deviations need alpha in (1, 2), got {alpha}")
    m = spec_eta.mean()
    if not gamma > m:
        raise TailCheckError(f"gamma = {gamma} must exceed the mean {m}")
    if any(c < 1 for c in level_grid):
        raise TailCheckError("y must be at least gamma * n (level multipliers >= 1)")
    rows = []
    for n in sorted(set(int(v) for v in n_grid)):
        if n < 1:
            raise TailCheckError("n must be positive")
        ys = [gamma * n * c for c in level_grid]
        if n == 1:
            rows += [LargeDevRow(1, float(y), spec_eta.tail(y), 1.0, 1.0) for y in ys]
            continue
        exceed = np.zeros(len(ys), dtype=np.int64)
        done = 0
        b = 0
        while done < mc_count:
            size = min(block, mc_count - done)
            s = spec_eta.sample_array(stream(seed, n, b), (size, n)).sum(axis=1)
            exceed += np.array([(s > y).sum() for y in ys])
            done += size
            b += 1
        for y, e in zip(ys, exceed):
            ref = n * spec_eta.tail(y)
            p_hat = e / mc_count
            rows.append(LargeDevRow(n, float(y), float(p_hat), float(p_hat / ref),
                                    wilson_upper(float(p_hat), mc_count) / ref))
    ns = sorted({r.n for r in rows if r.n >= 2})
    small, large = ns[:2], ns[2:]
    small_max = max((r.wilson_upper for r in rows if r.n in small), default=math.nan)
    large_max = max((r.wilson_upper for r in rows if r.n in large), default=math.nan)
    return LargeDevReport(rows, max(r.ratio for r in rows), small_max, large_max, slack)


def _dominance(spec1: DistSpec, spec2: DistSpec) -> tuple[DistSpec, DistSpec | None, float]:
    """(dominant spec, other spec if equally heavy, predicted limit of P(S>x)/T_dominant)."""
    a1, a2 = spec1.regularly_varying_index, spec2.regularly_varying_index
    if a1 is None and a2 is None:
        raise TailCheckError("at least one summand must be regularly varying")
    a1 = math.inf if a1 is None else a1
    a2 = math.inf if a2 is None else a2
    if a1 < a2:
        return spec1, None, 1.0
    if a2 < a1:
        return spec2, None, 1.0
    if isinstance(spec1, DiscretePareto) and isinstance(spec2, DiscretePareto):
        b1, b2 = spec1.log_factor, spec2.log_factor
        if b1 == b2:
            return spec1, spec2, 1.0 + math.exp(spec2.log_constant - spec1.log_constant)
        return (spec1, None, 1.0) if b1 > b2 else (spec2, None, 1.0)
    raise TailCheckError("equal-index limit only available for DiscretePareto pairs")


def sum_tail(spec1: DistSpec, spec2: DistSpec, x: float, max_support: int = 10**8) -> float:
    """P(X_1 + X_2 > x) = P(X_1 > x) + sum_{k <= x} P(X_1 = k) P(X_2 > x - k), exactly."""
    if x < 0:
        return 1.0
    fl = int(math.floor(x))
    if fl > max_support:
        raise TailCheckError(f"x = {x:g} exceeds the convolution cutoff {max_support}")
    k = np.arange(fl + 1)
    head = np.asarray(spec1.pmf(k), dtype=float) * np.asarray(spec2.tail(x - k), dtype=float)
    return spec1.tail(x) + math.fsum(head)


def convolution_check(spec1: DistSpec, spec2: DistSpec, levels=(1e-2, 1e-3, 1e-4),
                      max_support: int = 10**8) -> TailReport:
    """Exact tail of X_1 + X_2 over the tail of the dominant summand."""
    dom, _, predicted = _dominance(spec1, spec2)
    xs = [tail_quantile(dom, lev) for lev in levels]
    emp = [sum_tail(spec1, spec2, x, max_support) for x in xs]
    ref = [dom.tail(x) for x in xs]
    return TailReport([float(x) for x in xs], emp, ref, [e / r for e, r in zip(emp, ref)],
                      [0.0] * len(xs), 0, predicted, list(levels), [False] * len(xs), exact=True)


def random_sum_check(tau: DistSpec, zeta: DistSpec, levels=(1e-2, 1e-3), mc_count: int = 10**6,
                     seed: int = 0, block: int = 8192, min_count: float = 1.0) -> TailReport:
    """Monte Carlo tail of sum_{i <= tau} zeta_i over P(tau > x); limit (E zeta)^beta."""
    beta = _rv_index(tau)
    mz = zeta.mean()
    if not (0 < mz < math.inf):
        raise TailCheckError(f"zeta needs a positive finite mean, got {mz}")
    if beta >= 1:
        az = zeta.regularly_varying_index
        if az is not None and not az > beta:
            raise TailCheckError(f"zeta needs a finite moment of order r > {beta}")
    draws = []
    done, b = 0, 0
    while done < mc_count:
        size = min(block, mc_count - done)
        rng = stream(seed, b)
        counts = tau.sample_array(rng, size)
        draws.append(branch_sum_array(counts, zeta, rng))
        done += size
        b += 1
    total = np.concatenate(draws)
    return tail_ratio_curve(total, tau, levels, predicted_limit=mz**beta, min_count=min_count)


def random_sum_exact_constant(tau: DistSpec, c: int, levels) -> TailReport:
    """zeta = Constant(c): P(c tau > x) = P(tau > x / c) exactly."""
    beta = _rv_index(tau)
    xs = [tail_quantile(tau, lev) for lev in levels]
    emp = [tau.tail(x / c) for x in xs]
    ref = [tau.tail(x) for x in xs]
    return TailReport([float(x) for x in xs], emp, ref, [e / r for e, r in zip(emp, ref)],
                      [0.0] * len(xs), 0, float(c) ** beta, list(levels), [False] * len(xs), exact=True)


def is_constant_zero(spec: DistSpec) -> bool:
    return isinstance(spec, Constant) and spec.value == 0
