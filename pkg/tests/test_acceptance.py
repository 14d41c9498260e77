"""Acceptance criteria, each at its stated tolerance with pinned seeds.

Run ``python3 tests/test_acceptance.py`` for one PASS/FAIL line per
criterion, or through pytest (each criterion is one test and prints its line).
"""

from __future__ import annotations

import itertools
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from ginar2 import analytics as an
from ginar2 import enumeration as en
from ginar2 import process as pr
from ginar2 import tailstats as ts
from ginar2.dists import Bernoulli, Constant, DiscretePareto, FinitePMF, Poisson
from ginar2.process import ModelParams

sys.path.insert(0, str(Path(__file__).parent))

BERN = ModelParams(Bernoulli(0.3), Bernoulli(0.2), Poisson(1.0))
GRID = list(itertools.product((0.0, 0.2, 0.5, 0.9, 1.4), (0.0, 0.1, 0.45, 1.0)))


def _max_rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def criterion_1():
    """Algebraic identities to 1e-12."""
    worst = {"m_seq": 0.0, "matrix_power": 0.0, "expectation": 0.0, "eigen": 0.0}
    for m_xi, m_eta in GRID:
        ms = an.mean_structure(m_xi, m_eta)
        m = [0.0, 1.0]
        for k in range(1, 101):
            m.append(m_xi * m[-1] + m_eta * m[-2])
        worst["m_seq"] = max(worst["m_seq"], _max_rel([an.m_seq(ms, k) for k in range(101)], m[1:]))
        naive = np.eye(2)
        for n in range(51):
            worst["matrix_power"] = max(worst["matrix_power"], _max_rel(an.matrix_power(ms, n), naive))
            naive = naive @ an.mean_matrix(ms)
        e = [1.5, 0.5]
        for n in range(1, 51):
            e.append(m_xi * e[-1] + m_eta * e[-2] + 0.8)
            worst["expectation"] = max(worst["expectation"],
                                       _max_rel(an.expectation(ms, n, 0.5, 1.5, 0.8), e[-1]))
        worst["eigen"] = max(worst["eigen"], abs(ms.lambda_plus * ms.lambda_minus + m_eta),
                             abs(ms.lambda_plus + ms.lambda_minus - m_xi))
    ok = all(v <= 1e-12 for v in worst.values())
    return ok, ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + " (tol 1e-12)"


def criterion_2():
    """Stationary mean: 1e5 draws within 3 s.e. of 2.0; expectation(40) within 1e-6."""
    s = pr.ensemble("stationary", BERN, 100_000, seed=2, tol=1e-6)
    x = s.draws.astype(float)
    se = x.std(ddof=1) / math.sqrt(x.size)
    ms = BERN.mean_structure()
    target = 1.0 / (1 - 0.3 - 0.2)
    e40 = an.expectation(ms, 40, 0.0, 0.0, 1.0)
    ok = abs(x.mean() - target) <= 3 * se and abs(e40 - 2.0) <= 1e-6
    return ok, (f"mean {x.mean():.5f} vs {target} (3 s.e. = {3 * se:.5f}); "
                f"expectation(40) - 2 = {e40 - 2.0:.2e}")


def _bernoulli_pmfs(n_max: int, degree: int = 400):
    """Exact pmfs of X_1..X_n_max from (1,0) without immigration for BERN, via the
    generating-function recursion F_n = (0.7 + 0.3 F_{n-1}) (0.8 + 0.2 F_{n-2}).

    Coefficients above ``degree`` are dropped; the dropped mass is returned.
    """
    f_prev2 = np.zeros(degree + 1)
    f_prev2[0] = 1.0
    f_prev = np.zeros(degree + 1)
    f_prev[1] = 1.0
    pmfs = []
    for _ in range(n_max):
        a = 0.3 * f_prev
        a[0] += 0.7
        b = 0.2 * f_prev2
        b[0] += 0.8
        f = np.convolve(a, b)[: degree + 1]
        pmfs.append(f)
        f_prev2, f_prev = f_prev, f
    return pmfs, max(1.0 - math.fsum(f) for f in pmfs)


def criterion_3():
    """Moment bound for n <= 30; MC E(X_n^2) from (1,0) within 3 s.e. of the exact value.

    The standard error is the exact sd of X_n^2 over sqrt(count). The plug-in sd is
    zero once every simulated path has died out, which makes a 3 s.e. band empty.
    """
    ms = BERN.mean_structure()
    vx, ve = 0.21, 0.16
    bound_ok = all(an.variance_xn(ms, vx, ve, n) + an.m_seq(ms, n) ** 2
                   <= an.second_moment_bound(ms, vx, ve, n) for n in range(1, 31))
    pmfs, lost = _bernoulli_pmfs(30)
    k = np.arange(pmfs[0].size, dtype=float)
    count = 100_000
    rng = pr.stream(3)
    base = BERN.without_immigration()
    cur = np.ones(count, dtype=np.int64)
    prev = np.zeros(count, dtype=np.int64)
    worst_z, worst_pmf, bad, extinct = 0.0, 0.0, [], None
    for n in range(1, 31):
        cur, prev = pr.evolve(cur, prev, 1, base, rng, immigration=False)
        sq = cur.astype(float) ** 2
        pred = an.variance_xn(ms, vx, ve, n) + an.m_seq(ms, n) ** 2
        m2 = float(pmfs[n - 1] @ k**2)
        m4 = float(pmfs[n - 1] @ k**4)
        worst_pmf = max(worst_pmf, abs(m2 - pred) / pred)
        se = math.sqrt(max(m4 - m2 * m2, 0.0) / count)
        z = abs(sq.mean() - pred) / se
        worst_z = max(worst_z, z)
        if z > 3:
            bad.append(n)
        if extinct is None and not sq.any():
            extinct = n
    ok = bound_ok and not bad
    return ok, (f"bound holds n<=30: {bound_ok}; worst |z| {worst_z:.2f} over n<=30 (limit 3), "
                f"failing n {bad}; all paths extinct from n={extinct}; exact-pmf E X_n^2 "
                f"rel. dev {worst_pmf:.1e}, dropped mass {lost:.1e}")


def criterion_4():
    """Pathwise embedding on 100 seeds x 50 steps: zero mismatches."""
    mismatches = 0
    for seed in range(100):
        path = pr.simulate_path(BERN, 50, seed)
        two = pr.simulate_two_type(BERN, 50, seed)
        mismatches += sum(two.vectors[n] != (path.x(n), path.x(n - 1)) for n in range(51))
    return mismatches == 0, f"{mismatches} mismatches"


def criterion_5():
    """Additive property: brute-force pmfs agree within 1e-9."""
    models = [
        ModelParams(Bernoulli(0.3), Bernoulli(0.2), Bernoulli(0.4), FinitePMF((0.2, 0.5, 0.3)),
                    FinitePMF((0.5, 0.3, 0.2))),
        ModelParams(FinitePMF((0.5, 0.3, 0.2)), FinitePMF((0.6, 0.4)), FinitePMF((0.7, 0.2, 0.1)),
                    Bernoulli(0.6), FinitePMF((0.1, 0.2, 0.3, 0.4))),
        ModelParams(FinitePMF((0.1, 0.2, 0.3, 0.4)), Bernoulli(0.5), Constant(0), Constant(2),
                    Bernoulli(0.5)),
    ]
    worst = 0.0
    for p in models:
        for n in (1, 2, 3):
            for imm in (False, True):
                a = en.recursion_pmf(p, n, imm)
                b = en.additive_pmf(p, n, imm)
                size = max(len(a), len(b))
                worst = max(worst, float(np.max(np.abs(np.pad(a, (0, size - len(a)))
                                                       - np.pad(b, (0, size - len(b)))))))
    return worst <= 1e-9, f"max pointwise difference {worst:.2e} (tol 1e-9)"


def _stationary_ratio(p: ModelParams, levels, seed: int, pred: float):
    s = pr.ensemble("stationary", p, 1_000_000, seed=seed, tol=1e-6)
    rep = ts.tail_ratio_curve(s, p.eps, levels, pred, min_count=10)
    return s.meta["truncation"], rep


def criterion_6():
    """Stationary tail ratio within 20% of the series constant, alpha in {0.8, 1.5}."""
    ok, parts = True, []
    for alpha in (0.8, 1.5):
        p = ModelParams(Bernoulli(0.3), Bernoulli(0.2), DiscretePareto(alpha))
        const, _ = an.stationary_tail_constant(p.mean_structure(), alpha)
        n_used, rep = _stationary_ratio(p, (1e-2, 1e-3), 6, const)
        ok &= n_used == 30 and all(rep.within(0.2)) and not any(rep.unreliable)
        exact = _exact_ratios(alpha, rep.x_grid)
        parts.append(f"alpha {alpha}: N {n_used}, constant {const:.4f}, ratios "
                     + ", ".join(f"{r:.4f}@{lev:g}" for r, lev in zip(rep.ratio, rep.levels))
                     + " (exact law " + ", ".join(f"{e:.4f}" for e in exact) + ")")
    return ok, "; ".join(parts) + " (tol 20%)"


def _exact_ratios(alpha, x_grid):
    """Exact-law ratio P(pi > x) / T(x) from the generating-function oracle."""
    try:
        import pgf_oracle
    except ImportError:
        return []
    pmf = pgf_oracle.stationary_pmf(alpha)
    d = DiscretePareto(alpha)
    return [(1.0 - pmf[: int(x) + 1].sum()) / d.tail(x) for x in x_grid]


def criterion_7():
    """First-order reduction: ratio within 20% of 2.0 at level 1e-3."""
    p = ModelParams(Bernoulli(0.5), Constant(0), DiscretePareto(1.0))
    const = an.first_order_constant(0.5, 1.0)
    n_used, rep = _stationary_ratio(p, (1e-3,), 7, const)
    ok = all(rep.within(0.2)) and not any(rep.unreliable)
    return ok, f"N {n_used}, ratio {rep.ratio[0]:.4f} vs {const} (tol 20%)"


def criterion_8():
    """Tail propagation n in {1,2,3}, light and equal-index X_{-1}, within 20% at 1e-3."""
    ok, parts = True, []
    for label, xm1 in (("X-1=0", Constant(0)), ("X-1=DP(0.8)", DiscretePareto(0.8))):
        p = ModelParams(Bernoulli(0.3), Bernoulli(0.2), Constant(0), DiscretePareto(0.8), xm1)
        ms = p.mean_structure()
        for n in (1, 2, 3):
            pred = an.predicted_tail_ratio(ms, n, 0.8, 0.8 if label != "X-1=0" else math.inf)
            s = pr.ensemble("path_endpoint", p, 1_000_000, seed=80 + n, n_steps=n)
            rep = ts.tail_ratio_curve(s, p.x0, (1e-3,), pred.total, min_count=10)
            ok &= all(rep.within(0.2)) and not any(rep.unreliable)
            parts.append(f"{label} n={n}: {rep.ratio[0]:.4f} vs {pred.total:.4f}")
    return ok, "; ".join(parts) + " (tol 20%)"


def criterion_9():
    """Karamata at alpha in {0.5, 0.8} within 1% at x = 1e6; Potter x0 <= 1e4, no violations."""
    ok, parts = True, []
    for alpha in (0.5, 0.8):
        pt = ts.karamata_check(DiscretePareto(alpha), [1e6])[0]
        rel = abs(pt.ratio / pt.target - 1)
        ok &= rel <= 0.01
        parts.append(f"Karamata alpha {alpha}: {pt.ratio:.5f} vs {pt.target:.1f} ({100 * rel:.2f}%)")
    r = ts.potter_check(DiscretePareto(0.8), 0.1, (2, 5, 10), 1e4)
    ok &= r.found and r.x0 <= 1e4 and r.violations == 0
    parts.append(f"Potter x0 {r.x0}, violations {r.violations}")
    return ok, "; ".join(parts) + " (tol 1%)"


def criterion_10():
    """Large deviations: n=1 ratio exactly 1; large-n max upper <= 3 x small-n max upper."""
    rep = ts.large_dev_check(DiscretePareto(1.5), 3.0, (1, 2, 4, 8, 16), (1, 2, 5, 10),
                             1_000_000, seed=10)
    n1 = all(r.ratio == 1.0 for r in rep.rows if r.n == 1)
    ok = n1 and rep.bounded
    return ok, (f"n=1 exact: {n1}; max upper n in (8,16) {rep.large_n_max_upper:.3f} "
                f"vs 3 x {rep.small_n_max_upper:.3f}")


def criterion_11():
    """Random sum within 15% of 0.5^0.8 at 1e-3; equal-index convolution within 5% of 2 at 1e-4."""
    rs = ts.random_sum_check(DiscretePareto(0.8), Bernoulli(0.5), (1e-3,), 1_000_000, seed=11,
                             min_count=10)
    conv = ts.convolution_check(DiscretePareto(0.8), DiscretePareto(0.8), (1e-4,))
    ok = all(rs.within(0.15)) and not any(rs.unreliable) and all(conv.within(0.05))
    return ok, (f"random sum {rs.ratio[0]:.4f} vs {rs.predicted_limit:.4f} (tol 15%); "
                f"convolution {conv.ratio[0]:.4f} vs 2 (tol 5%)")


def criterion_12():
    """Thread counts 1, 4, 8 give byte-identical sample exports."""
    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for threads in (1, 4, 8):
            for kind, kw in (("stationary", {"tol": 1e-6}), ("path_endpoint", {"n_steps": 10})):
                s = pr.ensemble(kind, BERN, 60_000, seed=12, threads=threads, **kw)
                path = Path(tmp) / f"{kind}_{threads}.csv"
                s.to_csv(path)
                blobs.append((kind, path.read_bytes() + path.with_name(path.stem + ".meta.json").read_bytes()))
    same = all(len({b for k, b in blobs if k == kind}) == 1 for kind in ("stationary", "path_endpoint"))
    return same, "exports identical across threads 1/4/8" if same else "exports differ"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12]


def _run(fn, stream=sys.stdout):
    t0 = time.perf_counter()
    ok, detail = fn()
    line = (f"{'PASS' if ok else 'FAIL'} criterion {fn.__name__.split('_')[1]:>2} "
            f"[{time.perf_counter() - t0:6.1f}s] {fn.__doc__.strip().splitlines()[0]} :: {detail}")
    print(line, file=stream, flush=True)
    return ok, line


@pytest.mark.parametrize("fn", CRITERIA, ids=[f.__name__ for f in CRITERIA])
def test_criterion(fn, capsys):
    with capsys.disabled():
        print()
        ok, line = _run(fn)
    assert ok, line


if __name__ == "__main__":
    results = [_run(fn)[0] for fn in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria pass")
    sys.exit(0 if all(results) else 1)
