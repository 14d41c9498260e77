import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ginar2.dists import (Bernoulli, Binomial, Constant, DiscretePareto, DistError, FinitePMF,
                          Geometric, InsufficientDomainError, Poisson, StepFunction,
                          construct_slowly_varying, exact_tail, from_dict, hurwitz_zeta, log_moment,
                          mean, moment, pmf, sample)
from ginar2.process import stream

PARAMETRIC = [
    Constant(3),
    Bernoulli(0.3),
    Binomial(5, 0.4),
    Poisson(1.7),
    Geometric(0.35),
    FinitePMF((0.1, 0.0, 0.6, 0.3)),
    DiscretePareto(0.8),
    DiscretePareto(1.5),
    DiscretePareto(1.0, 2.0),
    DiscretePareto(1.2, -1.0),
]


# examples -----------------------------------------------------------------------

def test_constant_and_degenerate_samples():
    rng = stream(1)
    assert all(sample(Constant(3), rng) == 3 for _ in range(5))
    assert all(sample(Bernoulli(0.0), rng) == 0 for _ in range(5))


def test_exact_tail_examples():
    assert exact_tail(Constant(3), 2.5) == 1.0
    assert exact_tail(Constant(3), 3) == 0.0
    assert exact_tail(DiscretePareto(0.8), 0) == 1.0
    assert exact_tail(Poisson(1.0), 0) == pytest.approx(1 - math.exp(-1), abs=1e-15)
    assert exact_tail(DiscretePareto(0.8), -1) == 1.0


def test_pmf_examples():
    assert pmf(Bernoulli(0.3), 1) == pytest.approx(0.3)
    assert pmf(DiscretePareto(1.0), 1) == pytest.approx(0.5, abs=1e-15)
    assert pmf(FinitePMF((0.2, 0.8)), 0) == pytest.approx(0.2)
    assert pmf(DiscretePareto(1.0), 0) == 0.0


def test_mean_examples():
    assert mean(Bernoulli(0.3)) == pytest.approx(0.3)
    assert mean(DiscretePareto(1.0)) == math.inf
    assert mean(DiscretePareto(1.5)) == pytest.approx(hurwitz_zeta(1.5), rel=1e-10)
    assert hurwitz_zeta(1.5) == pytest.approx(2.6124, abs=1e-4)


def test_moment_examples():
    assert moment(Constant(2), 3) == 8
    assert moment(DiscretePareto(0.8), 1) == math.inf
    assert moment(Bernoulli(0.3), 2) == pytest.approx(0.3)
    # r = alpha boundary: infinite for beta >= -1, finite below
    assert moment(DiscretePareto(1.5, -1.0), 1.5) == math.inf
    assert math.isfinite(moment(DiscretePareto(1.5, -3.0), 1.5))


def test_moment_matches_zeta_closed_form():
    # E X^r = sum_k ((k+1)^r - k^r) (1+k)^-alpha; for r = 1 this is zeta(alpha)
    assert moment(DiscretePareto(2.5), 1.0) == pytest.approx(hurwitz_zeta(2.5), rel=1e-10)
    # E X^2 = sum (2k + 1)(1+k)^-alpha = 2 zeta(alpha - 1) - zeta(alpha)
    a = 3.5
    assert moment(DiscretePareto(a), 2.0) == pytest.approx(2 * hurwitz_zeta(a - 1) - hurwitz_zeta(a), rel=1e-9)


def test_log_moment_examples():
    assert log_moment(Constant(1)) == 0.0
    assert log_moment(Constant(0)) == 0.0
    v = log_moment(DiscretePareto(0.5))
    assert math.isfinite(v) and v > 0
    # oracle: sum_k log(k) pmf(k) directly over a long range plus integral bound
    d = DiscretePareto(2.0)
    k = np.arange(1, 2_000_001)
    direct = float(np.sum(np.log(k) * d.pmf(k)))
    assert log_moment(d) == pytest.approx(direct, rel=1e-6)


def test_variance_parametric():
    assert Binomial(5, 0.4).variance() == pytest.approx(1.2)
    assert Poisson(1.7).variance() == pytest.approx(1.7)
    assert Geometric(0.35).variance() == pytest.approx(0.65 / 0.35**2)
    assert Geometric(0.35).mean() == pytest.approx(0.65 / 0.35)


def test_discrete_pareto_log_factor_normalization():
    d = DiscretePareto(1.0, 2.0)
    k = np.arange(0, 200)
    t = d.tail(k)
    assert np.all(t <= 1.0)
    assert np.all(np.diff(t) <= 0)
    assert t.max() == pytest.approx(1.0)
    # support starts at the first k with positive pmf
    p = d.pmf(k)
    assert p[0] == 0.0 and np.all(p >= 0)


def test_invalid_parameters():
    for bad in (lambda: Bernoulli(1.5), lambda: Poisson(-1), lambda: Binomial(0, 0.5),
                lambda: FinitePMF((0.5, 0.4)), lambda: DiscretePareto(0), lambda: Constant(-1),
                lambda: Geometric(0.0)):
        with pytest.raises(DistError):
            bad()


# invariants -----------------------------------------------------------------------

@pytest.mark.parametrize("spec", PARAMETRIC, ids=lambda s: repr(s))
def test_tail_pmf_consistency(spec):
    k = np.arange(0, 400)
    t = spec.tail(k)
    tm1 = spec.tail(k - 1)
    assert np.all(np.abs((tm1 - t) - spec.pmf(k)) <= 1e-12)
    assert np.all(np.abs(np.cumsum(spec.pmf(k)) + t - 1.0) <= 1e-12)
    assert np.all(np.diff(t) <= 0) and np.all((t >= 0) & (t <= 1))


@pytest.mark.parametrize("spec", PARAMETRIC, ids=lambda s: repr(s))
def test_round_trip(spec):
    assert from_dict(spec.to_dict()) == spec


def test_from_dict_errors():
    with pytest.raises(DistError):
        from_dict({"kind": "zipf"})
    with pytest.raises(DistError):
        from_dict({"kind": "poisson", "lam": 1})
    with pytest.raises(DistError):
        from_dict({"p": 0.5})


@pytest.mark.parametrize("alpha", [0.5, 0.8, 1.5])
@pytest.mark.parametrize("q", [2, 10])
def test_regular_variation_ratio(alpha, q):
    d = DiscretePareto(alpha)
    x = 1e6
    assert abs(d.tail(q * x) / d.tail(x) - q**-alpha) < 0.01


@pytest.mark.parametrize("alpha,beta", [(1.0, 2.0), (0.5, -1.0)])
@pytest.mark.parametrize("q", [2, 10])
def test_regular_variation_with_log_factor(alpha, beta, q):
    # the log factor contributes ((1 + log(1+qx)) / (1 + log(1+x)))^beta, which
    # tends to 1 only logarithmically; check the exact factor and its decay
    d = DiscretePareto(alpha, beta)
    errs = []
    for x in (1e4, 1e6, 1e9, 1e12):
        ratio = d.tail(q * x) / d.tail(x)
        slow = ((1 + math.log1p(q * x)) / (1 + math.log1p(x))) ** beta
        assert ratio == pytest.approx(q**-alpha * slow * ((1 + x) / (1 + q * x) * q) ** alpha, rel=1e-9)
        errs.append(abs(ratio - q**-alpha))
    assert all(a > b for a, b in zip(errs, errs[1:]))


@pytest.mark.parametrize("c", [0.5, 2.0, 3.0])
def test_power_closure(c):
    # P(X^c > x) = T(x^{1/c}) varies regularly with index alpha / c
    d = DiscretePareto(0.8)
    x, q = 1e6, 10
    ratio = d.tail((q * x) ** (1 / c)) / d.tail(x ** (1 / c))
    assert abs(ratio - q ** (-0.8 / c)) < 0.01


@pytest.mark.parametrize("spec", [Bernoulli(0.3), Binomial(5, 0.4), Poisson(1.7), Geometric(0.35),
                                  FinitePMF((0.1, 0.0, 0.6, 0.3)), DiscretePareto(0.8),
                                  DiscretePareto(1.5), DiscretePareto(1.0, 2.0)],
                         ids=lambda s: repr(s))
def test_sampler_chi_square(spec):
    n = 100_000
    draws = spec.sample_array(stream(2024, 7), n)
    edges = np.arange(0, 51)
    probs = np.append(spec.pmf(edges), spec.tail(50))
    observed = np.append(np.bincount(np.minimum(draws, 51), minlength=52)[:51], (draws > 50).sum())
    keep = probs * n >= 5
    # pool the sparse cells into one
    exp_cells = np.append(probs[keep] * n, probs[~keep].sum() * n)
    obs_cells = np.append(observed[keep], observed[~keep].sum())
    if exp_cells[-1] == 0:
        exp_cells, obs_cells = exp_cells[:-1], obs_cells[:-1]
    _, pval = stats.chisquare(obs_cells, exp_cells)
    assert pval > 0.001


def test_discrete_pareto_truncated_mean():
    d = DiscretePareto(1.0)
    draws = d.sample_array(stream(11), 1_000_000)
    capped = np.minimum(draws, 100).astype(float)
    oracle = float(np.sum(d.tail(np.arange(100))))
    se = capped.std(ddof=1) / math.sqrt(capped.size)
    assert abs(capped.mean() - oracle) < 3 * se


def test_invert_is_minimal_index():
    d = DiscretePareto(0.7, 1.5)
    u = stream(5).random(2000)
    k = d.invert(u)
    assert np.all(u > d.tail(k))
    assert np.all((k == 0) | (u <= d.tail(k - 1)))


@settings(max_examples=60, deadline=None)
@given(alpha=st.floats(0.2, 3.0), beta=st.floats(-2.0, 3.0), x=st.integers(0, 10**9))
def test_pareto_tail_properties(alpha, beta, x):
    d = DiscretePareto(alpha, beta)
    t0, t1 = d.tail(x), d.tail(x + 1)
    assert 0 <= t1 <= t0 <= 1
    assert d.pmf(x + 1) == pytest.approx(t0 - t1, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(w=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6).filter(lambda w: sum(w) > 0.1))
def test_finite_pmf_properties(w):
    w = np.asarray(w) / sum(w)
    w[-1] = 1.0 - w[:-1].sum()
    if w[-1] < 0:
        return
    d = FinitePMF(tuple(float(v) for v in w))
    k = np.arange(len(w) + 2)
    assert np.allclose(d.pmf(k)[: len(w)], w, atol=1e-12)
    assert d.tail(len(w) - 1) == 0.0
    assert d.mean() == pytest.approx(float(np.dot(np.arange(len(w)), w)), abs=1e-12)


# slowly varying construction ---------------------------------------------------------

def _sqrt_grid():
    grid = np.unique(np.concatenate([np.arange(0, 10_001, dtype=float),
                                     np.logspace(4, 8, 4001)]))
    h = np.where(grid > 0, grid, 1e-300) ** -0.5
    return grid, h


def test_slowly_varying_breakpoints():
    grid, h = _sqrt_grid()
    L = construct_slowly_varying(grid, h)
    assert L.breakpoints[:3] == (1.0, 16.0, 81.0)
    assert L(0.5) == 1.0 and L(1.0) == 1.0
    assert L(1.5) == 2.0 and L(16.0) == 2.0 and L(16.5) == 3.0


def test_slowly_varying_contract():
    grid, h = _sqrt_grid()
    L = construct_slowly_varying(grid, h)
    vals = np.asarray(L.values)
    assert np.all(vals >= 1) and np.all(np.diff(vals) > 0)
    assert np.all(vals == np.round(vals))
    inside = grid[grid <= L.breakpoints[-1]]
    Lx = L(inside)
    assert np.all(np.diff(Lx) >= 0)
    # L(x) h(x) <= (k+2)/(k+1)^2 beyond x_k
    for k, xk in enumerate(L.breakpoints[:-1]):
        mask = (grid > xk) & (grid <= L.breakpoints[-1])
        hv = h[mask]
        bound = (L.values[k] + 1) / L.values[k] ** 2
        assert np.all(L(grid[mask]) * hv <= bound + 1e-12)
    # decreasing-to-zero trend of L h
    lh = Lx[inside > 0] * (inside[inside > 0] ** -0.5)
    x_pos = inside[inside > 0]
    first = lh[x_pos <= 10].max()
    last = lh[x_pos >= x_pos[-1] / 10].max()
    assert last < first


def test_slowly_varying_errors():
    grid, h = _sqrt_grid()
    with pytest.raises(InsufficientDomainError):
        construct_slowly_varying(grid, h, levels=50)
    with pytest.raises(InsufficientDomainError):
        construct_slowly_varying(grid[:3], np.full(3, 5.0))
    L = construct_slowly_varying(grid, h)
    with pytest.raises(InsufficientDomainError):
        L(grid[-1] * 10)


def test_step_function_right_continuous():
    f = StepFunction((1.0, 4.0), (1.0, 2.0), left_continuous=False)
    assert f(0.5) == 1.0 and f(1.0) == 2.0
    g = StepFunction((1.0, 4.0), (1.0, 2.0))
    assert g(1.0) == 1.0
    with pytest.raises(ValueError):
        StepFunction((2.0, 1.0), (1.0, 1.0))
