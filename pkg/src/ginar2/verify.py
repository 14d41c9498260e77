"""Verification suites: each check yields one VerificationOutcome.

Status is derived mechanically: ``pass`` iff |observed - predicted| <=
tolerance, overridden by ``unreliable`` when an empirical tail level has
fewer than 10 expected exceedances.  Inequalities are encoded as
observed = size of the violation, predicted = 0, tolerance = 0.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import analytics, enumeration, process, tailstats
from .config import SUITES, ConfigError, ExperimentConfig
from .dists import Bernoulli, Constant, DiscretePareto, FinitePMF, Poisson
from .process import ModelParams

UNRELIABLE_COUNT = 10.0
IDENTITY_TOL = 1e-12

DEFAULT_MODEL = ModelParams(Bernoulli(0.3), Bernoulli(0.2), Poisson(1.0))
TAIL_MODEL = ModelParams(Bernoulli(0.3), Bernoulli(0.2), DiscretePareto(0.8))
PROPAGATION_MODEL = ModelParams(Bernoulli(0.3), Bernoulli(0.2), Constant(0), DiscretePareto(0.8))
ADDITIVE_MODELS = (
    ModelParams(Bernoulli(0.3), Bernoulli(0.2), Bernoulli(0.4), FinitePMF((0.2, 0.5, 0.3)),
                FinitePMF((0.5, 0.3, 0.2))),
    ModelParams(FinitePMF((0.5, 0.3, 0.2)), FinitePMF((0.6, 0.4)), FinitePMF((0.7, 0.2, 0.1)),
                Bernoulli(0.6), FinitePMF((0.1, 0.2, 0.3, 0.4))),
)


@dataclass(frozen=True)
class VerificationOutcome:
    name: str
    status: str
    observed: float
    predicted: float
    tolerance: float
    runtime: float
    detail: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def judge(name: str, observed: float, predicted: float, tolerance: float, runtime: float,
          unreliable: bool = False, detail: dict | None = None) -> VerificationOutcome:
    ok = abs(observed - predicted) <= tolerance  # False for nan
    status = "unreliable" if unreliable else ("pass" if ok else "fail")
    return VerificationOutcome(name, status, float(observed), float(predicted), float(tolerance),
                               runtime, detail)


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.t0

    def __exit__(self, *exc):
        return False


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(b))


def _finite_support(params: ModelParams) -> bool:
    return all(math.isfinite(getattr(params, k).support_max) for k in ("xi", "eta", "eps", "x0", "xm1"))


# moments ------------------------------------------------------------------------

def suite_moments(cfg: ExperimentConfig) -> list[VerificationOutcome]:
    p = cfg.model
    ms = p.mean_structure()
    out = []

    with _Timer() as t:
        m = [0.0, 1.0]
        err = 0.0
        for k in range(1, 101):
            m.append(ms.m_xi * m[-1] + ms.m_eta * m[-2])
            err = max(err, _rel(analytics.m_seq(ms, k), m[-1]))
    out.append(judge("m_seq-recursion", err, 0.0, IDENTITY_TOL, t.elapsed))

    with _Timer() as t:
        mm = analytics.mean_matrix(ms)
        naive = np.eye(2)
        err = 0.0
        for n in range(51):
            closed = analytics.matrix_power(ms, n)
            err = max(err, float(np.max(np.abs(closed - naive) / np.maximum(1.0, np.abs(naive)))))
            naive = naive @ mm
    out.append(judge("matrix-power", err, 0.0, IDENTITY_TOL, t.elapsed))

    with _Timer() as t:
        ex0, exm1, m_eps = p.x0.mean(), p.xm1.mean(), p.eps.mean()
        err = 0.0
        if all(math.isfinite(v) for v in (ex0, exm1, m_eps)):
            e = [exm1, ex0]
            for n in range(1, 51):
                e.append(ms.m_xi * e[-1] + ms.m_eta * e[-2] + m_eps)
                err = max(err, _rel(analytics.expectation(ms, n, ex0, exm1, m_eps), e[-1]))
    out.append(judge("expectation-recursion", err, 0.0, IDENTITY_TOL, t.elapsed))

    with _Timer() as t:
        err = max(_rel(ms.lambda_plus * ms.lambda_minus, -ms.m_eta),
                  _rel(ms.lambda_plus + ms.lambda_minus, ms.m_xi))
    out.append(judge("eigenvalue-identities", err, 0.0, IDENTITY_TOL, t.elapsed))

    var_xi, var_eta = p.xi.variance(), p.eta.variance()
    if not (math.isfinite(var_xi) and math.isfinite(var_eta)):
        return out
    if math.isfinite(p.xi.support_max) and math.isfinite(p.eta.support_max):
        with _Timer() as t:
            base = ModelParams(p.xi, p.eta, Constant(0), Constant(1), Constant(0))
            err = 0.0
            for n in range(1, 7):
                second = enumeration.pmf_moment(enumeration.recursion_pmf(base, n, False), 2)
                pred = analytics.variance_xn(ms, var_xi, var_eta, n) + analytics.m_seq(ms, n) ** 2
                err = max(err, _rel(pred, second))
        out.append(judge("second-moment-enumeration", err, 0.0, 1e-9, t.elapsed))
    if ms.rho > 0:
        with _Timer() as t:
            worst = 0.0
            for n in range(1, 31):
                lhs = analytics.variance_xn(ms, var_xi, var_eta, n) + analytics.m_seq(ms, n) ** 2
                rhs = analytics.second_moment_bound(ms, var_xi, var_eta, n)
                worst = max(worst, lhs - rhs * (1 + 1e-12))
        out.append(judge("second-moment-bound", max(worst, 0.0), 0.0, 0.0, t.elapsed))

    with _Timer() as t:
        n = max(1, min(cfg.n_steps, 30))
        base = ModelParams(p.xi, p.eta, Constant(0), Constant(1), Constant(0))
        s = process.ensemble("path_endpoint", base, cfg.mc_count, cfg.seed, n_steps=n,
                             threads=cfg.threads)
        sq = s.draws.astype(float) ** 2
        pred = analytics.variance_xn(ms, var_xi, var_eta, n) + analytics.m_seq(ms, n) ** 2
        se = float(sq.std(ddof=1) / math.sqrt(sq.size)) if sq.size > 1 else 0.0
        # P(X_n > 0) <= m_n: with few surviving paths the plug-in s.e. is meaningless
        survivors = cfg.mc_count * analytics.m_seq(ms, n)
    out.append(judge(f"second-moment-mc[n={n}]", float(sq.mean()), pred,
                     3 * se + IDENTITY_TOL * max(1.0, abs(pred)), t.elapsed,
                     detail={"se": se, "expected_survivors_bound": survivors},
                     unreliable=survivors < UNRELIABLE_COUNT))

    m_eps = p.eps.mean()
    if ms.m_xi > 0 and ms.criticality is analytics.Criticality.SUBCRITICAL and math.isfinite(m_eps):
        with _Timer() as t:
            s = process.ensemble("stationary", p, cfg.mc_count, cfg.seed, tol=cfg.tol, threads=cfg.threads)
            x = s.draws.astype(float)
            se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
            pred = analytics.stationary_mean(ms, m_eps)
        out.append(judge("stationary-mean-mc", float(x.mean()), pred,
                         3 * se + IDENTITY_TOL * max(1.0, pred), t.elapsed,
                         detail={"se": se, "truncation": s.meta["truncation"]}))
    return out


# embedding / additive ---------------------------------------------------------------

def suite_embedding(cfg: ExperimentConfig, seeds: int = 100, n_steps: int = 50) -> list[VerificationOutcome]:
    with _Timer() as t:
        mismatches = 0
        for s in range(seeds):
            seed = cfg.seed + s
            path = process.simulate_path(cfg.model, n_steps, seed)
            two = process.simulate_two_type(cfg.model, n_steps, seed)
            expected = [(path.x(n), path.x(n - 1)) for n in range(n_steps + 1)]
            mismatches += sum(a != tuple(b) for a, b in zip(expected, two.vectors))
    return [judge("embedding-pathwise", mismatches, 0, 0, t.elapsed,
                  detail={"seeds": seeds, "n_steps": n_steps})]


def suite_additive(cfg: ExperimentConfig | None) -> list[VerificationOutcome]:
    models = (cfg.model,) if cfg is not None and _finite_support(cfg.model) else ADDITIVE_MODELS
    out = []
    for i, p in enumerate(models):
        for immigration in (False, True):
            with _Timer() as t:
                err = 0.0
                for n in (1, 2, 3):
                    a = enumeration.recursion_pmf(p, n, immigration)
                    b = enumeration.additive_pmf(p, n, immigration)
                    size = max(len(a), len(b))
                    a = np.pad(a, (0, size - len(a)))
                    b = np.pad(b, (0, size - len(b)))
                    err = max(err, float(np.max(np.abs(a - b))))
            tag = "immigration" if immigration else "pure"
            out.append(judge(f"additive-pmf[model={i},{tag}]", err, 0.0, 1e-9, t.elapsed))
    return out


# tails --------------------------------------------------------------------------------

def _tail_outcomes(prefix: str, report: tailstats.TailReport, rel_tol: float,
                   runtime: float) -> list[VerificationOutcome]:
    out = []
    for lev, x, r, se, unrel in zip(report.levels, report.x_grid, report.ratio, report.ratio_se,
                                    report.unreliable):
        pred = report.predicted_limit
        out.append(judge(f"{prefix}[level={lev:g}]", r, pred, rel_tol * abs(pred), runtime,
                         unreliable=unrel, detail={"x": x, "ratio_se": se,
                                                   "sample_count": report.sample_count}))
    return out


def stationary_tail_outcomes(p: ModelParams, cfg: ExperimentConfig, levels) -> list[VerificationOutcome]:
    alpha = p.eps.regularly_varying_index
    if alpha is None:
        raise ConfigError("stationary-tail needs a regularly varying eps", ["model", "eps"])
    ms = p.mean_structure()
    with _Timer() as t:
        if ms.m_eta == 0:
            pred = analytics.first_order_constant(ms.m_xi, alpha)
        else:
            pred, _ = analytics.stationary_tail_constant(ms, alpha)
        s = process.ensemble("stationary", p, cfg.mc_count, cfg.seed, tol=cfg.tol, threads=cfg.threads)
        rep = tailstats.tail_ratio_curve(s, p.eps, levels, pred, min_count=UNRELIABLE_COUNT)
    return _tail_outcomes(f"stationary-tail[alpha={alpha:g}]", rep, cfg.rel_tol, t.elapsed)


def propagation_outcomes(p: ModelParams, cfg: ExperimentConfig, levels,
                         steps=(1, 2, 3)) -> list[VerificationOutcome]:
    b0, bm1 = p.x0.regularly_varying_index, p.xm1.regularly_varying_index
    if b0 is None and bm1 is None:
        raise ConfigError("tail propagation needs a regularly varying x0 or xm1", ["model", "x0"])
    ms = p.mean_structure()
    b0 = math.inf if b0 is None else b0
    bm1 = math.inf if bm1 is None else bm1
    reference = p.x0 if b0 <= bm1 else p.xm1
    base = p.without_immigration()
    out = []
    for n in steps:
        with _Timer() as t:
            pred = analytics.predicted_tail_ratio(ms, n, b0, bm1)
            if pred.case == "equal":
                # both tails share the index; the laws here are identical up to
                # their constants, so the limit is relative to the x0 tail
                limit = pred.coef_x0 + pred.coef_xm1 * _tail_limit(p.xm1, p.x0)
            else:
                limit = pred.total
            s = process.ensemble("path_endpoint", base, cfg.mc_count, cfg.seed + n, n_steps=n,
                                 threads=cfg.threads)
            rep = tailstats.tail_ratio_curve(s, reference, levels, limit, min_count=UNRELIABLE_COUNT)
        out += _tail_outcomes(f"tail-propagation[n={n},{pred.case}]", rep, cfg.rel_tol, t.elapsed)
    return out


def _tail_limit(num, den) -> float:
    """lim P(num > x) / P(den > x) for two DiscretePareto laws of equal index."""
    if isinstance(num, DiscretePareto) and isinstance(den, DiscretePareto):
        if num.log_factor == den.log_factor:
            return math.exp(num.log_constant - den.log_constant)
        return math.inf if num.log_factor > den.log_factor else 0.0
    raise ConfigError("equal-index tail limit needs DiscretePareto initial laws", ["model"])


def suite_stationary_tail(cfg: ExperimentConfig, default: bool) -> list[VerificationOutcome]:
    levels = cfg.levels
    if default:
        return (stationary_tail_outcomes(TAIL_MODEL, cfg, levels)
                + propagation_outcomes(PROPAGATION_MODEL, cfg, levels))
    out = []
    if cfg.model.eps.regularly_varying_index is not None:
        out += stationary_tail_outcomes(cfg.model, cfg, levels)
    if (cfg.model.x0.regularly_varying_index is not None
            or cfg.model.xm1.regularly_varying_index is not None):
        out += propagation_outcomes(cfg.model, cfg, levels)
    if not out:
        raise ConfigError("stationary-tail needs a regularly varying eps, x0 or xm1", ["model"])
    return out


# regular variation / large deviations -------------------------------------------------

def suite_regular_variation(cfg: ExperimentConfig) -> list[VerificationOutcome]:
    out = []
    for alpha in (0.5, 0.8):
        with _Timer() as t:
            pt = tailstats.karamata_check(DiscretePareto(alpha), [1e6])[0]
        out.append(judge(f"karamata-i[alpha={alpha:g},x=1e6]", pt.ratio, pt.target, 0.01 * pt.target,
                         t.elapsed))
    with _Timer() as t:
        pt = tailstats.karamata_check(DiscretePareto(1.5), [1e6], part="ii")[0]
    out.append(judge("karamata-ii[alpha=1.5,x=1e6]", pt.ratio, pt.target, 0.01 * pt.target, t.elapsed))

    with _Timer() as t:
        pr = tailstats.potter_check(DiscretePareto(0.8), 0.1, (2, 5, 10), 1e4)
    out.append(judge("potter[alpha=0.8,delta=0.1]", pr.violations if pr.found else math.inf, 0, 0,
                     t.elapsed, detail={"x0": pr.x0, "grid_max": pr.grid_max}))

    for name, s2 in (("equal-index", DiscretePareto(0.8)), ("light", Poisson(1.0)),
                     ("zero", Constant(0))):
        with _Timer() as t:
            rep = tailstats.convolution_check(DiscretePareto(0.8), s2, (1e-4,))
        tol = 0.0 if name == "zero" else 0.05 * rep.predicted_limit
        out.append(judge(f"convolution[{name},level=1e-4]", rep.ratio[0], rep.predicted_limit, tol,
                         t.elapsed, detail={"x": rep.x_grid[0]}))

    with _Timer() as t:
        rep = tailstats.random_sum_check(DiscretePareto(0.8), Bernoulli(0.5), (1e-3,), cfg.mc_count,
                                         cfg.seed, min_count=UNRELIABLE_COUNT)
    out += _tail_outcomes("random-sum[bernoulli(0.5)]", rep, 0.15, t.elapsed)
    with _Timer() as t:
        rep = tailstats.random_sum_exact_constant(DiscretePareto(0.8), 2, (1e-3,))
    out.append(judge("random-sum[constant(2),exact]", rep.ratio[0], rep.predicted_limit,
                     0.15 * rep.predicted_limit, t.elapsed))

    with _Timer() as t:
        n = 100_000
        draws = DiscretePareto(1.0).sample_array(process.stream(cfg.seed, 0), n)
        h = tailstats.hill(draws, int(math.isqrt(n)))
    out.append(judge("hill[alpha=1]", h.alpha_hat, 1.0, 0.1, t.elapsed,
                     detail={"k": h.k, "ci95": list(h.ci95)}))
    return out


def suite_large_deviations(cfg: ExperimentConfig) -> list[VerificationOutcome]:
    with _Timer() as t:
        rep = tailstats.large_dev_check(DiscretePareto(1.5), 3.0, (2, 4, 8, 16), (1, 2, 5, 10),
                                        cfg.mc_count, cfg.seed)
    n1 = max(abs(r.ratio - 1.0) for r in rep.rows if r.n == 1) if any(r.n == 1 for r in rep.rows) else 0.0
    excess = rep.large_n_max_upper - rep.slack * rep.small_n_max_upper
    detail = {"max_ratio": rep.max_ratio, "small_n_max_upper": rep.small_n_max_upper,
              "large_n_max_upper": rep.large_n_max_upper}
    return [
        judge("large-deviations[n=1]", n1, 0.0, 0.0, 0.0),
        judge("large-deviations[bounded]", max(excess, 0.0) if math.isfinite(excess) else math.inf,
              0.0, 0.0, t.elapsed, detail=detail),
    ]


def run_suite(name: str, cfg: ExperimentConfig, default: bool = False) -> list[VerificationOutcome]:
    if name not in SUITES:
        raise ConfigError(f"unknown suite {name!r}", ["suites"])
    if name == "moments":
        return suite_moments(cfg)
    if name == "embedding":
        return suite_embedding(cfg)
    if name == "additive":
        return suite_additive(None if default else cfg)
    if name == "stationary-tail":
        return suite_stationary_tail(cfg, default)
    if name == "regular-variation":
        return suite_regular_variation(cfg)
    return suite_large_deviations(cfg)


def default_config(**kw) -> ExperimentConfig:
    """Desk-scale configuration used when `verify` runs without --config."""
    base = dict(model=DEFAULT_MODEL, action="verify", mc_count=1_000_000, levels=(1e-2, 1e-3),
                rel_tol=0.2, n_steps=10)
    base.update({k: v for k, v in kw.items() if v is not None})
    return ExperimentConfig(**base)


def exit_status(outcomes: list[VerificationOutcome]) -> int:
    """0 all pass, 3 any failure, 4 unreliable but no failure."""
    statuses = {o.status for o in outcomes}
    if "fail" in statuses:
        return 3
    if "unreliable" in statuses:
        return 4
    return 0
