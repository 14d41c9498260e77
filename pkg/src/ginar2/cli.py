"""Command-line harness: ``ginar2 {simulate,stationary,analytics,tails,verify}``.

Exit codes: 0 success / all checks pass, 2 configuration error,
3 verification failure, 4 only unreliable (but no failing) checks.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__, analytics, process, tailstats, verify
from .analytics import AnalyticsError
from .config import ACTIONS, SUITES, ConfigError, ExperimentConfig, canonical_json, jsonable, load_config
from .dists import DistError
from .process import ProcessError

EXIT_OK, EXIT_CONFIG, EXIT_FAIL, EXIT_UNRELIABLE = 0, 2, 3, 4


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: Path, obj) -> None:
    _atomic_write(path, json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n")


def _write_csv(path: Path, header: str, rows) -> None:
    body = header + "\n" + "".join(",".join(_fmt(v) for v in row) + "\n" for row in rows)
    _atomic_write(path, body)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _manifest(cfg: ExperimentConfig, action: str, out: Path, files: list[str]) -> None:
    hashes = {name: hashlib.sha256((out / name).read_bytes()).hexdigest() for name in sorted(files)}
    _write_json(out / "manifest.json", {
        "action": action,
        "config_hash": cfg.digest(),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "versions": {"ginar2": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "files": hashes,
    })


# actions --------------------------------------------------------------------------------

def run_simulate(cfg: ExperimentConfig, out: Path) -> int:
    def one(i: int):
        return process.simulate_path(cfg.model, cfg.n_steps, cfg.seed, path_index=i)

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        paths = list(pool.map(one, range(cfg.path_count)))
    rows = [(i, n, p.x(n)) for i, p in enumerate(paths) for n in range(-1, cfg.n_steps + 1)]
    _write_csv(out / "paths.csv", "path,n,x", rows)
    ends = np.array([p.x(cfg.n_steps) for p in paths], dtype=float)
    _write_json(out / "summary.json", {
        "n_steps": cfg.n_steps, "path_count": cfg.path_count, "params_hash": cfg.model.digest(),
        "endpoint_mean": float(ends.mean()), "endpoint_max": float(ends.max()),
    })
    _manifest(cfg, "simulate", out, ["paths.csv", "summary.json"])
    return EXIT_OK


def run_stationary(cfg: ExperimentConfig, out: Path) -> int:
    s = process.ensemble("stationary", cfg.model, cfg.mc_count, cfg.seed, tol=cfg.tol, threads=cfg.threads)
    s.to_csv(out / "samples.csv")
    x = s.draws.astype(float)
    ms = cfg.model.mean_structure()
    summary = {"count": len(s), "truncation": s.meta["truncation"], "sample_mean": float(x.mean()),
               "predicted_mean": analytics.stationary_mean(ms, cfg.model.eps.mean())}
    _write_json(out / "summary.json", summary)
    _manifest(cfg, "stationary", out, ["samples.csv", "samples.meta.json", "summary.json"])
    return EXIT_OK


def analytics_report(cfg: ExperimentConfig) -> dict:
    p = cfg.model
    ms = p.mean_structure()
    n = cfg.n_steps
    ex0, exm1, m_eps = p.x0.mean(), p.xm1.mean(), p.eps.mean()
    rep: dict = {
        "mean_structure": {"m_xi": ms.m_xi, "m_eta": ms.m_eta, "lambda_plus": ms.lambda_plus,
                           "lambda_minus": ms.lambda_minus, "rho": ms.rho,
                           "criticality": ms.criticality.value, "primitive": ms.primitive},
        "m_k": [analytics.m_seq(ms, k) for k in range(n + 1)],
        "expectation": [analytics.expectation(ms, k, ex0, exm1, m_eps) for k in range(-1, n + 1)],
    }
    if ms.criticality is analytics.Criticality.SUBCRITICAL:
        rep["stationary_mean"] = analytics.stationary_mean(ms, m_eps)
    var_xi, var_eta = p.xi.variance(), p.eta.variance()
    if ms.rho > 0 and math.isfinite(var_xi) and math.isfinite(var_eta):
        b = analytics.moment_bounds(ms, var_xi, var_eta)
        rep["moment_bounds"] = {"c_sub": b.c_sub, "c_crit": b.c_crit, "c_sup": b.c_sup}
        rep["variance_from_1_0"] = [analytics.variance_xn(ms, var_xi, var_eta, k) for k in range(1, n + 1)]
    alpha = p.eps.regularly_varying_index
    if alpha is not None and ms.m_xi > 0 and ms.criticality is analytics.Criticality.SUBCRITICAL:
        if ms.m_eta > 0:
            value, n_used = analytics.stationary_tail_constant(ms, alpha)
            rep["stationary_tail_constant"] = {"alpha": alpha, "value": value, "terms": n_used + 1}
        else:
            rep["first_order_constant"] = {"alpha": alpha, "value": analytics.first_order_constant(ms.m_xi, alpha)}
        rep["truncation_level"] = {"tol": cfg.tol, "N": analytics.truncation_level(ms.rho, cfg.tol)}
    b0, bm1 = p.x0.regularly_varying_index, p.xm1.regularly_varying_index
    if (b0 is not None or bm1 is not None) and ms.m_xi > 0 and (bm1 is None or ms.m_eta > 0):
        b0 = math.inf if b0 is None else b0
        bm1 = math.inf if bm1 is None else bm1
        rep["tail_prediction"] = [
            {"n": k, **vars(analytics.predicted_tail_ratio(ms, k, b0, bm1))} for k in range(1, n + 1)]
    return rep


def run_analytics(cfg: ExperimentConfig, out: Path) -> int:
    rep = analytics_report(cfg)
    _write_json(out / "analytics.json", rep)
    rows = [(k, rep["m_k"][k], rep["expectation"][k + 1]) for k in range(cfg.n_steps + 1)]
    _write_csv(out / "moments.csv", "k,m_k,expectation", rows)
    _manifest(cfg, "analytics", out, ["analytics.json", "moments.csv"])
    return EXIT_OK


def run_tails(cfg: ExperimentConfig, out: Path) -> int:
    p = cfg.model
    ms = p.mean_structure()
    if cfg.target == "stationary":
        alpha = p.eps.regularly_varying_index
        if alpha is None:
            raise ConfigError("tails with target=stationary needs a regularly varying eps", ["model", "eps"])
        s = process.ensemble("stationary", p, cfg.mc_count, cfg.seed, tol=cfg.tol, threads=cfg.threads)
        reference = p.eps
        if ms.m_eta > 0:
            limit = analytics.stationary_tail_constant(ms, alpha)[0]
        else:
            limit = analytics.first_order_constant(ms.m_xi, alpha)
    else:
        b0, bm1 = p.x0.regularly_varying_index, p.xm1.regularly_varying_index
        if b0 is None and bm1 is None:
            raise ConfigError("tails with target=path_endpoint needs a regularly varying x0 or xm1",
                              ["model"])
        if cfg.n_steps < 1:
            raise ConfigError("tails with target=path_endpoint needs n_steps >= 1", ["n_steps"])
        b0 = math.inf if b0 is None else b0
        bm1 = math.inf if bm1 is None else bm1
        reference = p.x0 if b0 <= bm1 else p.xm1
        pred = analytics.predicted_tail_ratio(ms, cfg.n_steps, b0, bm1)
        limit = pred.total if pred.case != "equal" else (
            pred.coef_x0 + pred.coef_xm1 * verify._tail_limit(p.xm1, p.x0))
        s = process.ensemble("path_endpoint", p.without_immigration(), cfg.mc_count, cfg.seed,
                             n_steps=cfg.n_steps, threads=cfg.threads)
    rep = tailstats.tail_ratio_curve(s, reference, cfg.levels, limit, min_count=verify.UNRELIABLE_COUNT)
    rep.to_csv(out / "tails.csv")
    summary = rep.summary(cfg.rel_tol)
    positive = int(np.count_nonzero(s.draws > 0))
    k = int(math.isqrt(positive))
    if k >= 10 and positive > k:
        try:
            h = tailstats.hill(s, k)
            summary["hill"] = {"k": h.k, "k_requested": h.k_requested, "alpha_hat": h.alpha_hat,
                               "ci95": list(h.ci95)}
        except tailstats.TailCheckError as exc:
            summary["hill"] = {"error": str(exc)}
    _write_json(out / "tails_summary.json", summary)
    _manifest(cfg, "tails", out, ["tails.csv", "tails_summary.json"])
    return EXIT_OK


def run_verify(cfg: ExperimentConfig, out: Path, default: bool, stream=sys.stdout) -> int:
    outcomes = []
    for suite in cfg.suites:
        for o in verify.run_suite(suite, cfg, default):
            outcomes.append((suite, o))
            print(f"{o.status.upper():10s} {suite}/{o.name}  observed={o.observed:.6g} "
                  f"predicted={o.predicted:.6g} tol={o.tolerance:.3g}", file=stream)
    rows = [(s, o.name, o.status, o.observed, o.predicted, o.tolerance) for s, o in outcomes]
    _write_csv(out / "outcomes.csv", "suite,name,status,observed,predicted,tolerance", rows)
    code = verify.exit_status([o for _, o in outcomes])
    _write_json(out / "outcomes.json", {"exit_status": code,
                                        "outcomes": [{"suite": s, **o.to_dict()} for s, o in outcomes]})
    _manifest(cfg, "verify", out, ["outcomes.csv", "outcomes.json"])
    return code


RUNNERS = {"simulate": run_simulate, "stationary": run_stationary, "analytics": run_analytics,
           "tails": run_tails}


# entry point ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ginar2", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="action", required=True)
    for action in ACTIONS:
        sp = sub.add_parser(action)
        sp.add_argument("--config", help="JSON experiment config"
                        + (" (optional: defaults to the desk-scale suites)" if action == "verify" else ""))
        sp.add_argument("--seed", type=int, help="master seed (u64), overrides the config")
        sp.add_argument("--out", help="output directory, overrides the config")
        sp.add_argument("--threads", type=int, help="worker threads; never changes results")
        sp.add_argument("--tol", type=float, help="stationary truncation tolerance")
        if action == "verify":
            sp.add_argument("--suite", action="append", choices=SUITES,
                            help="suite to run (repeatable; default all)")
    return parser


def _check_overrides(args) -> None:
    if args.seed is not None and not 0 <= args.seed < 2**64:
        raise ConfigError("--seed must be a 64-bit unsigned integer", ["seed"])
    if args.threads is not None and args.threads < 1:
        raise ConfigError("--threads must be >= 1", ["threads"])
    if args.tol is not None and not 0 < args.tol < 1:
        raise ConfigError("--tol must lie in (0, 1)", ["tol"])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _check_overrides(args)
        default = False
        if args.config is None:
            if args.action != "verify":
                raise ConfigError(f"{args.action} needs --config", ["config"])
            cfg = verify.default_config()
            default = True
        else:
            cfg = load_config(args.config)
            if cfg.action is not None and cfg.action != args.action:
                raise ConfigError(f"config action {cfg.action!r} does not match subcommand "
                                  f"{args.action!r}", ["action"])
        cfg = cfg.override(seed=args.seed, output_dir=args.out, threads=args.threads, tol=args.tol,
                           suites=tuple(args.suite) if getattr(args, "suite", None) else None)
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.action == "verify":
            return run_verify(cfg, out, default)
        return RUNNERS[args.action](cfg, out)
    except (ConfigError, DistError, ProcessError, AnalyticsError, tailstats.TailCheckError) as exc:
        diag = exc.diagnostic if isinstance(exc, ConfigError) else {
            "error": "config", "message": str(exc), "path": []}
        print(canonical_json(diag), file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(canonical_json({"error": "io", "message": str(exc), "path": []}), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
