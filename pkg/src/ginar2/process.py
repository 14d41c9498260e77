"""Simulators for the second-order Galton-Watson process with immigration.

    X_n = sum_{i <= X_{n-1}} xi_{n,i} + sum_{j <= X_{n-2}} eta_{n,j} + eps_n

Single paths draw from one counter-based stream per (path, generation, role),
so the path recursion and its 2-type embedding consume identical randomness.
Ensembles are split into fixed-size blocks with one stream per block; the
blocks are independent of the worker count, which makes every ensemble a
pure function of (kind, params, count, seed, tol).
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from . import analytics
from .dists import (Bernoulli, Binomial, Constant, DistSpec, FinitePMF, Geometric, Poisson,
                    from_dict)

BLOCK_SIZE = 8192
LOOP_CHUNK = 2**20

ROLE_XI, ROLE_ETA, ROLE_EPS, ROLE_INIT = 0, 1, 2, 3


class ProcessError(ValueError):
    """Model hypotheses or sampler preconditions violated."""


def stream(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for ``key`` derived from the master seed by hashing."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ModelParams:
    xi: DistSpec
    eta: DistSpec
    eps: DistSpec
    x0: DistSpec = field(default_factory=lambda: Constant(0))
    xm1: DistSpec = field(default_factory=lambda: Constant(0))

    def to_dict(self) -> dict:
        return {name: getattr(self, name).to_dict() for name in ("xi", "eta", "eps", "x0", "xm1")}

    @classmethod
    def from_dict(cls, d: dict) -> ModelParams:
        extra = set(d) - {"xi", "eta", "eps", "x0", "xm1"}
        if extra:
            raise ProcessError(f"unknown model fields: {sorted(extra)}")
        return cls(**{k: from_dict(v) for k, v in d.items()})

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def mean_structure(self) -> analytics.MeanStructure:
        m_xi, m_eta = self.xi.mean(), self.eta.mean()
        if not (math.isfinite(m_xi) and math.isfinite(m_eta)):
            raise ProcessError("offspring means must be finite")
        return analytics.mean_structure(m_xi, m_eta)

    def without_immigration(self) -> ModelParams:
        return ModelParams(self.xi, self.eta, Constant(0), self.x0, self.xm1)


@dataclass(frozen=True)
class Path:
    """X_{-1}, X_0, ..., X_N; ``values[0]`` is X_{-1}."""

    values: tuple[int, ...]
    seed: int
    params_hash: str

    def x(self, n: int) -> int:
        return self.values[n + 1]

    @property
    def n_steps(self) -> int:
        return len(self.values) - 2


@dataclass(frozen=True)
class TwoTypePath:
    """Y_0, ..., Y_N with Y_n = (X_n, X_{n-1})."""

    vectors: tuple[tuple[int, int], ...]
    seed: int
    params_hash: str


# branching sums ------------------------------------------------------------------

def branch_sum_array(counts, offspring: DistSpec, rng: np.random.Generator) -> np.ndarray:
    """For each entry c of ``counts``, a draw of the sum of c i.i.d. offspring."""
    counts = np.asarray(counts, dtype=np.int64)
    if np.any(counts < 0):
        raise ProcessError("counts must be non-negative")
    if counts.size == 0:
        return counts.copy()
    if isinstance(offspring, Constant):
        return counts * offspring.value
    if isinstance(offspring, Bernoulli):
        return rng.binomial(counts, offspring.p).astype(np.int64)
    if isinstance(offspring, Binomial):
        return rng.binomial(counts * offspring.n, offspring.p).astype(np.int64)
    if isinstance(offspring, Poisson):
        return rng.poisson(counts * offspring.rate).astype(np.int64)
    if isinstance(offspring, Geometric):
        out = np.zeros_like(counts)
        pos = counts > 0
        if offspring.p < 1 and pos.any():
            out[pos] = rng.negative_binomial(counts[pos], offspring.p)
        return out
    if isinstance(offspring, FinitePMF):
        support = np.arange(len(offspring.weights), dtype=np.int64)
        return rng.multinomial(counts, offspring.weights) @ support
    return _branch_sum_loop(counts, offspring, rng)


def _branch_sum_loop(counts: np.ndarray, offspring: DistSpec, rng) -> np.ndarray:
    out = np.zeros_like(counts)
    flat_counts = counts.ravel()
    flat_out = out.ravel()
    start = 0
    while start < flat_counts.size:
        # gather owners until the chunk holds about LOOP_CHUNK draws
        stop, acc = start, 0
        while stop < flat_counts.size and (acc == 0 or acc + flat_counts[stop] <= LOOP_CHUNK):
            acc += int(flat_counts[stop])
            stop += 1
        block = flat_counts[start:stop]
        if acc <= LOOP_CHUNK:
            draws = offspring.sample_array(rng, acc)
            cs = np.concatenate([[0], np.cumsum(draws, dtype=np.int64)])
            ends = np.cumsum(block)
            flat_out[start:stop] = cs[ends] - cs[ends - block]
        else:
            # a single owner with more than LOOP_CHUNK individuals
            total, left = 0, acc
            while left:
                take = min(left, LOOP_CHUNK)
                total += int(offspring.sample_array(rng, take).sum())
                left -= take
            flat_out[start] = total
        start = stop
    return out


def branch_sum(count: int, offspring: DistSpec, rng: np.random.Generator) -> int:
    """Sum of ``count`` i.i.d. offspring draws (0 for count = 0)."""
    if count < 0:
        raise ProcessError(f"count must be non-negative, got {count}")
    return int(branch_sum_array(np.array([count]), offspring, rng)[0])


def step(x_prev: int, x_prev2: int, params: ModelParams, rng: np.random.Generator) -> int:
    if x_prev < 0 or x_prev2 < 0:
        raise ProcessError("population sizes must be non-negative")
    return (branch_sum(x_prev, params.xi, rng) + branch_sum(x_prev2, params.eta, rng)
            + params.eps.sample(rng))


# single paths --------------------------------------------------------------------

def _initial_pair(params: ModelParams, seed: int, path_index: int) -> tuple[int, int]:
    rng = stream(seed, path_index, 0, ROLE_INIT)
    xm1 = params.xm1.sample(rng)
    x0 = params.x0.sample(rng)
    return x0, xm1


def simulate_path(params: ModelParams, n_steps: int, seed: int, path_index: int = 0) -> Path:
    if n_steps < 0:
        raise ProcessError(f"n_steps must be >= 0, got {n_steps}")
    x0, xm1 = _initial_pair(params, seed, path_index)
    values = [xm1, x0]
    for g in range(1, n_steps + 1):
        xi_sum = branch_sum(values[-1], params.xi, stream(seed, path_index, g, ROLE_XI))
        eta_sum = branch_sum(values[-2], params.eta, stream(seed, path_index, g, ROLE_ETA))
        values.append(xi_sum + eta_sum + params.eps.sample(stream(seed, path_index, g, ROLE_EPS)))
    return Path(tuple(values), seed, params.digest())


def simulate_two_type(params: ModelParams, n_steps: int, seed: int, path_index: int = 0) -> TwoTypePath:
    """2-type embedding: each type-1 individual begets (xi, 1), each type-2 one (eta, 0)."""
    if n_steps < 0:
        raise ProcessError(f"n_steps must be >= 0, got {n_steps}")
    y1, y2 = _initial_pair(params, seed, path_index)
    vectors = [(y1, y2)]
    for g in range(1, n_steps + 1):
        from_type1 = np.array([branch_sum(y1, params.xi, stream(seed, path_index, g, ROLE_XI)), y1])
        from_type2 = np.array([branch_sum(y2, params.eta, stream(seed, path_index, g, ROLE_ETA)), 0])
        immigrants = np.array([params.eps.sample(stream(seed, path_index, g, ROLE_EPS)), 0])
        y1, y2 = (int(v) for v in from_type1 + from_type2 + immigrants)
        vectors.append((y1, y2))
    return TwoTypePath(tuple(vectors), seed, params.digest())


# vectorized engines ----------------------------------------------------------------

def evolve(x0, xm1, n_steps: int, params: ModelParams, rng: np.random.Generator,
           immigration: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Run the recursion n_steps forward from arrays (X_0, X_{-1}).

    Returns (X_n, X_{n-1}).  Entries stuck at (0, 0) without immigration are
    not touched again.
    """
    cur = np.array(x0, dtype=np.int64, copy=True)
    prev = np.array(xm1, dtype=np.int64, copy=True)
    for _ in range(n_steps):
        if immigration:
            new = (branch_sum_array(cur, params.xi, rng) + branch_sum_array(prev, params.eta, rng)
                   + params.eps.sample_array(rng, cur.shape))
            prev, cur = cur, new
        else:
            live = np.nonzero((cur > 0) | (prev > 0))[0]
            new = np.zeros_like(cur)
            if live.size:
                new[live] = (branch_sum_array(cur[live], params.xi, rng)
                             + branch_sum_array(prev[live], params.eta, rng))
            prev, cur = cur, new
    return cur, prev


def sample_V_array(n: int, v0, vm1, params: ModelParams, rng: np.random.Generator) -> np.ndarray:
    """V_n of the process without immigration started from (V_0, V_{-1}) = (v0, vm1)."""
    if n < -1:
        raise ProcessError(f"n must be >= -1, got {n}")
    v0 = np.asarray(v0, dtype=np.int64)
    vm1 = np.broadcast_to(np.asarray(vm1, dtype=np.int64), v0.shape)
    if n == -1:
        return vm1.copy()
    return evolve(v0, vm1, n, params, rng, immigration=False)[0]


def sample_V(n: int, init: tuple[int, int], params: ModelParams, rng: np.random.Generator) -> int:
    v0, vm1 = init
    return int(sample_V_array(n, np.array([v0]), np.array([vm1]), params, rng)[0])


def _sum_by_owner(owners: np.ndarray, values: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros(size, dtype=np.int64)
    np.add.at(out, owners, values)
    return out


def additive_array(n: int, params: ModelParams, rng: np.random.Generator, size: int,
                   immigration: bool = False) -> np.ndarray:
    """Draws of X_n through independent descendant counts of every initial individual."""
    if n < 1:
        raise ProcessError(f"n must be >= 1, got {n}")
    if not immigration and not (isinstance(params.eps, Constant) and params.eps.value == 0):
        raise ProcessError("the pure additive form needs eps = Constant(0); pass immigration=True")
    x0 = params.x0.sample_array(rng, size)
    xm1 = params.xm1.sample_array(rng, size)
    idx = np.arange(size)
    own0 = np.repeat(idx, x0)
    ownm1 = np.repeat(idx, xm1)
    ones0 = np.ones(own0.size, dtype=np.int64)
    onesm1 = np.ones(ownm1.size, dtype=np.int64)
    zeta0 = sample_V_array(n, ones0, np.zeros_like(ones0), params, rng)
    zetam1 = sample_V_array(n, np.zeros_like(onesm1), onesm1, params, rng)
    total = _sum_by_owner(own0, zeta0, size) + _sum_by_owner(ownm1, zetam1, size)
    if immigration:
        for i in range(1, n + 1):
            eps_i = params.eps.sample_array(rng, size)
            total += sample_V_array(n - i, eps_i, 0, params, rng)
    return total


def sample_additive(n: int, params: ModelParams, rng: np.random.Generator,
                    immigration: bool = False) -> int:
    return int(additive_array(n, params, rng, 1, immigration)[0])


def _check_stationary(params: ModelParams) -> analytics.MeanStructure:
    ms = params.mean_structure()
    if not (ms.m_xi > 0 and ms.m_eta >= 0 and ms.criticality is analytics.Criticality.SUBCRITICAL):
        raise ProcessError(
            "stationary sampling needs m_xi > 0, m_eta >= 0 and m_xi + m_eta < 1 "
            f"(got m_xi={ms.m_xi}, m_eta={ms.m_eta})")
    return ms


def stationary_truncation(params: ModelParams, tol: float) -> int:
    ms = _check_stationary(params)
    return analytics.truncation_level(ms.rho, tol)


def stationary_array(params: ModelParams, n_terms: int, rng: np.random.Generator,
                     size: int) -> np.ndarray:
    """sum_{i=0}^{n_terms} V_i^{(i)}(eps_i), term by term from one stream.

    Terms are drawn in order, so a larger ``n_terms`` on the same stream
    reproduces the first terms and only adds more.
    """
    total = np.zeros(size, dtype=np.int64)
    for i in range(n_terms + 1):
        eps_i = params.eps.sample_array(rng, size)
        total += sample_V_array(i, eps_i, 0, params, rng)
    return total


def sample_stationary(params: ModelParams, tol: float, rng: np.random.Generator) -> tuple[int, int]:
    """One draw of the truncated stationary series and the truncation level N."""
    n_used = stationary_truncation(params, tol)
    return int(stationary_array(params, n_used, rng, 1)[0]), n_used


# ensembles ----------------------------------------------------------------------

@dataclass
class SampleSet:
    draws: np.ndarray
    meta: dict

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=np.int64)
        if self.meta.get("count") != len(self.draws):
            raise ProcessError("meta count does not match the number of draws")

    def __len__(self) -> int:
        return len(self.draws)

    def to_csv(self, path) -> None:
        path = FsPath(path)
        body = "index,value\n" + "".join(f"{i},{v}\n" for i, v in enumerate(self.draws.tolist()))
        path.write_text(body)
        _meta_path(path).write_text(json.dumps(self.meta, sort_keys=True, indent=2) + "\n")

    @classmethod
    def from_csv(cls, path) -> SampleSet:
        path = FsPath(path)
        lines = path.read_text().splitlines()
        if not lines or lines[0] != "index,value":
            raise ProcessError(f"{path}: expected header 'index,value'")
        draws = np.array([int(line.split(",")[1]) for line in lines[1:]], dtype=np.int64)
        return cls(draws, json.loads(_meta_path(path).read_text()))

    def to_npy(self, path) -> None:
        path = FsPath(path)
        np.save(path, self.draws, allow_pickle=False)
        _meta_path(path).write_text(json.dumps(self.meta, sort_keys=True, indent=2) + "\n")

    @classmethod
    def from_npy(cls, path) -> SampleSet:
        path = FsPath(path)
        return cls(np.load(path, allow_pickle=False), json.loads(_meta_path(path).read_text()))


def _meta_path(path: FsPath) -> FsPath:
    return path.with_name(path.stem + ".meta.json")


ENSEMBLE_KINDS = ("path_endpoint", "stationary", "additive")


def ensemble(kind: str, params: ModelParams, count: int, seed: int, *, tol: float | None = None,
             n_steps: int | None = None, immigration: bool = False, threads: int = 1) -> SampleSet:
    """``count`` independent draws of the requested kind.

    path_endpoint: X_{n_steps}; stationary: truncated stationary series with
    truncation from ``tol``; additive: X_{n_steps} via the additive form.
    """
    if count < 1:
        raise ProcessError(f"count must be >= 1, got {count}")
    if kind not in ENSEMBLE_KINDS:
        raise ProcessError(f"unknown ensemble kind {kind!r}")
    truncation = None
    if kind == "stationary":
        if tol is None:
            raise ProcessError("stationary ensembles need tol")
        truncation = stationary_truncation(params, tol)
    elif n_steps is None or n_steps < (1 if kind == "additive" else 0):
        raise ProcessError(f"{kind} ensembles need a valid n_steps")
    elif kind == "additive" and not immigration and not (
            isinstance(params.eps, Constant) and params.eps.value == 0):
        raise ProcessError("the pure additive form needs eps = Constant(0); pass immigration=True")

    def run_block(b: int) -> np.ndarray:
        size = min(BLOCK_SIZE, count - b * BLOCK_SIZE)
        rng = stream(seed, b)
        if kind == "stationary":
            return stationary_array(params, truncation, rng, size)
        if kind == "additive":
            return additive_array(n_steps, params, rng, size, immigration)
        x0 = params.x0.sample_array(rng, size)
        xm1 = params.xm1.sample_array(rng, size)
        return evolve(x0, xm1, n_steps, params, rng)[0]

    n_blocks = -(-count // BLOCK_SIZE)
    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run_block, range(n_blocks)))
    else:
        parts = [run_block(b) for b in range(n_blocks)]
    meta = {
        "kind": kind,
        "seed": int(seed),
        "count": int(count),
        "truncation": truncation,
        "n_steps": n_steps,
        "tol": tol,
        "immigration": immigration,
        "block_size": BLOCK_SIZE,
        "params_hash": params.digest(),
        "params": params.to_dict(),
    }
    return SampleSet(np.concatenate(parts), meta)
