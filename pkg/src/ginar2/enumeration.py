"""Exact pmfs of X_n by brute-force enumeration (finite-support laws only).

Two independent routes: propagating the joint law of (X_k, X_{k-1}) through
the recursion, and composing the laws of single-ancestor descendant counts
as in the additive representation.  Used as oracles in tests and `verify`.
"""

from __future__ import annotations

import math

import numpy as np

from .dists import Constant, DistSpec
from .process import ModelParams, ProcessError


def _finite_pmf(spec: DistSpec) -> np.ndarray:
    top = spec.support_max
    if not math.isfinite(top):
        raise ProcessError(f"{spec.kind} has unbounded support; enumeration needs finite laws")
    return np.asarray(spec.pmf(np.arange(int(top) + 1)), dtype=float)


def _conv_powers(p: np.ndarray, max_power: int) -> list[np.ndarray]:
    out = [np.array([1.0])]
    for _ in range(max_power):
        out.append(np.convolve(out[-1], p))
    return out


def _add(acc: np.ndarray, vec: np.ndarray, scale: float) -> np.ndarray:
    if len(vec) > len(acc):
        acc = np.concatenate([acc, np.zeros(len(vec) - len(acc))])
    acc[: len(vec)] += scale * vec
    return acc


def recursion_joint(params: ModelParams, n: int, immigration: bool = True) -> np.ndarray:
    """joint[a, b] = P(X_n = a, X_{n-1} = b) by pushing the joint law through n steps."""
    p_xi, p_eta = _finite_pmf(params.xi), _finite_pmf(params.eta)
    p_eps = _finite_pmf(params.eps) if immigration else np.array([1.0])
    joint = np.outer(_finite_pmf(params.x0), _finite_pmf(params.xm1))
    for _ in range(n):
        top = joint.shape[0] - 1
        xi_pow = _conv_powers(p_xi, top)
        eta_pow = _conv_powers(p_eta, joint.shape[1] - 1)
        size = top * (len(p_xi) - 1) + (joint.shape[1] - 1) * (len(p_eta) - 1) + len(p_eps)
        new = np.zeros((size, top + 1))
        for a in range(joint.shape[0]):
            for b in range(joint.shape[1]):
                w = joint[a, b]
                if w == 0.0:
                    continue
                dist = np.convolve(np.convolve(xi_pow[a], eta_pow[b]), p_eps)
                new[: len(dist), a] += w * dist
        joint = new
    return joint


def recursion_pmf(params: ModelParams, n: int, immigration: bool = True) -> np.ndarray:
    if n == -1:
        return _finite_pmf(params.xm1)
    return recursion_joint(params, n, immigration).sum(axis=1)


def _single_ancestor_pmf(params: ModelParams, n: int, init: tuple[int, int]) -> np.ndarray:
    base = ModelParams(params.xi, params.eta, Constant(0), Constant(init[0]), Constant(init[1]))
    return recursion_pmf(base, n, immigration=False)


def _compound(count_pmf: np.ndarray, unit_pmf: np.ndarray) -> np.ndarray:
    """Law of the sum of N i.i.d. unit draws with N ~ count_pmf."""
    out = np.zeros(1)
    power = np.array([1.0])
    for c, w in enumerate(count_pmf):
        if c:
            power = np.convolve(power, unit_pmf)
        if w:
            out = _add(out, power, w)
    return out


def additive_pmf(params: ModelParams, n: int, immigration: bool = False) -> np.ndarray:
    """pmf of sum_{i<=X_0} zeta_{i,0} + sum_{j<=X_-1} zeta_{j,-1} (+ immigrant lines)."""
    if n < 1:
        raise ProcessError(f"n must be >= 1, got {n}")
    zeta0 = _single_ancestor_pmf(params, n, (1, 0))
    zetam1 = _single_ancestor_pmf(params, n, (0, 1))
    out = np.convolve(_compound(_finite_pmf(params.x0), zeta0),
                      _compound(_finite_pmf(params.xm1), zetam1))
    if immigration:
        p_eps = _finite_pmf(params.eps)
        for i in range(1, n + 1):
            line = _single_ancestor_pmf(params, n - i, (1, 0)) if n - i >= 0 else np.array([1.0])
            out = np.convolve(out, _compound(p_eps, line))
    return out


def pmf_moment(pmf: np.ndarray, r: float) -> float:
    k = np.arange(len(pmf), dtype=float)
    return float(np.sum(k**r * pmf))
