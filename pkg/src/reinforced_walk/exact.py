"""Exact laws for small n by enumeration.

Recall is uniform over past time indices, so given the past only the counts
of each support atom matter. The enumeration therefore runs over count
vectors (an urn), which covers every reinforcement history and every step
realisation while keeping the state space polynomial in n.
"""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

from .steps import StepDistribution, lattice_isotropic

__all__ = [
    "MAX_ENUMERATION_N",
    "EnumerationError",
    "enumerate_counts",
    "enumerate_erw_pmf",
    "enumerate_exact_pmf",
    "enumerate_merw_pmf",
    "enumerate_step_marginal",
    "pmf_distance",
    "pmf_moments",
]

MAX_ENUMERATION_N = 10
_KEY_DIGITS = 12


class EnumerationError(ValueError):
    pass


def _fsum_dict(acc: dict) -> dict:
    return {k: math.fsum(v) for k, v in acc.items()}


def _guard(n: int) -> int:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise EnumerationError(f"n must be a positive integer, got {n!r}")
    if n > MAX_ENUMERATION_N:
        raise EnumerationError(f"n = {n} exceeds the enumeration cap {MAX_ENUMERATION_N}")
    return int(n)


def _urn(weights0, step_probs, n):
    """Generic count-vector chain.

    ``weights0[a]`` is the law of the first draw; ``step_probs(counts, i)``
    returns the probability of each atom at time i + 1 given ``i`` draws.
    """
    k = len(weights0)
    states = {}
    for a in range(k):
        if weights0[a] > 0.0:
            c = [0] * k
            c[a] = 1
            states[tuple(c)] = weights0[a]
    for i in range(1, n):
        nxt = defaultdict(list)
        for counts, w in states.items():
            probs = step_probs(counts, i)
            for a in range(k):
                if probs[a] > 0.0:
                    c = list(counts)
                    c[a] += 1
                    nxt[tuple(c)].append(w * probs[a])
        states = _fsum_dict(nxt)
    return states


def _require_finite(d: StepDistribution) -> None:
    if not d.finite_support:
        raise EnumerationError(f"{d.kind} has unbounded or continuous support; enumeration needs finite support")


def enumerate_counts(d: StepDistribution, p: float, n: int) -> dict[tuple[int, ...], float]:
    """Exact law of the atom counts after n reinforced steps."""
    _require_finite(d)
    n = _guard(n)
    mu = [float(v) for v in d.probs]

    def step(counts, i):
        return [(1.0 - p) * mu[a] + p * counts[a] / i for a in range(len(mu))]

    return _urn(mu, step, n)


def _to_pmf(states: dict, support: np.ndarray) -> dict:
    acc = defaultdict(list)
    for counts, w in states.items():
        value = np.asarray(counts, dtype=float) @ support
        key = tuple(round(float(v), _KEY_DIGITS) + 0.0 for v in value)
        acc[key[0] if len(key) == 1 else key].append(w)
    return dict(sorted(_fsum_dict(acc).items()))


def enumerate_exact_pmf(d: StepDistribution, p: float, n: int) -> dict:
    """Exact law of S_n as ``value -> probability``.

    Values are floats in dimension one and tuples otherwise, rounded to 12
    decimals so that equal sums reached through different atoms merge.
    """
    return _to_pmf(enumerate_counts(d, p, n), np.asarray(d.support))


def enumerate_step_marginal(d: StepDistribution, p: float, n: int) -> np.ndarray:
    """Exact law of the single step X^_n over the support atoms."""
    _require_finite(d)
    n = _guard(n)
    mu = np.asarray(d.probs, dtype=float)
    if n == 1:
        return mu.copy()
    out = np.zeros(len(mu))
    for counts, w in enumerate_counts(d, p, n - 1).items():
        out += w * ((1.0 - p) * mu + p * np.asarray(counts) / (n - 1))
    return out


def enumerate_erw_pmf(q: float, n: int) -> dict:
    """Exact law of the elephant walk position after n steps."""
    n = _guard(n)

    # atoms: 0 -> -1, 1 -> +1
    def step(counts, i):
        down, up = counts[0] / i, counts[1] / i
        return [down * q + up * (1.0 - q), up * q + down * (1.0 - q)]

    states = _urn([0.5, 0.5], step, n)
    return _to_pmf(states, np.array([[-1.0], [1.0]]))


def enumerate_merw_pmf(q: float, dim: int, n: int) -> dict:
    """Exact law of the multidimensional elephant walk after n steps."""
    n = _guard(n)
    ndir = 2 * dim
    other = (1.0 - q) / (ndir - 1)

    def step(counts, i):
        out = []
        for a in range(ndir):
            kept = counts[a] / i * q
            moved = (i - counts[a]) / i * other
            out.append(kept + moved)
        return out

    states = _urn([1.0 / ndir] * ndir, step, n)
    support = np.asarray(lattice_isotropic(dim).support)
    return _to_pmf(states, support)


def pmf_moments(pmf: dict) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance matrix of a pmf from this module."""
    keys = list(pmf)
    vals = np.array([k if isinstance(k, tuple) else (k,) for k in keys], dtype=float)
    w = np.array([pmf[k] for k in keys])
    mean = np.array([math.fsum(w * vals[:, j]) for j in range(vals.shape[1])])
    c = vals - mean
    cov = np.array(
        [[math.fsum(w * c[:, i] * c[:, j]) for j in range(vals.shape[1])] for i in range(vals.shape[1])]
    )
    return mean, cov


def pmf_distance(a: dict, b: dict) -> float:
    """Largest absolute probability difference over the union of supports."""
    keys = set(a) | set(b)
    return max(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)
