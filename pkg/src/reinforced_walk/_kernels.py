"""Compiled inner loops. Everything here is a pure function of its array inputs."""

import numba
import numpy as np


@numba.njit(cache=True)
def moment_tables(p, horizon):
    """Return (a, m) for indices 1..horizon, stored at positions 0..horizon-1.

    ``a`` follows the product recurrence a_{n+1} = a_n (n+p)/n and ``m`` the
    unit-variance recursion m_{n+1} = m_n (1 - p^2/(n+p)^2) + 1/a_{n+1}^2,
    accumulated as a compensated running sum of its increments.
    """
    a = np.empty(horizon)
    m = np.empty(horizon)
    a[0] = 1.0
    m[0] = 1.0
    total = 1.0
    comp = 0.0
    for i in range(1, horizon):
        n = float(i)
        a[i] = a[i - 1] * (n + p) / n
        c = p / (n + p)
        inc = 1.0 / (a[i] * a[i]) - c * c * m[i - 1]
        y = inc - comp
        t = total + y
        comp = (t - total) - y
        total = t
        m[i] = total
    return a, m


@numba.njit(cache=True)
def resolve_sources(coin_u, pick_u, p):
    """Map each time index to the fresh draw it ultimately copies.

    At 0-based time i >= 1 the step is reinforced iff ``coin_u[i] < p`` and
    then copies time ``floor(pick_u[i] * i)``. Time 0 is always fresh.
    """
    n = coin_u.shape[0]
    src = np.empty(n, dtype=np.int64)
    if n == 0:
        return src
    src[0] = 0
    for i in range(1, n):
        if coin_u[i] < p:
            src[i] = src[min(int(pick_u[i] * i), i - 1)]
        else:
            src[i] = i
    return src


@numba.njit(cache=True)
def erw_steps(first, q, recall_u, keep_u):
    """Elephant steps: recall a uniform past step, keep it w.p. q, else reverse."""
    n = recall_u.shape[0]
    steps = np.empty(n, dtype=np.int64)
    steps[0] = first
    for i in range(1, n):
        j = min(int(recall_u[i] * i), i - 1)
        if keep_u[i] < q:
            steps[i] = steps[j]
        else:
            steps[i] = -steps[j]
    return steps


@numba.njit(cache=True)
def merw_directions(first, q, ndir, recall_u, keep_u, other_u):
    """Multidimensional elephant: directions are coded 0..2d-1.

    A rejected memory moves uniformly to one of the other ``ndir - 1``
    directions.
    """
    n = recall_u.shape[0]
    dirs = np.empty(n, dtype=np.int64)
    dirs[0] = first
    for i in range(1, n):
        remembered = dirs[min(int(recall_u[i] * i), i - 1)]
        if keep_u[i] < q:
            dirs[i] = remembered
        else:
            r = min(int(other_u[i] * (ndir - 1)), ndir - 2)
            dirs[i] = r if r < remembered else r + 1
    return dirs
