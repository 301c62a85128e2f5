import math
from collections import defaultdict

import numpy as np
import pytest


def brute_force_pmf(values, probs, p, n):
    """Law of S_n by walking the full history tree: every coin outcome, every
    recalled index and every fresh value. Independent of the count-vector
    enumeration in the package; exponential, so keep n <= 5.
    """
    values = [tuple(np.atleast_1d(np.asarray(v, dtype=float))) for v in values]
    out = defaultdict(float)

    def walk(history, weight):
        i = len(history) + 1
        if i > n:
            s = tuple(round(sum(h[j] for h in history), 12) + 0.0 for j in range(len(history[0])))
            out[s[0] if len(s) == 1 else s] += weight
            return
        if i == 1:
            for v, w in zip(values, probs):
                walk([v], weight * w)
            return
        for j in range(i - 1):
            walk(history + [history[j]], weight * p / (i - 1))
        for v, w in zip(values, probs):
            walk(history + [v], weight * (1.0 - p) * w)

    walk([], 1.0)
    return dict(out)


def brute_force_erw(q, n):
    """Elephant walk by full history tree: first step +-1, then recall a
    uniform past step and keep it with probability q, else reverse it."""
    out = defaultdict(float)

    def walk(history, weight):
        i = len(history) + 1
        if i > n:
            out[float(sum(history))] += weight
            return
        if i == 1:
            walk([1], weight * 0.5)
            walk([-1], weight * 0.5)
            return
        for j in range(i - 1):
            walk(history + [history[j]], weight * q / (i - 1))
            walk(history + [-history[j]], weight * (1 - q) / (i - 1))

    walk([], 1.0)
    return dict(out)


def pmf_var(pmf):
    keys = list(pmf)
    mean = math.fsum(k * pmf[k] for k in keys)
    return math.fsum((k - mean) ** 2 * pmf[k] for k in keys)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    """Print and remember one PASS/FAIL line per acceptance criterion."""

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
