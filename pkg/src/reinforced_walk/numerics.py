"""Exact moment machinery for step-reinforced walks.

Everything here is deterministic. The quantities are normalised to a unit
step variance; multiply by sigma^2 (or the covariance matrix) at call sites.

The normalising sequence is

    a_n = Gamma(n + p) / (Gamma(n) Gamma(p + 1)),    a_{n+1} = a_n (n + p) / n,

and the martingale M_n = S_n / a_n has E(M_n^2) = sigma^2 * m_n with

    m_1 = 1,    m_{n+1} = m_n (1 - p^2 / (n + p)^2) + 1 / a_{n+1}^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels

__all__ = [
    "ExactMoments",
    "LimitVariance",
    "a_seq",
    "a_seq_loggamma",
    "centering_asymptote",
    "centering_discrepancy",
    "exact_moments",
    "exact_second_moment",
    "gamma_step",
    "limit_variance_W",
    "log_gamma",
    "log_gamma_ratio",
    "second_moment_bracket",
    "v_exact",
    "var_w_closed_form",
]

# Below this the product recurrence is cheap and exact to rounding.
_RECURRENCE_CUTOFF = 1 << 16

# Bernoulli coefficients B_{2k} / (2k (2k - 1)) of the Stirling series.
_STIRLING = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
)


def _check_p(p: float, *, closed: bool = True) -> None:
    if not math.isfinite(p):
        raise ValueError(f"p must be finite, got {p!r}")
    if closed and not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if not closed and not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")


def _check_index(n: int, name: str = "n") -> int:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"{name} must be a positive integer, got {n!r}")
    return int(n)


def _check_superdiffusive(p: float) -> None:
    if not 0.5 < p < 1.0:
        raise ValueError(f"p must lie in (1/2, 1), got {p}")


def log_gamma(x: float) -> float:
    """Natural log of the Euler gamma function for x > 0."""
    if not x > 0.0:
        raise ValueError(f"log_gamma is defined for x > 0, got {x!r}")
    return math.lgamma(x)


def _stirling_tail(z: float) -> float:
    zinv = 1.0 / z
    zinv2 = zinv * zinv
    acc = 0.0
    for c in reversed(_STIRLING):
        acc = acc * zinv2 + c
    return acc * zinv


def log_gamma_ratio(x: float, s: float) -> float:
    """log Gamma(x + s) - log Gamma(x), without the cancellation of two lgammas.

    Needed because lgamma(10^6) is ~1.3e7 and its rounding alone would cost
    ~1e-9 relative accuracy in a_n.
    """
    if not x > 0.0 or not x + s > 0.0:
        raise ValueError("log_gamma_ratio needs x > 0 and x + s > 0")
    shift = 0.0
    # Raise x until the Stirling series is accurate to double precision.
    while x < 16.0:
        shift += math.log(x + s) - math.log(x)
        x += 1.0
    core = (
        (x - 0.5) * math.log1p(s / x)
        + s * math.log(x + s)
        - s
        + _stirling_tail(x + s)
        - _stirling_tail(x)
    )
    return core - shift


def gamma_step(p: float, n: int) -> float:
    """The one-step contraction n / (n + p) of the conditional mean."""
    _check_p(p)
    n = _check_index(n)
    return n / (n + p)


@dataclass(frozen=True)
class ExactMoments:
    """Immutable tables a_1..a_N, gamma_1..gamma_{N-1} and m_1..m_N."""

    p: float
    sigma2: float
    horizon: int
    a: np.ndarray
    gamma: np.ndarray
    m: np.ndarray

    def a_at(self, n: int) -> float:
        return float(self.a[n - 1])

    def m_at(self, n: int) -> float:
        return float(self.m[n - 1])

    def second_moment(self, n: int) -> float:
        """E(M_n^2) at the stored variance scale."""
        return self.sigma2 * self.m_at(n)

    def v_exact(self, n: int, N: int) -> float:
        if not 1 <= n <= N <= self.horizon:
            raise ValueError(f"need 1 <= n <= N <= {self.horizon}, got n={n}, N={N}")
        a_n = self.a_at(n)
        return self.sigma2 * a_n * a_n / n * (self.m_at(N) - self.m_at(n))

    def walk_second_moment(self, n: int) -> float:
        """E(S_n^2) = a_n^2 m_n sigma^2 for a centred step."""
        a_n = self.a_at(n)
        return self.sigma2 * a_n * a_n * self.m_at(n)


@lru_cache(maxsize=64)
def _pow2_tables(p: float, size: int) -> tuple[np.ndarray, np.ndarray]:
    a, m = _kernels.moment_tables(p, size)
    a.flags.writeable = False
    m.flags.writeable = False
    return a, m


def _tables(p: float, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    # The recursion is prefix-consistent, so cache power-of-two lengths and slice.
    size = max(1024, 1 << (int(horizon) - 1).bit_length())
    a, m = _pow2_tables(float(p), size)
    return a[:horizon], m[:horizon]


def exact_moments(p: float, horizon: int, sigma2: float = 1.0) -> ExactMoments:
    """Build the exact tables up to ``horizon``."""
    _check_p(p)
    horizon = _check_index(horizon, "horizon")
    if not sigma2 >= 0.0:
        raise ValueError(f"sigma2 must be non-negative, got {sigma2}")
    a, m = _tables(float(p), horizon)
    n = np.arange(1, horizon, dtype=float)
    gamma = n / (n + p)
    gamma.flags.writeable = False
    return ExactMoments(p=float(p), sigma2=float(sigma2), horizon=horizon, a=a, gamma=gamma, m=m)


def a_seq_loggamma(p: float, n: int) -> float:
    """a_n through the gamma-function ratio (independent of the recurrence)."""
    _check_p(p)
    n = _check_index(n)
    return math.exp(log_gamma_ratio(float(n), p) - math.lgamma(p + 1.0))


def a_seq(p: float, n: int) -> float:
    """The normalising sequence a_n = Gamma(n+p) / (Gamma(n) Gamma(p+1))."""
    _check_p(p)
    n = _check_index(n)
    if n <= _RECURRENCE_CUTOFF:
        return float(_tables(float(p), n)[0][n - 1])
    return a_seq_loggamma(p, n)


def exact_second_moment(p: float, n: int) -> float:
    """Unit-variance factor m_n with E(M_n^2) = sigma^2 m_n."""
    _check_p(p)
    n = _check_index(n)
    return float(_tables(float(p), n)[1][n - 1])


def v_exact(p: float, n: int, N: int) -> float:
    """Unit variance of the finite-horizon fluctuation (S_n - a_n M_N) / sqrt(n)."""
    _check_p(p)
    n = _check_index(n)
    N = _check_index(N, "N")
    if N < n:
        raise ValueError(f"need N >= n, got n={n}, N={N}")
    a, m = _tables(float(p), N)
    return float(a[n - 1] ** 2 / n * (m[N - 1] - m[n - 1]))


def var_w_closed_form(p: float) -> float:
    """Gamma(p+1)^2 / ((2p - 1) Gamma(2p)), the limit of m_n.

    Follows from E(S_{n+1}^2) = E(S_n^2)(1 + 2p/n) + 1, which telescopes
    against b_n = Gamma(n + 2p) / (Gamma(n) Gamma(1 + 2p)).
    """
    _check_superdiffusive(p)
    return math.exp(2.0 * math.lgamma(p + 1.0) - math.lgamma(2.0 * p)) / (2.0 * p - 1.0)


def _tail_bound(p: float, horizon: int) -> float:
    # sum_{k > H} 1/a_k^2, using Wendel's inequality
    # Gamma(k+p)/Gamma(k) >= k^p (k/(k+p))^(1-p) and the integral comparison.
    g2 = math.exp(2.0 * math.lgamma(p + 1.0))
    wendel = (1.0 + p / horizon) ** (2.0 - 2.0 * p)
    return g2 * wendel * horizon ** (1.0 - 2.0 * p) / (2.0 * p - 1.0)


def second_moment_bracket(p: float, horizon: int) -> tuple[float, float]:
    """Certified interval [m_H, m_H + tail] for the limit of m_n."""
    _check_superdiffusive(p)
    horizon = _check_index(horizon, "horizon")
    m_h = exact_second_moment(p, horizon)
    return m_h, m_h + _tail_bound(p, horizon)


@dataclass(frozen=True)
class LimitVariance:
    value: float
    lower: float
    upper: float
    horizon: int

    @property
    def width(self) -> float:
        return self.upper - self.lower


def limit_variance_W(p: float, tol: float = 1e-6, horizon: int = 1 << 20) -> LimitVariance:
    """Var(W) for a unit-variance step, with an error interval of width <= tol.

    The value comes from the closed form; the interval is widened by a
    rounding allowance and must sit inside the certified bracket computed
    from the recursion up to ``horizon``.
    """
    _check_superdiffusive(p)
    if not tol > 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    value = var_w_closed_form(p)
    slack = 64.0 * np.finfo(float).eps * value
    lo, hi = second_moment_bracket(p, horizon)
    if not lo - slack <= value <= hi + slack:
        raise ArithmeticError(f"closed form {value} outside certified bracket [{lo}, {hi}]")
    if 2.0 * slack > tol:
        raise ArithmeticError(f"tolerance {tol} below rounding floor {2.0 * slack}")
    return LimitVariance(value=value, lower=value - slack, upper=value + slack, horizon=horizon)


def centering_discrepancy(p: float, n: int) -> float:
    """(n^p - a_n) / sqrt(n)."""
    _check_p(p)
    n = _check_index(n)
    return (n**p - a_seq(p, n)) / math.sqrt(n)


def centering_asymptote(p: float, n: int) -> float:
    """n^(p - 1/2) (1 - 1/Gamma(p+1)), the leading behaviour of the discrepancy."""
    _check_p(p)
    return n ** (p - 0.5) * (1.0 - math.exp(-math.lgamma(p + 1.0)))
